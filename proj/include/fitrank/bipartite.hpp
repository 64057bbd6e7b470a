#pragma once

#include "fitrank/grants.hpp"

#include <Eigen/Core>

#include <iosfwd>
#include <string>
#include <vector>

namespace fitrank {

/// Weighted university-subject matrix. Rows are universities, columns are
/// subjects; both index lists are lexicographically ordered and stable.
struct BipartiteMatrix {
    enum class Kind { raw_value, column_normalized };

    std::vector<std::string> universities;
    std::vector<std::string> subjects;
    Eigen::MatrixXd weights; // nonnegative, universities x subjects
    Kind kind = Kind::raw_value;

    Eigen::Index n_universities() const { return weights.rows(); }
    Eigen::Index n_subjects() const { return weights.cols(); }
};

/// Sum allocation values into matrix cells. Empty input is fatal.
BipartiteMatrix build_value_matrix(const std::vector<Allocation>& allocs);

struct OverallFilterParams {
    int start_year = 0;
    int end_year = 0;
    int min_subject_grants = 9; // distinct grants carrying the subject over the window
};

/// Overall-level filters: keep universities holding at least one grant in
/// every year of the window and subjects appearing in at least
/// min_subject_grants distinct grants. Needs the allocations the matrix was
/// built from, since grant counts are not recoverable from cell values.
BipartiteMatrix apply_overall_filters(const BipartiteMatrix& V,
                                      const std::vector<Allocation>& allocs,
                                      const OverallFilterParams& params);

struct CouncilFilterParams {
    int min_subjects_per_university = 5;
    int min_universities_per_subject = 5;
};

/// Council-level filters, iterated to a joint fixed point: dropping a
/// university can push a subject below threshold and vice versa.
BipartiteMatrix apply_council_filters(const BipartiteMatrix& V,
                                      const CouncilFilterParams& params);

/// Divide each column by its sum. Zero columns are fatal (filter first).
BipartiteMatrix normalize_columns(const BipartiteMatrix& V);

/// CSV export: university row labels, subject column headers, full double
/// precision (round-trips losslessly).
void write_matrix_csv(std::ostream& out, const BipartiteMatrix& m);
BipartiteMatrix read_matrix_csv(std::istream& in, BipartiteMatrix::Kind kind);

std::string matrix_to_json(const BipartiteMatrix& m);
BipartiteMatrix matrix_from_json(const std::string& text);

} // namespace fitrank

#pragma once

#include "fitrank/fitness.hpp"
#include "fitrank/grants.hpp"

#include <Eigen/Core>

#include <map>
#include <string>
#include <vector>

namespace fitrank {

struct TauResult {
    double tau = 0.0; // in [-1, 1]
    int n_common = 0;
    int n_dropped = 0; // identifiers present in only one ranking
};

/// Kendall rank correlation over the common identifiers of two rankings.
/// tau-b (tie-adjusted) by default; tau_a switches the denominator to
/// n(n-1)/2. Fewer than 2 common identifiers is fatal.
TauResult kendall_tau(const Ranking& a, const Ranking& b, bool tau_a = false);

/// rank_b - rank_a per common identifier (positive = moved down).
std::map<std::string, int> rank_delta(const Ranking& a, const Ranking& b);

/// (x - mean) / population sd. Output has mean 0 and sd 1; a zero-sd input
/// is fatal ("degenerate distribution").
Eigen::VectorXd zscore(const Eigen::Ref<const Eigen::VectorXd>& values);
std::map<std::string, double> zscore(const std::map<std::string, double>& values);

enum class QuadrantLabel { I, II, III, IV };

/// Complexity-value quadrants: II = both z-scores >= 0, III = both < 0,
/// I = complex but low-funded, IV = funded but not complex. Boundary zeros
/// land on the >= side.
QuadrantLabel quadrant(double sc_z, double v_z);
std::string quadrant_name(QuadrantLabel q);

/// Herfindahl-Hirschman concentration: sum of squared value shares, in
/// (0, 1]. All-zero input is fatal.
double hhi(const Eigen::Ref<const Eigen::VectorXd>& values);
double hhi(const std::map<std::string, double>& values);

enum class GroupBy { university, subject, funder, funder_year, university_funder_year };

/// Per-group funding aggregates. n_grants counts distinct grant ids; the
/// median is over per-grant totals within the group, not over allocations.
struct AggregateRow {
    std::string group; // composite keys joined with '|'
    double total_value = 0.0;
    long n_grants = 0;
    double median_value = 0.0;
};

std::vector<AggregateRow> aggregates(const std::vector<Allocation>& allocs, GroupBy group_by);

void write_aggregates_csv(std::ostream& out, const std::vector<AggregateRow>& rows);

} // namespace fitrank

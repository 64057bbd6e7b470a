#include "fitrank/bipartite.hpp"

#include "fitrank/csv.hpp"
#include "fitrank/errors.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <charconv>
#include <map>
#include <ostream>
#include <set>

namespace fitrank {

namespace {

double parse_cell(const std::string& s) {
    double v = 0.0;
    auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc{} || ptr != s.data() + s.size())
        throw DataError("matrix csv: bad numeric cell '" + s + "'");
    return v;
}

std::map<std::string, Eigen::Index> index_of(const std::vector<std::string>& ids) {
    std::map<std::string, Eigen::Index> idx;
    for (Eigen::Index i = 0; i < static_cast<Eigen::Index>(ids.size()); ++i)
        idx[ids[i]] = i;
    return idx;
}

BipartiteMatrix select(const BipartiteMatrix& V, const std::vector<Eigen::Index>& rows,
                       const std::vector<Eigen::Index>& cols) {
    BipartiteMatrix out;
    out.kind = V.kind;
    out.universities.reserve(rows.size());
    out.subjects.reserve(cols.size());
    for (auto r : rows) out.universities.push_back(V.universities[r]);
    for (auto c : cols) out.subjects.push_back(V.subjects[c]);
    out.weights.resize(static_cast<Eigen::Index>(rows.size()),
                       static_cast<Eigen::Index>(cols.size()));
    for (std::size_t i = 0; i < rows.size(); ++i)
        for (std::size_t j = 0; j < cols.size(); ++j)
            out.weights(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) =
                V.weights(rows[i], cols[j]);
    return out;
}

} // namespace

BipartiteMatrix build_value_matrix(const std::vector<Allocation>& allocs) {
    if (allocs.empty()) throw DataError("build_value_matrix: empty allocation list");
    std::set<std::string> unis, subs;
    for (const auto& a : allocs) {
        unis.insert(a.university);
        subs.insert(a.subject);
    }
    BipartiteMatrix m;
    m.universities.assign(unis.begin(), unis.end());
    m.subjects.assign(subs.begin(), subs.end());
    m.kind = BipartiteMatrix::Kind::raw_value;
    m.weights = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(m.universities.size()),
                                      static_cast<Eigen::Index>(m.subjects.size()));
    auto uidx = index_of(m.universities);
    auto sidx = index_of(m.subjects);
    for (const auto& a : allocs) m.weights(uidx[a.university], sidx[a.subject]) += a.value;
    return m;
}

BipartiteMatrix apply_overall_filters(const BipartiteMatrix& V,
                                      const std::vector<Allocation>& allocs,
                                      const OverallFilterParams& params) {
    if (V.kind != BipartiteMatrix::Kind::raw_value)
        throw DataError("apply_overall_filters: expected a raw_value matrix");
    if (params.start_year > params.end_year)
        throw DataError("apply_overall_filters: start_year > end_year");

    // university -> years with at least one grant; subject -> distinct grants
    std::map<std::string, std::set<int>> active_years;
    std::map<std::string, std::set<std::string>> subject_grants;
    for (const auto& a : allocs) {
        if (a.year < params.start_year || a.year > params.end_year) continue;
        active_years[a.university].insert(a.year);
        // an allocation exists exactly when the grant lists the subject with
        // a nonzero share, which is what "appeared" counts
        subject_grants[a.subject].insert(a.grant_id);
    }
    const int n_years = params.end_year - params.start_year + 1;

    std::vector<Eigen::Index> rows, cols;
    for (Eigen::Index i = 0; i < V.n_universities(); ++i) {
        auto it = active_years.find(V.universities[i]);
        if (it != active_years.end() && static_cast<int>(it->second.size()) == n_years)
            rows.push_back(i);
    }
    for (Eigen::Index j = 0; j < V.n_subjects(); ++j) {
        auto it = subject_grants.find(V.subjects[j]);
        if (it != subject_grants.end() &&
            static_cast<int>(it->second.size()) >= params.min_subject_grants)
            cols.push_back(j);
    }
    if (rows.empty() || cols.empty())
        throw DataError("apply_overall_filters: empty matrix after filtering");

    BipartiteMatrix out = select(V, rows, cols);
    // the joint selection can strand all-zero rows/columns; prune them
    CouncilFilterParams prune{1, 1};
    return apply_council_filters(out, prune);
}

BipartiteMatrix apply_council_filters(const BipartiteMatrix& V,
                                      const CouncilFilterParams& params) {
    if (V.kind != BipartiteMatrix::Kind::raw_value)
        throw DataError("apply_council_filters: expected a raw_value matrix");

    std::vector<Eigen::Index> rows(V.n_universities()), cols(V.n_subjects());
    for (Eigen::Index i = 0; i < V.n_universities(); ++i) rows[i] = i;
    for (Eigen::Index j = 0; j < V.n_subjects(); ++j) cols[j] = j;

    bool changed = true;
    while (changed) {
        changed = false;
        std::vector<Eigen::Index> keep_rows;
        for (auto r : rows) {
            int active = 0;
            for (auto c : cols)
                if (V.weights(r, c) > 0.0) ++active;
            if (active >= params.min_subjects_per_university) keep_rows.push_back(r);
        }
        if (keep_rows.size() != rows.size()) {
            rows = std::move(keep_rows);
            changed = true;
        }
        std::vector<Eigen::Index> keep_cols;
        for (auto c : cols) {
            int active = 0;
            for (auto r : rows)
                if (V.weights(r, c) > 0.0) ++active;
            if (active >= params.min_universities_per_subject) keep_cols.push_back(c);
        }
        if (keep_cols.size() != cols.size()) {
            cols = std::move(keep_cols);
            changed = true;
        }
    }
    if (rows.empty() || cols.empty())
        throw DataError("apply_council_filters: empty matrix after filtering");
    return select(V, rows, cols);
}

BipartiteMatrix normalize_columns(const BipartiteMatrix& V) {
    if (V.kind != BipartiteMatrix::Kind::raw_value)
        throw DataError("normalize_columns: expected a raw_value matrix");
    Eigen::VectorXd colsum = V.weights.colwise().sum();
    for (Eigen::Index j = 0; j < colsum.size(); ++j)
        if (!(colsum(j) > 0.0))
            throw DataError("normalize_columns: zero column '" + V.subjects[j] +
                            "' (filter first)");
    BipartiteMatrix out = V;
    out.weights = V.weights.array().rowwise() / colsum.transpose().array();
    out.kind = BipartiteMatrix::Kind::column_normalized;
    return out;
}

void write_matrix_csv(std::ostream& out, const BipartiteMatrix& m) {
    out << "university";
    for (const auto& s : m.subjects) out << ',' << csv::escape(s);
    out << '\n';
    for (Eigen::Index i = 0; i < m.n_universities(); ++i) {
        out << csv::escape(m.universities[i]);
        for (Eigen::Index j = 0; j < m.n_subjects(); ++j)
            out << ',' << csv::format_double(m.weights(i, j));
        out << '\n';
    }
}

BipartiteMatrix read_matrix_csv(std::istream& in, BipartiteMatrix::Kind kind) {
    csv::Table table = csv::parse(in);
    if (table.header.empty() || table.header[0] != "university")
        throw DataError("matrix csv: malformed header");
    BipartiteMatrix m;
    m.kind = kind;
    m.subjects.assign(table.header.begin() + 1, table.header.end());
    m.weights.resize(static_cast<Eigen::Index>(table.rows.size()),
                     static_cast<Eigen::Index>(m.subjects.size()));
    for (std::size_t i = 0; i < table.rows.size(); ++i) {
        const auto& row = table.rows[i];
        if (row.size() != table.header.size())
            throw DataError("matrix csv: ragged row at line " + std::to_string(table.line[i]));
        m.universities.push_back(row[0]);
        for (std::size_t j = 1; j < row.size(); ++j)
            m.weights(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j - 1)) =
                parse_cell(row[j]);
    }
    return m;
}

std::string matrix_to_json(const BipartiteMatrix& m) {
    nlohmann::json j;
    j["universities"] = m.universities;
    j["subjects"] = m.subjects;
    j["kind"] = m.kind == BipartiteMatrix::Kind::raw_value ? "raw_value" : "column_normalized";
    std::vector<double> flat(static_cast<std::size_t>(m.weights.size()));
    for (Eigen::Index i = 0; i < m.n_universities(); ++i)
        for (Eigen::Index jj = 0; jj < m.n_subjects(); ++jj)
            flat[static_cast<std::size_t>(i * m.n_subjects() + jj)] = m.weights(i, jj);
    j["weights_row_major"] = flat;
    return j.dump(2);
}

BipartiteMatrix matrix_from_json(const std::string& text) {
    nlohmann::json j = nlohmann::json::parse(text);
    BipartiteMatrix m;
    m.universities = j.at("universities").get<std::vector<std::string>>();
    m.subjects = j.at("subjects").get<std::vector<std::string>>();
    m.kind = j.at("kind").get<std::string>() == "raw_value"
                 ? BipartiteMatrix::Kind::raw_value
                 : BipartiteMatrix::Kind::column_normalized;
    auto flat = j.at("weights_row_major").get<std::vector<double>>();
    const auto nu = static_cast<Eigen::Index>(m.universities.size());
    const auto ns = static_cast<Eigen::Index>(m.subjects.size());
    if (static_cast<Eigen::Index>(flat.size()) != nu * ns)
        throw DataError("matrix json: weight array size mismatch");
    m.weights.resize(nu, ns);
    for (Eigen::Index i = 0; i < nu; ++i)
        for (Eigen::Index jj = 0; jj < ns; ++jj)
            m.weights(i, jj) = flat[static_cast<std::size_t>(i * ns + jj)];
    return m;
}

} // namespace fitrank

#include "fitrank/panel.hpp"

#include "fitrank/csv.hpp"
#include "fitrank/errors.hpp"
#include "fitrank/fitness.hpp"
#include "fitrank/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <ostream>

namespace fitrank {

namespace {

struct PairYearStats {
    double value = 0.0;
    std::set<std::string> grants;
};

std::string window_label(int first, int last, const std::string& funder) {
    std::string s = std::to_string(first) + "-" + std::to_string(last);
    if (!funder.empty()) s += " funder " + funder;
    return s;
}

} // namespace

RollingSeries rolling_uc(const std::vector<Allocation>& allocs, int window_len,
                         RollingLevel level, int first_year, int last_year,
                         const RollingParams& params) {
    if (window_len < 1) throw DataError("rolling_uc: window_len must be positive");
    if (first_year > last_year) throw DataError("rolling_uc: empty year range");
    if (allocs.empty()) throw DataError("rolling_uc: no allocations");

    int min_year = std::numeric_limits<int>::max();
    for (const auto& a : allocs) min_year = std::min(min_year, a.year);
    if (first_year < min_year + window_len - 1)
        throw DataError("rolling_uc: first focal year " + std::to_string(first_year) +
                        " needs data from " + std::to_string(first_year - window_len + 1) +
                        " but the data starts in " + std::to_string(min_year));

    std::set<std::string> funders;
    if (level == RollingLevel::per_funder)
        for (const auto& a : allocs) funders.insert(a.funder);
    else
        funders.insert("");

    RollingSeries series;
    for (int t = first_year; t <= last_year; ++t) {
        for (const auto& funder : funders) {
            std::optional<std::set<std::string>> filter;
            if (!funder.empty()) filter = std::set<std::string>{funder};
            std::vector<Allocation> slice = window(allocs, t - window_len + 1, t, filter);
            if (slice.empty()) continue;
            BipartiteMatrix filtered;
            try {
                filtered = apply_council_filters(build_value_matrix(slice), params.filter);
            } catch (const DataError&) {
                continue; // everything filtered out: no active universities
            }
            FitnessParams fp;
            fp.tol = params.tol;
            fp.max_iter = params.max_iter;
            FitnessResult result;
            try {
                result = iterate(normalize_columns(filtered), fp);
            } catch (const ConvergenceError& e) {
                throw ConvergenceError("rolling_uc: window " +
                                       window_label(t - window_len + 1, t, funder) + ": " +
                                       e.what());
            }
            if (!result.converged)
                throw ConvergenceError("rolling_uc: window " +
                                       window_label(t - window_len + 1, t, funder) +
                                       " did not converge after " +
                                       std::to_string(result.iterations) + " iterations");
            for (const auto& [u, score] : result.uc) series[{u, funder, t}] = score;
        }
    }
    return series;
}

const std::vector<std::string>& panel_variables() {
    static const std::vector<std::string> vars = {
        "v",      "vbar_l1", "ng",   "uc_ut_l1", "uc_uft_l1", "uc_ut5_l1", "uc_uft5_l1",
        "d_t",    "d_post",  "hhi",  "mdv_l1",   "sumv_l1",   "r_l1"};
    return vars;
}

PanelTable build_panel(const std::vector<Allocation>& allocs, const PanelConfig& config) {
    if (config.start_year > config.end_year) throw ConfigError("panel: empty year range");

    std::vector<Allocation> data;
    data.reserve(allocs.size());
    for (const auto& a : allocs)
        if (!config.exclude_funders.count(a.funder)) data.push_back(a);
    if (data.empty()) throw DataError("panel: no allocations after funder exclusion");

    int min_year = std::numeric_limits<int>::max();
    int max_year = std::numeric_limits<int>::min();
    for (const auto& a : data) {
        min_year = std::min(min_year, a.year);
        max_year = std::max(max_year, a.year);
    }
    const int longest = std::max(config.window_short, config.window_long);
    if (config.start_year - 1 - (longest - 1) < min_year)
        throw DataError("panel: data starts in " + std::to_string(min_year) +
                        " but the first lagged " + std::to_string(longest) +
                        "-year window needs " +
                        std::to_string(config.start_year - longest));

    // active (university, funder) pairs
    const int act_lo = config.activity_full_range ? min_year : config.start_year;
    const int act_hi = config.activity_full_range ? max_year : config.end_year;
    std::set<std::pair<std::string, std::string>> pairs;
    std::set<std::string> panel_funders;
    for (const auto& a : data) {
        if (a.year >= act_lo && a.year <= act_hi) {
            pairs.insert({a.university, a.funder});
            panel_funders.insert(a.funder);
        }
    }
    if (pairs.empty()) throw DataError("panel: no active university-funder pairs");

    // per-cell tallies over all years (lags reach before start_year)
    std::map<std::tuple<std::string, std::string, int>, PairYearStats> cell;
    std::map<std::pair<std::string, int>, std::map<std::string, double>> funder_year_grant_totals;
    for (const auto& a : data) {
        auto& c = cell[{a.university, a.funder, a.year}];
        c.value += a.value;
        c.grants.insert(a.grant_id);
        funder_year_grant_totals[{a.funder, a.year}][a.grant_id] += a.value;
    }
    auto cell_value = [&](const std::string& u, const std::string& f, int t) {
        auto it = cell.find({u, f, t});
        return it == cell.end() ? 0.0 : it->second.value;
    };
    auto cell_grants = [&](const std::string& u, const std::string& f, int t) {
        auto it = cell.find({u, f, t});
        return it == cell.end() ? 0L : static_cast<long>(it->second.grants.size());
    };

    // funder-year totals, grant counts, median grant
    struct FunderYear {
        double total = 0.0;
        long n_grants = 0;
        double median = 0.0;
    };
    std::map<std::pair<std::string, int>, FunderYear> funder_year;
    for (const auto& [key, grants] : funder_year_grant_totals) {
        FunderYear fy;
        std::vector<double> totals;
        totals.reserve(grants.size());
        for (const auto& [id, total] : grants) {
            fy.total += total;
            totals.push_back(total);
        }
        fy.n_grants = static_cast<long>(totals.size());
        std::sort(totals.begin(), totals.end());
        const std::size_t m = totals.size();
        fy.median = m % 2 == 1 ? totals[m / 2] : 0.5 * (totals[m / 2 - 1] + totals[m / 2]);
        funder_year[key] = fy;
    }
    auto funder_year_at = [&](const std::string& f, int t) {
        auto it = funder_year.find({f, t});
        return it == funder_year.end() ? FunderYear{} : it->second;
    };

    // rolling competitiveness, focal years start_year-1 .. end_year-1
    const int f_lo = config.start_year - 1;
    const int f_hi = config.end_year - 1;
    RollingSeries uc3f = rolling_uc(data, config.window_short, RollingLevel::per_funder, f_lo,
                                    f_hi, config.rolling);
    RollingSeries uc5f = rolling_uc(data, config.window_long, RollingLevel::per_funder, f_lo,
                                    f_hi, config.rolling);
    RollingSeries uc3p =
        rolling_uc(data, config.window_short, RollingLevel::pooled, f_lo, f_hi, config.rolling);
    RollingSeries uc5p =
        rolling_uc(data, config.window_long, RollingLevel::pooled, f_lo, f_hi, config.rolling);
    auto series_at = [](const RollingSeries& s, const std::string& u, const std::string& f,
                        int t) {
        auto it = s.find({u, f, t});
        return it == s.end() ? 0.0 : it->second;
    };

    const int n_years = config.end_year - config.start_year + 1;
    const auto n_rows = static_cast<Eigen::Index>(pairs.size()) * n_years;
    PanelTable panel;
    panel.university.reserve(static_cast<std::size_t>(n_rows));

    std::map<std::string, Eigen::VectorXd> cols;
    for (const auto& name : panel_variables()) cols[name] = Eigen::VectorXd::Zero(n_rows);
    for (const auto& name : {"ng_l1", "ng_f_l1", "ng_f_l2"})
        cols[name] = Eigen::VectorXd::Zero(n_rows);

    Eigen::Index row = 0;
    for (const auto& [u, f] : pairs) {
        for (int t = config.start_year; t <= config.end_year; ++t, ++row) {
            panel.university.push_back(u);
            panel.funder.push_back(f);
            panel.year.push_back(t);

            cols["v"](row) = cell_value(u, f, t) / 1e6;
            double vbar = 0.0;
            for (int tau = t - 3; tau <= t - 1; ++tau) vbar += cell_value(u, f, tau);
            cols["vbar_l1"](row) = vbar / 3.0 / 1e6;
            cols["ng"](row) = static_cast<double>(cell_grants(u, f, t));
            cols["ng_l1"](row) = static_cast<double>(cell_grants(u, f, t - 1));
            cols["uc_ut_l1"](row) = series_at(uc3p, u, "", t - 1);
            cols["uc_uft_l1"](row) = series_at(uc3f, u, f, t - 1);
            cols["uc_ut5_l1"](row) = series_at(uc5p, u, "", t - 1);
            cols["uc_uft5_l1"](row) = series_at(uc5f, u, f, t - 1);
            cols["d_t"](row) = config.treated_funders.count(f) ? 1.0 : 0.0;
            cols["d_post"](row) = t >= config.post_year ? 1.0 : 0.0;

            // income concentration across this funder's universities in year t
            std::map<std::string, double> incomes;
            for (const auto& [pu, pf] : pairs)
                if (pf == f) incomes[pu] = cell_value(pu, f, t);
            double total = 0.0;
            for (const auto& [pu, v] : incomes) total += v;
            cols["hhi"](row) = total > 0.0 ? hhi(incomes) : 0.0;

            const FunderYear fy1 = funder_year_at(f, t - 1);
            const FunderYear fy2 = funder_year_at(f, t - 2);
            cols["mdv_l1"](row) = fy1.median / 1e6;
            cols["sumv_l1"](row) = fy1.total / 1e8;
            cols["ng_f_l1"](row) = static_cast<double>(fy1.n_grants);
            cols["ng_f_l2"](row) = static_cast<double>(fy2.n_grants);

            double rep = 0.0;
            for (const auto& g : panel_funders)
                if (g != f) rep += static_cast<double>(cell_grants(u, g, t - 1));
            cols["r_l1"](row) = rep;
        }
    }

    for (const auto& name : panel_variables()) panel.add_column(name, std::move(cols[name]));
    for (const auto& name : {"ng_l1", "ng_f_l1", "ng_f_l2"})
        panel.add_column(name, std::move(cols[name]));

    if (panel.rows() != n_rows) throw DataError("panel: unbalanced output");
    return panel;
}

Describe describe(const PanelTable& panel) {
    if (panel.rows() == 0) throw DataError("describe: empty panel");
    Describe d;
    d.variables = panel_variables();
    const auto k = static_cast<Eigen::Index>(d.variables.size());
    Eigen::MatrixXd values(panel.rows(), k);
    for (Eigen::Index j = 0; j < k; ++j) {
        Eigen::VectorXd col = panel.column(d.variables[static_cast<std::size_t>(j)]);
        if (d.variables[static_cast<std::size_t>(j)] == "hhi") col *= 1000.0; // reporting scale
        values.col(j) = col;
    }

    for (Eigen::Index j = 0; j < k; ++j) {
        DescribeRow row;
        row.variable = d.variables[static_cast<std::size_t>(j)];
        Eigen::VectorXd col = values.col(j);
        row.mean = col.mean();
        const double ss = (col.array() - row.mean).square().sum();
        row.sd = col.size() > 1 ? std::sqrt(ss / (col.size() - 1)) : 0.0;
        std::vector<double> sorted(col.data(), col.data() + col.size());
        std::sort(sorted.begin(), sorted.end());
        const std::size_t m = sorted.size();
        row.median = m % 2 == 1 ? sorted[m / 2] : 0.5 * (sorted[m / 2 - 1] + sorted[m / 2]);
        row.min = col.minCoeff();
        row.max = col.maxCoeff();
        d.rows.push_back(row);
    }

    d.corr = Eigen::MatrixXd::Constant(k, k, std::numeric_limits<double>::quiet_NaN());
    for (Eigen::Index a = 0; a < k; ++a) {
        for (Eigen::Index b = 0; b <= a; ++b) {
            Eigen::ArrayXd xa = values.col(a).array() - values.col(a).mean();
            Eigen::ArrayXd xb = values.col(b).array() - values.col(b).mean();
            const double denom = std::sqrt(xa.square().sum() * xb.square().sum());
            if (denom > 0.0) {
                d.corr(a, b) = (xa * xb).sum() / denom;
                d.corr(b, a) = d.corr(a, b);
            }
        }
    }
    return d;
}

void write_describe_csv(std::ostream& out, const Describe& d) {
    out << "variable,mean,sd,median,min,max";
    for (const auto& v : d.variables) out << ',' << csv::escape("corr_" + v);
    out << '\n';
    for (std::size_t i = 0; i < d.rows.size(); ++i) {
        const auto& r = d.rows[i];
        out << csv::escape(r.variable) << ',' << csv::format_double(r.mean) << ','
            << csv::format_double(r.sd) << ',' << csv::format_double(r.median) << ','
            << csv::format_double(r.min) << ',' << csv::format_double(r.max);
        for (Eigen::Index j = 0; j < d.corr.cols(); ++j) {
            const double c = d.corr(static_cast<Eigen::Index>(i), j);
            out << ',';
            if (!std::isnan(c)) out << csv::format_double(c); // blank when undefined
        }
        out << '\n';
    }
}

} // namespace fitrank

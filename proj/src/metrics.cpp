#include "fitrank/metrics.hpp"

#include "fitrank/csv.hpp"
#include "fitrank/errors.hpp"

#include <algorithm>
#include <cmath>
#include <ostream>

namespace fitrank {

namespace {

// pairs of ranks for identifiers common to both rankings
struct PairedRanks {
    std::vector<std::pair<double, double>> pairs;
    int n_dropped = 0;
};

PairedRanks pair_common(const Ranking& a, const Ranking& b) {
    std::map<std::string, double> rank_b;
    for (const auto& e : b.entries) rank_b[e.id] = e.rank;
    PairedRanks out;
    for (const auto& e : a.entries) {
        auto it = rank_b.find(e.id);
        if (it == rank_b.end()) {
            ++out.n_dropped;
            continue;
        }
        out.pairs.emplace_back(static_cast<double>(e.rank), it->second);
    }
    out.n_dropped += static_cast<int>(b.entries.size()) -
                     static_cast<int>(out.pairs.size());
    return out;
}

long long tie_pair_count(std::vector<double> v) {
    std::sort(v.begin(), v.end());
    long long total = 0;
    std::size_t i = 0;
    while (i < v.size()) {
        std::size_t j = i;
        while (j < v.size() && v[j] == v[i]) ++j;
        const long long t = static_cast<long long>(j - i);
        total += t * (t - 1) / 2;
        i = j;
    }
    return total;
}

// merge sort on y counting exchanges = discordant pairs, given pairs sorted
// by (x, y)
long long count_swaps(std::vector<double>& y, std::vector<double>& tmp, std::size_t lo,
                      std::size_t hi) {
    if (hi - lo < 2) return 0;
    const std::size_t mid = lo + (hi - lo) / 2;
    long long swaps = count_swaps(y, tmp, lo, mid) + count_swaps(y, tmp, mid, hi);
    std::size_t i = lo, j = mid, k = lo;
    while (i < mid && j < hi) {
        if (y[j] < y[i]) {
            swaps += static_cast<long long>(mid - i);
            tmp[k++] = y[j++];
        } else {
            tmp[k++] = y[i++];
        }
    }
    while (i < mid) tmp[k++] = y[i++];
    while (j < hi) tmp[k++] = y[j++];
    std::copy(tmp.begin() + static_cast<long>(lo), tmp.begin() + static_cast<long>(hi),
              y.begin() + static_cast<long>(lo));
    return swaps;
}

} // namespace

TauResult kendall_tau(const Ranking& a, const Ranking& b, bool tau_a) {
    PairedRanks paired = pair_common(a, b);
    auto& pairs = paired.pairs;
    const auto n = static_cast<long long>(pairs.size());
    if (n < 2) throw DataError("kendall_tau: fewer than 2 common identifiers");

    std::sort(pairs.begin(), pairs.end());
    std::vector<double> xs(pairs.size()), ys(pairs.size());
    for (std::size_t i = 0; i < pairs.size(); ++i) {
        xs[i] = pairs[i].first;
        ys[i] = pairs[i].second;
    }

    const long long n0 = n * (n - 1) / 2;
    const long long n1 = tie_pair_count(xs);
    const long long n2 = tie_pair_count(ys);
    // joint ties, for the concordance identity n_c + n_d = n0 - n1 - n2 + n3
    long long n3 = 0;
    {
        std::size_t i = 0;
        while (i < pairs.size()) {
            std::size_t j = i;
            while (j < pairs.size() && pairs[j] == pairs[i]) ++j;
            const long long t = static_cast<long long>(j - i);
            n3 += t * (t - 1) / 2;
            i = j;
        }
    }
    std::vector<double> tmp(ys.size());
    const long long swaps = count_swaps(ys, tmp, 0, ys.size());
    const long long nc_minus_nd = n0 - n1 - n2 + n3 - 2 * swaps;

    TauResult r;
    r.n_common = static_cast<int>(n);
    r.n_dropped = paired.n_dropped;
    if (tau_a) {
        r.tau = static_cast<double>(nc_minus_nd) / static_cast<double>(n0);
        return r;
    }
    const long long da = n0 - n1;
    const long long db = n0 - n2;
    if (da == 0 || db == 0) {
        // fully tied ranking(s): perfect agreement when both are fully tied,
        // undefined otherwise
        if (da == 0 && db == 0) {
            r.tau = 1.0;
            return r;
        }
        throw DataError("kendall_tau: degenerate ranking (all entries tied)");
    }
    r.tau = static_cast<double>(nc_minus_nd) /
            std::sqrt(static_cast<double>(da) * static_cast<double>(db));
    return r;
}

std::map<std::string, int> rank_delta(const Ranking& a, const Ranking& b) {
    std::map<std::string, int> rank_b;
    for (const auto& e : b.entries) rank_b[e.id] = e.rank;
    std::map<std::string, int> out;
    for (const auto& e : a.entries) {
        auto it = rank_b.find(e.id);
        if (it != rank_b.end()) out[e.id] = it->second - e.rank;
    }
    if (out.empty()) throw DataError("rank_delta: no common identifiers");
    return out;
}

Eigen::VectorXd zscore(const Eigen::Ref<const Eigen::VectorXd>& values) {
    if (values.size() < 2) throw DataError("zscore: need at least 2 values");
    const double mean = values.mean();
    const double var = (values.array() - mean).square().sum() / values.size();
    if (!(var > 0.0)) throw DataError("zscore: degenerate distribution (zero sd)");
    return (values.array() - mean) / std::sqrt(var);
}

std::map<std::string, double> zscore(const std::map<std::string, double>& values) {
    Eigen::VectorXd v(static_cast<Eigen::Index>(values.size()));
    Eigen::Index i = 0;
    for (const auto& [id, x] : values) v(i++) = x;
    Eigen::VectorXd z = zscore(v);
    std::map<std::string, double> out;
    i = 0;
    for (const auto& [id, x] : values) out[id] = z(i++);
    return out;
}

QuadrantLabel quadrant(double sc_z, double v_z) {
    if (!std::isfinite(sc_z) || !std::isfinite(v_z))
        throw DataError("quadrant: non-finite input");
    if (sc_z >= 0.0) return v_z >= 0.0 ? QuadrantLabel::II : QuadrantLabel::I;
    return v_z >= 0.0 ? QuadrantLabel::IV : QuadrantLabel::III;
}

std::string quadrant_name(QuadrantLabel q) {
    switch (q) {
    case QuadrantLabel::I: return "I";
    case QuadrantLabel::II: return "II";
    case QuadrantLabel::III: return "III";
    case QuadrantLabel::IV: return "IV";
    }
    return {};
}

double hhi(const Eigen::Ref<const Eigen::VectorXd>& values) {
    if ((values.array() < 0.0).any()) throw DataError("hhi: negative value");
    const double total = values.sum();
    if (!(total > 0.0)) throw DataError("hhi: all values zero");
    return (values.array() / total).square().sum();
}

double hhi(const std::map<std::string, double>& values) {
    Eigen::VectorXd v(static_cast<Eigen::Index>(values.size()));
    Eigen::Index i = 0;
    for (const auto& [id, x] : values) v(i++) = x;
    return hhi(v);
}

std::vector<AggregateRow> aggregates(const std::vector<Allocation>& allocs,
                                     GroupBy group_by) {
    if (allocs.empty()) throw DataError("aggregates: empty allocation list");
    auto key_of = [group_by](const Allocation& a) -> std::string {
        switch (group_by) {
        case GroupBy::university: return a.university;
        case GroupBy::subject: return a.subject;
        case GroupBy::funder: return a.funder;
        case GroupBy::funder_year: return a.funder + '|' + std::to_string(a.year);
        case GroupBy::university_funder_year:
            return a.university + '|' + a.funder + '|' + std::to_string(a.year);
        }
        return {};
    };
    // group -> grant -> total within the group
    std::map<std::string, std::map<std::string, double>> grant_totals;
    for (const auto& a : allocs) grant_totals[key_of(a)][a.grant_id] += a.value;

    std::vector<AggregateRow> rows;
    rows.reserve(grant_totals.size());
    for (const auto& [group, grants] : grant_totals) {
        AggregateRow row;
        row.group = group;
        row.n_grants = static_cast<long>(grants.size());
        std::vector<double> totals;
        totals.reserve(grants.size());
        for (const auto& [id, total] : grants) {
            row.total_value += total;
            totals.push_back(total);
        }
        std::sort(totals.begin(), totals.end());
        const std::size_t m = totals.size();
        row.median_value =
            m % 2 == 1 ? totals[m / 2] : 0.5 * (totals[m / 2 - 1] + totals[m / 2]);
        rows.push_back(std::move(row));
    }
    return rows;
}

void write_aggregates_csv(std::ostream& out, const std::vector<AggregateRow>& rows) {
    out << "group,total_value_gbp,n_grants,median_value_gbp\n";
    for (const auto& r : rows) {
        out << csv::escape(r.group) << ',' << csv::format_double(r.total_value) << ','
            << r.n_grants << ',' << csv::format_double(r.median_value) << '\n';
    }
}

} // namespace fitrank

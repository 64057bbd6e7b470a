#include "fitrank/fitness.hpp"

#include "fitrank/csv.hpp"
#include "fitrank/errors.hpp"
#include "fitrank/metrics.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <cmath>
#include <limits>
#include <ostream>

namespace fitrank {

namespace {

constexpr double kUnderflowFloor = 1e-300;

void check_normalized(const BipartiteMatrix& M) {
    if (M.kind != BipartiteMatrix::Kind::column_normalized)
        throw DataError("iterate: matrix must be column_normalized");
    if (M.weights.size() == 0) throw DataError("iterate: empty matrix");
    if ((M.weights.array() < 0.0).any()) throw DataError("iterate: negative weights");
    for (Eigen::Index i = 0; i < M.n_universities(); ++i)
        if (!(M.weights.row(i).sum() > 0.0))
            throw DataError("iterate: all-zero row '" + M.universities[i] + "'");
    for (Eigen::Index j = 0; j < M.n_subjects(); ++j)
        if (std::abs(M.weights.col(j).sum() - 1.0) > 1e-9)
            throw DataError("iterate: column '" + M.subjects[j] + "' does not sum to 1");
}

double max_rel_change(const Eigen::VectorXd& next, const Eigen::VectorXd& prev) {
    return ((next - prev).cwiseAbs().array() / prev.array()).maxCoeff();
}

std::map<std::string, double> zip(const std::vector<std::string>& ids,
                                  const Eigen::VectorXd& v) {
    std::map<std::string, double> out;
    for (Eigen::Index i = 0; i < v.size(); ++i) out[ids[i]] = v(i);
    return out;
}

} // namespace

FixedPoint fitness_fixed_point(const Eigen::Ref<const Eigen::MatrixXd>& M,
                               const Eigen::VectorXd& uc0, const Eigen::VectorXd& sc0,
                               double tol, int max_iter) {
    if (!(tol > 0.0)) throw DataError("fitness: tol must be positive");
    if (max_iter < 1) throw DataError("fitness: max_iter must be positive");

    FixedPoint fp;
    fp.uc = uc0 / uc0.mean();
    fp.sc = sc0 / sc0.mean();
    for (int n = 1; n <= max_iter; ++n) {
        Eigen::VectorXd uc_t = M * fp.sc;
        Eigen::VectorXd sc_t = (M.transpose() * fp.uc.cwiseInverse()).cwiseInverse();
        if (uc_t.minCoeff() < kUnderflowFloor || sc_t.minCoeff() < kUnderflowFloor)
            throw ConvergenceError("fitness: degenerate trajectory (score underflow at "
                                   "iteration " +
                                   std::to_string(n) + ")");
        Eigen::VectorXd uc_n = uc_t / uc_t.mean();
        Eigen::VectorXd sc_n = sc_t / sc_t.mean();
        fp.final_delta = std::max(max_rel_change(uc_n, fp.uc), max_rel_change(sc_n, fp.sc));
        fp.uc = std::move(uc_n);
        fp.sc = std::move(sc_n);
        fp.iterations = n;
        if (fp.final_delta < tol) {
            fp.converged = true;
            break;
        }
    }
    return fp;
}

Eigen::VectorXd random_positive_vector(Eigen::Index n, std::mt19937_64& rng) {
    Eigen::VectorXd v(n);
    for (Eigen::Index i = 0; i < n; ++i) {
        // top 53 bits -> uniform in [0,1); shifted away from zero
        const double u01 = static_cast<double>(rng() >> 11) * 0x1.0p-53;
        v(i) = 0.1 + u01;
    }
    return v;
}

FitnessResult iterate(const BipartiteMatrix& M, const FitnessParams& params) {
    check_normalized(M);
    const Eigen::Index nu = M.n_universities();
    const Eigen::Index ns = M.n_subjects();

    Eigen::VectorXd uc0, sc0;
    std::string label;
    if (params.init == FitnessParams::Init::even) {
        uc0 = Eigen::VectorXd::Ones(nu);
        sc0 = Eigen::VectorXd::Ones(ns);
        label = "even";
    } else {
        std::mt19937_64 rng(params.seed);
        uc0 = random_positive_vector(nu, rng);
        sc0 = random_positive_vector(ns, rng);
        label = "random(seed=" + std::to_string(params.seed) + ")";
    }

    FixedPoint fp = fitness_fixed_point(M.weights, uc0, sc0, params.tol, params.max_iter);
    FitnessResult r;
    r.uc = zip(M.universities, fp.uc);
    r.sc = zip(M.subjects, fp.sc);
    r.iterations = fp.iterations;
    r.final_delta = fp.final_delta;
    r.converged = fp.converged;
    r.init_label = label;
    return r;
}

Ranking rank(const std::map<std::string, double>& scores) {
    if (scores.empty()) throw DataError("rank: empty score map");
    Ranking out;
    out.entries.reserve(scores.size());
    for (const auto& [id, score] : scores) {
        if (std::isnan(score)) throw DataError("rank: NaN score for '" + id + "'");
        out.entries.push_back({id, score, 0});
    }
    // descending score; map iteration already gave lexicographic id order,
    // stable_sort keeps it within ties
    std::stable_sort(out.entries.begin(), out.entries.end(),
                     [](const RankingEntry& a, const RankingEntry& b) {
                         return a.score > b.score;
                     });
    for (std::size_t i = 0; i < out.entries.size(); ++i) {
        if (i > 0 && out.entries[i].score == out.entries[i - 1].score)
            out.entries[i].rank = out.entries[i - 1].rank;
        else
            out.entries[i].rank = static_cast<int>(i) + 1;
    }
    return out;
}

VerifyDiagnostics verify_fixed_point(const BipartiteMatrix& M, const FitnessResult& reference,
                                     int n_random_inits, std::uint64_t seed,
                                     const FitnessParams& params) {
    if (!reference.converged)
        throw ConvergenceError("verify_fixed_point: reference result did not converge");
    if (n_random_inits < 1) throw DataError("verify_fixed_point: need at least one rerun");

    VerifyDiagnostics d;
    d.runs = n_random_inits;
    d.min_score = std::numeric_limits<double>::infinity();
    d.worst_tau = 1.0;
    d.max_rel_diff = 0.0;
    bool all_tau_one = true;

    Ranking ref_uc = rank(reference.uc);
    Ranking ref_sc = rank(reference.sc);

    std::mt19937_64 rng(seed);
    for (int run = 0; run < n_random_inits; ++run) {
        Eigen::VectorXd uc0 = random_positive_vector(M.n_universities(), rng);
        Eigen::VectorXd sc0 = random_positive_vector(M.n_subjects(), rng);
        FixedPoint fp;
        try {
            fp = fitness_fixed_point(M.weights, uc0, sc0, params.tol, params.max_iter);
        } catch (const ConvergenceError&) {
            // a collapsing rerun is a failed verdict, not a fatal error here
            d.min_score = 0.0;
            d.worst_tau = std::min(d.worst_tau, -1.0);
            all_tau_one = false;
            continue;
        }
        d.min_score = std::min({d.min_score, fp.uc.minCoeff(), fp.sc.minCoeff()});
        if (!fp.converged) {
            all_tau_one = false;
            d.worst_tau = std::min(d.worst_tau, -1.0);
            continue;
        }
        FitnessResult rerun;
        rerun.uc = zip(M.universities, fp.uc);
        rerun.sc = zip(M.subjects, fp.sc);
        const double tau_uc = kendall_tau(ref_uc, rank(rerun.uc)).tau;
        const double tau_sc = kendall_tau(ref_sc, rank(rerun.sc)).tau;
        d.worst_tau = std::min({d.worst_tau, tau_uc, tau_sc});
        if (tau_uc < 1.0 || tau_sc < 1.0) all_tau_one = false;
        for (const auto& [id, score] : reference.uc)
            d.max_rel_diff =
                std::max(d.max_rel_diff, std::abs(rerun.uc.at(id) - score) / score);
        for (const auto& [id, score] : reference.sc)
            d.max_rel_diff =
                std::max(d.max_rel_diff, std::abs(rerun.sc.at(id) - score) / score);
    }
    d.nonzero = d.min_score > 1e-12;
    d.init_independent = all_tau_one;
    return d;
}

std::string fitness_to_json(const FitnessResult& r) {
    nlohmann::json j;
    Ranking uc_rank = rank(r.uc);
    Ranking sc_rank = rank(r.sc);
    j["universities"] = nlohmann::json::array();
    for (const auto& e : uc_rank.entries)
        j["universities"].push_back({{"id", e.id}, {"uc", e.score}, {"rank", e.rank}});
    j["subjects"] = nlohmann::json::array();
    for (const auto& e : sc_rank.entries)
        j["subjects"].push_back({{"id", e.id}, {"sc", e.score}, {"rank", e.rank}});
    j["iterations"] = r.iterations;
    j["final_delta"] = r.final_delta;
    j["converged"] = r.converged;
    j["init"] = r.init_label;
    return j.dump(2);
}

void write_fitness_csv(std::ostream& out, const FitnessResult& r) {
    out << "kind,id,score,rank\n";
    for (const auto& e : rank(r.uc).entries)
        out << "university," << csv::escape(e.id) << ',' << csv::format_double(e.score) << ','
            << e.rank << '\n';
    for (const auto& e : rank(r.sc).entries)
        out << "subject," << csv::escape(e.id) << ',' << csv::format_double(e.score) << ','
            << e.rank << '\n';
}

} // namespace fitrank

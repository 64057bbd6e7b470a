#pragma once

#include "fitrank/bipartite.hpp"

#include <Eigen/Core>

#include <cstdint>
#include <map>
#include <random>
#include <string>
#include <vector>

namespace fitrank {

struct FitnessParams {
    double tol = 1e-10;       // max relative change over both vectors
    int max_iter = 10000;
    enum class Init { even, random } init = Init::even;
    std::uint64_t seed = 0;   // used only for random init
};

/// Converged competitiveness/complexity scores. Both vectors are normalized
/// to mean 1 every iteration, so scores are comparable across runs.
struct FitnessResult {
    std::map<std::string, double> uc; // university -> competitiveness
    std::map<std::string, double> sc; // subject -> complexity
    int iterations = 0;
    double final_delta = 0.0;
    bool converged = false;
    std::string init_label;
};

/// Low-level kernel on a column-normalized weight matrix. Runs the
/// two-block nonlinear map
///   uc~ = M sc,   sc~ = 1 / (M' (1/uc)),   then divide each by its mean,
/// from a strictly positive start until the max relative change of both
/// vectors drops below tol. Trajectories that collapse below 1e-300 are
/// fatal ("degenerate trajectory"); hitting max_iter just clears the
/// converged flag, scores are still returned.
struct FixedPoint {
    Eigen::VectorXd uc;
    Eigen::VectorXd sc;
    int iterations = 0;
    double final_delta = 0.0;
    bool converged = false;
};
FixedPoint fitness_fixed_point(const Eigen::Ref<const Eigen::MatrixXd>& M,
                               const Eigen::VectorXd& uc0, const Eigen::VectorXd& sc0,
                               double tol, int max_iter);

/// Spec-level entry point: checks matrix invariants, builds the start
/// vector, attaches identifiers.
FitnessResult iterate(const BipartiteMatrix& M, const FitnessParams& params = {});

/// Strictly positive uniform draws in [0.1, 1.1), from a documented
/// mt19937_64 stream (see README) so reruns are reproducible anywhere.
Eigen::VectorXd random_positive_vector(Eigen::Index n, std::mt19937_64& rng);

struct RankingEntry {
    std::string id;
    double score = 0.0;
    int rank = 0; // competition ranking: ties share the smaller rank
};

/// Descending by score; tied entries share the smaller rank and are listed
/// lexicographically by identifier.
struct Ranking {
    std::vector<RankingEntry> entries;
};

Ranking rank(const std::map<std::string, double>& scores);

struct VerifyDiagnostics {
    bool nonzero = false;          // min score over all reruns > 1e-12
    bool init_independent = false; // Kendall tau == 1 vs reference for every rerun
    double min_score = 0.0;
    double worst_tau = 1.0;        // smallest tau observed across reruns and vectors
    double max_rel_diff = 0.0;     // worst elementwise relative deviation from reference
    int runs = 0;
};

/// Rerun the iteration from strictly positive random starts and compare
/// against a converged reference result. Failed verdicts are data, not
/// errors.
VerifyDiagnostics verify_fixed_point(const BipartiteMatrix& M, const FitnessResult& reference,
                                     int n_random_inits, std::uint64_t seed,
                                     const FitnessParams& params = {});

std::string fitness_to_json(const FitnessResult& r);
void write_fitness_csv(std::ostream& out, const FitnessResult& r);

} // namespace fitrank

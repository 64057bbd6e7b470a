#pragma once

#include "fitrank/bipartite.hpp"
#include "fitrank/grants.hpp"
#include "fitrank/table.hpp"

#include <cstdint>
#include <map>
#include <random>
#include <string>
#include <vector>

namespace fitrank::synth {

/// Deterministic draws from mt19937_64. The conversions are fixed and
/// documented in the README so the streams can be reproduced elsewhere:
///   u01    = (next() >> 11) * 2^-53                 in [0, 1)
///   normal = sqrt(-2 ln(1 - u1)) * cos(2 pi u2)     (Box-Muller, one value per pair)
///   poisson: Knuth's product-of-uniforms, lambda split into chunks of 30
struct Rng {
    explicit Rng(std::uint64_t seed) : engine(seed) {}
    std::mt19937_64 engine;

    double u01() { return static_cast<double>(engine() >> 11) * 0x1.0p-53; }
    double normal();
    long poisson(double lambda);
};

struct NestedMatrixSpec {
    int n_universities = 5;
    int n_subjects = 6;
    double nestedness = 1.0; // 1 = exactly triangular support
    double noise = 0.0;      // weight jitter: w = 1 + noise * u01
    std::uint64_t seed = 0;
};

/// Raw-value matrix with a staircase support: university i is active in
/// subjects 1..k_i, k_i decreasing. Below nestedness 1 every incomplete row
/// gains one guaranteed off-staircase cell plus independent extras with
/// probability (1 - nestedness); this keeps the fixed point strictly
/// positive (a perfect staircase collapses by construction).
BipartiteMatrix gen_nested(const NestedMatrixSpec& spec);

/// k_i ladder used by gen_nested; exposed for support-order asserts.
std::vector<int> staircase_supports(int n_universities, int n_subjects);

struct PanelDgpSpec {
    int n_universities = 30;
    int n_funders = 6;
    int n_years = 10;
    int start_year = 2011;
    int post_year = 2016;        // d_post = year >= post_year
    double true_delta = -0.1;    // on d_post x uc
    std::map<std::string, double> true_beta = {{"uc", 0.3}}; // main effects; extra
                                                             // names become N(0,1) columns
    double fe_scale = 0.3;       // sd of university/funder/year effects
    double intercept = 0.5;
    std::uint64_t seed = 0;
};

struct PanelDgpTruth {
    double delta = 0.0;
    std::map<std::string, double> beta;
    double intercept = 0.0;
};

struct GeneratedPanel {
    PanelTable panel;
    PanelDgpTruth truth;
};

/// Poisson outcomes from exp(intercept + alpha_u + psi_f + lambda_t +
/// beta'x + delta * d_post * uc). The treatment intensity column "uc" is a
/// persistent positive pair-level draw with mild year-to-year variation.
GeneratedPanel gen_panel(const PanelDgpSpec& spec);

struct GrantFixtureSpec {
    int n_universities = 20;
    int n_subjects = 12;
    std::vector<std::string> funders = {"AHRC", "EPSRC", "ESRC", "MRC", "NERC", "STFC"};
    int start_year = 2006;
    int end_year = 2020;
    int grants_per_funder_year = 30;
    double drift = 0.15; // how far university strengths rotate over the full range
    std::uint64_t seed = 1;
};

/// Synthetic grant records in the ingest schema: nested-ish funding
/// structure whose university ordering drifts over time, so period
/// rankings, rank deltas and panel regressions all have signal.
std::vector<GrantRecord> gen_grant_fixture(const GrantFixtureSpec& spec);

} // namespace fitrank::synth

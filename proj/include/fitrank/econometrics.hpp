#pragma once

#include "fitrank/table.hpp"

#include <Eigen/Core>

#include <iosfwd>
#include <string>
#include <utility>
#include <vector>

namespace fitrank {

enum class Family { poisson_pml, linear_log };

/// Declarative regression specification over a PanelTable.
///
/// Regressor terms: a plain name is a numeric column; "a:b" is a pairwise
/// product; a factor of the form "year=2017" (or "funder=X",
/// "university=X") is a level indicator, so "year=2017:uc" is the usual
/// event-study interaction. Fixed effects expand to dummy columns with the
/// first level as reference.
struct ModelSpec {
    std::string name = "model";
    std::string outcome;
    std::vector<std::string> regressors;
    std::vector<std::string> fixed_effects; // university, funder, year, university:funder
    Family family = Family::poisson_pml;
    std::vector<std::string> cluster_dims; // subset of {university, funder}; empty -> HC0
    bool funder_trends = false;            // funder-specific linear trends
    bool funder_trends_post = false;       // trends x d_post
    std::string post_column = "d_post";
};

struct RegressionFit {
    std::vector<std::string> terms; // design columns surviving the rank filter
    Eigen::VectorXd coefficients;
    Eigen::MatrixXd vcov; // robust; clustered when the spec asks for it
    double loglik = 0.0;
    int n_obs = 0;
    int n_dropped = 0; // separated groups (poisson) / nonpositive outcomes (linear_log)
    bool converged = false;
    int iterations = 0;
    std::vector<std::string> dropped_terms; // rank-deficient columns
    bool vcov_floored = false;              // negative eigenvalues clamped to zero
    Family family = Family::poisson_pml;

    // estimation internals kept for cluster_vcov / magnitude
    Eigen::MatrixXd design;
    Eigen::VectorXd outcome;
    Eigen::VectorXd fitted; // mu for poisson; X beta for linear_log
    std::vector<Eigen::Index> row_index; // panel rows used

    double coefficient(const std::string& term) const;  // throws DataError
    double robust_se(const std::string& term) const;
    bool has_term(const std::string& term) const;
};

/// Estimate the spec by damped Newton (poisson_pml) or least squares on
/// log(outcome) over positive rows (linear_log). Fixed effects enter as
/// explicit dummies; groups with all-zero outcomes are dropped as separated
/// under Poisson. Convergence means gradient max-norm < 1e-8 and a relative
/// log-likelihood change < 1e-12; failure to converge is fatal.
RegressionFit fit(const PanelTable& panel, const ModelSpec& spec);

/// Cluster-robust sandwich covariance with score sums by cluster; two-way
/// clustering by inclusion-exclusion (V_u + V_f - V_{u^f}). small_sample
/// applies G/(G-1) per dimension. Negative eigenvalues of the combined
/// matrix are floored at zero (flag reported via *floored and on the fit
/// when used through fit()).
Eigen::MatrixXd cluster_vcov(const RegressionFit& fit, const PanelTable& panel,
                             const std::vector<std::string>& dims, bool small_sample = true,
                             bool* floored = nullptr);

struct EventPoint {
    int year = 0;
    double coef = 0.0;
    double se = 0.0;
    double ci_low = 0.0;
    double ci_high = 0.0;
};

/// Replace the "d_post x interact_var" term with year-dummy interactions
/// for every year except base_year; Wald 95% intervals on robust SEs.
std::vector<EventPoint> event_study(const PanelTable& panel, ModelSpec spec,
                                    const std::string& interact_var, int base_year);

/// Percent effect of a one-sd increase in var, before and after the policy:
///   pre  = 100 (exp(beta_main sd) - 1)
///   post = 100 (exp((beta_main + delta) sd) - 1)
/// where delta is the coefficient on "d_post:var" and sd is taken over the
/// estimation sample.
std::pair<double, double> magnitude(const RegressionFit& fit, const PanelTable& panel,
                                    const std::string& var);

/// Two-sided normal p-value and significance stars at the conventional
/// 0.05 / 0.01 / 0.001 thresholds.
double wald_p_value(double coef, double se);
std::string p_stars(double p);

void write_fit_csv(std::ostream& out, const RegressionFit& fit);
void write_event_study_csv(std::ostream& out, const std::vector<EventPoint>& points);

} // namespace fitrank

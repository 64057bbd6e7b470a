#include "fitrank/econometrics.hpp"

#include "fitrank/csv.hpp"
#include "fitrank/errors.hpp"

#include <Eigen/Cholesky>
#include <Eigen/Eigenvalues>

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <ostream>
#include <set>
#include <sstream>

namespace fitrank {

namespace {

constexpr double kGradTol = 1e-8;
constexpr double kLoglikTol = 1e-12;
constexpr int kMaxNewtonIter = 100;

std::vector<std::string> split(const std::string& s, char sep) {
    std::vector<std::string> parts;
    std::size_t pos = 0;
    while (true) {
        std::size_t next = s.find(sep, pos);
        parts.push_back(s.substr(pos, next == std::string::npos ? next : next - pos));
        if (next == std::string::npos) break;
        pos = next + 1;
    }
    return parts;
}

// one multiplicative factor of a term: a numeric column or a level indicator
Eigen::VectorXd resolve_factor(const PanelTable& panel, const std::string& factor,
                               const std::vector<Eigen::Index>& rows) {
    const auto n = static_cast<Eigen::Index>(rows.size());
    Eigen::VectorXd v(n);
    auto eq = factor.find('=');
    if (eq != std::string::npos) {
        const std::string dim = factor.substr(0, eq);
        const std::string level = factor.substr(eq + 1);
        for (Eigen::Index i = 0; i < n; ++i) {
            const Eigen::Index r = rows[static_cast<std::size_t>(i)];
            bool match = false;
            if (dim == "year") match = std::to_string(panel.year[static_cast<std::size_t>(r)]) == level;
            else if (dim == "university") match = panel.university[static_cast<std::size_t>(r)] == level;
            else if (dim == "funder") match = panel.funder[static_cast<std::size_t>(r)] == level;
            else throw ConfigError("unknown indicator dimension '" + dim + "'");
            v(i) = match ? 1.0 : 0.0;
        }
        return v;
    }
    const Eigen::VectorXd& col = panel.column(factor);
    for (Eigen::Index i = 0; i < n; ++i) v(i) = col(rows[static_cast<std::size_t>(i)]);
    return v;
}

Eigen::VectorXd resolve_term(const PanelTable& panel, const std::string& term,
                             const std::vector<Eigen::Index>& rows) {
    Eigen::VectorXd v = Eigen::VectorXd::Ones(static_cast<Eigen::Index>(rows.size()));
    for (const auto& factor : split(term, ':')) {
        if (factor.empty()) throw ConfigError("empty factor in term '" + term + "'");
        v = v.cwiseProduct(resolve_factor(panel, factor, rows));
    }
    return v;
}

std::string fe_key(const PanelTable& panel, const std::string& dim, Eigen::Index row) {
    const auto r = static_cast<std::size_t>(row);
    if (dim == "university") return panel.university[r];
    if (dim == "funder") return panel.funder[r];
    if (dim == "year") return std::to_string(panel.year[r]);
    if (dim == "university:funder") return panel.university[r] + '|' + panel.funder[r];
    throw ConfigError("unknown fixed-effect dimension '" + dim + "'");
}

struct Design {
    std::vector<std::string> names;
    Eigen::MatrixXd X;
};

Design build_design(const PanelTable& panel, const ModelSpec& spec,
                    const std::vector<Eigen::Index>& rows) {
    const auto n = static_cast<Eigen::Index>(rows.size());
    std::vector<std::pair<std::string, Eigen::VectorXd>> cols;
    cols.emplace_back("(intercept)", Eigen::VectorXd::Ones(n));
    for (const auto& term : spec.regressors)
        cols.emplace_back(term, resolve_term(panel, term, rows));

    for (const auto& dim : spec.fixed_effects) {
        std::set<std::string> levels;
        for (auto r : rows) levels.insert(fe_key(panel, dim, r));
        bool first = true;
        for (const auto& level : levels) {
            if (first) { // reference category
                first = false;
                continue;
            }
            Eigen::VectorXd v(n);
            for (Eigen::Index i = 0; i < n; ++i)
                v(i) = fe_key(panel, dim, rows[static_cast<std::size_t>(i)]) == level ? 1.0 : 0.0;
            cols.emplace_back(dim + "=" + level, std::move(v));
        }
    }

    if (spec.funder_trends || spec.funder_trends_post) {
        std::set<std::string> funders;
        int min_year = std::numeric_limits<int>::max();
        for (auto r : rows) {
            funders.insert(panel.funder[static_cast<std::size_t>(r)]);
            min_year = std::min(min_year, panel.year[static_cast<std::size_t>(r)]);
        }
        const Eigen::VectorXd post = spec.funder_trends_post
                                         ? resolve_term(panel, spec.post_column, rows)
                                         : Eigen::VectorXd();
        bool first = true;
        for (const auto& f : funders) {
            if (first) { // reference funder carries no trend
                first = false;
                continue;
            }
            Eigen::VectorXd v(n);
            for (Eigen::Index i = 0; i < n; ++i) {
                const Eigen::Index r = rows[static_cast<std::size_t>(i)];
                v(i) = panel.funder[static_cast<std::size_t>(r)] == f
                           ? static_cast<double>(panel.year[static_cast<std::size_t>(r)] - min_year)
                           : 0.0;
            }
            if (spec.funder_trends) cols.emplace_back("trend:funder=" + f, v);
            if (spec.funder_trends_post)
                cols.emplace_back("trend_post:funder=" + f, v.cwiseProduct(post));
        }
    }

    Design d;
    d.names.reserve(cols.size());
    d.X.resize(n, static_cast<Eigen::Index>(cols.size()));
    for (std::size_t j = 0; j < cols.size(); ++j) {
        d.names.push_back(cols[j].first);
        d.X.col(static_cast<Eigen::Index>(j)) = cols[j].second;
    }
    return d;
}

// Greedy left-to-right rank filter (modified Gram-Schmidt): keeps the
// earliest spanning set so user terms win over fixed-effect dummies.
void drop_rank_deficient(Design& d, std::vector<std::string>& dropped) {
    const Eigen::Index n = d.X.rows();
    const Eigen::Index k = d.X.cols();
    Eigen::MatrixXd q(n, k);
    Eigen::Index kept = 0;
    std::vector<Eigen::Index> keep_idx;
    for (Eigen::Index j = 0; j < k; ++j) {
        Eigen::VectorXd r = d.X.col(j);
        const double norm0 = r.norm();
        if (kept > 0) {
            // re-orthogonalize twice for numerical stability
            r -= q.leftCols(kept) * (q.leftCols(kept).transpose() * r);
            r -= q.leftCols(kept) * (q.leftCols(kept).transpose() * r);
        }
        if (norm0 <= 0.0 || r.norm() <= 1e-8 * norm0) {
            dropped.push_back(d.names[static_cast<std::size_t>(j)]);
            continue;
        }
        q.col(kept) = r / r.norm();
        keep_idx.push_back(j);
        ++kept;
    }
    if (keep_idx.size() == static_cast<std::size_t>(k)) return;
    Design nd;
    nd.X.resize(n, kept);
    for (Eigen::Index j = 0; j < kept; ++j) {
        nd.X.col(j) = d.X.col(keep_idx[static_cast<std::size_t>(j)]);
        nd.names.push_back(d.names[static_cast<std::size_t>(keep_idx[static_cast<std::size_t>(j)])]);
    }
    d = std::move(nd);
}

double poisson_loglik(const Eigen::VectorXd& y, const Eigen::VectorXd& eta) {
    double ll = 0.0;
    for (Eigen::Index i = 0; i < y.size(); ++i) {
        const double mu = std::exp(eta(i));
        if (!std::isfinite(mu)) return -std::numeric_limits<double>::infinity();
        ll += y(i) * eta(i) - mu - std::lgamma(y(i) + 1.0);
    }
    return ll;
}

// rows whose every fixed-effect group has some positive outcome; iterated
// since dropping rows can zero out another group
std::vector<Eigen::Index> drop_separated(const PanelTable& panel, const ModelSpec& spec,
                                         const Eigen::VectorXd& y,
                                         std::vector<Eigen::Index> rows) {
    bool changed = true;
    while (changed) {
        changed = false;
        for (const auto& dim : spec.fixed_effects) {
            std::map<std::string, double> group_total;
            for (auto r : rows) group_total[fe_key(panel, dim, r)] += y(r);
            std::vector<Eigen::Index> kept;
            kept.reserve(rows.size());
            for (auto r : rows)
                if (group_total[fe_key(panel, dim, r)] > 0.0) kept.push_back(r);
            if (kept.size() != rows.size()) {
                rows = std::move(kept);
                changed = true;
            }
        }
    }
    return rows;
}

Eigen::MatrixXd sandwich(const Eigen::MatrixXd& bread_inv, const Eigen::MatrixXd& meat) {
    return bread_inv * meat * bread_inv;
}

// scores s_i = x_i * (working residual); bread^{-1} at the optimum
struct RobustParts {
    Eigen::MatrixXd bread_inv;
    Eigen::MatrixXd scores; // n x k
};

RobustParts robust_parts(const RegressionFit& fit) {
    const Eigen::MatrixXd& X = fit.design;
    RobustParts parts;
    Eigen::VectorXd resid;
    Eigen::MatrixXd bread;
    if (fit.family == Family::poisson_pml) {
        resid = fit.outcome - fit.fitted;
        bread = X.transpose() * fit.fitted.asDiagonal() * X;
    } else {
        resid = fit.outcome - fit.fitted; // log outcome minus linear predictor
        bread = X.transpose() * X;
    }
    parts.bread_inv = bread.ldlt().solve(
        Eigen::MatrixXd::Identity(bread.rows(), bread.cols()));
    parts.scores = X.array().colwise() * resid.array();
    return parts;
}

} // namespace

double RegressionFit::coefficient(const std::string& term) const {
    for (std::size_t i = 0; i < terms.size(); ++i)
        if (terms[i] == term) return coefficients(static_cast<Eigen::Index>(i));
    throw DataError("fit: no term '" + term + "'");
}

double RegressionFit::robust_se(const std::string& term) const {
    for (std::size_t i = 0; i < terms.size(); ++i)
        if (terms[i] == term)
            return std::sqrt(vcov(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(i)));
    throw DataError("fit: no term '" + term + "'");
}

bool RegressionFit::has_term(const std::string& term) const {
    return std::find(terms.begin(), terms.end(), term) != terms.end();
}

RegressionFit fit(const PanelTable& panel, const ModelSpec& spec) {
    if (panel.rows() == 0) throw DataError("fit: empty panel");
    for (const auto& term : spec.regressors)
        if (term == spec.outcome)
            throw ConfigError("fit: outcome '" + spec.outcome + "' used as regressor");
    const Eigen::VectorXd& y_full = panel.column(spec.outcome);

    std::vector<Eigen::Index> rows(static_cast<std::size_t>(panel.rows()));
    std::iota(rows.begin(), rows.end(), Eigen::Index{0});

    RegressionFit out;
    out.family = spec.family;
    if (spec.family == Family::poisson_pml) {
        if ((y_full.array() < 0.0).any()) throw DataError("fit: negative outcome under poisson");
        rows = drop_separated(panel, spec, y_full, std::move(rows));
        if (rows.empty()) throw DataError("fit: all groups separated (zero outcomes)");
    } else {
        std::vector<Eigen::Index> kept;
        for (auto r : rows)
            if (y_full(r) > 0.0) kept.push_back(r);
        rows = std::move(kept);
        if (rows.size() < 2) throw DataError("fit: too few positive outcomes for linear_log");
    }
    out.n_dropped = static_cast<int>(panel.rows() - static_cast<Eigen::Index>(rows.size()));
    out.n_obs = static_cast<int>(rows.size());
    out.row_index = rows;

    Design design = build_design(panel, spec, rows);
    drop_rank_deficient(design, out.dropped_terms);
    out.terms = design.names;

    const auto n = static_cast<Eigen::Index>(rows.size());
    const Eigen::Index k = design.X.cols();
    Eigen::VectorXd y(n);
    for (Eigen::Index i = 0; i < n; ++i) y(i) = y_full(rows[static_cast<std::size_t>(i)]);

    if (spec.family == Family::linear_log) {
        Eigen::VectorXd z = y.array().log();
        Eigen::MatrixXd xtx = design.X.transpose() * design.X;
        Eigen::VectorXd beta = xtx.ldlt().solve(design.X.transpose() * z);
        out.coefficients = beta;
        out.fitted = design.X * beta;
        out.outcome = z;
        out.design = std::move(design.X);
        const double sigma2 = (out.outcome - out.fitted).squaredNorm() / n;
        out.loglik = -0.5 * n * (std::log(2.0 * M_PI * sigma2) + 1.0);
        out.converged = true;
        out.iterations = 1;
    } else {
        Eigen::VectorXd beta = Eigen::VectorXd::Zero(k);
        beta(0) = std::log(std::max(y.mean(), 1e-8)); // intercept start
        Eigen::VectorXd eta = design.X * beta;
        double ll = poisson_loglik(y, eta);
        bool converged = false;
        int iter = 0;
        std::ostringstream trace;
        for (iter = 1; iter <= kMaxNewtonIter; ++iter) {
            Eigen::VectorXd mu = eta.array().exp();
            Eigen::VectorXd grad = design.X.transpose() * (y - mu);
            const double grad_max = grad.cwiseAbs().maxCoeff();
            Eigen::MatrixXd hess = design.X.transpose() * mu.asDiagonal() * design.X;
            double ridge = 0.0;
            Eigen::VectorXd step;
            for (int attempt = 0; attempt < 8; ++attempt) {
                Eigen::MatrixXd h = hess;
                if (ridge > 0.0) h.diagonal().array() += ridge;
                Eigen::LDLT<Eigen::MatrixXd> ldlt(h);
                step = ldlt.solve(grad);
                if (ldlt.info() == Eigen::Success && step.allFinite()) break;
                ridge = ridge == 0.0 ? 1e-8 * hess.diagonal().maxCoeff() : ridge * 100.0;
            }
            double t = 1.0;
            double ll_new = -std::numeric_limits<double>::infinity();
            Eigen::VectorXd eta_new;
            while (t >= 1e-10) {
                eta_new = eta + t * (design.X * step);
                ll_new = poisson_loglik(y, eta_new);
                if (std::isfinite(ll_new) && ll_new >= ll - 1e-14 * std::abs(ll)) break;
                t *= 0.5;
            }
            const double rel_change = std::abs(ll_new - ll) / (1.0 + std::abs(ll_new));
            beta += t * step;
            eta = std::move(eta_new);
            ll = ll_new;
            trace << "iter " << iter << ": ll=" << ll << " grad_max=" << grad_max
                  << " step=" << t << '\n';
            // re-evaluate the gradient at the new point for the test
            Eigen::VectorXd mu_new = eta.array().exp();
            const double grad_max_new =
                (design.X.transpose() * (y - mu_new)).cwiseAbs().maxCoeff();
            if (grad_max_new < kGradTol && rel_change < kLoglikTol) {
                converged = true;
                break;
            }
        }
        if (!converged)
            throw ConvergenceError("fit: Newton did not converge in " +
                                   std::to_string(kMaxNewtonIter) + " iterations\n" +
                                   trace.str());
        out.coefficients = beta;
        out.fitted = eta.array().exp();
        out.outcome = y;
        out.design = std::move(design.X);
        out.loglik = ll;
        out.converged = true;
        out.iterations = iter;
    }

    if (spec.cluster_dims.empty()) {
        RobustParts parts = robust_parts(out);
        out.vcov = sandwich(parts.bread_inv, parts.scores.transpose() * parts.scores);
    } else {
        bool floored = false;
        out.vcov = cluster_vcov(out, panel, spec.cluster_dims, true, &floored);
        out.vcov_floored = floored;
    }
    return out;
}

Eigen::MatrixXd cluster_vcov(const RegressionFit& fit, const PanelTable& panel,
                             const std::vector<std::string>& dims, bool small_sample,
                             bool* floored) {
    if (!fit.converged) throw ConvergenceError("cluster_vcov: fit did not converge");
    if (dims.empty()) throw ConfigError("cluster_vcov: no cluster dimensions");
    for (const auto& d : dims)
        if (d != "university" && d != "funder")
            throw ConfigError("cluster_vcov: unsupported dimension '" + d + "'");

    RobustParts parts = robust_parts(fit);
    const Eigen::Index k = parts.scores.cols();

    auto meat_for = [&](const std::string& key_kind) {
        std::map<std::string, Eigen::VectorXd> sums;
        for (std::size_t i = 0; i < fit.row_index.size(); ++i) {
            const auto r = static_cast<std::size_t>(fit.row_index[i]);
            std::string key;
            if (key_kind == "university") key = panel.university[r];
            else if (key_kind == "funder") key = panel.funder[r];
            else key = panel.university[r] + '|' + panel.funder[r];
            auto it = sums.try_emplace(key, Eigen::VectorXd::Zero(k)).first;
            it->second += parts.scores.row(static_cast<Eigen::Index>(i)).transpose();
        }
        const auto g = static_cast<double>(sums.size());
        if (g < 2.0) throw DataError("cluster_vcov: dimension '" + key_kind +
                                     "' has fewer than 2 clusters");
        Eigen::MatrixXd meat = Eigen::MatrixXd::Zero(k, k);
        for (const auto& [key, s] : sums) meat += s * s.transpose();
        if (small_sample) meat *= g / (g - 1.0);
        return meat;
    };

    Eigen::MatrixXd meat;
    if (dims.size() == 1) {
        meat = meat_for(dims[0]);
    } else {
        // inclusion-exclusion over the two dimensions
        meat = meat_for("university") + meat_for("funder") - meat_for("pair");
    }
    Eigen::MatrixXd v = sandwich(parts.bread_inv, meat);

    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(0.5 * (v + v.transpose()));
    if (es.eigenvalues().minCoeff() < 0.0) {
        Eigen::VectorXd clipped = es.eigenvalues().cwiseMax(0.0);
        v = es.eigenvectors() * clipped.asDiagonal() * es.eigenvectors().transpose();
        if (floored) *floored = true;
    } else if (floored) {
        *floored = false;
    }
    return v;
}

std::vector<EventPoint> event_study(const PanelTable& panel, ModelSpec spec,
                                    const std::string& interact_var, int base_year) {
    std::set<int> years(panel.year.begin(), panel.year.end());
    if (!years.count(base_year))
        throw ConfigError("event_study: base year " + std::to_string(base_year) +
                          " not present in the panel");

    const std::string did_term = spec.post_column + ":" + interact_var;
    const std::string did_term_rev = interact_var + ":" + spec.post_column;
    std::vector<std::string> regs;
    for (const auto& term : spec.regressors)
        if (term != did_term && term != did_term_rev) regs.push_back(term);
    std::vector<std::string> event_terms;
    for (int y : years) {
        if (y == base_year) continue;
        std::string term = "year=" + std::to_string(y) + ":" + interact_var;
        regs.push_back(term);
        event_terms.push_back(std::move(term));
    }
    spec.regressors = std::move(regs);

    RegressionFit f = fit(panel, spec);
    std::vector<EventPoint> points;
    for (int y : years) {
        if (y == base_year) continue;
        const std::string term = "year=" + std::to_string(y) + ":" + interact_var;
        if (!f.has_term(term)) continue; // rank-dropped (reported on the fit)
        EventPoint p;
        p.year = y;
        p.coef = f.coefficient(term);
        p.se = f.robust_se(term);
        p.ci_low = p.coef - 1.96 * p.se;
        p.ci_high = p.coef + 1.96 * p.se;
        points.push_back(p);
    }
    return points;
}

std::pair<double, double> magnitude(const RegressionFit& fit, const PanelTable& panel,
                                    const std::string& var) {
    const std::string did_term = "d_post:" + var;
    if (!fit.has_term(var))
        throw DataError("magnitude: fit has no main effect for '" + var + "'");
    if (!fit.has_term(did_term))
        throw DataError("magnitude: fit has no '" + did_term + "' interaction");
    const Eigen::VectorXd& col = panel.column(var);
    double mean = 0.0;
    for (auto r : fit.row_index) mean += col(r);
    mean /= static_cast<double>(fit.row_index.size());
    double var_sum = 0.0;
    for (auto r : fit.row_index) var_sum += (col(r) - mean) * (col(r) - mean);
    const double sd = std::sqrt(var_sum / static_cast<double>(fit.row_index.size()));

    const double beta_main = fit.coefficient(var);
    const double delta = fit.coefficient(did_term);
    const double pre = 100.0 * (std::exp(beta_main * sd) - 1.0);
    const double post = 100.0 * (std::exp((beta_main + delta) * sd) - 1.0);
    return {pre, post};
}

double wald_p_value(double coef, double se) {
    if (!(se > 0.0)) return 1.0;
    const double z = std::abs(coef / se);
    return std::erfc(z / std::sqrt(2.0));
}

std::string p_stars(double p) {
    if (p < 0.001) return "***";
    if (p < 0.01) return "**";
    if (p < 0.05) return "*";
    return "";
}

void write_fit_csv(std::ostream& out, const RegressionFit& fit) {
    out << "term,coefficient,robust_se,p_value,stars\n";
    for (std::size_t i = 0; i < fit.terms.size(); ++i) {
        const double coef = fit.coefficients(static_cast<Eigen::Index>(i));
        const double se = std::sqrt(fit.vcov(static_cast<Eigen::Index>(i),
                                             static_cast<Eigen::Index>(i)));
        const double p = wald_p_value(coef, se);
        out << csv::escape(fit.terms[i]) << ',' << csv::format_double(coef) << ','
            << csv::format_double(se) << ',' << csv::format_double(p) << ',' << p_stars(p)
            << '\n';
    }
}

void write_event_study_csv(std::ostream& out, const std::vector<EventPoint>& points) {
    out << "year,coef,ci_low,ci_high\n";
    for (const auto& p : points)
        out << p.year << ',' << csv::format_double(p.coef) << ','
            << csv::format_double(p.ci_low) << ',' << csv::format_double(p.ci_high) << '\n';
}

} // namespace fitrank

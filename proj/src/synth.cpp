#include "fitrank/synth.hpp"

#include "fitrank/errors.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

namespace fitrank::synth {

double Rng::normal() {
    const double u1 = u01();
    const double u2 = u01();
    return std::sqrt(-2.0 * std::log(1.0 - u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

long Rng::poisson(double lambda) {
    if (!(lambda >= 0.0) || lambda > 1e4)
        throw DataError("poisson draw: lambda out of range");
    long k = 0;
    while (lambda > 0.0) {
        const double chunk = std::min(lambda, 30.0);
        lambda -= chunk;
        const double limit = std::exp(-chunk);
        double p = 1.0;
        long kc = -1;
        do {
            ++kc;
            p *= u01();
        } while (p > limit);
        k += kc;
    }
    return k;
}

std::vector<int> staircase_supports(int n_universities, int n_subjects) {
    std::vector<int> k(static_cast<std::size_t>(n_universities));
    for (int i = 0; i < n_universities; ++i) {
        const double frac =
            static_cast<double>(n_subjects) * (n_universities - i) / n_universities;
        k[static_cast<std::size_t>(i)] = std::max(1, static_cast<int>(std::lround(frac)));
    }
    return k;
}

namespace {

std::string padded_id(char prefix, int i) {
    std::string num = std::to_string(i + 1);
    while (num.size() < 3) num.insert(num.begin(), '0');
    return prefix + num;
}

} // namespace

BipartiteMatrix gen_nested(const NestedMatrixSpec& spec) {
    if (spec.n_universities < 1 || spec.n_subjects < 1)
        throw DataError("gen_nested: sizes must be >= 1");
    if (spec.nestedness < 0.0 || spec.nestedness > 1.0)
        throw DataError("gen_nested: nestedness must be in [0,1]");
    if (spec.noise < 0.0) throw DataError("gen_nested: noise must be nonnegative");

    const int nu = spec.n_universities;
    const int ns = spec.n_subjects;
    Rng rng(spec.seed);
    const std::vector<int> k = staircase_supports(nu, ns);

    std::vector<std::vector<bool>> support(static_cast<std::size_t>(nu),
                                           std::vector<bool>(static_cast<std::size_t>(ns)));
    for (int i = 0; i < nu; ++i)
        for (int j = 0; j < k[static_cast<std::size_t>(i)]; ++j)
            support[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)] = true;

    if (spec.nestedness < 1.0) {
        // one guaranteed reach cell per incomplete row, then independent extras
        for (int i = 0; i < nu; ++i) {
            const int ki = k[static_cast<std::size_t>(i)];
            if (ki < ns) {
                const int j = ki + static_cast<int>(rng.u01() * (ns - ki));
                support[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)] = true;
            }
        }
        for (int i = 0; i < nu; ++i)
            for (int j = 0; j < ns; ++j)
                if (!support[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)] &&
                    rng.u01() < 1.0 - spec.nestedness)
                    support[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)] = true;
    }

    BipartiteMatrix m;
    m.kind = BipartiteMatrix::Kind::raw_value;
    for (int i = 0; i < nu; ++i) m.universities.push_back(padded_id('U', i));
    for (int j = 0; j < ns; ++j) m.subjects.push_back(padded_id('S', j));
    m.weights = Eigen::MatrixXd::Zero(nu, ns);
    for (int i = 0; i < nu; ++i)
        for (int j = 0; j < ns; ++j)
            if (support[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)])
                m.weights(i, j) = spec.noise > 0.0 ? 1.0 + spec.noise * rng.u01() : 1.0;
    return m;
}

GeneratedPanel gen_panel(const PanelDgpSpec& spec) {
    if (spec.n_universities < 2 || spec.n_funders < 2 || spec.n_years < 2)
        throw DataError("gen_panel: sizes must be >= 2 per dimension");
    if (spec.post_year < spec.start_year || spec.post_year >= spec.start_year + spec.n_years)
        throw DataError("gen_panel: post_year outside the year range");

    Rng rng(spec.seed);
    const int nu = spec.n_universities;
    const int nf = spec.n_funders;
    const int ny = spec.n_years;

    std::vector<double> alpha(static_cast<std::size_t>(nu)), psi(static_cast<std::size_t>(nf)),
        lambda(static_cast<std::size_t>(ny));
    for (auto& a : alpha) a = spec.fe_scale * rng.normal();
    for (auto& p : psi) p = spec.fe_scale * rng.normal();
    for (auto& l : lambda) l = spec.fe_scale * rng.normal();

    // persistent pair-level treatment intensity
    Eigen::MatrixXd uc_base(nu, nf);
    for (int u = 0; u < nu; ++u)
        for (int f = 0; f < nf; ++f) uc_base(u, f) = std::exp(0.5 * rng.normal());

    std::vector<std::string> covariates;
    for (const auto& [name, beta] : spec.true_beta)
        if (name != "uc") covariates.push_back(name);

    GeneratedPanel out;
    out.truth.delta = spec.true_delta;
    out.truth.beta = spec.true_beta;
    out.truth.intercept = spec.intercept;

    PanelTable& panel = out.panel;
    const Eigen::Index n = static_cast<Eigen::Index>(nu) * nf * ny;
    Eigen::VectorXd v(n), uc(n), d_post(n);
    std::map<std::string, Eigen::VectorXd> extra;
    for (const auto& name : covariates) extra[name] = Eigen::VectorXd(n);

    Eigen::Index row = 0;
    for (int u = 0; u < nu; ++u) {
        for (int f = 0; f < nf; ++f) {
            for (int t = 0; t < ny; ++t, ++row) {
                const int year = spec.start_year + t;
                panel.university.push_back(padded_id('U', u));
                panel.funder.push_back(padded_id('F', f));
                panel.year.push_back(year);
                const double post = year >= spec.post_year ? 1.0 : 0.0;
                const double uc_uft = uc_base(u, f) * (1.0 + 0.1 * rng.normal());
                double eta = spec.intercept + alpha[static_cast<std::size_t>(u)] +
                             psi[static_cast<std::size_t>(f)] +
                             lambda[static_cast<std::size_t>(t)] + spec.true_delta * post * uc_uft;
                auto it = spec.true_beta.find("uc");
                if (it != spec.true_beta.end()) eta += it->second * uc_uft;
                for (const auto& name : covariates) {
                    const double x = rng.normal();
                    extra[name](row) = x;
                    eta += spec.true_beta.at(name) * x;
                }
                uc(row) = uc_uft;
                d_post(row) = post;
                v(row) = static_cast<double>(rng.poisson(std::exp(eta)));
            }
        }
    }
    panel.add_column("v", std::move(v));
    panel.add_column("uc", std::move(uc));
    panel.add_column("d_post", std::move(d_post));
    for (const auto& name : covariates) panel.add_column(name, std::move(extra.at(name)));
    return out;
}

std::vector<GrantRecord> gen_grant_fixture(const GrantFixtureSpec& spec) {
    if (spec.n_universities < 2 || spec.n_subjects < 2 || spec.funders.empty())
        throw DataError("gen_grant_fixture: bad sizes");
    if (spec.start_year > spec.end_year)
        throw DataError("gen_grant_fixture: start_year > end_year");

    Rng rng(spec.seed);
    const int nu = spec.n_universities;
    const int ns = spec.n_subjects;
    const int n_years = spec.end_year - spec.start_year + 1;

    std::vector<GrantRecord> records;
    int grant_seq = 0;
    for (int t = 0; t < n_years; ++t) {
        const int year = spec.start_year + t;
        // university strengths rotate slowly over time
        const int shift =
            static_cast<int>(spec.drift * nu * (static_cast<double>(t) / std::max(1, n_years - 1)));
        for (std::size_t fi = 0; fi < spec.funders.size(); ++fi) {
            for (int g = 0; g < spec.grants_per_funder_year; ++g) {
                // stronger ranks win more grants; the rank-to-university map
                // rotates with time and funder
                const int strength_rank = std::min(
                    nu - 1, static_cast<int>(std::floor(nu * std::pow(rng.u01(), 1.6))));
                const int u = (strength_rank + shift + static_cast<int>(fi)) % nu;
                // diversification shrinks with weaker rank; an occasional
                // "reach" grant lands anywhere, which keeps supports from
                // being strictly nested (strict nesting collapses the
                // fitness fixed point)
                const int max_subj = std::max(
                    1, static_cast<int>(std::lround(
                           static_cast<double>(ns) * (nu - strength_rank) / nu)));
                const int n_subj = 1 + static_cast<int>(rng.u01() * std::min(3, max_subj));
                std::vector<int> subj;
                while (static_cast<int>(subj.size()) < n_subj) {
                    const int pool = rng.u01() < 0.15 ? ns : max_subj;
                    const int s = static_cast<int>(rng.u01() * pool);
                    if (std::find(subj.begin(), subj.end(), s) == subj.end()) subj.push_back(s);
                }
                std::sort(subj.begin(), subj.end());

                GrantRecord rec;
                rec.grant_id = "G" + std::to_string(++grant_seq);
                rec.funder = spec.funders[fi];
                rec.lead_university = padded_id('U', u);
                rec.start_year = year;
                {
                    const int month = 1 + static_cast<int>(rng.u01() * 12);
                    const int day = 1 + static_cast<int>(rng.u01() * 28);
                    char buf[32];
                    std::snprintf(buf, sizeof(buf), "%04d-%02d-%02d", year, month, day);
                    rec.start_date = buf;
                }
                rec.value_gbp = std::round(std::exp(11.0 + 1.2 * rng.normal()));

                // percentages to 2 decimals, last one adjusted so they sum to 100
                std::vector<double> w(subj.size());
                double wsum = 0.0;
                for (auto& x : w) {
                    x = 0.2 + rng.u01();
                    wsum += x;
                }
                double acc = 0.0;
                for (std::size_t i = 0; i < subj.size(); ++i) {
                    double pct;
                    if (i + 1 == subj.size()) {
                        pct = 100.0 - acc;
                    } else {
                        pct = std::round(10000.0 * w[i] / wsum) / 100.0;
                        acc += pct;
                    }
                    rec.subject_shares.push_back({padded_id('S', subj[i]), pct});
                }
                records.push_back(std::move(rec));
            }
        }
    }
    return records;
}

} // namespace fitrank::synth

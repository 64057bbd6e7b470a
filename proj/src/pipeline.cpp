#include "fitrank/pipeline.hpp"

#include "fitrank/csv.hpp"
#include "fitrank/errors.hpp"
#include "fitrank/fitness.hpp"
#include "fitrank/metrics.hpp"

#include <nlohmann/json.hpp>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

namespace fitrank {

namespace {

using nlohmann::json;
namespace fs = std::filesystem;

std::uint64_t fnv1a(const std::string& s) {
    std::uint64_t h = 1469598103934665603ull;
    for (unsigned char c : s) {
        h ^= c;
        h *= 1099511628211ull;
    }
    return h;
}

std::string hash12(const std::string& content) {
    static const char* digits = "0123456789abcdef";
    std::uint64_t v = fnv1a(content);
    std::string s(12, '0');
    for (int i = 11; i >= 0; --i) {
        s[static_cast<std::size_t>(i)] = digits[v & 0xf];
        v >>= 4;
    }
    return s;
}

void write_file_atomic(const fs::path& path, const std::string& content) {
    const fs::path tmp = path.string() + ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary);
        if (!out) throw DataError("cannot write " + path.string());
        out << content;
    }
    fs::rename(tmp, path);
}

std::string read_file(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot read " + path.string());
    std::ostringstream buf;
    buf << in.rdbuf();
    return buf.str();
}

const PeriodDef& find_period(const RunConfig& config, const std::string& name) {
    for (const auto& p : config.periods)
        if (p.name == name) return p;
    throw ConfigError("unknown period '" + name + "'");
}

} // namespace

RunConfig load_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config " + path);
    json doc;
    try {
        doc = json::parse(in);
    } catch (const json::exception& e) {
        throw ConfigError(std::string("config is not valid JSON: ") + e.what());
    }

    RunConfig cfg;
    try {
        cfg.seed = doc.value("seed", cfg.seed);
        cfg.output_dir = doc.value("output_dir", cfg.output_dir);

        if (doc.contains("data")) {
            const json& data = doc["data"];
            cfg.grants_path = data.value("grants", "");
            cfg.deflator_path = data.value("deflator", "");
            if (data.contains("allowed_funders"))
                cfg.allowed_funders =
                    data["allowed_funders"].get<std::set<std::string>>();
            if (data.contains("remote")) {
                RemoteConfig rc;
                rc.endpoint = data["remote"].at("endpoint").get<std::string>();
                rc.page_size = data["remote"].value("page_size", 100);
                rc.cache_dir = data.value("cache_dir", ".fitrank-cache");
                if (const char* env = std::getenv("FITRANK_CACHE")) rc.cache_dir = env;
                if (cfg.allowed_funders) rc.parse.allowed_funders = cfg.allowed_funders;
                cfg.remote = rc;
            }
        }

        for (const json& p : doc.value("periods", json::array())) {
            PeriodDef def;
            def.name = p.at("name").get<std::string>();
            def.start = p.at("start").get<int>();
            def.end = p.at("end").get<int>();
            cfg.periods.push_back(def);
        }

        if (doc.contains("filters")) {
            const json& f = doc["filters"];
            cfg.overall_min_subject_grants =
                f.value("overall_min_subject_grants", cfg.overall_min_subject_grants);
            cfg.council_filter.min_subjects_per_university = f.value(
                "council_min_subjects", cfg.council_filter.min_subjects_per_university);
            cfg.council_filter.min_universities_per_subject = f.value(
                "council_min_universities", cfg.council_filter.min_universities_per_subject);
        }

        if (doc.contains("fitness")) {
            const json& f = doc["fitness"];
            cfg.fitness_tol = f.value("tol", cfg.fitness_tol);
            cfg.fitness_max_iter = f.value("max_iter", cfg.fitness_max_iter);
            cfg.verify_inits = f.value("verify_inits", cfg.verify_inits);
        }
        cfg.tau_a = doc.value("tau_a", false);

        if (doc.contains("panel")) {
            const json& p = doc["panel"];
            cfg.panel.start_year = p.value("start_year", cfg.panel.start_year);
            cfg.panel.end_year = p.value("end_year", cfg.panel.end_year);
            if (p.contains("exclude_funders"))
                cfg.panel.exclude_funders = p["exclude_funders"].get<std::set<std::string>>();
            if (p.contains("treated_funders"))
                cfg.panel.treated_funders = p["treated_funders"].get<std::set<std::string>>();
            cfg.panel.post_year = p.value("post_year", cfg.panel.post_year);
            cfg.panel.window_short = p.value("window_short", cfg.panel.window_short);
            cfg.panel.window_long = p.value("window_long", cfg.panel.window_long);
            cfg.panel.activity_full_range =
                p.value("activity_full_range", cfg.panel.activity_full_range);
        }
        cfg.panel.rolling.filter = cfg.council_filter;
        cfg.panel.rolling.tol = cfg.fitness_tol;
        cfg.panel.rolling.max_iter = cfg.fitness_max_iter;

        if (doc.contains("fixture")) {
            const json& f = doc["fixture"];
            cfg.fixture.n_universities = f.value("n_universities", cfg.fixture.n_universities);
            cfg.fixture.n_subjects = f.value("n_subjects", cfg.fixture.n_subjects);
            if (f.contains("funders"))
                cfg.fixture.funders = f["funders"].get<std::vector<std::string>>();
            cfg.fixture.start_year = f.value("start_year", cfg.fixture.start_year);
            cfg.fixture.end_year = f.value("end_year", cfg.fixture.end_year);
            cfg.fixture.grants_per_funder_year =
                f.value("grants_per_funder_year", cfg.fixture.grants_per_funder_year);
            cfg.fixture.drift = f.value("drift", cfg.fixture.drift);
        }
        cfg.fixture.seed = cfg.seed; // all randomness flows from the config seed

        for (const json& m : doc.value("models", json::array())) {
            ModelRequest req;
            req.spec.name = m.at("name").get<std::string>();
            req.spec.outcome = m.at("outcome").get<std::string>();
            req.spec.regressors = m.value("regressors", std::vector<std::string>{});
            req.spec.fixed_effects = m.value("fixed_effects", std::vector<std::string>{});
            const std::string family = m.value("family", "poisson_pml");
            if (family == "poisson_pml") req.spec.family = Family::poisson_pml;
            else if (family == "linear_log") req.spec.family = Family::linear_log;
            else throw ConfigError("model '" + req.spec.name + "': unknown family " + family);
            req.spec.cluster_dims = m.value("cluster", std::vector<std::string>{});
            req.spec.funder_trends = m.value("funder_trends", false);
            req.spec.funder_trends_post = m.value("funder_trends_post", false);
            if (m.contains("event_study")) {
                EventStudyDef ev;
                ev.interact = m["event_study"].at("interact").get<std::string>();
                ev.base_year = m["event_study"].value("base_year", ev.base_year);
                req.event = ev;
            }
            if (m.contains("magnitude_var"))
                req.magnitude_var = m["magnitude_var"].get<std::string>();
            cfg.models.push_back(std::move(req));
        }

        cfg.baseline_period = doc.value("baseline_period", "");
    } catch (const json::exception& e) {
        throw ConfigError(std::string("config: ") + e.what());
    }

    for (std::size_t i = 0; i < cfg.periods.size(); ++i) {
        const auto& p = cfg.periods[i];
        if (p.start > p.end)
            throw ConfigError("period '" + p.name + "' has start > end");
        if (i > 0 && cfg.periods[i - 1].end >= p.start)
            throw ConfigError("periods must be ordered and non-overlapping");
    }
    if (cfg.baseline_period.empty() && !cfg.periods.empty())
        cfg.baseline_period = cfg.periods[cfg.periods.size() / 2].name;
    else if (!cfg.baseline_period.empty())
        find_period(cfg, cfg.baseline_period);
    return cfg;
}

ArtifactStore::ArtifactStore(std::string out_dir) : out_dir_(std::move(out_dir)) {
    fs::create_directories(out_dir_);
}

std::string ArtifactStore::write(const std::string& logical, const std::string& ext,
                                 const std::string& content) {
    const std::string file = logical + "-" + hash12(content) + "." + ext;
    const fs::path path = fs::path(out_dir_) / file;
    if (!fs::exists(path)) write_file_atomic(path, content);

    const fs::path manifest_path = fs::path(out_dir_) / "manifest.json";
    json manifest = json::object();
    if (fs::exists(manifest_path)) manifest = json::parse(read_file(manifest_path));
    manifest[logical] = file;
    write_file_atomic(manifest_path, manifest.dump(2) + "\n");
    return file;
}

bool ArtifactStore::has(const std::string& logical) const {
    const fs::path manifest_path = fs::path(out_dir_) / "manifest.json";
    if (!fs::exists(manifest_path)) return false;
    json manifest = json::parse(read_file(manifest_path));
    return manifest.contains(logical);
}

std::string ArtifactStore::path_of(const std::string& logical) const {
    const fs::path manifest_path = fs::path(out_dir_) / "manifest.json";
    if (!fs::exists(manifest_path))
        throw DataError("no artifacts yet in " + out_dir_ + " (run fitrank ingest first)");
    json manifest = json::parse(read_file(manifest_path));
    if (!manifest.contains(logical))
        throw DataError("missing artifact '" + logical + "' in " + out_dir_);
    return (fs::path(out_dir_) / manifest[logical].get<std::string>()).string();
}

std::string ArtifactStore::read(const std::string& logical) const {
    return read_file(path_of(logical));
}

namespace {

ParseReport load_records(const RunConfig& config) {
    ParseOptions opts;
    opts.allowed_funders = config.allowed_funders;
    if (config.remote) {
        RemoteConfig rc = *config.remote;
        if (config.allowed_funders) rc.parse.allowed_funders = config.allowed_funders;
        FetchReport fetched = fetch_remote(rc);
        return {std::move(fetched.records), std::move(fetched.rejects)};
    }
    if (config.grants_path.empty())
        throw ConfigError("config names neither a grants file nor a remote endpoint");
    return parse_grants_file(config.grants_path, grant_format_from_path(config.grants_path),
                             opts);
}

std::vector<Allocation> load_allocations(const ArtifactStore& store) {
    std::istringstream in(store.read("allocations"));
    return read_allocations_csv(in);
}

struct RankedPeriod {
    BipartiteMatrix matrix; // filtered raw values
    FitnessResult fitness;
    VerifyDiagnostics verify;
};

RankedPeriod rank_window(const RunConfig& config, const std::vector<Allocation>& slice,
                         const PeriodDef& period, bool overall_level,
                         const std::string& label) {
    if (slice.empty()) throw DataError("rank: no allocations in " + label);
    BipartiteMatrix V = build_value_matrix(slice);
    BipartiteMatrix filtered;
    if (overall_level) {
        OverallFilterParams params;
        params.start_year = period.start;
        params.end_year = period.end;
        params.min_subject_grants = config.overall_min_subject_grants;
        filtered = apply_overall_filters(V, slice, params);
    } else {
        filtered = apply_council_filters(V, config.council_filter);
    }
    FitnessParams fp;
    fp.tol = config.fitness_tol;
    fp.max_iter = config.fitness_max_iter;
    RankedPeriod out;
    out.fitness = iterate(normalize_columns(filtered), fp);
    if (!out.fitness.converged)
        throw ConvergenceError("rank: " + label + " did not converge after " +
                               std::to_string(out.fitness.iterations) + " iterations");
    out.verify = verify_fixed_point(normalize_columns(filtered), out.fitness,
                                    config.verify_inits, config.seed, fp);
    out.matrix = std::move(filtered);
    return out;
}

std::string ranking_csv(const Ranking& r) {
    std::ostringstream out;
    out << "id,score,rank\n";
    for (const auto& e : r.entries)
        out << csv::escape(e.id) << ',' << csv::format_double(e.score) << ',' << e.rank
            << '\n';
    return out.str();
}

json verify_json(const VerifyDiagnostics& v) {
    return json{{"nonzero", v.nonzero},
                {"init_independent", v.init_independent},
                {"min_score", v.min_score},
                {"worst_tau", v.worst_tau},
                {"max_rel_diff", v.max_rel_diff},
                {"runs", v.runs}};
}

std::set<std::string> funders_in(const std::vector<Allocation>& allocs) {
    std::set<std::string> funders;
    for (const auto& a : allocs) funders.insert(a.funder);
    return funders;
}

} // namespace

void cmd_ingest(const RunConfig& config) {
    ArtifactStore store(config.output_dir);
    ParseReport report = load_records(config);
    std::vector<Allocation> allocs = allocate(report.records);
    if (!config.deflator_path.empty()) {
        std::ifstream in(config.deflator_path);
        if (!in) throw DataError("cannot open deflator " + config.deflator_path);
        allocs = deflate(allocs, parse_deflator_csv(in));
    }

    std::ostringstream alloc_csv;
    write_allocations_csv(alloc_csv, allocs);
    store.write("allocations", "csv", alloc_csv.str());

    std::ostringstream rejects_csv;
    write_rejects_csv(rejects_csv, report.rejects);
    store.write("ingest_rejects", "csv", rejects_csv.str());

    // per-funder totals, comparable with published council summaries
    std::map<std::string, std::pair<long, double>> by_funder;
    {
        std::map<std::string, std::set<std::string>> grants;
        for (const auto& a : allocs) {
            grants[a.funder].insert(a.grant_id);
            by_funder[a.funder].second += a.value;
        }
        for (auto& [f, stats] : by_funder)
            stats.first = static_cast<long>(grants[f].size());
    }
    json summary;
    summary["n_records"] = report.records.size();
    summary["n_rejects"] = report.rejects.size();
    summary["funders"] = json::object();
    for (const auto& [f, stats] : by_funder)
        summary["funders"][f] = {{"n_grants", stats.first}, {"total_value_gbp", stats.second}};
    store.write("ingest_summary", "json", summary.dump(2) + "\n");
}

void cmd_rank(const RunConfig& config, const std::string& period, const std::string& level,
              const std::string& funder) {
    if (config.periods.empty()) throw ConfigError("rank: config defines no periods");
    ArtifactStore store(config.output_dir);
    std::vector<Allocation> allocs = load_allocations(store);

    std::vector<PeriodDef> periods;
    if (period.empty()) periods = config.periods;
    else periods.push_back(find_period(config, period));

    const bool do_overall = level.empty() || level == "overall";
    const bool do_council = level.empty() || level == "council";
    if (!do_overall && !do_council && level != "overall" && level != "council")
        throw ConfigError("rank: level must be overall or council");

    bool verification_failed = false;
    std::string failure;
    auto emit = [&](const RankedPeriod& ranked, const std::string& tag) {
        std::ostringstream matrix_csv;
        write_matrix_csv(matrix_csv, ranked.matrix);
        store.write("matrix-" + tag, "csv", matrix_csv.str());
        store.write("fitness-" + tag, "json", fitness_to_json(ranked.fitness) + "\n");
        store.write("ranking-universities-" + tag, "csv", ranking_csv(rank(ranked.fitness.uc)));
        store.write("ranking-subjects-" + tag, "csv", ranking_csv(rank(ranked.fitness.sc)));
        store.write("verify-" + tag, "json", verify_json(ranked.verify).dump(2) + "\n");
        if (!ranked.verify.nonzero || !ranked.verify.init_independent) {
            verification_failed = true;
            failure = tag;
        }
    };

    for (const auto& p : periods) {
        std::vector<Allocation> slice = window(allocs, p.start, p.end);
        if (do_overall)
            emit(rank_window(config, slice, p, true, "period " + p.name + " overall"),
                 p.name + "-overall");
        if (do_council) {
            for (const auto& f : funders_in(slice)) {
                if (!funder.empty() && f != funder) continue;
                std::vector<Allocation> fslice =
                    window(slice, p.start, p.end, std::set<std::string>{f});
                emit(rank_window(config, fslice, p, false, "period " + p.name + " funder " + f),
                     p.name + "-" + f);
            }
        }
    }
    if (verification_failed)
        throw ConvergenceError("rank: fixed-point verification failed for " + failure);
}

void cmd_dynamics(const RunConfig& config) {
    if (config.periods.size() < 2)
        throw ConfigError("dynamics: needs at least two periods");
    ArtifactStore store(config.output_dir);
    std::vector<Allocation> allocs = load_allocations(store);

    // period x funder rankings at the council level, plus pooled ("ALL")
    struct Key {
        std::string funder, period;
        bool operator<(const Key& o) const {
            return std::tie(funder, period) < std::tie(o.funder, o.period);
        }
    };
    std::map<Key, std::pair<Ranking, Ranking>> rankings; // universities, subjects

    std::set<std::string> funders = funders_in(allocs);
    funders.insert("ALL");
    for (const auto& p : config.periods) {
        for (const auto& f : funders) {
            std::optional<std::set<std::string>> filter;
            if (f != "ALL") filter = std::set<std::string>{f};
            std::vector<Allocation> slice = window(allocs, p.start, p.end, filter);
            if (slice.empty()) continue;
            BipartiteMatrix filtered;
            try {
                // pooled rankings mirror cmd_rank's overall level; council
                // rankings use the per-council thresholds
                if (f == "ALL") {
                    OverallFilterParams params;
                    params.start_year = p.start;
                    params.end_year = p.end;
                    params.min_subject_grants = config.overall_min_subject_grants;
                    filtered =
                        apply_overall_filters(build_value_matrix(slice), slice, params);
                } else {
                    filtered = apply_council_filters(build_value_matrix(slice),
                                                     config.council_filter);
                }
            } catch (const DataError&) {
                continue; // funder inactive in this period after filtering
            }
            FitnessParams fp;
            fp.tol = config.fitness_tol;
            fp.max_iter = config.fitness_max_iter;
            FitnessResult res = iterate(normalize_columns(filtered), fp);
            if (!res.converged)
                throw ConvergenceError("dynamics: period " + p.name + " funder " + f +
                                       " did not converge");
            rankings[{f, p.name}] = {rank(res.uc), rank(res.sc)};
        }
    }

    std::ostringstream tau_csv;
    tau_csv << "funder,entity,period_a,period_b,tau,n_common,n_dropped\n";
    std::ostringstream delta_csv;
    delta_csv << "funder,entity,period_a,period_b,id,rank_delta\n";
    for (const auto& f : funders) {
        for (std::size_t i = 0; i + 1 < config.periods.size(); ++i) {
            const std::string& pa = config.periods[i].name;
            const std::string& pb = config.periods[i + 1].name;
            auto ita = rankings.find({f, pa});
            auto itb = rankings.find({f, pb});
            if (ita == rankings.end() || itb == rankings.end()) continue;
            const auto pairs = {std::pair{"university", 0}, std::pair{"subject", 1}};
            for (const auto& [entity, which] : pairs) {
                const Ranking& ra = which == 0 ? ita->second.first : ita->second.second;
                const Ranking& rb = which == 0 ? itb->second.first : itb->second.second;
                TauResult tr;
                try {
                    tr = kendall_tau(ra, rb, config.tau_a);
                } catch (const DataError&) {
                    continue; // too few common entities for a correlation
                }
                tau_csv << csv::escape(f) << ',' << entity << ',' << csv::escape(pa) << ','
                        << csv::escape(pb) << ',' << csv::format_double(tr.tau) << ','
                        << tr.n_common << ',' << tr.n_dropped << '\n';
                for (const auto& [id, delta] : rank_delta(ra, rb))
                    delta_csv << csv::escape(f) << ',' << entity << ',' << csv::escape(pa)
                              << ',' << csv::escape(pb) << ',' << csv::escape(id) << ','
                              << delta << '\n';
            }
        }
    }
    store.write("dynamics_tau", "csv", tau_csv.str());
    store.write("dynamics_rank_delta", "csv", delta_csv.str());
}

void cmd_panel(const RunConfig& config) {
    ArtifactStore store(config.output_dir);
    std::vector<Allocation> allocs = load_allocations(store);
    PanelTable panel = build_panel(allocs, config.panel);

    std::ostringstream panel_csv;
    write_panel_csv(panel_csv, panel);
    store.write("panel", "csv", panel_csv.str());

    std::ostringstream desc_csv;
    write_describe_csv(desc_csv, describe(panel));
    store.write("panel_describe", "csv", desc_csv.str());
}

void cmd_regress(const RunConfig& config) {
    if (config.models.empty()) throw ConfigError("regress: config defines no models");
    ArtifactStore store(config.output_dir);
    std::istringstream panel_in(store.read("panel"));
    PanelTable panel = read_panel_csv(panel_in);

    for (const auto& req : config.models) {
        RegressionFit f = fit(panel, req.spec);
        std::ostringstream table;
        write_fit_csv(table, f);
        store.write("regress-" + req.spec.name, "csv", table.str());

        json meta;
        meta["loglik"] = f.loglik;
        meta["n_obs"] = f.n_obs;
        meta["n_dropped"] = f.n_dropped;
        meta["iterations"] = f.iterations;
        meta["converged"] = f.converged;
        meta["dropped_terms"] = f.dropped_terms;
        meta["vcov_floored"] = f.vcov_floored;
        if (req.magnitude_var) {
            auto [pre, post] = magnitude(f, panel, *req.magnitude_var);
            meta["magnitude"] = {{"var", *req.magnitude_var},
                                 {"pre_pct", pre},
                                 {"post_pct", post}};
        }
        store.write("regress-" + req.spec.name + "-meta", "json", meta.dump(2) + "\n");

        if (req.event) {
            auto points = event_study(panel, req.spec, req.event->interact,
                                      req.event->base_year);
            std::ostringstream ev;
            write_event_study_csv(ev, points);
            store.write("event-" + req.spec.name, "csv", ev.str());
        }
    }
}

void cmd_report(const RunConfig& config) {
    if (config.periods.empty()) throw ConfigError("report: config defines no periods");
    ArtifactStore store(config.output_dir);
    std::vector<Allocation> allocs = load_allocations(store);

    // full-span overall matrix and scores
    PeriodDef span;
    span.name = "overall";
    span.start = config.periods.front().start;
    span.end = config.periods.back().end;
    std::vector<Allocation> slice = window(allocs, span.start, span.end);
    RankedPeriod ranked = rank_window(config, slice, span, true, "report span");

    Ranking uc_rank = rank(ranked.fitness.uc);
    Ranking sc_rank = rank(ranked.fitness.sc);
    std::map<std::string, int> urank, srank;
    for (const auto& e : uc_rank.entries) urank[e.id] = e.rank;
    for (const auto& e : sc_rank.entries) srank[e.id] = e.rank;

    {
        // normalized shares in triangular-plot order
        BipartiteMatrix M = normalize_columns(ranked.matrix);
        std::ostringstream out;
        out << "university,subject,share,uc_rank,sc_rank\n";
        for (const auto& ue : uc_rank.entries) {
            const auto ui = static_cast<Eigen::Index>(
                std::find(M.universities.begin(), M.universities.end(), ue.id) -
                M.universities.begin());
            for (const auto& se : sc_rank.entries) {
                const auto si = static_cast<Eigen::Index>(
                    std::find(M.subjects.begin(), M.subjects.end(), se.id) -
                    M.subjects.begin());
                out << csv::escape(ue.id) << ',' << csv::escape(se.id) << ','
                    << csv::format_double(M.weights(ui, si)) << ',' << ue.rank << ','
                    << se.rank << '\n';
            }
        }
        store.write("report_matrix", "csv", out.str());
    }

    {
        // competitiveness vs total funding
        std::map<std::string, double> totals;
        for (Eigen::Index i = 0; i < ranked.matrix.n_universities(); ++i)
            totals[ranked.matrix.universities[i]] = ranked.matrix.weights.row(i).sum();
        std::ostringstream out;
        out << "university,uc,total_value_gbp,uc_rank\n";
        for (const auto& e : uc_rank.entries)
            out << csv::escape(e.id) << ',' << csv::format_double(e.score) << ','
                << csv::format_double(totals[e.id]) << ',' << e.rank << '\n';
        store.write("report_uc_funding", "csv", out.str());
    }

    {
        // complexity-value quadrants over subjects
        std::map<std::string, double> sc = ranked.fitness.sc;
        std::map<std::string, double> subject_value;
        for (Eigen::Index j = 0; j < ranked.matrix.n_subjects(); ++j)
            subject_value[ranked.matrix.subjects[j]] = ranked.matrix.weights.col(j).sum();
        std::map<std::string, double> sc_z = zscore(sc);
        std::map<std::string, double> v_z = zscore(subject_value);
        std::ostringstream out;
        out << "subject,sc_z,v_z,quadrant\n";
        for (const auto& [s, z] : sc_z)
            out << csv::escape(s) << ',' << csv::format_double(z) << ','
                << csv::format_double(v_z[s]) << ',' << quadrant_name(quadrant(z, v_z[s]))
                << '\n';
        store.write("report_quadrants", "csv", out.str());
    }

    {
        // funding and grant counts relative to the baseline window
        const PeriodDef& base = find_period(config, config.baseline_period);
        std::map<std::string, std::map<int, double>> value;
        std::map<std::string, std::map<int, std::set<std::string>>> grants;
        for (const auto& a : allocs) {
            if (a.year < span.start || a.year > span.end) continue;
            value[a.funder][a.year] += a.value;
            grants[a.funder][a.year].insert(a.grant_id);
        }
        std::map<std::string, double> base_value, base_count, weight;
        for (const auto& [f, years] : value) {
            double v = 0.0, c = 0.0;
            int n = 0;
            for (int y = base.start; y <= base.end; ++y) {
                auto it = years.find(y);
                if (it != years.end()) v += it->second;
                auto ig = grants[f].find(y);
                if (ig != grants[f].end()) c += static_cast<double>(ig->second.size());
                ++n;
            }
            base_value[f] = v / n;
            base_count[f] = c / n;
            double total_grants = 0.0;
            for (const auto& [y, g] : grants[f]) total_grants += static_cast<double>(g.size());
            weight[f] = total_grants;
        }
        std::ostringstream out;
        out << "funder,year,value_gbp,n_grants,rel_value,rel_grants\n";
        std::map<int, std::pair<double, double>> all_accum; // weighted rel sums
        double weight_total = 0.0;
        for (const auto& [f, w] : weight) weight_total += w;
        for (const auto& [f, years] : value) {
            for (int y = span.start; y <= span.end; ++y) {
                const double v = years.count(y) ? years.at(y) : 0.0;
                const double g = grants[f].count(y)
                                     ? static_cast<double>(grants[f].at(y).size())
                                     : 0.0;
                const double rv = base_value[f] > 0.0 ? v / base_value[f] : 0.0;
                const double rg = base_count[f] > 0.0 ? g / base_count[f] : 0.0;
                out << csv::escape(f) << ',' << y << ',' << csv::format_double(v) << ','
                    << csv::format_double(g) << ',' << csv::format_double(rv) << ','
                    << csv::format_double(rg) << '\n';
                all_accum[y].first += weight[f] * rv;
                all_accum[y].second += weight[f] * rg;
            }
        }
        for (const auto& [y, sums] : all_accum)
            out << "ALL," << y << ",,," << csv::format_double(sums.first / weight_total)
                << ',' << csv::format_double(sums.second / weight_total) << '\n';
        store.write("report_funding", "csv", out.str());
    }

    {
        // funder-year aggregates with income concentration
        std::vector<AggregateRow> rows = aggregates(slice, GroupBy::funder_year);
        std::map<std::string, std::map<std::string, double>> incomes; // f|year -> u -> value
        for (const auto& a : slice)
            incomes[a.funder + '|' + std::to_string(a.year)][a.university] += a.value;
        std::ostringstream out;
        out << "group,total_value_gbp,n_grants,median_value_gbp,hhi\n";
        for (const auto& r : rows) {
            out << csv::escape(r.group) << ',' << csv::format_double(r.total_value) << ','
                << r.n_grants << ',' << csv::format_double(r.median_value) << ','
                << csv::format_double(hhi(incomes.at(r.group))) << '\n';
        }
        store.write("report_funder_year", "csv", out.str());
    }

    // event-study series are re-emitted from the regression artifacts
    for (const auto& req : config.models) {
        if (!req.event) continue;
        store.write("report_event_" + req.spec.name, "csv",
                    store.read("event-" + req.spec.name));
    }
}

void cmd_synth(const RunConfig& config) {
    ArtifactStore store(config.output_dir);
    std::vector<GrantRecord> records = synth::gen_grant_fixture(config.fixture);
    std::ostringstream out;
    write_grants_csv(out, records);
    store.write("fixture_grants", "csv", out.str());
    // also place the fixture at the configured grants path when one is named,
    // so `fitrank ingest` can pick it up directly
    if (!config.grants_path.empty()) {
        fs::path p(config.grants_path);
        if (p.has_parent_path()) fs::create_directories(p.parent_path());
        write_file_atomic(p, out.str());
    }
}

} // namespace fitrank

// End-to-end pipeline runs against the fitrank binary (path injected by the
// build as FITRANK_BIN).

#include "fitrank/csv.hpp"
#include "fitrank/pipeline.hpp"

#include <doctest.h>
#include <nlohmann/json.hpp>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>

using nlohmann::json;
namespace fs = std::filesystem;

namespace {

struct TempDir {
    fs::path path;
    explicit TempDir(const std::string& tag) {
        path = fs::temp_directory_path() /
               ("fitrank-cli-" + tag + "-" + std::to_string(::getpid()));
        fs::remove_all(path);
        fs::create_directories(path);
    }
    ~TempDir() { fs::remove_all(path); }
};

int run_cli(const std::string& args) {
    const std::string cmd = std::string(FITRANK_BIN) + " " + args + " >/dev/null 2>&1";
    const int status = std::system(cmd.c_str());
    return WEXITSTATUS(status);
}

json pipeline_config(const fs::path& dir) {
    json cfg;
    cfg["seed"] = 42;
    cfg["output_dir"] = (dir / "out").string();
    cfg["data"] = {{"grants", (dir / "grants.csv").string()}};
    cfg["periods"] = json::array({json{{"name", "p1"}, {"start", 2006}, {"end", 2010}},
                                  json{{"name", "p2"}, {"start", 2011}, {"end", 2015}},
                                  json{{"name", "p3"}, {"start", 2016}, {"end", 2020}}});
    cfg["filters"] = {{"overall_min_subject_grants", 3},
                      {"council_min_subjects", 2},
                      {"council_min_universities", 2}};
    cfg["fitness"] = {{"tol", 1e-10}, {"max_iter", 20000}, {"verify_inits", 5}};
    cfg["fixture"] = {{"n_universities", 16},
                      {"n_subjects", 10},
                      {"funders", json::array({"AHRC", "EPSRC", "ESRC", "MRC"})},
                      {"start_year", 2006},
                      {"end_year", 2020},
                      {"grants_per_funder_year", 40},
                      {"drift", 0.3}};
    cfg["panel"] = {{"start_year", 2011},
                    {"end_year", 2020},
                    {"exclude_funders", json::array()},
                    {"post_year", 2016}};
    cfg["models"] = json::array(
        {json{{"name", "did"},
              {"outcome", "v"},
              {"regressors", json::array({"uc_uft_l1", "d_post:uc_uft_l1"})},
              {"fixed_effects", json::array({"university", "funder", "year"})},
              {"family", "poisson_pml"},
              {"cluster", json::array({"university", "funder"})},
              {"event_study", json{{"interact", "uc_uft_l1"}, {"base_year", 2011}}},
              {"magnitude_var", "uc_uft_l1"}}});
    return cfg;
}

void write_config(const fs::path& file, const json& cfg) {
    std::ofstream out(file);
    out << cfg.dump(2);
}

std::map<std::string, std::string> tree_digest(const fs::path& root) {
    std::map<std::string, std::string> digest;
    for (const auto& entry : fs::recursive_directory_iterator(root)) {
        if (!entry.is_regular_file()) continue;
        std::ifstream in(entry.path(), std::ios::binary);
        std::ostringstream buf;
        buf << in.rdbuf();
        digest[fs::relative(entry.path(), root).string()] = buf.str();
    }
    return digest;
}

void run_full_pipeline(const std::string& config_path) {
    REQUIRE(run_cli("--config " + config_path + " synth") == 0);
    REQUIRE(run_cli("--config " + config_path + " ingest") == 0);
    REQUIRE(run_cli("--config " + config_path + " rank") == 0);
    REQUIRE(run_cli("--config " + config_path + " dynamics") == 0);
    REQUIRE(run_cli("--config " + config_path + " panel") == 0);
    REQUIRE(run_cli("--config " + config_path + " regress") == 0);
    REQUIRE(run_cli("--config " + config_path + " report") == 0);
}

} // namespace

TEST_CASE("full pipeline runs and reruns byte-identically") {
    TempDir dir("pipeline");
    json cfg = pipeline_config(dir.path);
    write_config(dir.path / "config.json", cfg);
    const std::string config_path = (dir.path / "config.json").string();

    run_full_pipeline(config_path);
    auto first = tree_digest(dir.path / "out");
    CHECK(first.count("manifest.json") == 1);

    // rerun the whole thing into the same tree: identical bytes everywhere
    run_full_pipeline(config_path);
    auto second = tree_digest(dir.path / "out");
    CHECK(first == second);

    // and into a fresh tree: identical content, file for file
    json cfg2 = cfg;
    cfg2["output_dir"] = (dir.path / "out2").string();
    write_config(dir.path / "config2.json", cfg2);
    run_full_pipeline((dir.path / "config2.json").string());
    auto third = tree_digest(dir.path / "out2");
    CHECK(first == third);
}

TEST_CASE("pipeline artifacts carry the expected shapes") {
    TempDir dir("artifacts");
    json cfg = pipeline_config(dir.path);
    write_config(dir.path / "config.json", cfg);
    const std::string config_path = (dir.path / "config.json").string();
    run_full_pipeline(config_path);

    fitrank::ArtifactStore store((dir.path / "out").string());

    SUBCASE("ingest summary counts the synthetic grants") {
        json summary = json::parse(store.read("ingest_summary"));
        CHECK(summary["n_records"].get<int>() == 4 * 15 * 40);
        CHECK(summary["n_rejects"].get<int>() == 0);
        CHECK(summary["funders"].size() == 4);
    }
    SUBCASE("verification verdicts hold on every ranked window") {
        json verify = json::parse(store.read("verify-p1-overall"));
        CHECK(verify["nonzero"].get<bool>());
        CHECK(verify["init_independent"].get<bool>());
    }
    SUBCASE("dynamics tau table covers funders and period pairs") {
        const std::string tau = store.read("dynamics_tau");
        CHECK(tau.find("funder,entity,period_a,period_b,tau,n_common,n_dropped") == 0);
        CHECK(tau.find("EPSRC") != std::string::npos);
        CHECK(tau.find("ALL") != std::string::npos);
    }
    SUBCASE("panel is balanced") {
        std::istringstream in(store.read("panel"));
        fitrank::PanelTable panel = fitrank::read_panel_csv(in);
        std::set<std::pair<std::string, std::string>> pairs;
        for (std::size_t i = 0; i < panel.university.size(); ++i)
            pairs.insert({panel.university[i], panel.funder[i]});
        CHECK(panel.rows() == static_cast<Eigen::Index>(pairs.size()) * 10);
    }
    SUBCASE("regression artifacts exist with stars column") {
        const std::string table = store.read("regress-did");
        CHECK(table.find("term,coefficient,robust_se,p_value,stars") == 0);
        CHECK(table.find("d_post:uc_uft_l1") != std::string::npos);
        const std::string events = store.read("event-did");
        CHECK(events.find("year,coef,ci_low,ci_high") == 0);
        json meta = json::parse(store.read("regress-did-meta"));
        CHECK(meta["converged"].get<bool>());
        CHECK(meta.contains("magnitude"));
    }
    SUBCASE("report emits figure-ready tables") {
        const std::string funding = store.read("report_funding");
        CHECK(funding.find("funder,year,value_gbp,n_grants,rel_value,rel_grants") == 0);
        // baseline window means equal one by construction
        std::istringstream in(funding);
        std::string line;
        std::getline(in, line);
        std::map<std::string, std::pair<double, int>> base_mean;
        while (std::getline(in, line)) {
            std::istringstream row(line);
            std::string funder, year, value, n, rel_v, rel_g;
            std::getline(row, funder, ',');
            std::getline(row, year, ',');
            std::getline(row, value, ',');
            std::getline(row, n, ',');
            std::getline(row, rel_v, ',');
            std::getline(row, rel_g, ',');
            const int y = std::stoi(year);
            if (funder != "ALL" && y >= 2011 && y <= 2015) {
                base_mean[funder].first += std::stod(rel_v);
                base_mean[funder].second += 1;
            }
        }
        for (const auto& [funder, acc] : base_mean)
            CHECK(acc.first / acc.second == doctest::Approx(1.0).epsilon(1e-9));

        const std::string quadrants = store.read("report_quadrants");
        // one row per subject plus header
        const long rows = std::count(quadrants.begin(), quadrants.end(), '\n') - 1;
        std::istringstream min(store.read("report_matrix"));
        std::string header;
        std::getline(min, header);
        std::set<std::string> subjects;
        std::string mline;
        while (std::getline(min, mline)) {
            const auto c1 = mline.find(',');
            const auto c2 = mline.find(',', c1 + 1);
            subjects.insert(mline.substr(c1 + 1, c2 - c1 - 1));
        }
        CHECK(rows == static_cast<long>(subjects.size()));
    }
}

TEST_CASE("exit codes follow the documented contract") {
    TempDir dir("exitcodes");
    SUBCASE("missing grants file is a data error") {
        json cfg = pipeline_config(dir.path);
        write_config(dir.path / "config.json", cfg);
        CHECK(run_cli("--config " + (dir.path / "config.json").string() + " ingest") == 1);
    }
    SUBCASE("overlapping periods are a config error") {
        json cfg = pipeline_config(dir.path);
        cfg["periods"][1]["start"] = 2009;
        write_config(dir.path / "bad.json", cfg);
        CHECK(run_cli("--config " + (dir.path / "bad.json").string() + " synth") == 3);
    }
    SUBCASE("unknown flag is a config error") {
        json cfg = pipeline_config(dir.path);
        write_config(dir.path / "config.json", cfg);
        CHECK(run_cli("--config " + (dir.path / "config.json").string() +
                      " synth --nonsense") == 3);
    }
    SUBCASE("a collapsing ranking window is a convergence error") {
        // strictly nested supports: U2's subjects are a proper subset of
        // U1's, so the fixed point degenerates and rank must exit 2
        std::ostringstream grants;
        grants << "grant_id,funder,lead_university,start_date,value_gbp,subjects\n";
        int id = 0;
        for (int year = 2006; year <= 2010; ++year) {
            grants << 'G' << ++id << ",EPSRC,U1," << year << "-03-01,100,S1:50;S2:50\n";
            grants << 'G' << ++id << ",EPSRC,U2," << year << "-03-01,100,S1:100\n";
        }
        std::ofstream(dir.path / "nested.csv") << grants.str();
        json cfg = pipeline_config(dir.path);
        cfg["data"]["grants"] = (dir.path / "nested.csv").string();
        cfg["periods"] = json::array({json{{"name", "p"}, {"start", 2006}, {"end", 2010}}});
        cfg["filters"] = {{"overall_min_subject_grants", 1},
                          {"council_min_subjects", 1},
                          {"council_min_universities", 1}};
        write_config(dir.path / "nested.json", cfg);
        const std::string config_path = (dir.path / "nested.json").string();
        REQUIRE(run_cli("--config " + config_path + " ingest") == 0);
        CHECK(run_cli("--config " + config_path + " rank") == 2);
    }
}

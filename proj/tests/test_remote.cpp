#include "fitrank/remote.hpp"

#include "fitrank/errors.hpp"
#include "fitrank/grants.hpp"

#include <doctest.h>
#include <httplib.h>
#include <nlohmann/json.hpp>

#include <atomic>
#include <filesystem>
#include <sstream>
#include <thread>

using namespace fitrank;
using nlohmann::json;
namespace fs = std::filesystem;

namespace {

json make_record(int i, const std::string& funder = "EPSRC") {
    return json{{"grant_id", "G" + std::to_string(i)},
                {"funder", funder},
                {"lead_university", "U" + std::to_string(i % 7)},
                {"start_date", "2012-01-15"},
                {"value_gbp", 1000.0 + i},
                {"subject_shares", json::array({json{{"subject", "A"}, {"percentage", 60}},
                                                json{{"subject", "B"}, {"percentage", 40}}})}};
}

struct PagedServer {
    httplib::Server server;
    std::thread thread;
    int port = 0;
    std::atomic<int> hits{0};

    explicit PagedServer(std::vector<json> pages) {
        server.Get("/grants", [this, pages = std::move(pages)](const httplib::Request& req,
                                                               httplib::Response& res) {
            ++hits;
            const int page = std::stoi(req.get_param_value("page"));
            json body = {{"records", pages[static_cast<std::size_t>(page - 1)]},
                         {"total_pages", pages.size()}};
            res.set_content(body.dump(), "application/json");
        });
        port = server.bind_to_any_port("127.0.0.1");
        thread = std::thread([this] { server.listen_after_bind(); });
        server.wait_until_ready();
    }
    ~PagedServer() {
        server.stop();
        thread.join();
    }
};

struct TempDir {
    fs::path path;
    TempDir(const std::string& tag) {
        path = fs::temp_directory_path() / ("fitrank-test-" + tag + "-" +
                                            std::to_string(::getpid()));
        fs::remove_all(path);
        fs::create_directories(path);
    }
    ~TempDir() { fs::remove_all(path); }
};

} // namespace

TEST_CASE("fetch_remote pulls every page and caches the raw bodies") {
    json page1 = json::array(), page2 = json::array();
    for (int i = 0; i < 100; ++i) page1.push_back(make_record(i));
    for (int i = 100; i < 200; ++i) page2.push_back(make_record(i));
    PagedServer server(std::vector<json>{page1, page2});
    TempDir cache("fetch");

    RemoteConfig cfg;
    cfg.endpoint = "http://127.0.0.1:" + std::to_string(server.port) + "/grants";
    cfg.page_size = 100;
    cfg.cache_dir = cache.path.string();

    FetchReport report = fetch_remote(cfg);
    CHECK(report.records.size() == 200);
    CHECK(report.rejects.empty());
    CHECK(report.pages == 2);
    CHECK(report.http_requests == 2);
    int cache_files = 0;
    for (const auto& e : fs::directory_iterator(cache.path)) {
        (void)e;
        ++cache_files;
    }
    CHECK(cache_files == 2);

    SUBCASE("a warm cache answers with zero http requests, byte-identically") {
        const int hits_before = server.hits.load();
        FetchReport warm = fetch_remote(cfg);
        CHECK(server.hits.load() == hits_before);
        CHECK(warm.http_requests == 0);
        REQUIRE(warm.records.size() == report.records.size());
        std::ostringstream a, b;
        write_grants_csv(a, report.records);
        write_grants_csv(b, warm.records);
        CHECK(a.str() == b.str());
    }
}

TEST_CASE("fetch_remote routes unknown funders to the rejects") {
    json page = json::array();
    page.push_back(make_record(1));
    page.push_back(make_record(2, "NOTACOUNCIL"));
    PagedServer server(std::vector<json>{page});
    TempDir cache("rejects");

    RemoteConfig cfg;
    cfg.endpoint = "http://127.0.0.1:" + std::to_string(server.port) + "/grants";
    cfg.cache_dir = cache.path.string();
    FetchReport report = fetch_remote(cfg);
    CHECK(report.records.size() == 1);
    REQUIRE(report.rejects.size() == 1);
    CHECK(report.rejects[0].row == 2);
    CHECK(report.rejects[0].reason == "unknown funder");
}

TEST_CASE("fetch_remote matches parse_grants on the concatenated pages") {
    json page1 = json::array(), page2 = json::array();
    for (int i = 0; i < 5; ++i) page1.push_back(make_record(i));
    for (int i = 5; i < 9; ++i) page2.push_back(make_record(i));
    PagedServer server(std::vector<json>{page1, page2});
    TempDir cache("concat");

    RemoteConfig cfg;
    cfg.endpoint = "http://127.0.0.1:" + std::to_string(server.port) + "/grants";
    cfg.cache_dir = cache.path.string();
    FetchReport fetched = fetch_remote(cfg);

    json all = json::array();
    for (const auto& r : page1) all.push_back(r);
    for (const auto& r : page2) all.push_back(r);
    std::istringstream in(all.dump());
    ParseOptions opts;
    opts.allowed_funders = research_councils();
    ParseReport direct = parse_grants(in, GrantFormat::json, opts);

    REQUIRE(fetched.records.size() == direct.records.size());
    std::ostringstream a, b;
    write_grants_csv(a, fetched.records);
    write_grants_csv(b, direct.records);
    CHECK(a.str() == b.str());
}

TEST_CASE("fetch_remote fails after bounded retries naming the page") {
    TempDir cache("down");
    RemoteConfig cfg;
    cfg.endpoint = "http://127.0.0.1:1/grants"; // nothing listens there
    cfg.cache_dir = cache.path.string();
    cfg.max_retries = 2;
    CHECK_THROWS_AS(fetch_remote(cfg), DataError);
}

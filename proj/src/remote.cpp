#include "fitrank/remote.hpp"

#include "fitrank/errors.hpp"

#include <httplib.h>
#include <nlohmann/json.hpp>

#include <chrono>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <thread>

namespace fitrank {

namespace {

using nlohmann::json;
namespace fs = std::filesystem;

struct ParsedUrl {
    std::string base; // scheme://host[:port], consumed by httplib::Client
    std::string path;
};

ParsedUrl parse_url(const std::string& url) {
    std::size_t scheme_end;
    if (url.rfind("http://", 0) == 0) scheme_end = 7;
    else if (url.rfind("https://", 0) == 0) scheme_end = 8;
    else throw ConfigError("remote endpoint must be http(s):// (got " + url + ")");
    auto slash = url.find('/', scheme_end);
    ParsedUrl out;
    out.base = url.substr(0, slash);
    out.path = slash == std::string::npos ? "/" : url.substr(slash);
    if (out.base.size() == scheme_end)
        throw ConfigError("remote endpoint has no host: " + url);
    return out;
}

std::uint64_t fnv1a(const std::string& s) {
    std::uint64_t h = 1469598103934665603ull;
    for (unsigned char c : s) {
        h ^= c;
        h *= 1099511628211ull;
    }
    return h;
}

std::string hex64(std::uint64_t v) {
    static const char* digits = "0123456789abcdef";
    std::string s(16, '0');
    for (int i = 15; i >= 0; --i) {
        s[static_cast<std::size_t>(i)] = digits[v & 0xf];
        v >>= 4;
    }
    return s;
}

} // namespace

FetchReport fetch_remote(const RemoteConfig& config) {
    if (config.page_size < 1) throw ConfigError("fetch_remote: page_size must be positive");
    if (config.cache_dir.empty()) throw ConfigError("fetch_remote: cache_dir required");
    fs::create_directories(config.cache_dir);

    const ParsedUrl url = parse_url(config.endpoint);
    const std::string cache_key =
        hex64(fnv1a(config.endpoint + "#" + std::to_string(config.page_size)));

    FetchReport report;
    httplib::Client client(url.base);
    client.set_connection_timeout(10);
    client.set_read_timeout(30);

    auto page_path = [&](int page) {
        return fs::path(config.cache_dir) / (cache_key + "-p" + std::to_string(page) + ".json");
    };

    auto load_page = [&](int page) -> std::string {
        const fs::path path = page_path(page);
        if (fs::exists(path)) {
            std::ifstream in(path, std::ios::binary);
            std::ostringstream buf;
            buf << in.rdbuf();
            return buf.str();
        }
        const std::string target = url.path + "?page=" + std::to_string(page) +
                                   "&page_size=" + std::to_string(config.page_size);
        for (int attempt = 1; attempt <= config.max_retries; ++attempt) {
            ++report.http_requests;
            auto res = client.Get(target);
            if (res && res->status == 200) {
                const fs::path tmp = path.string() + ".tmp";
                std::ofstream out(tmp, std::ios::binary);
                out << res->body;
                out.close();
                fs::rename(tmp, path);
                return res->body;
            }
            if (attempt < config.max_retries)
                std::this_thread::sleep_for(std::chrono::milliseconds(50 * attempt));
        }
        throw DataError("fetch_remote: page " + std::to_string(page) + " failed after " +
                        std::to_string(config.max_retries) + " attempts");
    };

    json all = json::array();
    int total_pages = 1;
    for (int page = 1; page <= total_pages; ++page) {
        const std::string body = load_page(page);
        json doc;
        try {
            doc = json::parse(body);
        } catch (const json::exception& e) {
            throw DataError("fetch_remote: page " + std::to_string(page) +
                            " is not valid JSON: " + e.what());
        }
        if (!doc.contains("records") || !doc["records"].is_array() ||
            !doc.contains("total_pages"))
            throw DataError("fetch_remote: page " + std::to_string(page) +
                            " missing records/total_pages");
        if (page == 1) total_pages = doc["total_pages"].get<int>();
        for (auto& rec : doc["records"]) all.push_back(std::move(rec));
    }
    report.pages = total_pages;

    // identical validation path to parse_grants on the concatenated pages
    std::istringstream stream(all.dump());
    ParseReport parsed = parse_grants(stream, GrantFormat::json, config.parse);
    report.records = std::move(parsed.records);
    report.rejects = std::move(parsed.rejects);
    return report;
}

} // namespace fitrank

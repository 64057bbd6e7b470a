#pragma once

#include "fitrank/grants.hpp"

#include <string>
#include <vector>

namespace fitrank {

struct RemoteConfig {
    std::string endpoint; // http://host:port/path
    int page_size = 100;
    std::string cache_dir;
    int max_retries = 3;
    ParseOptions parse{research_councils()}; // reject records with unknown funders
};

struct FetchReport {
    std::vector<GrantRecord> records;
    std::vector<RejectedRow> rejects; // row = 1-based record index over all pages
    int pages = 0;
    int http_requests = 0; // 0 on a warm cache
};

/// Fetch all pages of `{records: [...], total_pages: N}` from the endpoint
/// (GET with page/page_size query parameters, pages numbered from 1), with
/// bounded retry. Raw page bodies are persisted in cache_dir keyed by
/// (endpoint, page_size, page); a warm cache answers without any network
/// I/O. Record validation matches parse_grants on the concatenated pages.
FetchReport fetch_remote(const RemoteConfig& config);

} // namespace fitrank

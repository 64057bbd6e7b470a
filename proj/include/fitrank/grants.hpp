#pragma once

#include <cstdint>
#include <iosfwd>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

namespace fitrank {

struct SubjectShare {
    std::string subject;
    double percentage = 0.0; // in [0,100] as parsed; normalized later
};

/// One funded grant, attributed wholly to its lead university.
struct GrantRecord {
    std::string grant_id;
    std::string funder;
    std::string lead_university;
    int start_year = 0;        // calendar year of start_date
    std::string start_date;    // ISO-8601, kept verbatim for re-export
    double value_gbp = 0.0;
    std::vector<SubjectShare> subject_shares;
};

/// Grant value apportioned to one (university, subject) cell.
/// grant_id is carried so downstream grant counts and per-grant medians
/// can be computed from allocations alone.
struct Allocation {
    std::string grant_id;
    std::string university;
    std::string subject;
    std::string funder;
    int year = 0;
    double value = 0.0;
};

struct RejectedRow {
    std::size_t row = 0; // CSV line number / 1-based JSON array index
    std::string reason;
};

struct ParseReport {
    std::vector<GrantRecord> records;
    std::vector<RejectedRow> rejects;
};

enum class GrantFormat { csv, json };

/// The seven UK research councils.
const std::set<std::string>& research_councils();

struct ParseOptions {
    // When set, records naming a funder outside the set are rejected.
    std::optional<std::set<std::string>> allowed_funders;
    // Share-sum tolerance band, absorbing source rounding.
    double share_sum_min = 99.5;
    double share_sum_max = 100.5;
};

/// Parse grant records from a byte stream. Invalid rows are routed to the
/// rejects report with a row number and reason; a malformed header (or
/// malformed JSON document) is fatal.
ParseReport parse_grants(std::istream& in, GrantFormat format, const ParseOptions& opts = {});
ParseReport parse_grants_file(const std::string& path, GrantFormat format,
                              const ParseOptions& opts = {});

/// Infer csv/json from a file extension.
GrantFormat grant_format_from_path(const std::string& path);

void write_rejects_csv(std::ostream& out, const std::vector<RejectedRow>& rejects);

/// Emit records in the ingest CSV schema (subjects as `subj:pct` pairs
/// joined by ';').
void write_grants_csv(std::ostream& out, const std::vector<GrantRecord>& records);

/// Split each grant's value across its subjects by normalized share.
/// Output is sorted by (grant_id, subject) so equal inputs give
/// byte-identical allocation lists.
std::vector<Allocation> allocate(const std::vector<GrantRecord>& records);

struct DeflatorSeries {
    int base_year = 0;
    std::map<int, double> factors; // year -> positive multiplier, factor(base_year) == 1
};

DeflatorSeries parse_deflator_csv(std::istream& in);

/// Multiply each allocation value by factor(year). Missing years are fatal.
std::vector<Allocation> deflate(const std::vector<Allocation>& allocs,
                                const DeflatorSeries& series);

/// Keep allocations with start_year <= year <= end_year, and funder in the
/// filter when one is given.
std::vector<Allocation> window(const std::vector<Allocation>& allocs, int start_year,
                               int end_year,
                               const std::optional<std::set<std::string>>& funder_filter = {});

void write_allocations_csv(std::ostream& out, const std::vector<Allocation>& allocs);
std::vector<Allocation> read_allocations_csv(std::istream& in);

} // namespace fitrank

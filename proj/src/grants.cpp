#include "fitrank/grants.hpp"

#include "fitrank/csv.hpp"
#include "fitrank/errors.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <ostream>
#include <sstream>

namespace fitrank {

namespace {

using nlohmann::json;

const std::vector<std::string> kGrantHeader = {"grant_id", "funder",    "lead_university",
                                               "start_date", "value_gbp", "subjects"};

std::optional<double> parse_number(const std::string& s) {
    const char* first = s.data();
    const char* last = s.data() + s.size();
    double v = 0.0;
    auto [ptr, ec] = std::from_chars(first, last, v);
    if (ec != std::errc{} || ptr != last) return std::nullopt;
    return v;
}

// ISO-8601 calendar date; returns the year.
std::optional<int> parse_iso_year(const std::string& s) {
    if (s.size() < 10 || s[4] != '-' || s[7] != '-') return std::nullopt;
    int y = 0, m = 0, d = 0;
    auto num = [](const char* b, const char* e, int& out) {
        auto [p, ec] = std::from_chars(b, e, out);
        return ec == std::errc{} && p == e;
    };
    if (!num(s.data(), s.data() + 4, y) || !num(s.data() + 5, s.data() + 7, m) ||
        !num(s.data() + 8, s.data() + 10, d))
        return std::nullopt;
    if (m < 1 || m > 12 || d < 1 || d > 31) return std::nullopt;
    return y;
}

// "Blood:60;Ear:40" -> shares; empty string is invalid.
std::optional<std::vector<SubjectShare>> parse_subject_field(const std::string& s) {
    std::vector<SubjectShare> shares;
    std::size_t pos = 0;
    while (pos <= s.size()) {
        std::size_t next = s.find(';', pos);
        std::string item = s.substr(pos, next == std::string::npos ? next : next - pos);
        std::size_t colon = item.rfind(':');
        if (colon == std::string::npos || colon == 0) return std::nullopt;
        auto pct = parse_number(item.substr(colon + 1));
        if (!pct) return std::nullopt;
        shares.push_back({item.substr(0, colon), *pct});
        if (next == std::string::npos) break;
        pos = next + 1;
    }
    if (shares.empty()) return std::nullopt;
    return shares;
}

// Checks every GrantRecord invariant; returns a reject reason or empty.
std::string validate(GrantRecord& rec, const ParseOptions& opts) {
    if (rec.grant_id.empty()) return "empty grant_id";
    if (rec.lead_university.empty()) return "empty lead_university";
    if (rec.funder.empty()) return "empty funder";
    if (opts.allowed_funders && !opts.allowed_funders->count(rec.funder))
        return "unknown funder";
    if (!(rec.value_gbp >= 0.0) || !std::isfinite(rec.value_gbp)) return "negative value";
    if (rec.subject_shares.empty()) return "no subject shares";
    double sum = 0.0;
    std::set<std::string> seen;
    for (const auto& sh : rec.subject_shares) {
        if (sh.subject.empty()) return "empty subject identifier";
        if (!seen.insert(sh.subject).second) return "duplicate subject";
        if (!(sh.percentage >= 0.0 && sh.percentage <= 100.0))
            return "share out of range";
        sum += sh.percentage;
    }
    if (sum < opts.share_sum_min || sum > opts.share_sum_max)
        return "share sum out of tolerance";
    return {};
}

ParseReport parse_csv(std::istream& in, const ParseOptions& opts) {
    csv::Table table = csv::parse(in);
    if (table.header != kGrantHeader) {
        std::string got;
        for (const auto& h : table.header) got += (got.empty() ? "" : ",") + h;
        throw DataError("grants csv: malformed header [" + got + "]");
    }
    ParseReport report;
    for (std::size_t i = 0; i < table.rows.size(); ++i) {
        const auto& row = table.rows[i];
        const std::size_t line = table.line[i];
        if (row.size() != kGrantHeader.size()) {
            report.rejects.push_back({line, "wrong field count"});
            continue;
        }
        GrantRecord rec;
        rec.grant_id = row[0];
        rec.funder = row[1];
        rec.lead_university = row[2];
        rec.start_date = row[3];
        auto year = parse_iso_year(row[3]);
        if (!year) {
            report.rejects.push_back({line, "bad start_date"});
            continue;
        }
        rec.start_year = *year;
        auto value = parse_number(row[4]);
        if (!value) {
            report.rejects.push_back({line, "bad value_gbp"});
            continue;
        }
        rec.value_gbp = *value;
        auto shares = parse_subject_field(row[5]);
        if (!shares) {
            report.rejects.push_back({line, "bad subjects field"});
            continue;
        }
        rec.subject_shares = std::move(*shares);
        if (auto reason = validate(rec, opts); !reason.empty()) {
            report.rejects.push_back({line, reason});
            continue;
        }
        report.records.push_back(std::move(rec));
    }
    return report;
}

ParseReport parse_json(std::istream& in, const ParseOptions& opts) {
    json doc;
    try {
        doc = json::parse(in);
    } catch (const json::exception& e) {
        throw DataError(std::string("grants json: ") + e.what());
    }
    if (!doc.is_array()) throw DataError("grants json: top-level value must be an array");
    ParseReport report;
    for (std::size_t i = 0; i < doc.size(); ++i) {
        const std::size_t row = i + 1;
        const json& obj = doc[i];
        GrantRecord rec;
        try {
            rec.grant_id = obj.at("grant_id").get<std::string>();
            rec.funder = obj.at("funder").get<std::string>();
            rec.lead_university = obj.at("lead_university").get<std::string>();
            rec.start_date = obj.at("start_date").get<std::string>();
            rec.value_gbp = obj.at("value_gbp").get<double>();
            for (const json& sh : obj.at("subject_shares")) {
                rec.subject_shares.push_back({sh.at("subject").get<std::string>(),
                                              sh.at("percentage").get<double>()});
            }
        } catch (const json::exception& e) {
            report.rejects.push_back({row, std::string("schema: ") + e.what()});
            continue;
        }
        auto year = parse_iso_year(rec.start_date);
        if (!year) {
            report.rejects.push_back({row, "bad start_date"});
            continue;
        }
        rec.start_year = *year;
        if (auto reason = validate(rec, opts); !reason.empty()) {
            report.rejects.push_back({row, reason});
            continue;
        }
        report.records.push_back(std::move(rec));
    }
    return report;
}

} // namespace

const std::set<std::string>& research_councils() {
    static const std::set<std::string> councils = {"AHRC", "BBSRC", "EPSRC", "ESRC",
                                                   "MRC",  "NERC",  "STFC"};
    return councils;
}

ParseReport parse_grants(std::istream& in, GrantFormat format, const ParseOptions& opts) {
    return format == GrantFormat::csv ? parse_csv(in, opts) : parse_json(in, opts);
}

ParseReport parse_grants_file(const std::string& path, GrantFormat format,
                              const ParseOptions& opts) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot open grants file " + path);
    return parse_grants(in, format, opts);
}

GrantFormat grant_format_from_path(const std::string& path) {
    auto dot = path.rfind('.');
    std::string ext = dot == std::string::npos ? "" : path.substr(dot + 1);
    if (ext == "csv") return GrantFormat::csv;
    if (ext == "json") return GrantFormat::json;
    throw ConfigError("cannot infer grants format from path " + path);
}

void write_rejects_csv(std::ostream& out, const std::vector<RejectedRow>& rejects) {
    out << "row,reason\n";
    for (const auto& r : rejects)
        out << r.row << ',' << csv::escape(r.reason) << '\n';
}

void write_grants_csv(std::ostream& out, const std::vector<GrantRecord>& records) {
    out << "grant_id,funder,lead_university,start_date,value_gbp,subjects\n";
    for (const auto& rec : records) {
        std::string subjects;
        for (const auto& sh : rec.subject_shares) {
            if (!subjects.empty()) subjects.push_back(';');
            subjects += sh.subject + ':' + csv::format_double(sh.percentage);
        }
        out << csv::escape(rec.grant_id) << ',' << csv::escape(rec.funder) << ','
            << csv::escape(rec.lead_university) << ',' << csv::escape(rec.start_date) << ','
            << csv::format_double(rec.value_gbp) << ',' << csv::escape(subjects) << '\n';
    }
}

std::vector<Allocation> allocate(const std::vector<GrantRecord>& records) {
    std::vector<Allocation> allocs;
    for (const auto& rec : records) {
        double total_pct = 0.0;
        for (const auto& sh : rec.subject_shares) total_pct += sh.percentage;
        for (const auto& sh : rec.subject_shares) {
            if (sh.percentage == 0.0) continue; // zero share carries nothing
            Allocation a;
            a.grant_id = rec.grant_id;
            a.university = rec.lead_university;
            a.subject = sh.subject;
            a.funder = rec.funder;
            a.year = rec.start_year;
            a.value = rec.value_gbp * (sh.percentage / total_pct);
            allocs.push_back(std::move(a));
        }
    }
    std::sort(allocs.begin(), allocs.end(), [](const Allocation& a, const Allocation& b) {
        if (a.grant_id != b.grant_id) return a.grant_id < b.grant_id;
        return a.subject < b.subject;
    });
    return allocs;
}

DeflatorSeries parse_deflator_csv(std::istream& in) {
    csv::Table table = csv::parse(in);
    if (table.header != std::vector<std::string>{"year", "factor"})
        throw DataError("deflator csv: header must be year,factor");
    DeflatorSeries series;
    std::optional<int> base;
    for (std::size_t i = 0; i < table.rows.size(); ++i) {
        const auto& row = table.rows[i];
        if (row.size() != 2) throw DataError("deflator csv: wrong field count");
        auto y = parse_number(row[0]);
        auto f = parse_number(row[1]);
        if (!y || !f) throw DataError("deflator csv: bad row " + std::to_string(table.line[i]));
        if (!(*f > 0.0)) throw DataError("deflator csv: nonpositive factor");
        int year = static_cast<int>(*y);
        if (!series.factors.emplace(year, *f).second)
            throw DataError("deflator csv: duplicate year " + std::to_string(year));
        if (*f == 1.0 && !base) base = year;
    }
    if (!base) throw DataError("deflator csv: no base year (factor exactly 1)");
    series.base_year = *base;
    return series;
}

std::vector<Allocation> deflate(const std::vector<Allocation>& allocs,
                                const DeflatorSeries& series) {
    std::set<int> missing;
    for (const auto& a : allocs)
        if (!series.factors.count(a.year)) missing.insert(a.year);
    if (!missing.empty()) {
        std::string msg = "deflator missing years:";
        for (int y : missing) msg += ' ' + std::to_string(y);
        throw DataError(msg);
    }
    std::vector<Allocation> out = allocs;
    for (auto& a : out) a.value *= series.factors.at(a.year);
    return out;
}

std::vector<Allocation> window(const std::vector<Allocation>& allocs, int start_year,
                               int end_year,
                               const std::optional<std::set<std::string>>& funder_filter) {
    if (start_year > end_year) throw DataError("window: start_year > end_year");
    std::vector<Allocation> out;
    for (const auto& a : allocs) {
        if (a.year < start_year || a.year > end_year) continue;
        if (funder_filter && !funder_filter->count(a.funder)) continue;
        out.push_back(a);
    }
    return out;
}

void write_allocations_csv(std::ostream& out, const std::vector<Allocation>& allocs) {
    out << "grant_id,university,subject,funder,year,value\n";
    for (const auto& a : allocs) {
        out << csv::escape(a.grant_id) << ',' << csv::escape(a.university) << ','
            << csv::escape(a.subject) << ',' << csv::escape(a.funder) << ',' << a.year << ','
            << csv::format_double(a.value) << '\n';
    }
}

std::vector<Allocation> read_allocations_csv(std::istream& in) {
    csv::Table table = csv::parse(in);
    const std::vector<std::string> expect = {"grant_id", "university", "subject",
                                             "funder",   "year",       "value"};
    if (table.header != expect) throw DataError("allocations csv: malformed header");
    std::vector<Allocation> allocs;
    for (std::size_t i = 0; i < table.rows.size(); ++i) {
        const auto& row = table.rows[i];
        if (row.size() != expect.size())
            throw DataError("allocations csv: wrong field count at line " +
                            std::to_string(table.line[i]));
        auto year = parse_number(row[4]);
        auto value = parse_number(row[5]);
        if (!year || !value)
            throw DataError("allocations csv: bad numeric field at line " +
                            std::to_string(table.line[i]));
        allocs.push_back({row[0], row[1], row[2], row[3], static_cast<int>(*year), *value});
    }
    return allocs;
}

} // namespace fitrank

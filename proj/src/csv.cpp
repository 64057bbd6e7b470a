#include "fitrank/csv.hpp"

#include "fitrank/errors.hpp"

#include <charconv>
#include <fstream>
#include <sstream>

namespace fitrank::csv {

namespace {

// One pass over the stream; state machine over {field, quoted field}.
std::vector<std::vector<std::string>> parse_records(std::istream& in,
                                                    std::vector<std::size_t>& lines) {
    std::vector<std::vector<std::string>> records;
    std::vector<std::string> record;
    std::string field;
    bool in_quotes = false;
    bool record_started = false;
    std::size_t line_no = 1;
    std::size_t record_line = 1;

    auto end_field = [&] {
        record.push_back(std::move(field));
        field.clear();
    };
    auto end_record = [&] {
        end_field();
        records.push_back(std::move(record));
        lines.push_back(record_line);
        record.clear();
        record_started = false;
    };

    char c;
    while (in.get(c)) {
        if (!record_started) {
            record_started = true;
            record_line = line_no;
        }
        if (in_quotes) {
            if (c == '"') {
                if (in.peek() == '"') {
                    in.get(c);
                    field.push_back('"');
                } else {
                    in_quotes = false;
                }
            } else {
                if (c == '\n') ++line_no;
                field.push_back(c);
            }
            continue;
        }
        switch (c) {
        case '"':
            in_quotes = true;
            break;
        case ',':
            end_field();
            break;
        case '\r':
            break; // swallow; \n terminates the record
        case '\n':
            ++line_no;
            end_record();
            break;
        default:
            field.push_back(c);
        }
    }
    if (in_quotes) throw DataError("csv: unterminated quoted field");
    if (record_started || !field.empty() || !record.empty()) end_record();
    return records;
}

} // namespace

Table parse(std::istream& in) {
    Table t;
    std::vector<std::size_t> lines;
    auto records = parse_records(in, lines);
    if (records.empty()) throw DataError("csv: missing header row");
    t.header = std::move(records.front());
    for (std::size_t i = 1; i < records.size(); ++i) {
        // skip blank trailing lines
        if (records[i].size() == 1 && records[i][0].empty()) continue;
        t.rows.push_back(std::move(records[i]));
        t.line.push_back(lines[i]);
    }
    return t;
}

Table parse_string(const std::string& text) {
    std::istringstream in(text);
    return parse(in);
}

Table parse_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("csv: cannot open " + path);
    return parse(in);
}

std::string escape(const std::string& field) {
    if (field.find_first_of(",\"\n\r") == std::string::npos) return field;
    std::string out = "\"";
    for (char c : field) {
        if (c == '"') out += "\"\"";
        else out.push_back(c);
    }
    out.push_back('"');
    return out;
}

std::string format_double(double x) {
    char buf[64];
    auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), x);
    if (ec != std::errc{}) throw std::runtime_error("format_double: to_chars failed");
    return std::string(buf, ptr);
}

std::string join_row(const std::vector<std::string>& fields) {
    std::string out;
    for (std::size_t i = 0; i < fields.size(); ++i) {
        if (i) out.push_back(',');
        out += escape(fields[i]);
    }
    out.push_back('\n');
    return out;
}

} // namespace fitrank::csv

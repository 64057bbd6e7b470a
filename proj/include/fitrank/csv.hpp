#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

namespace fitrank::csv {

/// Parsed CSV: header row plus data rows. `line` holds the 1-based line
/// number where each record started (quoted fields may span lines).
struct Table {
    std::vector<std::string> header;
    std::vector<std::vector<std::string>> rows;
    std::vector<std::size_t> line;
};

/// RFC-4180 style parse: quoted fields, escaped quotes, embedded commas
/// and newlines. Throws DataError on unbalanced quotes or a missing header.
Table parse(std::istream& in);
Table parse_string(const std::string& text);
Table parse_file(const std::string& path);

/// Quote a field only when needed (comma, quote, newline).
std::string escape(const std::string& field);

/// Shortest round-trip decimal form of a double (std::to_chars), so that
/// emitted files are byte-stable and re-parse to the identical value.
std::string format_double(double x);

std::string join_row(const std::vector<std::string>& fields);

} // namespace fitrank::csv

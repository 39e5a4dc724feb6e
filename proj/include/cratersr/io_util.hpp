#pragma once

#include <string>
#include <vector>

namespace cratersr::io {

// Writes contents to path via a sibling temp file and rename, so readers
// never observe a partial file. Throws IoError on failure.
void atomic_write(const std::string& path, const std::string& contents);

std::string read_file(const std::string& path);

// Splits one CSV record on commas; no quoting support (none of our formats
// need it). Whitespace around fields is trimmed.
std::vector<std::string> split_csv_line(const std::string& line);

// Strict numeric parsing; throws FormatError naming `context` on failure.
double parse_double(const std::string& s, const std::string& context);
long parse_long(const std::string& s, const std::string& context);

// Shortest decimal form that round-trips the exact double.
std::string fmt_double(double v);

// Possibly multi-line comment -> '#'-prefixed block (empty input -> empty).
std::string comment_block(const std::string& comment);

// Loads a CSV with the given mandatory header line. '#' lines and blank
// lines are skipped; each data row is split and checked against the header's
// field count. Throws FormatError with file/line context.
std::vector<std::vector<std::string>> load_csv_rows(const std::string& path,
                                                    const std::string& expected_header);

} // namespace cratersr::io

#pragma once

#include <iosfwd>
#include <string>
#include <string_view>
#include <vector>

namespace rtnm::csv {

// Splits one CSV record. Double-quoted fields with "" escapes are supported;
// embedded newlines are not.
std::vector<std::string> split_record(std::string_view line);

// Reads the next non-empty line (CR stripped). Returns false at EOF.
bool read_line(std::istream& in, std::string& line);

// Shortest representation that round-trips through strtod; "" for NaN.
std::string format_double(double x);

// Fixed-point with `digits` decimals, used for human-facing tables.
std::string format_fixed(double x, int digits);

}  // namespace rtnm::csv

#pragma once

#include <istream>
#include <string>
#include <string_view>
#include <vector>

namespace objslam {

/// Shortest decimal that round-trips to the same double.
std::string format_double(double value);
/// Strict parse of a full token; throws ParseError.
double parse_double(std::string_view token);
long long parse_int(std::string_view token);

/// Whitespace-separated tokens of one line.
std::vector<std::string> split_tokens(std::string_view line);

/// Next line that is neither empty nor a '#' comment. Returns false at EOF.
bool next_content_line(std::istream& in, std::string& line);

}  // namespace objslam

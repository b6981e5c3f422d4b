#pragma once

#include <string>
#include <string_view>
#include <vector>

namespace creep {

/// Shortest text that reads back to the same double: 17 significant digits.
std::string format_double(double value);

/// Strict parse of a whole field; throws FormatError on trailing garbage.
double parse_double(std::string_view text);

std::vector<std::string_view> split_fields(std::string_view line, char sep = ',');

}  // namespace creep

#pragma once

#include <string>
#include <string_view>
#include <vector>

namespace plr {

// %.17g-style text that parses back to the identical double.
std::string format_real(double v);

// Whole-token parse; throws FormatError on junk and DataError on non-finite values.
double parse_real(std::string_view text);
long long parse_integer(std::string_view text);

std::vector<std::string> split(std::string_view line, char sep);
// Splits on runs of spaces/tabs.
std::vector<std::string> split_whitespace(std::string_view line);

}  // namespace plr

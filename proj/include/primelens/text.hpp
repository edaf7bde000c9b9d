#pragma once

#include <string>
#include <string_view>
#include <vector>

namespace primelens::text {

std::vector<std::string> split_whitespace(std::string_view s);
std::vector<std::string> split(std::string_view s, char sep);
std::string_view trim(std::string_view s);
std::string lower(std::string_view s);
// Collapses whitespace runs to one space and strips both ends.
std::string normalize_whitespace(std::string_view s);
bool is_space(char c);

double parse_double(std::string_view s);  // throws InvalidArgument
// Shortest representation that round-trips.
std::string format_double(double x);

}  // namespace primelens::text

#pragma once

#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace gaitdex::text {

std::string_view trim(std::string_view s);

/// Splits one CSV record on commas. Surrounding whitespace and a single pair
/// of enclosing double quotes are removed from every field.
std::vector<std::string> split_csv_line(std::string_view line);

/// Strict decimal parse of the whole field; nullopt on trailing garbage.
/// "nan"/"inf" parse successfully so callers can report them as data errors.
std::optional<double> parse_double(std::string_view s);
std::optional<long long> parse_int(std::string_view s);

/// Shortest representation that parses back to the identical double.
std::string format_double(double value);

std::vector<std::string> split(std::string_view s, char delimiter);

}  // namespace gaitdex::text

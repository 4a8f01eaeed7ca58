#pragma once

#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace flipbound {

/// Shortest round-trip-safe decimal: 17 significant digits.
std::string format_double(double v);

/// Empty field for an absent value.
std::string format_optional(const std::optional<double>& v);

std::vector<std::string> split_csv_line(std::string_view line);

double parse_double(std::string_view field);

}  // namespace flipbound

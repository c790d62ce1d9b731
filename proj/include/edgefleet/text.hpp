#pragma once

#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace edgefleet {

/// Ordered list of (name, value) string pairs, as read from a CSV row or a
/// key:value payload.
using FieldMap = std::vector<std::pair<std::string, std::string>>;

const std::string* find_field(const FieldMap& fields, std::string_view name);

/// Shortest decimal that parses back to the identical double. -0.0 prints as "0".
std::string format_double(double value);

/// Strict parse of the whole string; "nan"/"inf" accepted. nullopt on garbage.
std::optional<double> parse_double(std::string_view text);
std::optional<long long> parse_int(std::string_view text);

std::vector<std::string> split_csv_line(std::string_view line);
std::string csv_escape(std::string_view field);
std::string join_csv(const std::vector<std::string>& fields);

std::string_view trim(std::string_view text);

}  // namespace edgefleet

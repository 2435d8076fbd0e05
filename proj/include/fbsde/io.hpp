#pragma once

#include <filesystem>
#include <map>
#include <string>
#include <variant>
#include <vector>

namespace fbsde::lab {

/// Plot-ready numeric table; column names carry axis and unit.
struct Table {
  std::vector<std::string> columns;
  std::vector<std::vector<double>> rows;
};

/// Writes to a sibling temporary file and renames it over the target.
void write_atomic(const std::filesystem::path& path, const std::string& contents);

std::string to_csv(const Table& table);
Table read_csv(const std::filesystem::path& path);

using FlatValue = std::variant<double, long long, bool, std::string>;
/// Flat key-value map; keys sort lexicographically so the dump is stable.
using FlatMap = std::map<std::string, FlatValue>;

std::string to_json(const FlatMap& map);
FlatMap read_flat_json(const std::filesystem::path& path);

/// %.12g with a '.' decimal separator independent of the locale.
std::string format_number(double x);

}  // namespace fbsde::lab

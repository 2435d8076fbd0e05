#include "fbsde/io.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "fbsde/model.hpp"

namespace fbsde::lab {

namespace fs = std::filesystem;

void write_atomic(const fs::path& path, const std::string& contents) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  fs::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw Error("cannot open " + tmp.string() + " for writing");
    out.write(contents.data(), static_cast<std::streamsize>(contents.size()));
    out.flush();
    if (!out) throw Error("write to " + tmp.string() + " failed");
  }
  fs::rename(tmp, path);
}

std::string format_number(double x) {
  if (std::isnan(x)) return "nan";
  if (std::isinf(x)) return x > 0 ? "inf" : "-inf";
  char buf[32];
  const auto res = std::to_chars(buf, buf + sizeof buf, x, std::chars_format::general, 12);
  return std::string(buf, res.ptr);
}

std::string to_csv(const Table& table) {
  std::string out;
  for (std::size_t c = 0; c < table.columns.size(); ++c) {
    if (c) out += ',';
    out += table.columns[c];
  }
  out += '\n';
  for (const auto& row : table.rows) {
    if (row.size() != table.columns.size()) throw Error("table row width does not match the header");
    for (std::size_t c = 0; c < row.size(); ++c) {
      if (c) out += ',';
      out += format_number(row[c]);
    }
    out += '\n';
  }
  return out;
}

Table read_csv(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open " + path.string());
  Table t;
  std::string line;
  if (!std::getline(in, line)) throw Error(path.string() + " is empty");
  std::stringstream header(line);
  for (std::string col; std::getline(header, col, ',');) t.columns.push_back(col);
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::vector<double> row;
    std::stringstream ss(line);
    for (std::string cell; std::getline(ss, cell, ',');) {
      double v = 0.0;
      if (cell == "nan") v = std::nan("");
      else if (cell == "inf") v = INFINITY;
      else if (cell == "-inf") v = -INFINITY;
      else {
        const auto res = std::from_chars(cell.data(), cell.data() + cell.size(), v);
        if (res.ec != std::errc()) throw Error("malformed number '" + cell + "' in " + path.string());
      }
      row.push_back(v);
    }
    if (row.size() != t.columns.size()) throw Error("ragged row in " + path.string());
    t.rows.push_back(std::move(row));
  }
  return t;
}

std::string to_json(const FlatMap& map) {
  nlohmann::ordered_json j = nlohmann::ordered_json::object();
  for (const auto& [key, value] : map) {
    std::visit(
        [&](const auto& v) {
          using V = std::decay_t<decltype(v)>;
          if constexpr (std::is_same_v<V, double>) {
            if (std::isfinite(v))
              j[key] = v;
            else
              j[key] = format_number(v);
          } else {
            j[key] = v;
          }
        },
        value);
  }
  return j.dump(2) + "\n";
}

FlatMap read_flat_json(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open " + path.string());
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw Error(path.string() + " is not valid JSON: " + e.what());
  }
  if (!j.is_object()) throw Error(path.string() + " is not a flat JSON object");
  FlatMap out;
  for (auto it = j.begin(); it != j.end(); ++it) {
    const auto& v = it.value();
    if (v.is_boolean()) out[it.key()] = v.get<bool>();
    else if (v.is_number_integer()) out[it.key()] = v.get<long long>();
    else if (v.is_number()) out[it.key()] = v.get<double>();
    else if (v.is_string()) out[it.key()] = v.get<std::string>();
    else throw Error("key '" + it.key() + "' is not a scalar");
  }
  return out;
}

}  // namespace fbsde::lab

#include "fbsde/field_io.hpp"

#include <bit>
#include <cstdio>
#include <istream>
#include <map>
#include <ostream>
#include <sstream>
#include <string>

namespace fbsde {

static_assert(std::endian::native == std::endian::little, "binary field dumps assume a little-endian host");

namespace {

std::string fmt(double x) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", x);
  return buf;
}

template <class It>
std::string join(It b, It e) {
  std::string out;
  for (It it = b; it != e; ++it) {
    if (it != b) out += ',';
    if constexpr (std::is_floating_point_v<std::decay_t<decltype(*it)>>)
      out += fmt(*it);
    else
      out += std::to_string(*it);
  }
  return out;
}

std::vector<double> split_doubles(const std::string& s) {
  std::vector<double> out;
  std::stringstream ss(s);
  std::string tok;
  while (std::getline(ss, tok, ',')) out.push_back(std::stod(tok));
  return out;
}

}  // namespace

void write_field(const ValueField& field, std::ostream& out) {
  const Grid& g = field.grid();
  const Provenance& pr = field.provenance();
  std::vector<std::size_t> stored(field.n_slices());
  for (std::size_t s = 0; s < stored.size(); ++s) stored[s] = field.node_of(s);
  out << "format=fbsde-field/1\n";
  out << "dim_p=" << g.dim_p << "\n";
  out << "n_e=" << g.n_e << "\n";
  out << "e_min=" << fmt(g.e_min) << "\n";
  out << "e_max=" << fmt(g.e_max) << "\n";
  out << "n_p=" << g.n_p << "\n";
  out << "p_min=" << join(g.p_min.begin(), g.p_min.end()) << "\n";
  out << "p_max=" << join(g.p_max.begin(), g.p_max.end()) << "\n";
  out << "t_nodes=" << join(g.t_nodes.begin(), g.t_nodes.end()) << "\n";
  out << "stored=" << join(stored.begin(), stored.end()) << "\n";
  out << "epsilon=" << fmt(pr.epsilon) << "\n";
  out << "mollifier_n=" << (pr.mollifier_n ? std::to_string(*pr.mollifier_n) : std::string("heaviside")) << "\n";
  out << "numerical_viscosity=" << (pr.numerical_viscosity ? 1 : 0) << "\n";
  out << "scheme_id=" << pr.scheme_id << "\n";
  out << "model_hash=" << pr.model_hash << "\n";
  out << "tc_label=" << pr.tc_label << "\n";
  out << "inviscid_start=" << fmt(pr.inviscid_start) << "\n";
  out << "reduced=" << (pr.reduced ? 1 : 0) << "\n";
  out << "layout=slice,p,e row-major float64 little-endian\n";
  out << "count=" << field.values().size() << "\n\n";
  out.write(reinterpret_cast<const char*>(field.values().data()),
            static_cast<std::streamsize>(field.values().size() * sizeof(double)));
  if (!out) throw Error("failed to write field");
}

ValueField read_field(std::istream& in) {
  std::map<std::string, std::string> kv;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) break;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw Error("malformed field header line: " + line);
    kv[line.substr(0, eq)] = line.substr(eq + 1);
  }
  auto get = [&](const std::string& k) {
    auto it = kv.find(k);
    if (it == kv.end()) throw Error("field header lacks " + k);
    return it->second;
  };
  if (get("format") != "fbsde-field/1") throw Error("unsupported field format");
  Grid g;
  g.dim_p = std::stoi(get("dim_p"));
  g.n_e = std::stoi(get("n_e"));
  g.e_min = std::stod(get("e_min"));
  g.e_max = std::stod(get("e_max"));
  g.n_p = std::stoi(get("n_p"));
  const auto pmin = split_doubles(get("p_min"));
  const auto pmax = split_doubles(get("p_max"));
  for (int k = 0; k < kMaxDim; ++k) {
    g.p_min[k] = pmin.at(k);
    g.p_max[k] = pmax.at(k);
  }
  g.t_nodes = split_doubles(get("t_nodes"));
  std::vector<std::size_t> stored;
  for (double x : split_doubles(get("stored"))) stored.push_back(static_cast<std::size_t>(x));
  Provenance pr;
  pr.epsilon = std::stod(get("epsilon"));
  const std::string mn = get("mollifier_n");
  if (mn != "heaviside") pr.mollifier_n = std::stoi(mn);
  pr.numerical_viscosity = get("numerical_viscosity") == "1";
  pr.scheme_id = get("scheme_id");
  pr.model_hash = get("model_hash");
  pr.tc_label = get("tc_label");
  pr.inviscid_start = std::stod(get("inviscid_start"));
  pr.reduced = get("reduced") == "1";
  ValueField field(g, stored, pr);
  const std::size_t count = std::stoull(get("count"));
  if (count != field.values().size()) throw Error("field header count does not match the grid");
  in.read(reinterpret_cast<char*>(field.values().data()), static_cast<std::streamsize>(count * sizeof(double)));
  if (!in) throw Error("field payload is truncated");
  return field;
}

void write_slices_csv(const ValueField& field, const std::vector<double>& times, int p_flat, std::ostream& out) {
  const Grid& g = field.grid();
  out << "t";
  for (int k = 0; k < g.dim_p; ++k) out << ",p" << k;
  out << ",e,v\n";
  const Vec p = g.p_point(p_flat);
  for (double t : times) {
    const std::size_t s = field.exact_slice(t);
    for (int i = 0; i < g.n_e; ++i) {
      out << fmt(field.time(s));
      for (int k = 0; k < g.dim_p; ++k) out << ',' << fmt(p[k]);
      out << ',' << fmt(g.e(i)) << ',' << fmt(field.at(s, p_flat, i)) << '\n';
    }
  }
}

}  // namespace fbsde

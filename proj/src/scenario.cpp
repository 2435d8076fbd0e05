#include "fbsde/scenario.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <map>

#include <json.hpp>

#include "fbsde/burgers.hpp"

namespace fbsde::lab {

using nlohmann::json;

namespace {

Vec to_vec(const std::vector<double>& v, int dim, const char* what) {
  if (static_cast<int>(v.size()) != dim) throw Error(std::string(what) + " must have dim_p entries");
  Vec out{};
  for (int i = 0; i < dim; ++i) out[i] = v[i];
  return out;
}

struct Entry {
  CatalogEntry info;
  ScenarioConfig cfg;
};

ScenarioConfig base(const std::string& name, const std::string& description) {
  ScenarioConfig c;
  c.scenario = name;
  c.description = description;
  return c;
}

std::map<std::string, Entry> build_registry() {
  std::map<std::string, Entry> reg;
  auto add = [&](ScenarioConfig c, const std::string& anchor) {
    reg[c.scenario] = Entry{{c.scenario, c.description, anchor}, c};
  };

  {
    auto c = base("affine_dirac", "affine constant coefficients, Heaviside terminal condition, cone-midpoint start");
    c.transmission_tau = 0.05;
    c.checks = {"validate", "gradient_band", "comparison", "burgers_gap", "dirac_atom", "conditional_support",
                "sandwich", "flow_squeeze", "variance", "transmission", "equivalence", "characteristics"};
    add(c, "affine constant family");
  }
  {
    auto c = base("affine_smooth_ramp", "affine constant coefficients, smooth ramp terminal condition");
    c.terminal = {"smooth_ramp", 0.1};
    c.epsilon = {0.0};
    c.sim.n_paths = 50000;
    c.sim.t0 = 0.3;
    c.transmission_tau = 0.05;
    c.checks = {"validate", "gradient_band", "sandwich", "feynman_kac", "equivalence"};
    add(c, "affine constant family");
  }
  {
    auto c = base("degenerate_characteristics", "affine family with alpha = 0: noise never reaches E");
    c.model.alpha = {0.0};
    c.sim.n_paths = 2000;
    c.checks = {"validate", "gradient_band", "burgers_gap", "dirac_atom", "variance", "transmission",
                "characteristics"};
    add(c, "degenerate characteristics");
  }
  {
    auto c = base("linear_drift_neg", "linear drift b(p) = lambda p with lambda = -1");
    c.model.family = "linear_drift";
    c.model.lambda = -1.0;
    c.checks = {"validate", "gradient_band", "burgers_gap", "dirac_atom", "sandwich", "variance", "transmission"};
    add(c, "linear drift family, lambda < 0");
  }
  {
    auto c = base("linear_drift_pos", "linear drift b(p) = lambda p with lambda = +1");
    c.model.family = "linear_drift";
    c.model.lambda = 1.0;
    c.checks = {"validate", "gradient_band", "burgers_gap", "dirac_atom", "sandwich", "transmission"};
    add(c, "linear drift family, lambda > 0");
  }
  {
    auto c = base("nonlinear_1d", "f(p, y) = -f0(mu p - y), f0(z) = z + 0.1 sin z, b(p) = -kappa p");
    c.model.family = "nonlinear_1d";
    c.model.mu = 1.0;
    c.model.kappa = 1.0;
    c.sim.n_paths = 20000;
    c.sim.n_steps = 400;
    c.checks = {"validate", "gradient_band", "burgers_gap", "sandwich", "variance"};
    add(c, "one-dimensional nonlinear family");
  }
  return reg;
}

const std::map<std::string, Entry>& registry() {
  static const std::map<std::string, Entry> reg = build_registry();
  return reg;
}

template <class T>
void read(const json& j, const char* key, T& out) {
  if (j.contains(key)) out = j.at(key).get<T>();
}

json model_json(const ModelParams& m) {
  return {{"family", m.family}, {"dim_p", m.dim_p},     {"alpha", m.alpha}, {"gamma", m.gamma},
          {"b0", m.b0},         {"lambda", m.lambda},   {"sigma", m.sigma}, {"mu", m.mu},
          {"kappa", m.kappa},   {"profile_eps", m.profile_eps}, {"L", m.L}, {"cap", m.cap},
          {"T", m.T}};
}

json canonical(const ScenarioConfig& c, bool with_output) {
  const auto& g = c.grid;
  const auto& s = c.sim;
  json sim = {{"n_paths", s.n_paths}, {"n_steps", s.n_steps},           {"t0", s.t0},
              {"p0", s.p0},           {"cone_fraction", s.cone_fraction}, {"seed", s.seed},
              {"threads", s.threads}};
  if (s.e0) sim["e0"] = *s.e0;
  json j = {{"schema_version", c.schema_version},
            {"scenario", c.scenario},
            {"description", c.description},
            {"model", model_json(c.model)},
            {"grid",
             {{"t_start", g.t_start},
              {"n_t", g.n_t},
              {"n_e", g.n_e},
              {"n_p", g.n_p},
              {"p_lo", g.p_lo},
              {"p_hi", g.p_hi},
              {"margin", g.margin},
              {"fine_de", g.fine_de},
              {"fine_n_p", g.fine_n_p},
              {"reduced_de", g.reduced_de},
              {"mc_de_ratio", g.mc_de_ratio},
              {"fk_de", g.fk_de},
              {"inviscid_start", g.inviscid_start}}},
            {"terminal", {{"kind", c.terminal.kind}, {"width", c.terminal.width}}},
            {"sweeps", {{"mollifier_n", c.mollifier_n}, {"epsilon", c.epsilon}}},
            {"sim", sim},
            {"transmission_tau", c.transmission_tau},
            {"checks", c.checks}};
  if (with_output) j["output_dir"] = c.output_dir;
  return j;
}

}  // namespace

ModelSpec ScenarioConfig::build_model() const {
  const auto& m = model;
  if (m.dim_p < 1 || m.dim_p > kMaxDim) throw Error("dim_p must be 1 or 2");
  ModelSpec spec;
  if (m.family == "affine_constant") {
    const Vec alpha = to_vec(m.alpha, m.dim_p, "alpha");
    const Vec b = to_vec(m.b0, m.dim_p, "b0");
    const Vec sd = to_vec(m.sigma, m.dim_p, "sigma");
    Mat sig{};
    for (int i = 0; i < m.dim_p; ++i) sig[i * kMaxDim + i] = sd[i];
    spec = make_affine_constant(m.dim_p, alpha, m.gamma, b, sig, m.L, m.cap, m.T);
  } else if (m.family == "linear_drift") {
    if (m.dim_p != 1) throw Error("linear_drift is one-dimensional");
    spec = make_linear_drift(m.lambda, to_vec(m.b0, 1, "b0")[0], to_vec(m.sigma, 1, "sigma")[0],
                             to_vec(m.alpha, 1, "alpha")[0], m.gamma, m.L, m.cap, m.T);
  } else if (m.family == "nonlinear_1d") {
    if (m.dim_p != 1) throw Error("nonlinear_1d is one-dimensional");
    spec = make_nonlinear_1d(m.mu, sine_perturbed_profile(m.profile_eps), m.kappa, to_vec(m.sigma, 1, "sigma")[0],
                             m.L, m.cap, m.T);
  } else {
    throw Error("unknown model family '" + m.family + "'");
  }
  spec.name = scenario;
  spec.check_constants();
  return spec;
}

TerminalCondition ScenarioConfig::build_terminal() const {
  if (terminal.kind == "heaviside") return TerminalCondition::heaviside(model.cap);
  if (terminal.kind == "smooth_ramp") return TerminalCondition::smooth_ramp(model.cap, terminal.width);
  throw Error("unknown terminal kind '" + terminal.kind + "'");
}

double ScenarioConfig::start_e(const ModelSpec& m) const {
  if (sim.e0) return *sim.e0;
  const Vec p0 = to_vec(sim.p0, m.dim_p, "p0");
  const bool affine = m.family == Family::affine_constant || m.family == Family::linear_drift;
  const double slope = affine ? m.params.gamma : m.ell1;
  const WEvaluator we = WEvaluator::for_model(m);
  return m.cap_lambda + sim.cone_fraction * slope * (m.horizon_T - sim.t0) - we(sim.t0, p0);
}

std::string ScenarioConfig::hash() const {
  const std::string text = canonical(*this, false).dump();
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char ch : text) {
    h ^= ch;
    h *= 0x100000001b3ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

std::vector<CatalogEntry> registry_list() {
  std::vector<CatalogEntry> out;
  for (const auto& [name, e] : registry()) out.push_back(e.info);
  return out;
}

bool registry_contains(const std::string& name) { return registry().count(name) > 0; }

ScenarioConfig registry_config(const std::string& name) {
  const auto it = registry().find(name);
  if (it == registry().end()) throw Error("unknown scenario '" + name + "'");
  return it->second.cfg;
}

std::string to_json(const ScenarioConfig& cfg) { return canonical(cfg, true).dump(2); }

ScenarioConfig from_json(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    throw Error(std::string("config is not valid JSON: ") + e.what());
  }
  if (!j.is_object()) throw Error("config must be a JSON object");
  if (!j.contains("schema_version")) throw Error("config lacks schema_version");
  if (j.at("schema_version").get<int>() != kSchemaVersion) throw Error("unsupported schema_version");
  if (!j.contains("scenario")) throw Error("config lacks scenario");
  try {
    const std::string name = j.at("scenario").get<std::string>();
    ScenarioConfig c = registry_contains(name) ? registry_config(name) : ScenarioConfig{};
    c.scenario = name;
    read(j, "description", c.description);
    if (j.contains("model")) {
      const json& m = j.at("model");
      read(m, "family", c.model.family);
      read(m, "dim_p", c.model.dim_p);
      read(m, "alpha", c.model.alpha);
      read(m, "gamma", c.model.gamma);
      read(m, "b0", c.model.b0);
      read(m, "lambda", c.model.lambda);
      read(m, "sigma", c.model.sigma);
      read(m, "mu", c.model.mu);
      read(m, "kappa", c.model.kappa);
      read(m, "profile_eps", c.model.profile_eps);
      read(m, "L", c.model.L);
      read(m, "cap", c.model.cap);
      read(m, "T", c.model.T);
    }
    if (j.contains("grid")) {
      const json& g = j.at("grid");
      read(g, "t_start", c.grid.t_start);
      read(g, "n_t", c.grid.n_t);
      read(g, "n_e", c.grid.n_e);
      read(g, "n_p", c.grid.n_p);
      read(g, "p_lo", c.grid.p_lo);
      read(g, "p_hi", c.grid.p_hi);
      read(g, "margin", c.grid.margin);
      read(g, "fine_de", c.grid.fine_de);
      read(g, "fine_n_p", c.grid.fine_n_p);
      read(g, "reduced_de", c.grid.reduced_de);
      read(g, "mc_de_ratio", c.grid.mc_de_ratio);
      read(g, "fk_de", c.grid.fk_de);
      read(g, "inviscid_start", c.grid.inviscid_start);
    }
    if (j.contains("terminal")) {
      read(j.at("terminal"), "kind", c.terminal.kind);
      read(j.at("terminal"), "width", c.terminal.width);
    }
    if (j.contains("sweeps")) {
      read(j.at("sweeps"), "mollifier_n", c.mollifier_n);
      read(j.at("sweeps"), "epsilon", c.epsilon);
    }
    if (j.contains("sim")) {
      const json& s = j.at("sim");
      read(s, "n_paths", c.sim.n_paths);
      read(s, "n_steps", c.sim.n_steps);
      read(s, "t0", c.sim.t0);
      read(s, "p0", c.sim.p0);
      read(s, "cone_fraction", c.sim.cone_fraction);
      if (s.contains("e0")) c.sim.e0 = s.at("e0").get<double>();
      read(s, "seed", c.sim.seed);
      read(s, "threads", c.sim.threads);
    }
    read(j, "transmission_tau", c.transmission_tau);
    read(j, "checks", c.checks);
    read(j, "output_dir", c.output_dir);
    for (const auto& name : c.checks)
      if (std::find(known_checks().begin(), known_checks().end(), name) == known_checks().end())
        throw Error("unknown check '" + name + "'");
    return c;
  } catch (const json::exception& e) {
    throw Error(std::string("config field has the wrong type: ") + e.what());
  }
}

const std::vector<std::string>& known_checks() {
  static const std::vector<std::string> names{
      "validate",   "gradient_band", "comparison", "burgers_gap", "dirac_atom",  "conditional_support",
      "sandwich",   "flow_squeeze",  "variance",   "transmission", "feynman_kac", "equivalence",
      "characteristics"};
  return names;
}

}  // namespace fbsde::lab

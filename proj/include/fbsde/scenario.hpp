#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "fbsde/model.hpp"
#include "fbsde/terminal.hpp"

namespace fbsde::lab {

inline constexpr int kSchemaVersion = 1;

struct ModelParams {
  std::string family = "affine_constant";  // affine_constant | linear_drift | nonlinear_1d
  int dim_p = 1;
  std::vector<double> alpha{1.0};
  double gamma = 1.0;
  std::vector<double> b0{0.0};
  double lambda = 0.0;
  std::vector<double> sigma{0.7071067811865476};  // diagonal entries
  double mu = 1.0;
  double kappa = 1.0;
  double profile_eps = 0.1;
  double L = 2.0;
  double cap = 0.0;
  double T = 0.5;
};

struct GridParams {
  /// Coarse full grid (gradient band, comparison).
  double t_start = 0.0;
  int n_t = 200;
  int n_e = 401;
  int n_p = 51;
  double p_lo = -1.5;
  double p_hi = 1.5;
  double margin = 1.0;
  /// Fine full grid (Burgers gap, equivalence, fields driving simulations of non-affine models).
  double fine_de = 3e-4;
  int fine_n_p = 31;
  /// Reduced (e-bar) grids: Burgers gap and mirror check, simulation fields, Feynman-Kac oracle.
  double reduced_de = 1e-4;
  double mc_de_ratio = 1e-3;  // e-step of simulation fields over T - t0
  double fk_de = 5e-5;
  double inviscid_start = 1e-3;
};

struct TerminalParams {
  std::string kind = "heaviside";  // heaviside | smooth_ramp
  double width = 0.1;
};

struct SimParams {
  int n_paths = 100000;
  int n_steps = 1000;
  double t0 = 0.4;
  std::vector<double> p0{0.0};
  /// Position of e-bar in the cone, (e-bar - cap) / (gamma (T - t0)); used when e0 is absent.
  double cone_fraction = 0.5;
  std::optional<double> e0;
  std::uint64_t seed = 1;
  int threads = 0;
};

struct ScenarioConfig {
  int schema_version = kSchemaVersion;
  std::string scenario;
  std::string description;
  ModelParams model;
  GridParams grid;
  TerminalParams terminal;
  std::vector<int> mollifier_n{4, 8, 16, 32};
  std::vector<double> epsilon{0.0};
  SimParams sim;
  /// Time to go at which the transmission profile is scanned.
  double transmission_tau = 0.1;
  std::vector<std::string> checks;
  std::string output_dir;

  ModelSpec build_model() const;
  TerminalCondition build_terminal() const;
  /// Starting e: sim.e0 when given, else the cone point cap + cone_fraction * slope * (T - t0) - w(t0, p0).
  double start_e(const ModelSpec& model) const;
  /// Stable digest of the canonical JSON serialization (output_dir excluded).
  std::string hash() const;
};

struct CatalogEntry {
  std::string name;
  std::string description;
  std::string anchor;  // model family the scenario instantiates
};

/// Sorted by name.
std::vector<CatalogEntry> registry_list();
bool registry_contains(const std::string& name);
/// Default configuration of a registered scenario; throws Error for unknown names.
ScenarioConfig registry_config(const std::string& name);

std::string to_json(const ScenarioConfig& cfg);
/// Parses and checks schema_version; throws Error on malformed input.
ScenarioConfig from_json(const std::string& text);

/// Check names understood by the pipeline.
const std::vector<std::string>& known_checks();

}  // namespace fbsde::lab

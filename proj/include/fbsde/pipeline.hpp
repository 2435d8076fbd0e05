#pragma once

#include <filesystem>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "fbsde/io.hpp"
#include "fbsde/scenario.hpp"

namespace fbsde::lab {

enum class Verdict { pass, fail, flagged };

std::string to_string(Verdict v);

struct CheckResult {
  std::string name;
  Verdict verdict = Verdict::pass;
  std::vector<std::pair<std::string, double>> stats;  // in insertion order
  std::string note;
  std::optional<Table> plot;
  double seconds = 0.0;

  /// Throws Error when the statistic is absent.
  double stat(const std::string& key) const;
  void add(const std::string& key, double value) { stats.emplace_back(key, value); }
};

struct ExperimentRecord {
  std::string scenario;
  std::string config_hash;
  std::uint64_t seed = 0;
  std::vector<CheckResult> checks;
  std::vector<std::string> files;  // relative to the output directory
  std::string error;               // set when the pipeline aborted

  Verdict overall() const;
  const CheckResult& check(const std::string& name) const;
  /// Deterministic flat summary (no timings).
  FlatMap summary() const;
  FlatMap timings() const;
};

/// Caches fields and ensembles shared between checks of one scenario.
class Pipeline {
 public:
  explicit Pipeline(ScenarioConfig cfg);
  ~Pipeline();
  Pipeline(const Pipeline&) = delete;
  Pipeline& operator=(const Pipeline&) = delete;

  const ScenarioConfig& config() const;
  /// Runs one named check; Error subclasses from the numerics become a failed result.
  CheckResult run(const std::string& check);

  struct State;

 private:
  std::unique_ptr<State> state_;
};

/// Runs every configured check (after validate_assumptions passes) and, when out_dir is set,
/// writes config.json, summary.json, timings.json and one CSV per check with plot data.
ExperimentRecord run_scenario(const ScenarioConfig& cfg, const std::optional<std::filesystem::path>& out_dir);

/// Plot table of a check recorded under out_dir; throws Error when the check is absent.
Table emit_plot_data(const std::filesystem::path& out_dir, const std::string& check);

/// Fine full-grid value field and the MC field used by simulate-only, written as binary dumps.
struct SolveArtifacts {
  std::vector<std::string> files;
};
SolveArtifacts solve_only(const ScenarioConfig& cfg, const std::filesystem::path& out_dir);
SolveArtifacts simulate_only(const ScenarioConfig& cfg, const std::filesystem::path& out_dir);

}  // namespace fbsde::lab

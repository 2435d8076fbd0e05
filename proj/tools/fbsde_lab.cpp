#include <cstdlib>
#include <fstream>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>

#include "fbsde/io.hpp"
#include "fbsde/pipeline.hpp"
#include "fbsde/scenario.hpp"

namespace fs = std::filesystem;
using namespace fbsde::lab;

namespace {

constexpr int kExitUnknownScenario = 2;

fs::path output_root(const std::string& flag) {
  if (!flag.empty()) return flag;
  if (const char* env = std::getenv("FBSDE_LAB_OUT"); env && *env) return env;
  return "fbsde-out";
}

std::string read_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw fbsde::Error("cannot open " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

struct ScenarioArgs {
  std::string scenario;
  std::string config;
  std::string out;
  std::vector<std::string> checks;
  std::optional<std::uint64_t> seed;
  std::optional<int> paths, steps, threads;
};

void add_scenario_options(CLI::App* cmd, ScenarioArgs& a) {
  auto* sc = cmd->add_option("--scenario", a.scenario, "registered scenario name");
  auto* cf = cmd->add_option("--config", a.config, "scenario JSON file");
  sc->excludes(cf);
  cmd->add_option("--out", a.out, "output root (default $FBSDE_LAB_OUT or ./fbsde-out)");
  cmd->add_option("--seed", a.seed, "master seed");
  cmd->add_option("--paths", a.paths, "Monte Carlo paths");
  cmd->add_option("--steps", a.steps, "Euler steps");
  cmd->add_option("--threads", a.threads, "worker threads (0 = hardware)");
}

/// Resolves the configuration; returns nullopt after printing when the scenario is unknown.
std::optional<ScenarioConfig> resolve(const ScenarioArgs& a) {
  ScenarioConfig cfg;
  if (!a.config.empty()) {
    cfg = from_json(read_file(a.config));
  } else if (!a.scenario.empty()) {
    if (!registry_contains(a.scenario)) {
      std::cerr << "unknown scenario '" << a.scenario << "'; see `fbsde-lab list`\n";
      return std::nullopt;
    }
    cfg = registry_config(a.scenario);
  } else {
    throw fbsde::Error("one of --scenario or --config is required");
  }
  if (a.seed) cfg.sim.seed = *a.seed;
  if (a.paths) cfg.sim.n_paths = *a.paths;
  if (a.steps) cfg.sim.n_steps = *a.steps;
  if (a.threads) cfg.sim.threads = *a.threads;
  if (!a.checks.empty()) {
    for (const auto& c : a.checks)
      if (std::find(known_checks().begin(), known_checks().end(), c) == known_checks().end())
        throw fbsde::Error("unknown check '" + c + "'");
    cfg.checks = a.checks;
  }
  cfg.output_dir = (output_root(a.out) / cfg.scenario).string();
  return cfg;
}

int exit_code(Verdict v) {
  switch (v) {
    case Verdict::pass: return 0;
    case Verdict::flagged: return 3;
    case Verdict::fail: return 1;
  }
  return 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Numerical laboratory for forward-backward SDEs with a Heaviside terminal condition"};
  app.require_subcommand(1);

  auto* list = app.add_subcommand("list", "list registered scenarios");

  ScenarioArgs run_args;
  auto* run = app.add_subcommand("run", "run the checks of a scenario");
  add_scenario_options(run, run_args);
  run->add_option("--checks", run_args.checks, "subset of checks to run")->delimiter(',');

  std::string plot_dir, plot_check, plot_output;
  auto* plot = app.add_subcommand("plot-data", "print or write the plot table of a recorded check");
  plot->add_option("--out", plot_dir, "output directory of a previous run")->required();
  plot->add_option("--check", plot_check, "check name")->required();
  plot->add_option("--output", plot_output, "CSV file to write (default stdout)");

  ScenarioArgs solve_args;
  auto* solve = app.add_subcommand("solve-only", "solve and dump value fields");
  add_scenario_options(solve, solve_args);

  ScenarioArgs sim_args;
  auto* sim = app.add_subcommand("simulate-only", "simulate the forward system and dump terminal arrays");
  add_scenario_options(sim, sim_args);

  CLI11_PARSE(app, argc, argv);

  try {
    if (*list) {
      for (const auto& e : registry_list()) std::cout << e.name << "\t" << e.anchor << "\t" << e.description << "\n";
      return 0;
    }
    if (*plot) {
      const Table t = emit_plot_data(plot_dir, plot_check);
      if (plot_output.empty())
        std::cout << to_csv(t);
      else
        write_atomic(plot_output, to_csv(t));
      return 0;
    }
    ScenarioArgs& a = *run ? run_args : (*solve ? solve_args : sim_args);
    const auto cfg = resolve(a);
    if (!cfg) return kExitUnknownScenario;
    const fs::path dir = cfg->output_dir;
    if (*solve) {
      for (const auto& f : solve_only(*cfg, dir).files) std::cout << (dir / f).string() << "\n";
      return 0;
    }
    if (*sim) {
      for (const auto& f : simulate_only(*cfg, dir).files) std::cout << (dir / f).string() << "\n";
      return 0;
    }
    const ExperimentRecord rec = run_scenario(*cfg, dir);
    for (const auto& c : rec.checks) {
      std::cout << c.name << ": " << to_string(c.verdict);
      if (!c.note.empty()) std::cout << " (" << c.note << ")";
      std::cout << "\n";
    }
    if (!rec.error.empty()) std::cerr << rec.error << "\n";
    std::cout << "overall: " << to_string(rec.overall()) << "\nrecord: " << dir.string() << "\n";
    return exit_code(rec.overall());
  } catch (const fbsde::Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}

#include <doctest.h>

#include <sys/wait.h>

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "fbsde/io.hpp"
#include "fbsde/pipeline.hpp"
#include "fbsde/scenario.hpp"

using namespace fbsde::lab;
namespace fs = std::filesystem;

namespace {

fs::path scratch_dir(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("fbsde_lab_test_" + name);
  fs::remove_all(p);
  return p;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

int run_cli(const std::string& args) {
  const int status = std::system((std::string(FBSDE_LAB_EXE) + " " + args + " > /dev/null 2>&1").c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

ScenarioConfig quick_degenerate() {
  ScenarioConfig c = registry_config("degenerate_characteristics");
  c.sim.n_paths = 500;
  c.sim.n_steps = 400;
  c.checks = {"validate", "dirac_atom", "variance", "transmission", "characteristics", "burgers_gap"};
  return c;
}

}  // namespace

TEST_CASE("catalog is sorted and holds both drift signs") {
  const auto list = registry_list();
  CHECK(list.size() >= 5);
  CHECK(std::is_sorted(list.begin(), list.end(), [](const auto& a, const auto& b) { return a.name < b.name; }));
  CHECK(registry_contains("linear_drift_neg"));
  CHECK(registry_contains("linear_drift_pos"));
  CHECK_FALSE(registry_contains("nope"));
  CHECK_THROWS_AS(registry_config("nope"), fbsde::Error);
  for (const auto& e : list) {
    CHECK_FALSE(e.description.empty());
    CHECK_FALSE(e.anchor.empty());
  }
}

TEST_CASE("every catalog entry round-trips through its JSON form") {
  for (const auto& e : registry_list()) {
    const ScenarioConfig c = registry_config(e.name);
    const ScenarioConfig back = from_json(to_json(c));
    CHECK(to_json(back) == to_json(c));
    CHECK(back.hash() == c.hash());
    CHECK_NOTHROW(c.build_model().check_constants());
  }
}

TEST_CASE("config parsing rejects bad versions and unknown checks") {
  std::string text = to_json(registry_config("affine_dirac"));
  const std::string v = "\"schema_version\": 1";
  REQUIRE(text.find(v) != std::string::npos);
  std::string bad = text;
  bad.replace(bad.find(v), v.size(), "\"schema_version\": 99");
  CHECK_THROWS_AS(from_json(bad), fbsde::Error);
  CHECK_THROWS_AS(from_json("{not json"), fbsde::Error);
  CHECK_THROWS_AS(from_json(R"({"schema_version": 1, "scenario": "affine_dirac", "checks": ["bogus"]})"), fbsde::Error);
  const ScenarioConfig partial = from_json(R"({"schema_version": 1, "scenario": "affine_dirac", "sim": {"seed": 9}})");
  CHECK(partial.sim.seed == 9);
  CHECK(partial.sim.n_paths == registry_config("affine_dirac").sim.n_paths);
}

TEST_CASE("hash ignores the output directory but not the seed") {
  ScenarioConfig a = registry_config("affine_dirac");
  ScenarioConfig b = a;
  b.output_dir = "/elsewhere";
  CHECK(a.hash() == b.hash());
  b.sim.seed = 2;
  CHECK(a.hash() != b.hash());
}

TEST_CASE("CSV and flat JSON round-trip") {
  const fs::path dir = scratch_dir("io");
  Table t{{"x", "y"}, {{1.0, 0.5}, {2.0, std::nan("")}, {3.0, 1e-300}}};
  write_atomic(dir / "t.csv", to_csv(t));
  const Table back = read_csv(dir / "t.csv");
  CHECK(back.columns == t.columns);
  CHECK(back.rows[0] == t.rows[0]);
  CHECK(std::isnan(back.rows[1][1]));
  CHECK(back.rows[2][1] == 1e-300);
  CHECK_FALSE(fs::exists(dir / "t.csv.tmp"));
  FlatMap m{{"b", 2.5}, {"a", std::string("s")}, {"c", true}, {"d", 3LL}};
  write_atomic(dir / "m.json", to_json(m));
  CHECK(read_flat_json(dir / "m.json") == m);
  CHECK(format_number(0.1) == "0.1");
  fs::remove_all(dir);
}

TEST_CASE("noise-free scenario passes its deterministic checks and is reproducible") {
  const fs::path d1 = scratch_dir("degenerate1"), d2 = scratch_dir("degenerate2");
  const ExperimentRecord r1 = run_scenario(quick_degenerate(), d1);
  for (const auto& c : r1.checks) {
    INFO(c.name << ": " << c.note);
    CHECK(c.verdict == Verdict::pass);
  }
  CHECK(r1.overall() == Verdict::pass);
  CHECK(r1.check("dirac_atom").stat("plateau") == 1.0);
  const ExperimentRecord r2 = run_scenario(quick_degenerate(), d2);
  for (const auto& f : {"summary.json", "dirac_atom.csv", "variance.csv", "characteristics.csv", "config.json"})
    CHECK(slurp(d1 / f) == slurp(d2 / f));

  const Table atom = emit_plot_data(d1, "dirac_atom");
  CHECK(atom.columns.size() >= 2);
  CHECK(atom.columns.size() <= 4);
  for (std::size_t k = 1; k < atom.rows.size(); ++k) CHECK(atom.rows[k][1] <= atom.rows[k - 1][1]);
  const Table var = emit_plot_data(d1, "variance");
  CHECK(std::find(var.columns.begin(), var.columns.end(), "jackknife_se") != var.columns.end());
  CHECK_THROWS_AS(emit_plot_data(d1, "flow_squeeze"), fbsde::Error);
  CHECK_THROWS_AS(emit_plot_data(d1, "validate"), fbsde::Error);
  const FlatMap summary = read_flat_json(d1 / "summary.json");
  CHECK(summary.count("check.dirac_atom.verdict"));
  CHECK_FALSE(summary.count("check.dirac_atom.seconds"));
  fs::remove_all(d1);
  fs::remove_all(d2);
}

TEST_CASE("characteristic fan maps every cone start onto the cap") {
  ScenarioConfig c = registry_config("affine_dirac");
  Pipeline p(c);
  const CheckResult r = p.run("characteristics");
  CHECK(r.verdict == Verdict::pass);
  CHECK(r.stat("n_hitting_cap") == r.stat("n_cone_starts"));
  REQUIRE(r.plot);
  CHECK(r.plot->columns == std::vector<std::string>{"t", "e0", "e"});
}

TEST_CASE("models failing the assumptions are refused") {
  ScenarioConfig c = registry_config("affine_dirac");
  c.model.L = 0.5;  // sigma sigma^T = 1/2 cannot exceed 1/L = 2 and |f| bounds break
  c.checks = {"validate", "gradient_band"};
  const ExperimentRecord r = run_scenario(c, std::nullopt);
  CHECK(r.overall() == Verdict::fail);
  CHECK_FALSE(r.error.empty());
}

TEST_CASE("command line: list succeeds, unknown scenario exits 2 without outputs") {
  CHECK(run_cli("list") == 0);
  const fs::path dir = scratch_dir("cli");
  CHECK(run_cli("run --scenario no_such_scenario --out " + dir.string()) == 2);
  CHECK_FALSE(fs::exists(dir));
  CHECK(run_cli("run --scenario degenerate_characteristics --paths 300 --checks validate,characteristics --out " +
                dir.string()) == 0);
  CHECK(fs::exists(dir / "degenerate_characteristics" / "summary.json"));
  CHECK(run_cli("plot-data --out " + (dir / "degenerate_characteristics").string() + " --check characteristics") == 0);
  CHECK(run_cli("plot-data --out " + (dir / "degenerate_characteristics").string() + " --check variance") == 1);
  fs::remove_all(dir);
}

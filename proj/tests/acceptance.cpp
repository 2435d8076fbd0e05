// Acceptance run: one line per criterion, thresholds applied here to the recorded statistics.
#include <cmath>
#include <cstdio>
#include <functional>
#include <map>
#include <memory>
#include <sstream>
#include <string>
#include <vector>

#include "fbsde/pipeline.hpp"
#include "fbsde/scenario.hpp"

using namespace fbsde::lab;

namespace {

struct Outcome {
  bool pass = true;
  std::string detail;
  double seconds = 0.0;

  void require(bool ok, const std::string& what) {
    pass = pass && ok;
    if (!detail.empty()) detail += "; ";
    detail += what + (ok ? "" : " [X]");
  }
};

std::string fmt(double x) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.4g", x);
  return buf;
}

/// One pipeline per scenario, so checks of a scenario share fields and ensembles.
class Runs {
 public:
  CheckResult run(const std::string& scenario, const std::string& check) {
    auto& p = pipes_[scenario];
    if (!p) p = std::make_unique<Pipeline>(registry_config(scenario));
    CheckResult r = p->run(check);
    std::fprintf(stderr, "  %s/%s: %s in %.1f s%s%s\n", scenario.c_str(), check.c_str(), to_string(r.verdict).c_str(),
                 r.seconds, r.note.empty() ? "" : " - ", r.note.c_str());
    return r;
  }

 private:
  std::map<std::string, std::unique_ptr<Pipeline>> pipes_;
};

void within_budget(Outcome& o, const CheckResult& r, double budget) {
  o.seconds += r.seconds;
  o.require(r.seconds < budget, r.name + " " + fmt(r.seconds) + " s < " + fmt(budget) + " s");
}

Outcome c1(Runs& runs) {
  Outcome o;
  for (const auto& e : registry_list()) {
    const CheckResult r = runs.run(e.name, "gradient_band");
    const bool ok = r.verdict != Verdict::fail && r.stat("n_violations") == 0.0 && r.stat("n_checked") > 0.0 &&
                    r.stat("min_de_v") >= -1e-6;
    o.require(ok, e.name + " violations " + fmt(r.stat("n_violations")));
    within_budget(o, r, 60.0);
  }
  return o;
}

Outcome c2(Runs& runs) {
  Outcome o;
  const CheckResult r = runs.run("affine_dirac", "comparison");
  o.require(r.stat("order_excess") <= 1e-6, "order excess " + fmt(r.stat("order_excess")));
  o.require(r.stat("sequence_excess") <= 1e-6, "monotone in n, excess " + fmt(r.stat("sequence_excess")));
  double prev = INFINITY;
  bool decreasing = true;
  std::string gaps;
  for (int n : registry_config("affine_dirac").mollifier_n) {
    const double g = r.stat("gap_n" + std::to_string(n));
    decreasing = decreasing && g < prev;
    prev = g;
    gaps += (gaps.empty() ? "" : ",") + fmt(g);
  }
  o.require(decreasing, "conservation gaps " + gaps + " strictly decreasing");
  within_budget(o, r, 120.0);
  return o;
}

Outcome c3(Runs& runs) {
  Outcome o;
  for (const std::string sc : {"affine_dirac", "nonlinear_1d"}) {
    const CheckResult r = runs.run(sc, "burgers_gap");
    std::vector<double> gaps;
    for (const auto& [k, v] : r.stats)
      if (k.rfind("gap_tau_", 0) == 0) gaps.push_back(v);
    bool decreasing = gaps.size() == 4;
    for (std::size_t k = 1; k < gaps.size(); ++k) decreasing = decreasing && gaps[k] < gaps[k - 1];
    o.require(decreasing && r.stat("beta_hat") > 0.0,
              sc + " gaps " + fmt(gaps.front()) + ".." + fmt(gaps.back()) + " beta " + fmt(r.stat("beta_hat")));
    within_budget(o, r, 120.0);
  }
  return o;
}

Outcome c4(Runs& runs) {
  Outcome o;
  const CheckResult r = runs.run("affine_dirac", "dirac_atom");
  o.require(r.stat("n_paths") == 1e5, "paths " + fmt(r.stat("n_paths")));
  o.require(r.stat("plateau") >= 0.8,
            "plateau " + fmt(r.stat("plateau")) + " +- " + fmt(3.0 * r.stat("plateau_se")) + " (3 sigma)");
  o.require(r.stat("control_plateau") <= 0.05, "control " + fmt(r.stat("control_plateau")));
  within_budget(o, r, 180.0);
  return o;
}

Outcome c5(Runs& runs) {
  Outcome o;
  const CheckResult r = runs.run("affine_dirac", "conditional_support");
  o.require(r.stat("coverage") == 1.0, "deciles covered " + fmt(10.0 * r.stat("coverage")) + "/10");
  o.require(r.stat("n_conditioned") >= 1000.0, "conditioned " + fmt(r.stat("n_conditioned")));
  const double floor = 0.5 - 3.0 * r.stat("lemma_mass_se");
  o.require(r.stat("lemma_mass") >= floor, "lemma mass " + fmt(r.stat("lemma_mass")) + " >= " + fmt(floor));
  within_budget(o, r, 300.0);
  return o;
}

Outcome c6(Runs& runs) {
  Outcome o;
  for (const std::string sc :
       {"affine_dirac", "affine_smooth_ramp", "linear_drift_neg", "linear_drift_pos", "nonlinear_1d"}) {
    const CheckResult r = runs.run(sc, "sandwich");
    o.require(r.stat("eta") == 0.05 && r.stat("n_considered") > 0.0 && r.stat("violation_fraction") <= 0.01,
              sc + " " + fmt(r.stat("violation_fraction")) + " of " + fmt(r.stat("n_considered")));
    o.seconds += r.seconds;
  }
  return o;
}

Outcome c7(Runs& runs) {
  Outcome o;
  const CheckResult r = runs.run("affine_dirac", "flow_squeeze");
  o.require(r.stat("pass_fraction") >= 0.999, "inequalities on " + fmt(r.stat("pass_fraction")) + " of samples");
  const double lo = r.stat("coalescence") - 3.0 * r.stat("coalescence_se");
  o.require(lo >= 0.1, "coalescence " + fmt(r.stat("coalescence")) + " (3 sigma low " + fmt(lo) + ")");
  o.seconds += r.seconds;
  return o;
}

Outcome c8(Runs& runs) {
  Outcome o;
  for (const std::string sc : {"affine_dirac", "linear_drift_neg"}) {
    const ScenarioConfig cfg = registry_config(sc);
    o.require(cfg.sim.n_paths == 100000 && cfg.sim.n_steps == 1000, sc + " 1e5 paths, 1e3 steps");
    const CheckResult r = runs.run(sc, "variance");
    o.require(r.verdict != Verdict::flagged, sc + " resolved");
    for (const auto& [k, v] : r.stats)
      if (k.rfind("time_slope_H", 0) == 0) o.require(std::abs(v - 3.0) <= 0.3, sc + " " + k.substr(11) + " slope " + fmt(v));
    if (sc == "linear_drift_neg") {
      const double s = r.stat("horizon_slope");
      o.require(std::abs(s - 2.0) <= 0.5, "prefactor slope " + fmt(s));
    } else {
      o.require(r.stat("superpolynomial") == 1.0, "superpolynomial prefactor decay (slope " + fmt(r.stat("horizon_slope")) + ")");
    }
    within_budget(o, r, 300.0);
  }
  return o;
}

Outcome c9(Runs& runs) {
  Outcome o;
  const CheckResult pos = runs.run("linear_drift_pos", "transmission");
  o.require(pos.stat("sign_changes") >= 1.0, "lambda=+1 sign changes " + fmt(pos.stat("sign_changes")));
  const CheckResult flat = runs.run("affine_dirac", "transmission");
  o.require(std::abs(flat.stat("time_to_go") - 0.05) < 1e-12 && flat.stat("ratio") <= 0.1,
            "lambda=0 in/off-cone ratio " + fmt(flat.stat("ratio")));
  o.seconds += pos.seconds + flat.seconds;
  return o;
}

Outcome c10(Runs& runs) {
  Outcome o;
  const ScenarioConfig cfg = registry_config("affine_smooth_ramp");
  o.require(cfg.sim.n_paths == 50000 && cfg.terminal.kind == "smooth_ramp", "5e4 paths, smooth ramp");
  const CheckResult r = runs.run("affine_smooth_ramp", "feynman_kac");
  o.require(r.verdict != Verdict::flagged, "weights non-degenerate");
  o.require(std::abs(r.stat("z_score")) <= 3.0, "estimate " + fmt(r.stat("estimate")) + " vs PDE " +
                                                    fmt(r.stat("pde_dp_v")) + ", z " + fmt(r.stat("z_score")));
  o.seconds += r.seconds;
  return o;
}

Outcome c11(Runs& runs) {
  Outcome o;
  const CheckResult r = runs.run("affine_dirac", "equivalence");
  o.require(r.stat("equivalence_sup") <= 3e-2, "reduced/full " + fmt(r.stat("equivalence_sup")));
  o.require(r.stat("mirror_sup") <= 2e-2, "mirror " + fmt(r.stat("mirror_sup")));
  o.seconds += r.seconds;
  return o;
}

}  // namespace

int main() {
  std::setvbuf(stdout, nullptr, _IONBF, 0);
  const std::vector<std::pair<std::string, std::function<Outcome(Runs&)>>> criteria{
      {"C1 gradient band", c1},          {"C2 comparison principle", c2}, {"C3 Burgers convergence", c3},
      {"C4 Dirac atom", c4},             {"C5 conditional support", c5},  {"C6 terminal sandwich", c6},
      {"C7 flow squeeze", c7},           {"C8 variance exponents", c8},   {"C9 transmission coefficient", c9},
      {"C10 Feynman-Kac gradient", c10}, {"C11 reduced/full equivalence", c11}};
  Runs runs;
  int failed = 0;
  for (const auto& [name, fn] : criteria) {
    Outcome o;
    try {
      o = fn(runs);
    } catch (const std::exception& e) {
      o.pass = false;
      o.detail = std::string("error: ") + e.what();
    }
    failed += o.pass ? 0 : 1;
    std::printf("%s %s: %s (%.1f s)\n", o.pass ? "PASS" : "FAIL", name.c_str(), o.detail.c_str(), o.seconds);
  }
  std::printf("%d/%zu criteria passed\n", static_cast<int>(criteria.size()) - failed, criteria.size());
  return failed == 0 ? 0 : 1;
}

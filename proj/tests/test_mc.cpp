#include <doctest.h>

#include <cmath>

#include "fbsde/mc.hpp"
#include "fbsde/solver.hpp"

using namespace fbsde;

namespace {

Mat diag(double s) { return Mat{s, 0.0, 0.0, s}; }

ModelSpec affine(double alpha = 1.0) {
  return make_affine_constant(1, Vec{alpha, 0.0}, 1.0, Vec{}, diag(std::sqrt(0.5)), 2.0, 0.0, 0.5);
}

/// Reduced field on [t0, T] whose time step nests n_steps Euler steps.
ValueField reduced_field(const ModelSpec& m, double t0, int n_steps, const TerminalCondition& tc,
                         double inviscid_start = 1e-3) {
  const double de = 1e-3 * (m.horizon_T - t0);
  const int n_t = n_steps * std::max(1, static_cast<int>(std::ceil((m.horizon_T - t0) / de / n_steps * (1.0 + 1e-6))));
  const Grid g = Grid::uniform_de(m, 0, t0, n_t, de, 1, {}, {}, 1.0);
  SolveOptions o;
  o.inviscid_start = inviscid_start;
  return solve_reduced_1d(m, g, tc, o);
}

SimConfig sim(int n_paths, double t0, double e0, std::uint64_t seed = 11) {
  SimConfig c;
  c.n_paths = n_paths;
  c.n_steps = 200;
  c.t0 = t0;
  c.e0 = e0;
  c.seed = seed;
  return c;
}

}  // namespace

TEST_CASE("noise-free model: every path is deterministic and hits the cap") {
  const ModelSpec m = affine(0.0);
  const TerminalCondition h = TerminalCondition::heaviside(0.0);
  const ValueField f = reduced_field(m, 0.4, 200, h, 0.1);
  const WEvaluator we = WEvaluator::closed_form(m);
  const PathEnsemble ens = simulate_forward(m, f, we, sim(200, 0.4, 0.05));
  for (std::size_t i = 0; i < ens.size(); ++i) {
    REQUIRE(std::abs(ens.E_T[i]) <= 1e-3);
    REQUIRE(ens.E_T[i] == ens.E_T[0]);
  }
  const AtomCurve c = dirac_scan(ens, default_delta_ladder(0.1));
  for (double v : c.fraction) CHECK(v == 1.0);
  const VarianceTable vt = variance_table(simulate_forward(m, f, we, [&] {
                                            SimConfig s = sim(200, 0.4, 0.05);
                                            s.snapshot_times = {0.41, 0.42, 0.45};
                                            return s;
                                          }()),
                                          {0.41, 0.42, 0.45});
  for (const auto& row : vt.rows) CHECK(row.variance == 0.0);
}

TEST_CASE("ensembles are reproducible and independent of the thread count") {
  const ModelSpec m = affine();
  const ValueField f = reduced_field(m, 0.4, 200, TerminalCondition::heaviside(0.0));
  const WEvaluator we = WEvaluator::closed_form(m);
  SimConfig a = sim(3000, 0.4, 0.05);
  a.threads = 1;
  SimConfig b = a;
  b.threads = 4;
  const PathEnsemble ea = simulate_forward(m, f, we, a);
  const PathEnsemble eb = simulate_forward(m, f, we, b);
  CHECK(ea.E_T == eb.E_T);
  CHECK(ea.Y_T == eb.Y_T);
  const PathEnsemble ec = simulate_forward(m, f, we, [&] {
    SimConfig c = a;
    c.seed = 12;
    return c;
  }());
  CHECK(ea.E_T != ec.E_T);
}

TEST_CASE("path invariants: Y in [0, 1] and E-bar equals E at T") {
  const ModelSpec m = affine();
  const ValueField f = reduced_field(m, 0.4, 200, TerminalCondition::heaviside(0.0));
  const PathEnsemble ens = simulate_forward(m, f, WEvaluator::closed_form(m), sim(2000, 0.4, 0.05));
  for (std::size_t i = 0; i < ens.size(); ++i) {
    REQUIRE(ens.Y_T[i] >= 0.0);
    REQUIRE(ens.Y_T[i] <= 1.0);
    REQUIRE(std::abs(ens.Ebar_T[i] - ens.E_T[i]) <= 1e-9);
  }
  CHECK(ens.escape_fraction() == 0.0);
}

TEST_CASE("E never increases when f stays non-negative") {
  // gamma y - alpha p with alpha = 0 is non-negative on y in [0, 1].
  const ModelSpec m = affine(0.0);
  const ValueField f = reduced_field(m, 0.4, 200, TerminalCondition::smooth_ramp(0.0, 0.05), 0.0);
  SimConfig c = sim(50, 0.4, 0.2);
  for (int k = 1; k <= 10; ++k) c.snapshot_times.push_back(0.4 + 0.01 * k);
  const PathEnsemble ens = simulate_forward(m, f, WEvaluator::closed_form(m), c);
  for (std::size_t k = 1; k < ens.snapshots.size(); ++k)
    for (std::size_t i = 0; i < ens.size(); ++i) REQUIRE(ens.snapshots[k].E[i] <= ens.snapshots[k - 1].E[i] + 1e-15);
}

TEST_CASE("atom curve is non-increasing and the Gaussian control has no plateau") {
  const auto deltas = default_delta_ladder(0.1);
  REQUIRE(deltas.size() == 5);
  CHECK(deltas.front() == doctest::Approx(1e-3));
  CHECK(deltas.back() == doctest::Approx(1e-5));
  const auto ctl = gaussian_control(100000, 0.0, std::sqrt(0.5), 0.1, 5);
  const AtomCurve c = dirac_scan(ctl, 0.0, deltas);
  for (std::size_t k = 1; k < c.fraction.size(); ++k) CHECK(c.fraction[k] <= c.fraction[k - 1]);
  CHECK(c.plateau <= 0.05);
  // Linear vanishing: fraction at the largest delta is close to 2 delta times the density at 0.
  const double density = 1.0 / std::sqrt(2.0 * M_PI * 0.05);
  CHECK(c.fraction.front() == doctest::Approx(2.0 * deltas.front() * density).epsilon(0.15));
}

TEST_CASE("delta ladders must be decreasing and span two decades") {
  const std::vector<double> e{0.0, 0.1};
  CHECK_THROWS_AS(dirac_scan(e, 0.0, {1e-2, 1e-3}), Error);
  CHECK_THROWS_AS(dirac_scan(e, 0.0, {1e-4, 1e-2}), Error);
  CHECK_NOTHROW(dirac_scan(e, 0.0, {1e-2, 1e-3, 1e-4}));
  const AtomCurve c = dirac_scan(std::vector<double>{0.5, 0.7}, 0.0, {1e-2, 1e-3, 1e-4});
  CHECK(c.plateau_undefined);
}

TEST_CASE("sandwich with full slack never fails and support needs a non-empty event") {
  const ModelSpec m = affine();
  const ValueField f = reduced_field(m, 0.4, 200, TerminalCondition::heaviside(0.0));
  const PathEnsemble ens = simulate_forward(m, f, WEvaluator::closed_form(m), sim(2000, 0.4, 0.05));
  const SandwichResult s = terminal_sandwich_check(ens, TerminalCondition::heaviside(0.0), 1.0);
  CHECK(s.n_violations == 0);
  CHECK(s.fraction == 0.0);
  const PathEnsemble below = simulate_forward(m, f, WEvaluator::closed_form(m), sim(200, 0.4, -0.3));
  CHECK_THROWS_AS(conditional_support(below, 1e-3), Error);
  const SupportHistogram h = conditional_support(ens, 1e-4);
  CHECK(h.counts.size() == 10);
  CHECK(h.n_conditioned > 0);
}

TEST_CASE("flow squeeze: identical starts give zero differences") {
  const ModelSpec m = affine();
  const ValueField f = reduced_field(m, 0.4, 200, TerminalCondition::heaviside(0.0));
  const auto res = flow_squeeze_check(m, f, WEvaluator::closed_form(m), sim(500, 0.4, 0.0), {{0.05, 0.05}},
                                      {0.42, 0.45, 0.5}, 1e-4);
  REQUIRE(res.size() == 1);
  CHECK(res[0].pass_fraction == 1.0);
  CHECK(res[0].worst_upper == 0.0);
  CHECK_THROWS_AS(flow_squeeze_check(m, f, WEvaluator::closed_form(m), sim(10, 0.4, 0.0), {{0.01, 0.05}}, {0.45}, 1e-4),
                  Error);
}

TEST_CASE("variance times must lie in the first half of the window") {
  const ModelSpec m = affine();
  const ValueField f = reduced_field(m, 0.4, 200, TerminalCondition::heaviside(0.0));
  CHECK_THROWS_AS(variance_scan(m, f, WEvaluator::closed_form(m), sim(100, 0.4, 0.05), {0.47}), Error);
}

TEST_CASE("prefactor sweep classification") {
  const PrefactorVerdict fast = prefactor_sweep({0.4, 0.2, 0.1}, {1.0, 1e-2, 1e-6});
  CHECK(fast.strictly_decreasing);
  CHECK(fast.slopes_increasing);
  CHECK(fast.superpolynomial);
  const PrefactorVerdict power = prefactor_sweep({0.4, 0.2, 0.1}, {0.16, 0.04, 0.01});
  CHECK(power.fit.slope == doctest::Approx(2.0));
  CHECK_FALSE(power.superpolynomial);
}

TEST_CASE("transmission coefficient vanishes when alpha = 0") {
  const ModelSpec m = affine(0.0);
  const double t0 = 0.45;
  const ValueField f = reduced_field(m, t0, 100, TerminalCondition::heaviside(0.0), 0.05);
  const DerivativeFields d = gradient_fields(f);
  std::vector<double> grid;
  for (int i = 0; i <= 50; ++i) grid.push_back(-0.1 + 0.25 * i / 50.0);
  const TransmissionProfile pr = transmission_scan(f, d, m, WEvaluator::closed_form(m), t0, Vec{}, grid);
  for (double c : pr.coefficient) CHECK(std::abs(c) <= 1e-6);
}

TEST_CASE("Feynman-Kac: constant sigma gives unit weights and a non-negative estimate") {
  const ModelSpec m = affine();
  const TerminalCondition ramp = TerminalCondition::smooth_ramp(0.0, 0.1);
  const ValueField f = reduced_field(m, 0.4, 200, ramp, 0.0);
  const DerivativeFields d = gradient_fields(f);
  const FeynmanKacResult fk = feynman_kac_grad_p(m, f, d, WEvaluator::closed_form(m), sim(4000, 0.4, 0.0));
  CHECK(fk.ess_fraction == doctest::Approx(1.0));
  CHECK_FALSE(fk.weight_degenerate);
  // dp f = -alpha <= 0 and de v >= 0.
  CHECK(fk.estimate >= -3.0 * fk.std_error);
}

TEST_CASE("trap event probability grows as the horizon shrinks") {
  const ModelSpec m = affine();
  const WEvaluator we = WEvaluator::closed_form(m);
  double prev = -1.0;
  for (double tau : {0.4, 0.2, 0.1, 0.05, 0.01}) {
    const double t0 = 0.5 - tau;
    SimConfig c = sim(20000, t0, 0.0);
    const TrapResult tr = trap_diagnostic(m, we, t0, Vec{}, 0.5 * tau, c);
    CHECK(tr.p_f >= prev);
    CHECK(tr.max_gap_terminal <= tr.tolerance + 1e-12);
    prev = tr.p_f;
  }
  CHECK(prev > 0.0);
  WOptions o;
  o.n_pairs = 10;
  CHECK_THROWS_AS(trap_diagnostic(m, WEvaluator::monte_carlo(m, o), 0.4, Vec{}, 0.05, sim(100, 0.4, 0.0)), Error);
}

#include <doctest.h>

#include <cmath>

#include "fbsde/burgers.hpp"
#include "fbsde/solver.hpp"

using namespace fbsde;

namespace {

Mat diag(double s) { return Mat{s, 0.0, 0.0, s}; }

}  // namespace

TEST_CASE("psi clamps to the unit interval") {
  CHECK(psi(0.5) == 0.5);
  CHECK(psi(-3.0) == 0.0);
  CHECK(psi(7.0) == 1.0);
}

TEST_CASE("inviscid profile on and off the cone") {
  const BurgersProfile prof{2.0, 0.1, 1.0};
  const double t = 0.6;
  CHECK(inviscid_value(prof, t, 0.1 + 2.0 * 0.4 / 2.0) == doctest::Approx(0.5));
  CHECK(inviscid_value(prof, t, 0.1) == 0.0);
  CHECK(inviscid_value(prof, t, -1.0) == 0.0);
  CHECK(inviscid_value(prof, t, 0.1 + 2.0 * 0.4) == 1.0);
  CHECK(inviscid_value(prof, t, 5.0) == 1.0);
}

TEST_CASE("characteristics: cone starts hit the cap, others move at unit or zero speed") {
  const BurgersProfile prof{1.0, 0.0, 1.0};
  const double t0 = 0.6;
  CHECK(characteristic(0.5 * 0.4, t0, 1.0, prof) == 0.0);
  CHECK(characteristic(0.5 * 0.4, t0, 0.8, prof) == doctest::Approx(0.1));
  for (double t : {0.6, 0.7, 1.0}) CHECK(characteristic(-0.2, t0, t, prof) == -0.2);
  for (double t : {0.6, 0.7, 1.0}) CHECK(characteristic(0.9, t0, t, prof) == doctest::Approx(0.9 - (t - t0)));
  CHECK(characteristic(0.4, t0, 1.0, prof) == doctest::Approx(0.0).epsilon(1e-14));
}

TEST_CASE("closed-form w for the affine family") {
  const ModelSpec m = make_affine_constant(1, Vec{2.0, 0.0}, 1.0, Vec{}, diag(std::sqrt(0.5)), 3.0, 0.0, 1.0);
  const WEvaluator we = WEvaluator::closed_form(m);
  CHECK(we.mode() == WMode::closed_form_affine);
  // w = -E int_t^T f(P_s, 0) ds = alpha p (T - t) for b = 0.
  CHECK(we(0.5, Vec{1.0, 0.0}) == doctest::Approx(1.0));
  CHECK(we(1.0, Vec{0.7, 0.0}) == 0.0);
  CHECK(we.dp(0.5, Vec{1.0, 0.0})[0] == doctest::Approx(1.0));
}

TEST_CASE("Monte Carlo w agrees with the closed form") {
  const ModelSpec m = make_affine_constant(1, Vec{2.0, 0.0}, 1.0, Vec{}, diag(std::sqrt(0.5)), 3.0, 0.0, 1.0);
  WOptions o;
  o.n_pairs = 2000;
  o.steps_per_T = 200;
  const WEvaluator mc = WEvaluator::monte_carlo(m, o);
  const WEstimate est = mc.estimate(0.5, Vec{1.0, 0.0});
  CHECK(std::abs(est.value - 1.0) <= 3.0 * est.std_error + 1e-3);
  CHECK(mc.estimate(1.0, Vec{0.3, 0.0}).value == 0.0);
}

TEST_CASE("linear-drift w gradient matches (alpha/lambda)(exp(lambda tau) - 1)") {
  const double lambda = -1.0, alpha = 1.0;
  const ModelSpec m = make_linear_drift(lambda, 0.3, std::sqrt(0.5), alpha, 1.0, 2.0, 0.0, 0.5);
  const WEvaluator we = WEvaluator::closed_form(m);
  CHECK(we.mode() == WMode::closed_form_linear_drift);
  for (double t : {0.0, 0.2, 0.45}) {
    const double h = 1e-5, p = 0.4;
    const double fd = (we(t, Vec{p + h, 0.0}) - we(t, Vec{p - h, 0.0})) / (2.0 * h);
    const double tau = 0.5 - t;
    CHECK(std::abs(fd - (alpha / lambda) * (std::exp(lambda * tau) - 1.0)) <= 1e-3);
  }
}

TEST_CASE("w of a model built with the nonlinear family needs Monte Carlo") {
  const ModelSpec m = make_nonlinear_1d(1.0, sine_perturbed_profile(0.1), 1.0, std::sqrt(0.5), 2.0, 0.0, 0.5);
  CHECK_THROWS_AS(WEvaluator::closed_form(m), Error);
  WOptions o;
  o.n_pairs = 200;
  CHECK(WEvaluator::for_model(m, o).mode() == WMode::monte_carlo);
}

TEST_CASE("Lipschitz constant of w in p shrinks like the time to go") {
  const ModelSpec m = make_linear_drift(1.0, 0.0, std::sqrt(0.5), 1.0, 1.0, 2.0, 0.0, 0.5);
  const WEvaluator we = WEvaluator::closed_form(m);
  for (double tau : {0.4, 0.1, 0.02}) {
    const double t = 0.5 - tau;
    const double slope = std::abs(we(t, Vec{0.6, 0.0}) - we(t, Vec{-0.2, 0.0})) / 0.8;
    CHECK(slope <= 2.0 * tau);
  }
}

TEST_CASE("affine reduced field: Burgers gap decreases toward T") {
  const ModelSpec m = make_affine_constant(1, Vec{1.0, 0.0}, 1.0, Vec{}, diag(std::sqrt(0.5)), 2.0, 0.0, 0.5);
  const std::vector<double> times{0.1, 0.3, 0.4, 0.45};
  const Grid g = Grid::uniform_de(m, 0, 0.1, 1600, 5e-4, 1, {}, {}, 1.0);
  SolveOptions o;
  o.store_times = times;
  o.inviscid_start = 1e-3;
  const ValueField f = solve_reduced_1d(m, g, TerminalCondition::heaviside(0.0), o);
  const BurgersGapReport rep = burgers_gap(f, WEvaluator::closed_form(m), m, times);
  REQUIRE(rep.rows.size() == 4);
  CHECK(rep.decreasing);
  CHECK(rep.beta_hat > 0.0);
  CHECK(std::isnan(rep.rows.front().beta_so_far));
}

TEST_CASE("noise-free model: gap within the discretization bound") {
  const ModelSpec m = make_affine_constant(1, Vec{0.0, 0.0}, 1.0, Vec{}, diag(std::sqrt(0.5)), 2.0, 0.0, 0.5);
  const std::vector<double> times{0.1, 0.3, 0.4, 0.45};
  const double de = 5e-4;
  const Grid g = Grid::uniform_de(m, 0, 0.1, 800, de, 1, {}, {}, 1.0);
  SolveOptions o;
  o.store_times = times;
  o.inviscid_start = 0.4;
  const ValueField f = solve_reduced_1d(m, g, TerminalCondition::heaviside(0.0), o);
  const BurgersGapReport rep = burgers_gap(f, WEvaluator::closed_form(m), m, times);
  for (const auto& row : rep.rows) CHECK(row.sup_gap <= 2.0 * de / row.tau);
}

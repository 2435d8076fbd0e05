#include <doctest.h>

#include <cmath>

#include "fbsde/model.hpp"
#include "fbsde/terminal.hpp"

using namespace fbsde;

namespace {

Mat diag(double s) { return Mat{s, 0.0, 0.0, s}; }

ModelSpec affine_unit() { return make_affine_constant(1, Vec{1.0, 0.0}, 1.0, Vec{}, diag(1.0), 2.0, 0.0, 0.5); }

double f0(double z) { return z + 0.1 * std::sin(z); }

/// Composite Simpson rule on [a, b] with n (even) panels.
template <class F>
double simpson(F&& g, double a, double b, int n) {
  const double h = (b - a) / n;
  double acc = g(a) + g(b);
  for (int i = 1; i < n; ++i) acc += (i % 2 ? 4.0 : 2.0) * g(a + i * h);
  return acc * h / 3.0;
}

}  // namespace

TEST_CASE("affine constant model satisfies every assumption and is elliptic") {
  SampleBox box;
  box.p_lo = Vec{-1.0, 0.0};
  box.p_hi = Vec{1.0, 0.0};
  const ValidationReport rep = validate_assumptions(affine_unit(), box, 500);
  CHECK(rep.all_passed());
  CHECK(rep.elliptic);
  CHECK(rep.checks.size() == 4);
  CHECK(rep.get("A.2").passed);
}

TEST_CASE("sine-perturbed profile has dy f in [0.9, 1.1]") {
  const ModelSpec m = make_nonlinear_1d(1.0, sine_perturbed_profile(0.1), 1.0, std::sqrt(0.5), 2.0, 0.0, 0.5);
  CHECK(m.ell1 == doctest::Approx(0.9).epsilon(1e-14));
  CHECK(m.ell2 == doctest::Approx(1.1).epsilon(1e-14));
  SampleBox box;
  box.p_lo = Vec{-1.5, 0.0};
  box.p_hi = Vec{1.5, 0.0};
  const ValidationReport rep = validate_assumptions(m, box, 4000);
  CHECK(rep.all_passed());
  // f0'(z) = 1 + 0.1 cos z over z = p - y with p in [-1.5, 1.5], y in [0, 1].
  double lo = 2.0, hi = 0.0;
  for (int i = 0; i <= 100000; ++i) {
    const double z = -2.5 + 4.0 * i / 100000.0;
    lo = std::min(lo, 1.0 + 0.1 * std::cos(z));
    hi = std::max(hi, 1.0 + 0.1 * std::cos(z));
  }
  CHECK(rep.dy_min >= lo - 1e-9);
  CHECK(rep.dy_max <= hi + 1e-9);
  CHECK(rep.dy_max > 1.09);
}

TEST_CASE("f(p, y) = p - y fails the monotonicity assumption") {
  ModelSpec m = affine_unit();
  m.family = Family::custom;
  m.feedback.value = [](const Vec& p, double y) { return p[0] - y; };
  m.feedback.dy = [](const Vec&, double) { return -1.0; };
  m.feedback.dp = [](const Vec&, double) { return Vec{1.0, 0.0}; };
  m.feedback.f_at_zero = [](const Vec& p) { return p[0]; };
  SampleBox box;
  box.p_lo = Vec{-1.0, 0.0};
  box.p_hi = Vec{1.0, 0.0};
  const ValidationReport rep = validate_assumptions(m, box, 200);
  CHECK_FALSE(rep.all_passed());
  CHECK_FALSE(rep.get("A.2").passed);
  CHECK(rep.get("A.2").worst_margin < 0.0);
}

TEST_CASE("validation rejects too few samples") {
  CHECK_THROWS_AS(validate_assumptions(affine_unit(), SampleBox{}, 10), Error);
}

TEST_CASE("declared constants are checked") {
  ModelSpec m = affine_unit();
  m.ell1 = 1.5;
  m.ell2 = 1.0;
  CHECK_THROWS_AS(m.check_constants(), Error);
}

TEST_CASE("phi_sides gives the one-sided limits") {
  const TerminalCondition h = TerminalCondition::heaviside(0.0);
  CHECK(phi_sides(h, 0.0) == std::pair{0.0, 1.0});
  CHECK(phi_sides(h, -1.0) == std::pair{0.0, 0.0});
  CHECK(phi_sides(h, 2.0) == std::pair{1.0, 1.0});
  CHECK(h(0.0) == 1.0);
  const TerminalCondition r = TerminalCondition::smooth_ramp(0.0, 0.2);
  for (double x : {-0.3, -0.05, 0.0, 0.07, 0.5}) {
    const auto [lo, hi] = phi_sides(r, x);
    CHECK(lo == r(x));
    CHECK(hi == r(x));
  }
}

TEST_CASE("mollified heaviside L1 gap equals bump mean over n") {
  const TerminalCondition h = TerminalCondition::heaviside(0.0);
  const Mollifier j = Mollifier::polynomial_bump(10);
  CHECK(j.bump_mean == doctest::Approx(0.5).epsilon(1e-12));
  const TerminalCondition up = mollify(h, j, MollifySide::upper);
  const TerminalCondition lo = mollify(h, j, MollifySide::lower);
  // Upper differs from phi_+ only on [-1/n, 0).
  const double gap_up = simpson([&](double x) { return std::abs(up(x) - h(x)); }, -0.1, 0.0, 2000);
  const double gap_lo = simpson([&](double x) { return std::abs(lo(x) - h(x)); }, 0.0, 0.1, 2000);
  CHECK(gap_up == doctest::Approx(0.05).epsilon(2e-5));
  CHECK(gap_lo == doctest::Approx(0.05).epsilon(2e-5));
  CHECK(up.mollifier_n() == 10);
}

TEST_CASE("mollification sandwiches phi and preserves range and monotonicity") {
  const TerminalCondition h = TerminalCondition::heaviside(0.3);
  for (int n : {4, 16}) {
    const Mollifier j = Mollifier::polynomial_bump(n);
    const TerminalCondition up = mollify(h, j, MollifySide::upper);
    const TerminalCondition lo = mollify(h, j, MollifySide::lower);
    double prev_up = 0.0, prev_lo = 0.0;
    for (int i = 0; i < 10000; ++i) {
      const double x = -0.7 + 2.0 * i / 9999.0;
      const double u = up(x), l = lo(x), p = h(x);
      REQUIRE(u >= p - 1e-12);
      REQUIRE(l <= p + 1e-12);
      REQUIRE(u >= prev_up - 1e-12);
      REQUIRE(l >= prev_lo - 1e-12);
      REQUIRE(u <= 1.0 + 1e-12);
      REQUIRE(l >= -1e-12);
      prev_up = u;
      prev_lo = l;
    }
  }
}

TEST_CASE("mollifying a unit-slope ramp moves it by at most support / n") {
  const TerminalCondition ramp = TerminalCondition::custom(
      [](double x) { return std::clamp(x, 0.0, 1.0); }, "clamp", 0.0, {0.0, 1.0});
  const int n = 8;
  const TerminalCondition up = mollify(ramp, Mollifier::polynomial_bump(n), MollifySide::upper);
  double sup = 0.0;
  for (int i = 0; i <= 4000; ++i) {
    const double x = -0.5 + 2.0 * i / 4000.0;
    sup = std::max(sup, std::abs(up(x) - ramp(x)));
  }
  CHECK(sup <= 1.0 / n + 1e-12);
  // Interior of the ramp: shift equals the bump mean over n.
  CHECK(up(0.5) - ramp(0.5) == doctest::Approx(0.5 / n).epsilon(1e-10));
}

TEST_CASE("custom densities must integrate to one") {
  CHECK_THROWS_AS(Mollifier::from_density([](double) { return 2.0; }, 1.0, 4), Error);
  const Mollifier m = Mollifier::from_density([](double t) { return 2.0 * t; }, 1.0, 4);
  CHECK(m.bump_mean == doctest::Approx(2.0 / 3.0).epsilon(1e-12));
}

TEST_CASE("effective ell of the affine family is gamma") {
  const ModelSpec m = make_affine_constant(1, Vec{1.0, 0.0}, 1.7, Vec{}, diag(1.0), 2.0, 0.0, 0.5);
  for (double v : {0.0, 0.3, 1.0}) CHECK(effective_ell(m, Vec{0.4, 0.0}, v) == doctest::Approx(1.7));
}

TEST_CASE("effective ell of the nonlinear family matches the antiderivative") {
  const ModelSpec m = make_nonlinear_1d(1.0, sine_perturbed_profile(0.1), 1.0, std::sqrt(0.5), 2.0, 0.0, 0.5);
  const double expected = (f0(0.0) - f0(-0.5)) / 0.5;
  CHECK(std::abs(effective_ell(m, Vec{}, 0.5) - expected) <= 1e-8);
  CHECK(effective_ell(m, Vec{0.2, 0.0}, 0.0) == doctest::Approx(m.feedback.dy(Vec{0.2, 0.0}, 0.0)));
}

TEST_CASE("effective ell stays in the band and satisfies v ell = f(p, v) - f(p, 0)") {
  const ModelSpec m = make_nonlinear_1d(1.3, sine_perturbed_profile(0.1), 1.0, std::sqrt(0.5), 2.0, 0.0, 0.5);
  for (int i = 0; i < 32; ++i) {
    for (int k = 1; k <= 32; ++k) {
      const Vec p{-1.5 + 3.0 * i / 31.0, 0.0};
      const double v = k / 32.0;
      const double ell = effective_ell(m, p, v);
      REQUIRE(ell >= m.ell1 - 1e-12);
      REQUIRE(ell <= m.ell2 + 1e-12);
      REQUIRE(std::abs(v * ell - (m.f(p, v) - m.f(p, 0.0))) <= 1e-8);
    }
  }
}

TEST_CASE("model hash is stable and parameter sensitive") {
  CHECK(affine_unit().hash() == affine_unit().hash());
  const ModelSpec other = make_affine_constant(1, Vec{1.0, 0.0}, 1.1, Vec{}, diag(1.0), 2.0, 0.0, 0.5);
  CHECK(affine_unit().hash() != other.hash());
}

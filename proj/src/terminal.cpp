#include "fbsde/terminal.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>

#include "fbsde/quadrature.hpp"

namespace fbsde {

TerminalCondition TerminalCondition::heaviside(double cap) {
  TerminalCondition tc;
  tc.kind_ = TcKind::heaviside;
  tc.cap_ = cap;
  tc.breakpoints_ = {cap};
  char buf[64];
  std::snprintf(buf, sizeof buf, "heaviside(%.17g)", cap);
  tc.label_ = buf;
  return tc;
}

TerminalCondition TerminalCondition::smooth_ramp(double cap, double width) {
  if (!(width > 0)) throw Error("smooth_ramp width must be positive");
  TerminalCondition tc;
  tc.kind_ = TcKind::smooth_ramp;
  tc.cap_ = cap;
  tc.width_ = width;
  tc.breakpoints_ = {cap - 0.5 * width, cap + 0.5 * width};
  char buf[96];
  std::snprintf(buf, sizeof buf, "smooth_ramp(%.17g,%.17g)", cap, width);
  tc.label_ = buf;
  return tc;
}

TerminalCondition TerminalCondition::custom(std::function<double(double)> fn, std::string label, double cap,
                                            std::vector<double> breakpoints) {
  if (!fn) throw Error("custom terminal condition needs a function");
  TerminalCondition tc;
  tc.kind_ = TcKind::custom_monotone;
  tc.cap_ = cap;
  std::sort(breakpoints.begin(), breakpoints.end());
  tc.breakpoints_ = std::move(breakpoints);
  tc.fn_ = std::make_shared<const std::function<double(double)>>(std::move(fn));
  tc.label_ = std::move(label);
  return tc;
}

double TerminalCondition::operator()(double x) const {
  switch (kind_) {
    case TcKind::heaviside:
      return x >= cap_ ? 1.0 : 0.0;
    case TcKind::smooth_ramp: {
      const double s = std::clamp((x - (cap_ - 0.5 * width_)) / width_, 0.0, 1.0);
      return s * s * (3.0 - 2.0 * s);
    }
    case TcKind::custom_monotone:
      return (*fn_)(x);
  }
  return 0.0;
}

std::pair<double, double> TerminalCondition::sides(double x) const {
  const double v = (*this)(x);
  switch (kind_) {
    case TcKind::heaviside:
      if (x == cap_) return {0.0, 1.0};
      return {v, v};
    case TcKind::smooth_ramp:
      return {v, v};
    case TcKind::custom_monotone: {
      const bool at_break = std::any_of(breakpoints_.begin(), breakpoints_.end(),
                                        [x](double b) { return std::abs(x - b) <= 1e-12 * (1.0 + std::abs(b)); });
      if (!at_break) return {v, v};
      const double h = 1e-9 * (1.0 + std::abs(x));
      return {std::min(v, (*fn_)(x - h)), std::max(v, (*fn_)(x + h))};
    }
  }
  return {v, v};
}

TerminalCondition TerminalCondition::with_mollifier_n(int n) const {
  TerminalCondition tc = *this;
  tc.mollifier_n_ = n;
  return tc;
}

std::pair<double, double> phi_sides(const TerminalCondition& tc, double x) { return tc.sides(x); }

Mollifier Mollifier::polynomial_bump(int order_n) {
  if (order_n < 1) throw Error("mollifier order must be positive");
  Mollifier m;
  m.density = [](double t) { return (t <= 0.0 || t >= 1.0) ? 0.0 : 30.0 * t * t * (1.0 - t) * (1.0 - t); };
  m.support = 1.0;
  m.bump_mean = 0.5;
  m.order_n = order_n;
  return m;
}

Mollifier Mollifier::from_density(std::function<double(double)> density, double support, int order_n) {
  if (order_n < 1) throw Error("mollifier order must be positive");
  if (!(support > 0)) throw Error("mollifier support must be positive");
  const auto mass = adaptive_gauss32(density, 0.0, support, 1e-13);
  if (!mass.converged || std::abs(mass.value - 1.0) > 1e-10)
    throw Error("mollifier density does not integrate to 1 within 1e-10");
  const auto mean = adaptive_gauss32([&](double t) { return t * density(t); }, 0.0, support, 1e-13);
  Mollifier m;
  m.density = std::move(density);
  m.support = support;
  m.bump_mean = mean.value;
  m.order_n = order_n;
  return m;
}

TerminalCondition mollify(const TerminalCondition& tc, const Mollifier& m, MollifySide side) {
  const double n = m.order_n;
  const double sign = side == MollifySide::upper ? 1.0 : -1.0;
  auto fn = [tc, m, n, sign](double x) {
    std::vector<double> cuts{0.0, m.support};
    for (double b : tc.breakpoints()) {
      const double t = sign * n * (b - x);
      if (t > 0.0 && t < m.support) cuts.push_back(t);
    }
    std::sort(cuts.begin(), cuts.end());
    double total = 0.0;
    double err = 0.0;
    bool ok = true;
    for (std::size_t k = 0; k + 1 < cuts.size(); ++k) {
      if (cuts[k + 1] <= cuts[k]) continue;
      const auto r = adaptive_gauss32(
          [&](double t) { return tc(x + sign * t / n) * m.density(t); }, cuts[k], cuts[k + 1], 1e-13, 20);
      total += r.value;
      err += r.error;
      ok = ok && r.converged;
    }
    if (!ok) throw QuadratureError("mollifier quadrature did not converge", err);
    return std::clamp(total, 0.0, 1.0);
  };
  char buf[64];
  std::snprintf(buf, sizeof buf, "%s[n=%d]", side == MollifySide::upper ? "upper" : "lower", m.order_n);
  return TerminalCondition::custom(fn, tc.label() + "." + buf, tc.cap()).with_mollifier_n(m.order_n);
}

}  // namespace fbsde

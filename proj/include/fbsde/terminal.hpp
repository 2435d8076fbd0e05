#pragma once

#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "fbsde/model.hpp"

namespace fbsde {

enum class TcKind { heaviside, smooth_ramp, custom_monotone };

/// Non-decreasing [0,1]-valued terminal condition phi.
class TerminalCondition {
 public:
  /// 1_[cap, inf): left value 0, right value 1, value at cap 1.
  static TerminalCondition heaviside(double cap);
  /// C^1 smoothstep rising from 0 to 1 on [cap - width/2, cap + width/2].
  static TerminalCondition smooth_ramp(double cap, double width);
  /// Caller guarantees monotonicity; breakpoints mark kinks or jumps for quadrature splitting.
  static TerminalCondition custom(std::function<double(double)> fn, std::string label, double cap,
                                  std::vector<double> breakpoints = {});

  double operator()(double x) const;

  TcKind kind() const { return kind_; }
  double cap() const { return cap_; }
  double width() const { return width_; }
  const std::vector<double>& breakpoints() const { return breakpoints_; }
  const std::string& label() const { return label_; }
  /// Mollifier order when produced by mollify().
  std::optional<int> mollifier_n() const { return mollifier_n_; }

  /// Left and right limits (phi_-, phi_+) at x.
  std::pair<double, double> sides(double x) const;

  TerminalCondition with_mollifier_n(int n) const;

 private:
  TcKind kind_ = TcKind::heaviside;
  double cap_ = 0.0;
  double width_ = 0.0;
  std::vector<double> breakpoints_;
  std::shared_ptr<const std::function<double(double)>> fn_;
  std::string label_;
  std::optional<int> mollifier_n_;
};

std::pair<double, double> phi_sides(const TerminalCondition& tc, double x);

/// Compactly supported density j on (0, support] with its mean, and the order n.
struct Mollifier {
  std::function<double(double)> density;
  double support = 1.0;
  double bump_mean = 0.0;
  int order_n = 1;

  /// Normalized polynomial bump j(t) = 30 t^2 (1-t)^2 on [0,1] (mean 1/2).
  static Mollifier polynomial_bump(int order_n);
  /// Custom density; checks that it integrates to 1 within 1e-10 and computes its mean.
  static Mollifier from_density(std::function<double(double)> density, double support, int order_n);
};

enum class MollifySide { upper, lower };

/// Thrown when adaptive quadrature cannot reach its tolerance.
class QuadratureError : public Error {
 public:
  QuadratureError(const std::string& what, double achieved) : Error(what), achieved_tolerance(achieved) {}
  double achieved_tolerance;
};

/// upper: x -> int phi(x + t/n) j(t) dt (>= phi); lower: x -> int phi(x - t/n) j(t) dt (<= phi).
TerminalCondition mollify(const TerminalCondition& tc, const Mollifier& m, MollifySide side);

}  // namespace fbsde

#pragma once

#include <functional>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "fbsde/model.hpp"
#include "fbsde/value_field.hpp"

namespace fbsde {

/// Finite-difference derivatives laid out like ValueField::values(); dp_v holds one block per p axis.
struct DerivativeFields {
  Grid grid;
  std::vector<std::size_t> stored;
  std::vector<double> de_v;
  std::vector<double> dp_v;

  std::size_t index(std::size_t s, int p_flat, int ie) const {
    return (s * grid.n_pnodes() + p_flat) * static_cast<std::size_t>(grid.n_e) + ie;
  }
  double de(std::size_t s, int p_flat, int ie) const { return de_v[index(s, p_flat, ie)]; }
  double dp(int axis, std::size_t s, int p_flat, int ie) const {
    return dp_v[axis * de_v.size() + index(s, p_flat, ie)];
  }
  /// Linear interpolation of de_v in e (and p) on stored slice s, clamped to the grid.
  double de_at(std::size_t s, const Vec& p, double e) const;
  double dp_at(int axis, std::size_t s, const Vec& p, double e) const;
};

/// Central differences in the interior, one-sided at the boundary nodes.
DerivativeFields gradient_fields(const ValueField& field);

/// Comparison window for limit extraction: t <= T - delta, optional p and e boxes.
struct LimitWindow {
  double delta = 0.0;
  std::optional<Vec> p_lo, p_hi;
  std::optional<double> e_lo, e_hi;
};

struct ConvergenceReport {
  std::vector<double> gaps;  // sup |F_{k+1} - F_k| on the window
  bool converged = true;     // each gap below the previous one (or all zero)
  /// Per successive pair, max of (F_{k+1} - F_k)^+ on the window; zero for a pointwise non-increasing sequence.
  std::vector<double> increase;
  std::string note;
};

/// Needs at least 3 fields on a common grid with common stored times.
std::pair<ValueField, ConvergenceReport> extract_limit(const std::vector<ValueField>& fields,
                                                       const LimitWindow& window);

/// Sup over the window of (a - b)^+; used for ordering checks.
double max_excess(const ValueField& a, const ValueField& b, const LimitWindow& window);

struct GradientBandReport {
  std::size_t n_checked = 0;
  std::size_t n_violations = 0;
  double min_de = 0.0;          // smallest de_v among checked nodes
  double worst_excess = -1e300;  // largest de_v - (1/(ell1 (T-t)) + tol_grad)
  std::string worst_point;
  bool passed() const { return n_violations == 0; }
};

/// de_v in [-1e-6, 1/(ell1 (T-t)) + tol_grad] at nodes with T - t >= 2 dt, where
/// tol_grad = max(0.05/(ell1 (T-t)), 2 de * |second difference| / de^2).
GradientBandReport check_gradient_band(const ValueField& field, const DerivativeFields& derivs,
                                       const ModelSpec& model);

/// Smallest forward difference v(e_{i+1}) - v(e_i) over all stored slices.
double min_e_increment(const ValueField& field);

/// Trapezoidal integral of (upper - lower) over e in [cap - m, cap + m] at stored time t and p node p_flat.
double conservation_gap(const ValueField& upper, const ValueField& lower, double cap, double m, double t,
                        int p_flat = 0);

using WFunction = std::function<double(double, const Vec&)>;

/// v(t, p, e) = vbar(t, e + w(t, p)) for a reduced field.
class ReducedReconstruction {
 public:
  ReducedReconstruction(const ValueField& reduced, WFunction w) : field_(&reduced), w_(std::move(w)) {}
  double operator()(double t, const Vec& p, double e) const { return (*field_)(t, p, e + w_(t, p)); }
  double on_slice(std::size_t s, const Vec& p, double e) const {
    return field_->interpolate(s, p, e + w_(field_->time(s), p));
  }
  const ValueField& field() const { return *field_; }
  const WFunction& w() const { return w_; }

 private:
  const ValueField* field_;
  WFunction w_;
};

struct BoundOptions {
  double far_factor = 10.0;                // (a): e-bar - Lambda >= far_factor * L (T - t)
  double far_level = 0.9;
  double c_off = 3.0;                      // (b): e-bar - Lambda > c_off (T - t)
  std::vector<double> horizons{0.2, 0.1};  // (b): time-to-go values compared
  double ratio_lo = 2.8;
  double ratio_hi = 5.7;
};

struct BoundReport {
  std::size_t far_nodes = 0;
  double far_min_value = 1.0;
  bool far_ok = true;
  std::vector<double> off_cone_horizons;
  std::vector<double> off_cone_max;
  double off_cone_ratio = 0.0;  // first over last horizon
  bool off_cone_in_band = false;
  GradientBandReport band;
};

/// (a) far-field level, (b) off-cone de_v decay across horizons, (c) gradient band.
/// For a reduced field the e coordinate already is e-bar and w_eval is ignored.
BoundReport bound_report(const ValueField& field, const DerivativeFields& derivs, const ModelSpec& model,
                         const WFunction& w_eval, const BoundOptions& opts = {});

}  // namespace fbsde

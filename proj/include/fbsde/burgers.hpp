#pragma once

#include <cstdint>
#include <memory>
#include <optional>
#include <vector>

#include "fbsde/field_analysis.hpp"
#include "fbsde/model.hpp"
#include "fbsde/value_field.hpp"

namespace fbsde {

/// Clamp of x to [0, 1].
double psi(double x);

struct BurgersProfile {
  double ell = 1.0;
  double cap_lambda = 0.0;
  double horizon_T = 1.0;
};

/// psi((e_bar - Lambda) / (ell (T - t))), t < T.
double inviscid_value(const BurgersProfile& profile, double t, double e_bar);

/// Inviscid characteristic started at (t0, e0), evaluated at t in [t0, T]. The cone
/// [Lambda, Lambda + ell (T - t0)] is mapped linearly onto Lambda at t = T.
double characteristic(double e0, double t0, double t, const BurgersProfile& profile);

enum class WMode { closed_form_affine, closed_form_linear_drift, monte_carlo };

struct WOptions {
  int n_pairs = 10000;    // antithetic pairs, i.e. 2 n_pairs paths
  int steps_per_T = 500;  // Euler step T / steps_per_T
  std::uint64_t seed = 0x5eedULL;
  std::optional<double> se_target;
  int threads = 0;
};

struct WEstimate {
  double value = 0.0;
  double std_error = 0.0;
  bool warning = false;  // SE target not reached within the budget
};

/// w(t, p) = -E[int_t^T f(P_s, 0) ds], the compensator turning E into E-bar.
class WEvaluator {
 public:
  /// Closed form for the affine and linear-drift families; throws for other families.
  static WEvaluator closed_form(const ModelSpec& model);
  static WEvaluator monte_carlo(const ModelSpec& model, WOptions opts = {});
  /// Closed form when available, Monte Carlo otherwise.
  static WEvaluator for_model(const ModelSpec& model, WOptions opts = {});

  WMode mode() const { return mode_; }
  const ModelSpec& model() const { return *model_; }
  const WOptions& options() const { return opts_; }

  WEstimate estimate(double t, const Vec& p) const;
  double operator()(double t, const Vec& p) const { return estimate(t, p).value; }
  /// Gradient in p: closed form, or central differences with common random numbers.
  Vec dp(double t, const Vec& p) const;
  WFunction as_function() const;

 private:
  WMode mode_ = WMode::closed_form_affine;
  std::shared_ptr<const ModelSpec> model_;
  WOptions opts_;
};

struct GapOptions {
  std::optional<Vec> p_lo, p_hi;  // p window for full fields
};

struct GapRow {
  double t = 0.0;
  double tau = 0.0;
  double sup_gap = 0.0;
  double beta_so_far = 0.0;  // NaN until two rows are available
};

struct BurgersGapReport {
  std::vector<GapRow> rows;
  double beta_hat = 0.0;
  bool decreasing = false;  // strictly decreasing as T - t decreases
};

/// Per stored time in t_list, sup over nodes (2 de away from the e-boundary) of
/// |v - psi((e_bar - Lambda)/(ell (T - t)))|; ell is gamma for the affine families and the
/// effective ell of the node's own value otherwise. Reduced fields use their e coordinate as e_bar.
BurgersGapReport burgers_gap(const ValueField& field, const WEvaluator& we, const ModelSpec& model,
                             const std::vector<double>& t_list, const GapOptions& opts = {});

}  // namespace fbsde

#pragma once

#include <array>
#include <cstdint>
#include <functional>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace fbsde {

inline constexpr int kMaxDim = 2;

/// Point of the forward state space; entries past dim_p are ignored and kept at 0.
using Vec = std::array<double, kMaxDim>;
/// Row-major kMaxDim x kMaxDim matrix.
using Mat = std::array<double, kMaxDim * kMaxDim>;

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Feedback f(p, y) together with its partial derivatives.
struct FeedbackFn {
  std::function<double(const Vec&, double)> value;
  std::function<double(const Vec&, double)> dy;
  std::function<Vec(const Vec&, double)> dp;
  std::function<double(const Vec&)> f_at_zero;
};

enum class Family { affine_constant, linear_drift, nonlinear_1d, custom };

std::string_view to_string(Family family);

/// Scalar profile f0 used by the nonlinear family f(p, y) = -f0(mu p - y).
struct ScalarProfile {
  std::string name;
  std::function<double(double)> f;
  std::function<double(double)> df;
  double df_min = 1.0;  // infimum of f0'
  double df_max = 1.0;  // supremum of f0'
};

/// f0(z) = z + eps sin z, so f0' ranges over [1 - eps, 1 + eps].
ScalarProfile sine_perturbed_profile(double eps);

/// Closed-form parameters of the structured families; fields not used by a family stay zero.
struct FamilyParams {
  Vec alpha{};       // affine / linear drift: f(p, y) = gamma y - <alpha, p>
  double gamma = 0;  //
  Vec b0{};          // drift b(p) = b0 + lambda p
  double lambda = 0;
  Mat sigma{};       // constant diffusion matrix
  double mu = 0;     // nonlinear_1d
  std::string profile;
};

struct ModelSpec {
  std::string name;
  int dim_p = 1;
  std::function<Vec(const Vec&)> drift;
  std::function<Mat(const Vec&)> diffusion;
  FeedbackFn feedback;
  /// Optional d = 1 derivatives of b and sigma; finite differences are used when absent.
  std::function<double(const Vec&)> drift_dp;
  std::function<double(const Vec&)> diffusion_dp;

  double lipschitz_L = 1.0;
  double ell1 = 1.0;
  double ell2 = 1.0;
  double holder_alpha = 1.0;
  double cap_lambda = 0.0;
  double horizon_T = 1.0;
  Family family = Family::custom;
  FamilyParams params;

  /// Checks the declared constants (1/L <= ell1 <= ell2 <= L, alpha in (0,1], T > 0); throws Error.
  void check_constants() const;
  /// Stable hex digest of the name, family, parameters and constants.
  std::string hash() const;

  double f(const Vec& p, double y) const { return feedback.value(p, y); }
  double b_dp(const Vec& p) const;
  double sigma_dp(const Vec& p) const;
};

ModelSpec make_affine_constant(int dim_p, const Vec& alpha, double gamma, const Vec& b, const Mat& sigma,
                               double L, double cap_lambda, double horizon_T);

/// d = 1, b(p) = b0 + lambda p, constant sigma, f(p, y) = gamma y - alpha p.
ModelSpec make_linear_drift(double lambda, double b0, double sigma, double alpha, double gamma, double L,
                            double cap_lambda, double horizon_T);

/// d = 1, b(p) = -kappa p, constant sigma, f(p, y) = -f0(mu p - y).
ModelSpec make_nonlinear_1d(double mu, const ScalarProfile& f0, double kappa, double sigma, double L,
                            double cap_lambda, double horizon_T);

struct SampleBox {
  Vec p_lo{};
  Vec p_hi{};
  double y_lo = 0.0;
  double y_hi = 1.0;
};

struct AssumptionCheck {
  std::string name;
  bool passed = true;
  /// Smallest sampled value of (bound - lhs); negative means violated.
  double worst_margin = 0.0;
  std::string worst_point;
};

struct ValidationReport {
  std::vector<AssumptionCheck> checks;
  bool elliptic = false;
  double min_eigenvalue = 0.0;
  double dy_min = 0.0;
  double dy_max = 0.0;
  std::vector<std::string> diagnostics;

  bool all_passed() const;
  const AssumptionCheck& get(std::string_view name) const;
};

/// Sampling-based check of (A.1)-(A.4) and ellipticity on a user box. Requires n_samples >= 100.
ValidationReport validate_assumptions(const ModelSpec& model, const SampleBox& box, int n_samples,
                                      std::uint64_t seed = 0x5eed);

/// y-averaged derivative of f between 0 and v; equals dy(p, 0) at v = 0.
double effective_ell(const ModelSpec& model, const Vec& p, double v);

}  // namespace fbsde

#include "fbsde/model.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <sstream>

#include "fbsde/quadrature.hpp"
#include "fbsde/rng.hpp"

namespace fbsde {

std::string_view to_string(Family family) {
  switch (family) {
    case Family::affine_constant: return "affine_constant";
    case Family::linear_drift: return "linear_drift";
    case Family::nonlinear_1d: return "nonlinear_1d";
    case Family::custom: return "custom";
  }
  return "custom";
}

ScalarProfile sine_perturbed_profile(double eps) {
  ScalarProfile prof;
  char buf[64];
  std::snprintf(buf, sizeof buf, "z+%.17g*sin(z)", eps);
  prof.name = buf;
  prof.f = [eps](double z) { return z + eps * std::sin(z); };
  prof.df = [eps](double z) { return 1.0 + eps * std::cos(z); };
  prof.df_min = 1.0 - std::abs(eps);
  prof.df_max = 1.0 + std::abs(eps);
  return prof;
}

void ModelSpec::check_constants() const {
  if (dim_p < 1 || dim_p > kMaxDim) throw Error("dim_p must be 1 or 2");
  if (!(lipschitz_L > 0)) throw Error("lipschitz_L must be positive");
  if (!(ell1 > 0 && ell1 <= ell2)) throw Error("require 0 < ell1 <= ell2");
  const double tol = 1e-12;
  if (ell1 < 1.0 / lipschitz_L - tol || ell2 > lipschitz_L + tol) throw Error("ell1, ell2 must lie in [1/L, L]");
  if (!(holder_alpha > 0 && holder_alpha <= 1)) throw Error("holder_alpha must lie in (0, 1]");
  if (!(horizon_T > 0)) throw Error("horizon_T must be positive");
  if (!drift || !diffusion || !feedback.value || !feedback.dy || !feedback.dp || !feedback.f_at_zero)
    throw Error("model coefficients are incomplete");
}

std::string ModelSpec::hash() const {
  std::ostringstream os;
  os.precision(17);
  os << name << '|' << to_string(family) << '|' << dim_p << '|' << lipschitz_L << '|' << ell1 << '|' << ell2 << '|'
     << holder_alpha << '|' << cap_lambda << '|' << horizon_T << '|' << params.gamma << '|' << params.lambda << '|'
     << params.mu << '|' << params.profile;
  for (double a : params.alpha) os << '|' << a;
  for (double b : params.b0) os << '|' << b;
  for (double s : params.sigma) os << '|' << s;
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : os.str()) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

double ModelSpec::b_dp(const Vec& p) const {
  if (drift_dp) return drift_dp(p);
  const double h = 1e-6 * (1.0 + std::abs(p[0]));
  Vec lo = p, hi = p;
  lo[0] -= h;
  hi[0] += h;
  return (drift(hi)[0] - drift(lo)[0]) / (2.0 * h);
}

double ModelSpec::sigma_dp(const Vec& p) const {
  if (diffusion_dp) return diffusion_dp(p);
  const double h = 1e-6 * (1.0 + std::abs(p[0]));
  Vec lo = p, hi = p;
  lo[0] -= h;
  hi[0] += h;
  return (diffusion(hi)[0] - diffusion(lo)[0]) / (2.0 * h);
}

ModelSpec make_affine_constant(int dim_p, const Vec& alpha, double gamma, const Vec& b, const Mat& sigma, double L,
                               double cap_lambda, double horizon_T) {
  ModelSpec m;
  m.name = "affine_constant";
  m.dim_p = dim_p;
  m.family = Family::affine_constant;
  m.params.alpha = alpha;
  m.params.gamma = gamma;
  m.params.b0 = b;
  m.params.sigma = sigma;
  m.lipschitz_L = L;
  m.ell1 = m.ell2 = gamma;
  m.holder_alpha = 1.0;
  m.cap_lambda = cap_lambda;
  m.horizon_T = horizon_T;
  const int d = dim_p;
  m.drift = [b](const Vec&) { return b; };
  m.diffusion = [sigma](const Vec&) { return sigma; };
  m.drift_dp = [](const Vec&) { return 0.0; };
  m.diffusion_dp = [](const Vec&) { return 0.0; };
  auto dot = [alpha, d](const Vec& p) {
    double s = 0.0;
    for (int k = 0; k < d; ++k) s += alpha[k] * p[k];
    return s;
  };
  m.feedback.value = [gamma, dot](const Vec& p, double y) { return gamma * y - dot(p); };
  m.feedback.dy = [gamma](const Vec&, double) { return gamma; };
  m.feedback.dp = [alpha, d](const Vec&, double) {
    Vec g{};
    for (int k = 0; k < d; ++k) g[k] = -alpha[k];
    return g;
  };
  m.feedback.f_at_zero = [dot](const Vec& p) { return -dot(p); };
  return m;
}

ModelSpec make_linear_drift(double lambda, double b0, double sigma, double alpha, double gamma, double L,
                            double cap_lambda, double horizon_T) {
  ModelSpec m = make_affine_constant(1, Vec{alpha, 0.0}, gamma, Vec{b0, 0.0}, Mat{sigma, 0.0, 0.0, 0.0}, L,
                                     cap_lambda, horizon_T);
  m.name = "linear_drift";
  m.family = Family::linear_drift;
  m.params.lambda = lambda;
  m.drift = [b0, lambda](const Vec& p) { return Vec{b0 + lambda * p[0], 0.0}; };
  m.drift_dp = [lambda](const Vec&) { return lambda; };
  return m;
}

ModelSpec make_nonlinear_1d(double mu, const ScalarProfile& f0, double kappa, double sigma, double L,
                            double cap_lambda, double horizon_T) {
  ModelSpec m;
  m.name = "nonlinear_1d";
  m.dim_p = 1;
  m.family = Family::nonlinear_1d;
  m.params.mu = mu;
  m.params.lambda = -kappa;
  m.params.sigma = Mat{sigma, 0.0, 0.0, 0.0};
  m.params.profile = f0.name;
  m.lipschitz_L = L;
  m.ell1 = f0.df_min;
  m.ell2 = f0.df_max;
  m.holder_alpha = 1.0;
  m.cap_lambda = cap_lambda;
  m.horizon_T = horizon_T;
  m.drift = [kappa](const Vec& p) { return Vec{-kappa * p[0], 0.0}; };
  m.diffusion = [sigma](const Vec&) { return Mat{sigma, 0.0, 0.0, 0.0}; };
  m.drift_dp = [kappa](const Vec&) { return -kappa; };
  m.diffusion_dp = [](const Vec&) { return 0.0; };
  auto f = f0.f;
  auto df = f0.df;
  m.feedback.value = [mu, f](const Vec& p, double y) { return -f(mu * p[0] - y); };
  m.feedback.dy = [mu, df](const Vec& p, double y) { return df(mu * p[0] - y); };
  m.feedback.dp = [mu, df](const Vec& p, double y) { return Vec{-mu * df(mu * p[0] - y), 0.0}; };
  m.feedback.f_at_zero = [mu, f](const Vec& p) { return -f(mu * p[0]); };
  return m;
}

namespace {

double norm(const Vec& v, int d) {
  double s = 0.0;
  for (int k = 0; k < d; ++k) s += v[k] * v[k];
  return std::sqrt(s);
}

Vec diff(const Vec& a, const Vec& b) { return Vec{a[0] - b[0], a[1] - b[1]}; }

/// Spectral norm of the leading d x d block.
double op_norm(const Mat& m, int d) {
  if (d == 1) return std::abs(m[0]);
  const double a = m[0] * m[0] + m[2] * m[2];
  const double b = m[0] * m[1] + m[2] * m[3];
  const double c = m[1] * m[1] + m[3] * m[3];
  const double tr = a + c;
  const double disc = std::sqrt(std::max(0.0, 0.25 * (a - c) * (a - c) + b * b));
  return std::sqrt(0.5 * tr + disc);
}

/// Smallest eigenvalue of sigma sigma^T.
double min_eig_ssT(const Mat& m, int d) {
  if (d == 1) return m[0] * m[0];
  const double a = m[0] * m[0] + m[1] * m[1];
  const double b = m[0] * m[2] + m[1] * m[3];
  const double c = m[2] * m[2] + m[3] * m[3];
  const double disc = std::sqrt(std::max(0.0, 0.25 * (a - c) * (a - c) + b * b));
  return 0.5 * (a + c) - disc;
}

Mat mat_diff(const Mat& a, const Mat& b) {
  Mat r{};
  for (std::size_t k = 0; k < r.size(); ++k) r[k] = a[k] - b[k];
  return r;
}

std::string point_string(const Vec& p, int d, double y) {
  std::ostringstream os;
  os.precision(6);
  os << "p=(";
  for (int k = 0; k < d; ++k) os << (k ? "," : "") << p[k];
  os << "), y=" << y;
  return os.str();
}

struct Tracker {
  AssumptionCheck check;
  void update(double margin, const std::string& where) {
    if (!std::isfinite(margin)) margin = -std::numeric_limits<double>::infinity();
    if (margin < check.worst_margin) {
      check.worst_margin = margin;
      check.worst_point = where;
    }
  }
};

bool finite_vec(const Vec& v) { return std::isfinite(v[0]) && std::isfinite(v[1]); }
bool finite_mat(const Mat& m) {
  return std::all_of(m.begin(), m.end(), [](double x) { return std::isfinite(x); });
}

}  // namespace

bool ValidationReport::all_passed() const {
  return diagnostics.empty() && std::all_of(checks.begin(), checks.end(), [](const auto& c) { return c.passed; });
}

const AssumptionCheck& ValidationReport::get(std::string_view name) const {
  for (const auto& c : checks)
    if (c.name == name) return c;
  throw Error("no assumption named " + std::string(name));
}

ValidationReport validate_assumptions(const ModelSpec& model, const SampleBox& box, int n_samples,
                                      std::uint64_t seed) {
  if (n_samples < 100) throw Error("validate_assumptions needs at least 100 samples");
  const int d = model.dim_p;
  for (int k = 0; k < d; ++k)
    if (!(box.p_lo[k] <= box.p_hi[k])) throw Error("empty sample box");
  if (!(box.y_lo <= box.y_hi)) throw Error("empty sample box");

  const double L = model.lipschitz_L;
  const double inf = std::numeric_limits<double>::infinity();
  Tracker a1{{"A.1", true, inf, {}}};
  Tracker a2{{"A.2", true, inf, {}}};
  Tracker a3{{"A.3", true, inf, {}}};
  Tracker a4{{"A.4", true, inf, {}}};
  ValidationReport rep;
  rep.min_eigenvalue = inf;
  rep.dy_min = inf;
  rep.dy_max = -inf;

  a2.update(std::min({model.ell1 - 1.0 / L, model.ell2 - model.ell1, L - model.ell2}), "declared constants");

  StreamRng rng(seed, 0);
  auto draw = [&](Vec& p, double& y) {
    p = Vec{};
    for (int k = 0; k < d; ++k) p[k] = box.p_lo[k] + (box.p_hi[k] - box.p_lo[k]) * rng.uniform();
    y = box.y_lo + (box.y_hi - box.y_lo) * rng.uniform();
  };
  double scale = box.y_hi - box.y_lo;
  for (int k = 0; k < d; ++k) scale = std::max(scale, box.p_hi[k] - box.p_lo[k]);
  const double local = 1e-3 * std::max(scale, 1e-12);

  const double alpha = model.holder_alpha;
  for (int i = 0; i < n_samples; ++i) {
    Vec p, q;
    double y, z;
    draw(p, y);
    if (i % 2 == 0) {
      draw(q, z);
    } else {
      q = p;
      for (int k = 0; k < d; ++k)
        q[k] = std::clamp(p[k] + local * (2.0 * rng.uniform() - 1.0), box.p_lo[k], box.p_hi[k]);
      z = std::clamp(y + local * (2.0 * rng.uniform() - 1.0), box.y_lo, box.y_hi);
    }
    const std::string where = point_string(p, d, y);

    const Vec bp = model.drift(p), bq = model.drift(q);
    const Mat sp = model.diffusion(p), sq = model.diffusion(q);
    const double fpy = model.f(p, y), fqy = model.f(q, y), fpz = model.f(p, z);
    const double dyp = model.feedback.dy(p, y), dyq = model.feedback.dy(q, z);
    const Vec dpp = model.feedback.dp(p, y);
    const double f0p = model.feedback.f_at_zero(p);
    const bool finite = finite_vec(bp) && finite_vec(bq) && finite_mat(sp) && finite_mat(sq) && std::isfinite(fpy) &&
                        std::isfinite(fqy) && std::isfinite(fpz) && std::isfinite(dyp) && std::isfinite(dyq) &&
                        finite_vec(dpp) && std::isfinite(f0p);
    if (!finite) {
      if (rep.diagnostics.size() < 20) rep.diagnostics.push_back("non-finite coefficient evaluation at " + where);
      for (auto* t : {&a1, &a2, &a3, &a4}) t->update(-inf, where);
      continue;
    }

    const double np = norm(p, d);
    const double dpq = norm(diff(p, q), d);
    a1.update(L * (1.0 + np) - norm(bp, d), where);
    a1.update(L * (1.0 + np) - op_norm(sp, d), where);
    a1.update(L * dpq - norm(diff(bp, bq), d), where);
    a1.update(L * dpq - op_norm(mat_diff(sp, sq), d), where);

    a2.update(L * dpq - std::abs(fpy - fqy), where);
    a2.update(L * (1.0 + np + std::abs(y)) - std::abs(fpy), where);
    const double dy = y - z;
    if (std::abs(dy) > 1e-12) {
      const double q2 = dy * (fpy - fpz) / (dy * dy);
      a2.update(std::min(q2 - model.ell1, model.ell2 - q2), where);
    }
    a2.update(std::min(dyp - model.ell1, model.ell2 - dyp), where);
    rep.dy_min = std::min(rep.dy_min, dyp);
    rep.dy_max = std::max(rep.dy_max, dyp);

    const double hol = L * (std::pow(dpq, alpha) + std::pow(std::abs(y - z), alpha));
    a3.update(hol - std::abs(dyp - dyq), where);

    a4.update(L - norm(bp, d), where);
    a4.update(L - op_norm(sp, d), where);

    rep.min_eigenvalue = std::min(rep.min_eigenvalue, min_eig_ssT(sp, d));
  }

  const double slack = 1e-10;
  for (auto* t : {&a1, &a2, &a3, &a4}) {
    t->check.passed = t->check.worst_margin >= -slack;
    rep.checks.push_back(t->check);
  }
  rep.elliptic = rep.diagnostics.empty() && rep.min_eigenvalue >= 1.0 / L - slack;
  return rep;
}

double effective_ell(const ModelSpec& model, const Vec& p, double v) {
  if (v == 0.0) return model.feedback.dy(p, 0.0);
  return gauss32([&](double lam) { return model.feedback.dy(p, lam * v); }, 0.0, 1.0);
}

}  // namespace fbsde

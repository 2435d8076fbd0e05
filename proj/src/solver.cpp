#include "fbsde/solver.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <set>

#include "fbsde/parallel.hpp"

namespace fbsde {

namespace {

constexpr const char* kSchemeFull = "upwind-nc+implicit-diffusion/v1";
constexpr const char* kSchemeReduced = "reduced-upwind-nc+implicit-diffusion/v1";

/// Thomas algorithm; sub/super are indexed like the unknowns (sub[0], super[n-1] unused).
void solve_tridiag(const std::vector<double>& sub, const std::vector<double>& diag, const std::vector<double>& super,
                   std::vector<double>& rhs, std::vector<double>& scratch) {
  const std::size_t n = rhs.size();
  scratch.resize(n);
  double beta = diag[0];
  rhs[0] /= beta;
  for (std::size_t i = 1; i < n; ++i) {
    scratch[i] = super[i - 1] / beta;
    beta = diag[i] - sub[i] * scratch[i];
    rhs[i] = (rhs[i] - sub[i] * rhs[i - 1]) / beta;
  }
  for (std::size_t i = n - 1; i-- > 0;) rhs[i] -= scratch[i + 1] * rhs[i + 1];
}

std::vector<std::size_t> stored_nodes(const Grid& grid, const std::vector<double>& times) {
  const std::size_t last = grid.t_nodes.size() - 1;
  if (times.empty()) {
    std::vector<std::size_t> all(last + 1);
    for (std::size_t k = 0; k <= last; ++k) all[k] = k;
    return all;
  }
  std::set<std::size_t> keep{last};
  for (double t : times) {
    auto it = std::lower_bound(grid.t_nodes.begin(), grid.t_nodes.end(), t - 1e-9 * (1.0 + std::abs(t)));
    if (it == grid.t_nodes.end() || std::abs(*it - t) > 1e-9 * (1.0 + std::abs(t))) {
      char buf[96];
      std::snprintf(buf, sizeof buf, "store time %.17g is not a grid node", t);
      throw Error(buf);
    }
    keep.insert(static_cast<std::size_t>(it - grid.t_nodes.begin()));
  }
  return {keep.begin(), keep.end()};
}

/// Explicit upwind transport of dv/dtau = -a(v) dv/de on one e-line, Dirichlet 0 / 1 at the ends.
/// Sub-cycled so that each sub-step is monotone: dt (max|a| + ell2 * max jump) <= de.
template <class Speed>
void transport_line(double* v, int n, double h, double de, double max_speed, double ell2, const Speed& speed,
                    std::vector<double>& u) {
  double jump = 0.0;
  for (int i = 1; i < n; ++i) jump = std::max(jump, std::abs(v[i] - v[i - 1]));
  const int m = std::max(1, static_cast<int>(std::ceil(h * (max_speed + ell2 * jump) / de - 1e-12)));
  const double mu = h / m / de;
  u.resize(n);
  for (int sub = 0; sub < m; ++sub) {
    u[0] = 0.0;
    u[n - 1] = 1.0;
    for (int i = 1; i < n - 1; ++i) {
      const double a = speed(v[i]);
      u[i] = a >= 0.0 ? v[i] - mu * a * (v[i] - v[i - 1]) : v[i] - mu * a * (v[i + 1] - v[i]);
    }
    std::copy(u.begin(), u.end(), v);
  }
}

/// Implicit e-diffusion with coefficient d on one e-line, Dirichlet ends kept fixed.
void diffuse_e_line(double* v, int n, double r, std::vector<double>& sub, std::vector<double>& diag,
                    std::vector<double>& super, std::vector<double>& rhs, std::vector<double>& scratch) {
  sub.assign(n, -r);
  diag.assign(n, 1.0 + 2.0 * r);
  super.assign(n, -r);
  diag[0] = diag[n - 1] = 1.0;
  super[0] = 0.0;
  sub[n - 1] = 0.0;
  rhs.assign(v, v + n);
  solve_tridiag(sub, diag, super, rhs, scratch);
  std::copy(rhs.begin(), rhs.end(), v);
}

void check_slice(std::span<const double> v, double t) {
  for (double x : v) {
    if (!std::isfinite(x) || x < -0.01 || x > 1.01) {
      char buf[128];
      std::snprintf(buf, sizeof buf, "solution left [-0.01, 1.01] at t=%.6g (value %.6g)", t, x);
      throw Divergence(buf);
    }
  }
}

bool smooth_data(const TerminalCondition& tc) {
  return tc.kind() == TcKind::smooth_ramp || tc.mollifier_n().has_value();
}

}  // namespace

double max_abs_feedback(const ModelSpec& model, const Grid& grid) {
  double m = 0.0;
  for (int pf = 0; pf < grid.n_pnodes(); ++pf) {
    const Vec p = grid.p_point(pf);
    m = std::max({m, std::abs(model.f(p, 0.0)), std::abs(model.f(p, 1.0))});
  }
  return m;
}

ValueField solve_mollified(const ModelSpec& model, const Grid& grid, const TerminalCondition& tc, double epsilon,
                           const SolveOptions& opts) {
  model.check_constants();
  grid.validate(model);
  if (grid.dim_p == 0) throw Error("solve_mollified needs a p-grid; use solve_reduced_1d for dim_p = 0");
  if (!(epsilon >= 0)) throw Error("epsilon must be non-negative");
  const int d = grid.dim_p;
  const int np = grid.n_pnodes();
  const int ne = grid.n_e;
  const double de = grid.de();

  const double maxf = max_abs_feedback(model, grid);
  const double h_max = grid.max_dt();
  if (h_max * maxf > de * (1.0 + 1e-12)) {
    char buf[160];
    std::snprintf(buf, sizeof buf, "CFL violated: dt=%.6g exceeds de/max|f|=%.6g", h_max, de / maxf);
    throw CflViolation(buf, de / maxf);
  }

  // Per-node drift and diagonal diffusion of the p-operator.
  std::vector<Vec> drift(np), diff(np);
  std::vector<double> line_speed(np);
  for (int pf = 0; pf < np; ++pf) {
    const Vec p = grid.p_point(pf);
    const Vec b = model.drift(p);
    const Mat s = model.diffusion(p);
    for (int k = 0; k < d; ++k) {
      double a = 0.0;
      for (int j = 0; j < d; ++j) a += s[k * kMaxDim + j] * s[k * kMaxDim + j];
      drift[pf][k] = b[k];
      diff[pf][k] = 0.5 * a + 0.5 * epsilon * epsilon;
    }
    if (d == 2) {
      const double off = s[0] * s[2] + s[1] * s[3];
      if (std::abs(off) > 1e-12) throw Error("d = 2 grids require a diagonal sigma sigma^T");
    }
    line_speed[pf] = std::max(std::abs(model.f(p, 0.0)), std::abs(model.f(p, 1.0)));
  }

  Provenance prov;
  prov.epsilon = epsilon;
  prov.mollifier_n = tc.mollifier_n();
  prov.numerical_viscosity = epsilon == 0.0 && !smooth_data(tc);
  prov.scheme_id = kSchemeFull;
  prov.model_hash = model.hash();
  prov.tc_label = tc.label();

  ValueField field(grid, stored_nodes(grid, opts.store_times), prov);
  std::vector<double> v(grid.slice_size());
  for (int pf = 0; pf < np; ++pf)
    for (int i = 0; i < ne; ++i) v[static_cast<std::size_t>(pf) * ne + i] = tc(grid.e(i));

  const std::size_t last = grid.t_nodes.size() - 1;
  std::size_t slot = field.n_slices() - 1;
  std::copy(v.begin(), v.end(), field.slice(slot).begin());

  const int threads = opts.threads;
  const double ell2 = model.ell2;
  const double e_diff = 0.5 * epsilon * epsilon;

  for (std::size_t k = last; k-- > 0;) {
    const double h = grid.t_nodes[k + 1] - grid.t_nodes[k];

    parallel_for(static_cast<std::size_t>(np), threads, [&](std::size_t b, std::size_t e) {
      std::vector<double> u, sub, diag, super, rhs, scratch;
      for (std::size_t pf = b; pf < e; ++pf) {
        const Vec p = grid.p_point(static_cast<int>(pf));
        double* line = v.data() + pf * ne;
        transport_line(line, ne, h, de, line_speed[pf], ell2, [&](double y) { return model.f(p, y); }, u);
        if (e_diff > 0.0) diffuse_e_line(line, ne, h * e_diff / (de * de), sub, diag, super, rhs, scratch);
      }
    });

    for (int axis = 0; axis < d; ++axis) {
      const int n = grid.n_p;
      const double dp = grid.dp(axis);
      const int n_lines = ne * (d == 2 ? n : 1);
      parallel_for(static_cast<std::size_t>(n_lines), threads, [&](std::size_t b, std::size_t e) {
        std::vector<double> sub(n), diag(n), super(n), rhs(n), scratch;
        for (std::size_t line = b; line < e; ++line) {
          const int i = static_cast<int>(line % ne);
          const int other = static_cast<int>(line / ne);
          auto flat = [&](int j) { return axis == 0 ? j + n * other : other + n * j; };
          for (int j = 0; j < n; ++j) {
            const int pf = flat(j);
            const double r = h * diff[pf][axis] / (dp * dp);
            const double bj = drift[pf][axis];
            const double adv = h * std::abs(bj) / dp;
            if (j == 0 || j == n - 1) {
              sub[j] = j == 0 ? 0.0 : -2.0 * r;
              super[j] = j == 0 ? -2.0 * r : 0.0;
              diag[j] = 1.0 + 2.0 * r;
            } else {
              sub[j] = -r - (bj < 0.0 ? adv : 0.0);
              super[j] = -r - (bj > 0.0 ? adv : 0.0);
              diag[j] = 1.0 + 2.0 * r + adv;
            }
            rhs[j] = v[static_cast<std::size_t>(pf) * ne + i];
          }
          solve_tridiag(sub, diag, super, rhs, scratch);
          for (int j = 0; j < n; ++j) v[static_cast<std::size_t>(flat(j)) * ne + i] = rhs[j];
        }
      });
    }

    check_slice(v, grid.t_nodes[k]);
    if (slot > 0 && field.node_of(slot - 1) == k) {
      --slot;
      std::copy(v.begin(), v.end(), field.slice(slot).begin());
    }
  }
  return field;
}

Vec reduced_dpw(const ModelSpec& model, double tau) {
  const auto& a = model.params.alpha;
  if (model.family == Family::affine_constant) return Vec{a[0] * tau, a[1] * tau};
  if (model.family == Family::linear_drift) {
    const double lam = model.params.lambda;
    const double g = lam == 0.0 ? tau : std::expm1(lam * tau) / lam;
    return Vec{a[0] * g, 0.0};
  }
  throw Error("closed-form dw/dp exists only for the affine and linear-drift families");
}

double inviscid_characteristic_value(const TerminalCondition& tc, double gamma, double tau, double x) {
  double lo = 0.0, hi = 1.0;
  for (int it = 0; it < 60; ++it) {
    const double mid = 0.5 * (lo + hi);
    if (mid - tc(x - gamma * tau * mid) < 0.0)
      lo = mid;
    else
      hi = mid;
  }
  return 0.5 * (lo + hi);
}

ValueField solve_reduced_1d(const ModelSpec& model, const Grid& grid, const TerminalCondition& tc,
                            const SolveOptions& opts, double epsilon) {
  model.check_constants();
  if (model.family != Family::affine_constant && model.family != Family::linear_drift)
    throw Error("solve_reduced_1d needs the affine or linear-drift family");
  if (grid.dim_p != 0) throw Error("solve_reduced_1d needs a dim_p = 0 grid");
  grid.validate(model);
  if (!(epsilon >= 0)) throw Error("epsilon must be non-negative");

  const double gamma = model.params.gamma;
  const int ne = grid.n_e;
  const double de = grid.de();
  const double T = model.horizon_T;
  const double h_max = grid.max_dt();
  if (h_max * gamma > de * (1.0 + 1e-12)) {
    char buf[160];
    std::snprintf(buf, sizeof buf, "CFL violated: dt=%.6g exceeds de/gamma=%.6g", h_max, de / gamma);
    throw CflViolation(buf, de / gamma);
  }

  Provenance prov;
  prov.epsilon = epsilon;
  prov.mollifier_n = tc.mollifier_n();
  prov.numerical_viscosity = epsilon == 0.0 && !smooth_data(tc);
  prov.scheme_id = kSchemeReduced;
  prov.model_hash = model.hash();
  prov.tc_label = tc.label();
  prov.inviscid_start = opts.inviscid_start;
  prov.reduced = true;

  ValueField field(grid, stored_nodes(grid, opts.store_times), prov);
  std::vector<double> v(ne), u, sub, diag, super, rhs, scratch;
  for (int i = 0; i < ne; ++i) v[i] = tc(grid.e(i));
  const std::size_t last = grid.t_nodes.size() - 1;
  std::size_t slot = field.n_slices() - 1;
  std::copy(v.begin(), v.end(), field.slice(slot).begin());

  const int dim = model.dim_p;
  const auto& sig = model.params.sigma;
  for (std::size_t k = last; k-- > 0;) {
    const double h = grid.t_nodes[k + 1] - grid.t_nodes[k];
    const double tau = T - grid.t_nodes[k];
    const bool stored_here = slot > 0 && field.node_of(slot - 1) == k;
    if (tau <= opts.inviscid_start * (1.0 + 1e-12)) {
      // Characteristic slices are independent; only those that are stored or seed the scheme are needed.
      const bool seeds_scheme = k == 0 || T - grid.t_nodes[k - 1] > opts.inviscid_start * (1.0 + 1e-12);
      if (!stored_here && !seeds_scheme) continue;
      for (int i = 0; i < ne; ++i) v[i] = inviscid_characteristic_value(tc, gamma, tau, grid.e(i));
      v[0] = 0.0;
      v[ne - 1] = 1.0;
    } else {
      transport_line(v.data(), ne, h, de, gamma, gamma, [gamma](double y) { return gamma * y; }, u);
      const Vec g = reduced_dpw(model, tau);
      double s2 = 0.0;
      for (int col = 0; col < dim; ++col) {
        double c = 0.0;
        for (int row = 0; row < dim; ++row) c += sig[row * kMaxDim + col] * g[row];
        s2 += c * c;
      }
      const double dcoef = 0.5 * s2 + 0.5 * epsilon * epsilon;
      if (dcoef > 0.0) diffuse_e_line(v.data(), ne, h * dcoef / (de * de), sub, diag, super, rhs, scratch);
    }
    check_slice(v, grid.t_nodes[k]);
    if (stored_here) {
      --slot;
      std::copy(v.begin(), v.end(), field.slice(slot).begin());
    }
  }
  return field;
}

}  // namespace fbsde

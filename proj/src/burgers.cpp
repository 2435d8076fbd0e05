#include "fbsde/burgers.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "fbsde/parallel.hpp"
#include "fbsde/rng.hpp"
#include "fbsde/stats.hpp"

namespace fbsde {

double psi(double x) {
  if (x < 0.0) return 0.0;
  if (x > 1.0) return 1.0;
  return x;
}

double inviscid_value(const BurgersProfile& profile, double t, double e_bar) {
  const double tau = profile.horizon_T - t;
  if (!(tau > 0)) throw Error("inviscid_value needs t < T");
  return psi((e_bar - profile.cap_lambda) / (profile.ell * tau));
}

double characteristic(double e0, double t0, double t, const BurgersProfile& profile) {
  const double T = profile.horizon_T;
  if (!(t0 <= t && t <= T)) throw Error("characteristic needs t0 <= t <= T");
  const double lam = profile.cap_lambda;
  const double width = profile.ell * (T - t0);
  if (e0 < lam) return e0;
  if (e0 <= lam + width) {
    if (t == T) return lam;
    return e0 - (e0 - lam) / (T - t0) * (t - t0);
  }
  return e0 - profile.ell * (t - t0);
}

WEvaluator WEvaluator::closed_form(const ModelSpec& model) {
  WEvaluator we;
  if (model.family == Family::affine_constant)
    we.mode_ = WMode::closed_form_affine;
  else if (model.family == Family::linear_drift)
    we.mode_ = WMode::closed_form_linear_drift;
  else
    throw Error("no closed form for w in family " + std::string(to_string(model.family)));
  we.model_ = std::make_shared<const ModelSpec>(model);
  return we;
}

WEvaluator WEvaluator::monte_carlo(const ModelSpec& model, WOptions opts) {
  if (opts.n_pairs < 2 || opts.steps_per_T < 1) throw Error("Monte Carlo w needs >= 2 pairs and >= 1 step");
  WEvaluator we;
  we.mode_ = WMode::monte_carlo;
  we.model_ = std::make_shared<const ModelSpec>(model);
  we.opts_ = opts;
  return we;
}

WEvaluator WEvaluator::for_model(const ModelSpec& model, WOptions opts) {
  if (model.family == Family::affine_constant || model.family == Family::linear_drift) return closed_form(model);
  return monte_carlo(model, opts);
}

WEstimate WEvaluator::estimate(double t, const Vec& p) const {
  const ModelSpec& m = *model_;
  const double tau = m.horizon_T - t;
  if (tau <= 0.0) return {};
  const auto& a = m.params.alpha;
  const auto& b0 = m.params.b0;
  const int d = m.dim_p;
  if (mode_ == WMode::closed_form_affine) {
    double w = 0.0;
    for (int k = 0; k < d; ++k) w += a[k] * (p[k] + 0.5 * b0[k] * tau);
    return {tau * w, 0.0, false};
  }
  if (mode_ == WMode::closed_form_linear_drift) {
    const double lam = m.params.lambda;
    if (lam == 0.0) return {a[0] * tau * (p[0] + 0.5 * b0[0] * tau), 0.0, false};
    const double g = std::expm1(lam * tau) / lam;
    return {a[0] * ((p[0] + b0[0] / lam) * g - b0[0] * tau / lam), 0.0, false};
  }

  const int n = std::max(1, static_cast<int>(std::ceil(tau * opts_.steps_per_T / m.horizon_T - 1e-9)));
  const double h = tau / n;
  const double sq = std::sqrt(h);
  auto run_pairs = [&](std::size_t first, std::size_t count, std::vector<double>& out) {
    out.resize(count);
    parallel_for(count, opts_.threads, [&](std::size_t b, std::size_t e) {
      for (std::size_t k = b; k < e; ++k) {
        GaussianStream g(opts_.seed, first + k);
        Vec pp = p, pm = p;
        double ip = 0.0, im = 0.0;
        for (int step = 0; step < n; ++step) {
          ip += m.feedback.f_at_zero(pp) * h;
          im += m.feedback.f_at_zero(pm) * h;
          Vec dw{};
          for (int c = 0; c < d; ++c) dw[c] = sq * g();
          const Vec bp = m.drift(pp), bm = m.drift(pm);
          const Mat sp = m.diffusion(pp), sm = m.diffusion(pm);
          Vec np = pp, nm = pm;
          for (int r = 0; r < d; ++r) {
            double up = 0.0, um = 0.0;
            for (int c = 0; c < d; ++c) {
              up += sp[r * kMaxDim + c] * dw[c];
              um += sm[r * kMaxDim + c] * dw[c];
            }
            np[r] += bp[r] * h + up;
            nm[r] += bm[r] * h - um;
          }
          pp = np;
          pm = nm;
        }
        out[k] = -0.5 * (ip + im);
      }
    });
  };

  const std::size_t total = static_cast<std::size_t>(opts_.n_pairs);
  const std::size_t batch = opts_.se_target ? std::min<std::size_t>(1000, total) : total;
  std::vector<double> all, part;
  all.reserve(total);
  WEstimate est;
  while (all.size() < total) {
    const std::size_t count = std::min(batch, total - all.size());
    run_pairs(all.size(), count, part);
    all.insert(all.end(), part.begin(), part.end());
    if (all.size() < 2) continue;
    est.value = mean(all);
    est.std_error = std::sqrt(sample_variance(all) / static_cast<double>(all.size()));
    if (opts_.se_target && all.size() >= 2 * batch && est.std_error <= *opts_.se_target) break;
  }
  est.warning = opts_.se_target.has_value() && est.std_error > *opts_.se_target;
  return est;
}

Vec WEvaluator::dp(double t, const Vec& p) const {
  const ModelSpec& m = *model_;
  const double tau = m.horizon_T - t;
  if (tau <= 0.0) return {};
  if (mode_ != WMode::monte_carlo) {
    const auto& a = m.params.alpha;
    if (mode_ == WMode::closed_form_affine) return Vec{a[0] * tau, a[1] * tau};
    const double lam = m.params.lambda;
    return Vec{a[0] * (lam == 0.0 ? tau : std::expm1(lam * tau) / lam), 0.0};
  }
  Vec g{};
  const double hstep = 1e-3;
  for (int k = 0; k < m.dim_p; ++k) {
    Vec hi = p, lo = p;
    hi[k] += hstep;
    lo[k] -= hstep;
    g[k] = (estimate(t, hi).value - estimate(t, lo).value) / (2.0 * hstep);
  }
  return g;
}

WFunction WEvaluator::as_function() const {
  WEvaluator copy = *this;
  return [copy](double t, const Vec& p) { return copy(t, p); };
}

BurgersGapReport burgers_gap(const ValueField& field, const WEvaluator& we, const ModelSpec& model,
                             const std::vector<double>& t_list, const GapOptions& opts) {
  const Grid& g = field.grid();
  const bool reduced = g.dim_p == 0;
  const bool affine = model.family == Family::affine_constant || model.family == Family::linear_drift;
  const double T = model.horizon_T;
  const double cap = model.cap_lambda;
  BurgersGapReport rep;
  std::vector<double> lx, ly;
  for (double t : t_list) {
    const double tau = T - t;
    if (!(tau > 0)) throw Error("burgers_gap needs t < T");
    const std::size_t s = field.exact_slice(t);
    double gap = 0.0;
    for (int pf = 0; pf < g.n_pnodes(); ++pf) {
      const Vec p = g.p_point(pf);
      if (!reduced) {
        bool inside = true;
        for (int k = 0; k < g.dim_p; ++k) {
          if (opts.p_lo && p[k] < (*opts.p_lo)[k] - 1e-12) inside = false;
          if (opts.p_hi && p[k] > (*opts.p_hi)[k] + 1e-12) inside = false;
        }
        if (!inside) continue;
      }
      const double shift = reduced ? 0.0 : we(t, p);
      for (int i = 2; i < g.n_e - 2; ++i) {
        const double v = field.at(s, pf, i);
        const double ell = affine ? model.params.gamma : effective_ell(model, p, v);
        const double ebar = g.e(i) + shift;
        gap = std::max(gap, std::abs(v - psi((ebar - cap) / (ell * tau))));
      }
    }
    GapRow row;
    row.t = t;
    row.tau = tau;
    row.sup_gap = gap;
    lx.push_back(std::log(tau));
    ly.push_back(std::log(std::max(gap, std::numeric_limits<double>::min())));
    row.beta_so_far = lx.size() >= 2 ? linear_fit(lx, ly).slope : std::numeric_limits<double>::quiet_NaN();
    rep.rows.push_back(row);
  }
  rep.beta_hat = rep.rows.empty() ? 0.0 : rep.rows.back().beta_so_far;
  std::vector<GapRow> by_tau = rep.rows;
  std::sort(by_tau.begin(), by_tau.end(), [](const GapRow& a, const GapRow& b) { return a.tau > b.tau; });
  rep.decreasing = by_tau.size() >= 2;
  for (std::size_t k = 1; k < by_tau.size(); ++k)
    if (!(by_tau[k].sup_gap < by_tau[k - 1].sup_gap)) rep.decreasing = false;
  return rep;
}

}  // namespace fbsde

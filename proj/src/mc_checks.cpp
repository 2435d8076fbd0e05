#include <algorithm>
#include <cmath>
#include <limits>

#include "fbsde/mc.hpp"
#include "fbsde/parallel.hpp"
#include "fbsde/rng.hpp"
#include "fbsde/solver.hpp"

namespace fbsde {

namespace {

std::vector<double> valid_terminal(const PathEnsemble& ens) {
  std::vector<double> out;
  out.reserve(ens.n_valid());
  for (std::size_t i = 0; i < ens.size(); ++i)
    if (!ens.escaped[i]) out.push_back(ens.E_T[i]);
  return out;
}

std::vector<SignChange> sign_changes(const std::vector<double>& e, const std::vector<double>& c) {
  std::vector<SignChange> out;
  for (std::size_t k = 0; k + 1 < c.size(); ++k)
    if (c[k] * c[k + 1] < 0.0 || (c[k] == 0.0 && c[k + 1] != 0.0)) out.push_back({e[k], e[k + 1]});
  return out;
}

}  // namespace

AtomCurve dirac_scan(std::span<const double> E_T, double cap, const std::vector<double>& deltas) {
  if (deltas.size() < 2) throw Error("dirac_scan needs at least two deltas");
  for (std::size_t k = 1; k < deltas.size(); ++k)
    if (!(deltas[k] < deltas[k - 1]) || !(deltas[k] > 0)) throw Error("deltas must be positive and decreasing");
  if (deltas.front() < 100.0 * deltas.back() * (1.0 - 1e-9)) throw Error("deltas must span at least two decades");
  AtomCurve c;
  c.deltas = deltas;
  c.n = E_T.size();
  std::vector<std::size_t> hits(deltas.size(), 0);
  for (double e : E_T) {
    const double d = std::abs(e - cap);
    for (std::size_t k = 0; k < deltas.size(); ++k)
      if (d <= deltas[k]) ++hits[k];
  }
  for (std::size_t k = 0; k < deltas.size(); ++k) {
    const double f = c.n ? static_cast<double>(hits[k]) / c.n : 0.0;
    c.fraction.push_back(f);
    c.std_error.push_back(binomial_se(f, c.n));
  }
  if (hits.front() == 0) {
    c.plateau_undefined = true;
    c.plateau = std::numeric_limits<double>::quiet_NaN();
  } else {
    c.plateau = static_cast<double>(hits.back()) / hits.front();
    c.plateau_se = binomial_se(c.plateau, hits.front());
  }
  return c;
}

AtomCurve dirac_scan(const PathEnsemble& ens, const std::vector<double>& deltas) {
  const auto e = valid_terminal(ens);
  return dirac_scan(e, ens.cap, deltas);
}

SupportHistogram conditional_support(const PathEnsemble& ens, double delta, int n_bins) {
  if (n_bins < 1) throw Error("need at least one bin");
  SupportHistogram h;
  h.counts.assign(n_bins, 0);
  for (std::size_t i = 0; i < ens.size(); ++i) {
    if (ens.escaped[i] || std::abs(ens.E_T[i] - ens.cap) > delta) continue;
    const int bin = std::clamp(static_cast<int>(ens.Y_T[i] * n_bins), 0, n_bins - 1);
    ++h.counts[bin];
    ++h.n_conditioned;
  }
  if (h.n_conditioned == 0) throw Error("conditioning event {|E_T - cap| <= delta} is empty");
  const auto nonempty = std::count_if(h.counts.begin(), h.counts.end(), [](std::size_t c) { return c > 0; });
  h.coverage = static_cast<double>(nonempty) / n_bins;
  return h;
}

MassCheck lemma_mass_check(const PathEnsemble& ens, double y, double eps) {
  std::size_t hit = 0;
  for (std::size_t i = 0; i < ens.size(); ++i)
    if (!ens.escaped[i] && std::abs(ens.Y_T[i] - y) < 2.0 * eps) ++hit;
  MassCheck m;
  const std::size_t n = ens.n_valid();
  m.mass = n ? static_cast<double>(hit) / n : 0.0;
  m.std_error = binomial_se(m.mass, n);
  m.passed = m.mass >= 0.5 - 3.0 * m.std_error;
  return m;
}

SandwichResult terminal_sandwich_check(const PathEnsemble& ens, const TerminalCondition& tc, double eta,
                                       double min_distance) {
  SandwichResult r;
  for (std::size_t i = 0; i < ens.size(); ++i) {
    if (ens.escaped[i] || std::abs(ens.E_T[i] - ens.cap) < min_distance) continue;
    ++r.n_considered;
    const auto [lo, hi] = phi_sides(tc, ens.E_T[i]);
    if (ens.Y_T[i] < lo - eta || ens.Y_T[i] > hi + eta) ++r.n_violations;
  }
  r.fraction = r.n_considered ? static_cast<double>(r.n_violations) / r.n_considered : 0.0;
  return r;
}

std::vector<SqueezeResult> flow_squeeze_check(const ModelSpec& model, const ValueField& field, const WEvaluator& we,
                                              const SimConfig& cfg, const std::vector<std::pair<double, double>>& e_pairs,
                                              const std::vector<double>& t_list, double delta_atom) {
  const double T = model.horizon_T;
  const double expo = model.ell2 / model.ell1;
  std::vector<SqueezeResult> out;
  for (const auto& [e_hi, e_lo] : e_pairs) {
    if (e_hi < e_lo) throw Error("flow pairs must satisfy e >= e'");
    SimConfig c = cfg;
    c.snapshot_times = t_list;
    c.e0 = e_hi;
    const PathEnsemble a = simulate_forward(model, field, we, c);
    c.e0 = e_lo;
    const PathEnsemble b = simulate_forward(model, field, we, c);
    SqueezeResult r;
    r.e_hi = e_hi;
    r.e_lo = e_lo;
    r.tolerance = 3.0 * model.ell2 * a.dt;
    r.worst_upper = std::numeric_limits<double>::infinity();
    r.worst_lower = std::numeric_limits<double>::infinity();
    const double gap0 = e_hi - e_lo;
    std::size_t fails = 0;
    for (double t : t_list) {
      const Snapshot& sa = a.snapshot(t);
      const Snapshot& sb = b.snapshot(t);
      const double env = std::pow((T - t) / (T - cfg.t0), expo) * gap0;
      for (std::size_t i = 0; i < a.size(); ++i) {
        if (a.escaped[i] || b.escaped[i]) continue;
        const double diff = sa.E[i] - sb.E[i];
        const double up = gap0 - diff;
        const double low = diff - env;
        r.worst_upper = std::min(r.worst_upper, up);
        r.worst_lower = std::min(r.worst_lower, low);
        ++r.n_samples;
        if (up < -r.tolerance) ++r.n_upper_fail;
        if (low < -r.tolerance) ++r.n_lower_fail;
        if (up < -r.tolerance || low < -r.tolerance) ++fails;
      }
    }
    r.pass_fraction = r.n_samples ? 1.0 - static_cast<double>(fails) / r.n_samples : 1.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
      if (a.escaped[i] || b.escaped[i]) continue;
      ++r.n_pairs;
      if (std::abs(a.E_T[i] - model.cap_lambda) <= delta_atom && std::abs(b.E_T[i] - model.cap_lambda) <= delta_atom)
        ++r.n_coalesced;
    }
    r.coalescence = r.n_pairs ? static_cast<double>(r.n_coalesced) / r.n_pairs : 0.0;
    r.coalescence_se = binomial_se(r.coalescence, r.n_pairs);
    out.push_back(r);
  }
  return out;
}

VarianceTable variance_table(const PathEnsemble& ens, const std::vector<double>& t_list) {
  VarianceTable tab;
  const double t0 = ens.cfg.t0;
  const double e0 = ens.cfg.e0;
  std::vector<double> lx, ly;
  for (double t : t_list) {
    const Snapshot& s = ens.snapshot(t);
    std::vector<double> x;
    x.reserve(ens.n_valid());
    for (std::size_t i = 0; i < ens.size(); ++i)
      if (!ens.escaped[i]) x.push_back(s.E[i] - e0);
    VarianceRow row;
    row.t = t;
    row.elapsed = t - t0;
    const JackknifeResult jk = jackknife_variance(x, 20);
    row.variance = jk.estimate;
    row.std_error = jk.std_error;
    const double floor = 1e-28 * (1.0 + e0 * e0);
    row.flagged = !(row.variance > floor) || row.std_error > 0.5 * row.variance;
    tab.any_flagged = tab.any_flagged || row.flagged;
    if (!row.flagged) {
      lx.push_back(std::log(row.elapsed));
      ly.push_back(std::log(row.variance));
    }
    tab.rows.push_back(row);
  }
  if (lx.size() >= 2) {
    tab.time_fit = linear_fit(lx, ly);
    double acc = 0.0;
    for (std::size_t k = 0; k < lx.size(); ++k) acc += ly[k] - 3.0 * lx[k];
    tab.prefactor = std::exp(acc / lx.size());
  }
  return tab;
}

VarianceTable variance_scan(const ModelSpec& model, const ValueField& field, const WEvaluator& we,
                            const SimConfig& cfg, const std::vector<double>& t_list) {
  const double mid = 0.5 * (model.horizon_T + cfg.t0);
  for (double t : t_list)
    if (!(t > cfg.t0 && t <= mid + 1e-12)) throw Error("variance_scan times must lie in (t0, (T + t0)/2]");
  SimConfig c = cfg;
  c.snapshot_times = t_list;
  return variance_table(simulate_forward(model, field, we, c), t_list);
}

PrefactorVerdict prefactor_sweep(const std::vector<double>& horizons, const std::vector<double>& prefactors) {
  if (horizons.size() != prefactors.size() || horizons.size() < 3) throw Error("prefactor sweep needs >= 3 horizons");
  std::vector<std::size_t> order(horizons.size());
  for (std::size_t k = 0; k < order.size(); ++k) order[k] = k;
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return horizons[a] > horizons[b]; });
  PrefactorVerdict v;
  for (std::size_t k : order) {
    v.horizons.push_back(horizons[k]);
    v.prefactors.push_back(prefactors[k]);
  }
  std::vector<double> lx, ly;
  for (std::size_t k = 0; k < v.horizons.size(); ++k) {
    if (!(v.prefactors[k] > 0)) throw Error("prefactors must be positive");
    lx.push_back(std::log(v.horizons[k]));
    ly.push_back(std::log(v.prefactors[k]));
  }
  v.fit = linear_fit(lx, ly);
  v.strictly_decreasing = true;
  for (std::size_t k = 1; k < v.prefactors.size(); ++k) {
    if (!(v.prefactors[k] < v.prefactors[k - 1])) v.strictly_decreasing = false;
    v.local_slopes.push_back((ly[k - 1] - ly[k]) / (lx[k - 1] - lx[k]));
  }
  v.slopes_increasing = true;
  for (std::size_t k = 1; k < v.local_slopes.size(); ++k)
    if (!(v.local_slopes[k] > v.local_slopes[k - 1])) v.slopes_increasing = false;
  v.superpolynomial = v.strictly_decreasing && v.slopes_increasing && v.fit.slope > 3.0;
  return v;
}

TransmissionProfile transmission_scan(const ValueField& field, const DerivativeFields& derivs, const ModelSpec& model,
                                      const WEvaluator& we, double t0, const Vec& p, const std::vector<double>& e_grid) {
  if (model.dim_p != 1) throw Error("transmission_scan is implemented for d = 1");
  const bool reduced = field.provenance().reduced;
  const std::size_t s = field.exact_slice(t0);
  const double tau = model.horizon_T - t0;
  const double w = we(t0, p);
  const double dpw = reduced ? we.dp(t0, p)[0] : 0.0;
  const double alpha = model.params.alpha[0];
  const bool affine = model.family == Family::affine_constant || model.family == Family::linear_drift;
  const double slope = affine ? model.params.gamma : model.ell1;
  TransmissionProfile prof;
  double in_min = std::numeric_limits<double>::infinity(), in_abs = 0.0, off_sum = 0.0;
  std::size_t off_n = 0;
  for (double e : e_grid) {
    const double eb = e + w;
    double v, dv;
    if (reduced) {
      v = field.interpolate(s, p, eb);
      dv = dpw * derivs.de_at(s, p, eb);
    } else {
      v = field.interpolate(s, p, e);
      dv = derivs.dp_at(0, s, p, e);
    }
    const double coef = -(model.feedback.dp(p, v)[0] + model.feedback.dy(p, v) * dv);
    prof.e.push_back(e);
    prof.ebar.push_back(eb);
    prof.dp_v.push_back(dv);
    prof.coefficient.push_back(coef);
    prof.unit_normalized.push_back(alpha - dv);
    const double x = (eb - model.cap_lambda) / tau;
    if (x >= 3.0 * slope / 8.0 && x <= 5.0 * slope / 8.0) {
      in_min = std::min(in_min, coef);
      in_abs = std::max(in_abs, std::abs(coef));
    }
    if (x <= -slope || x >= 2.0 * slope) {
      off_sum += coef;
      ++off_n;
    }
  }
  prof.sign_changes = sign_changes(prof.e, prof.coefficient);
  prof.unit_sign_changes = sign_changes(prof.e, prof.unit_normalized);
  prof.in_cone_min = std::isfinite(in_min) ? in_min : std::numeric_limits<double>::quiet_NaN();
  prof.in_cone_max_abs = in_abs;
  prof.off_cone_level = off_n ? off_sum / off_n : std::numeric_limits<double>::quiet_NaN();
  prof.ratio = prof.in_cone_max_abs / std::abs(prof.off_cone_level);
  return prof;
}

FeynmanKacResult feynman_kac_grad_p(const ModelSpec& model, const ValueField& field, const DerivativeFields& derivs,
                                    const WEvaluator& we, const SimConfig& cfg) {
  if (model.dim_p != 1) throw Error("feynman_kac_grad_p needs d = 1");
  const double T = model.horizon_T;
  if (cfg.n_steps < 100 || !(cfg.t0 < T)) throw Error("invalid simulation config");
  const bool reduced = field.provenance().reduced;
  const int N = cfg.n_steps;
  const double h = (T - cfg.t0) / N;
  const double sq = std::sqrt(h);
  std::vector<std::size_t> slice_of(N);
  for (int k = 0; k < N; ++k) slice_of[k] = field.slice_index(cfg.t0 + k * h);
  const double e_lo = field.grid().e_min, e_hi = field.grid().e_max;

  std::vector<double> value(cfg.n_paths), weight(cfg.n_paths);
  std::vector<std::uint8_t> bad(cfg.n_paths, 0);
  parallel_for(static_cast<std::size_t>(cfg.n_paths), cfg.threads, [&](std::size_t b, std::size_t e) {
    for (std::size_t i = b; i < e; ++i) {
      GaussianStream rng(cfg.seed, i);
      Vec P = cfg.p0;
      double E = cfg.e0, A = 0.0, I = 0.0, logw = 0.0;
      double g_prev = 0.0, a_prev = 0.0;
      for (int k = 0; k <= N; ++k) {
        const double t = k == N ? T : cfg.t0 + k * h;
        const std::size_t s = k == N ? field.n_slices() - 1 : slice_of[k];
        const double x = reduced ? E + (k == N ? 0.0 : we(t, P)) : E;
        if (x < e_lo || x > e_hi) bad[i] = 1;
        const double Y = field.interpolate(s, P, x);
        const double dev = derivs.de_at(s, P, x);
        const double a = -model.feedback.dy(P, Y) * dev + model.b_dp(P);
        if (k > 0) A += 0.5 * (a_prev + a) * h;
        const double g = dev * model.feedback.dp(P, Y)[0] * std::exp(A);
        if (k > 0) I += 0.5 * (g_prev + g) * h;
        g_prev = g;
        a_prev = a;
        if (k == N) break;
        const double dw = sq * rng();
        const double sp = model.sigma_dp(P);
        logw += sp * dw - 0.5 * sp * sp * h;
        E -= model.f(P, Y) * h;
        const Mat sig = model.diffusion(P);
        P[0] += model.drift(P)[0] * h + sig[0] * dw;
      }
      value[i] = -std::exp(logw) * I;
      weight[i] = std::exp(logw);
    }
  });
  std::vector<double> v, w;
  for (int i = 0; i < cfg.n_paths; ++i) {
    if (bad[i]) continue;
    v.push_back(value[i]);
    w.push_back(weight[i]);
  }
  FeynmanKacResult r;
  r.n_used = v.size();
  if (v.size() < 2) throw Error("too few usable paths for the Feynman-Kac estimator");
  r.estimate = mean(v);
  r.std_error = std::sqrt(sample_variance(v) / v.size());
  std::vector<double> w2(w.size());
  for (std::size_t i = 0; i < w.size(); ++i) w2[i] = w[i] * w[i];
  const double sw = pairwise_sum(w), sw2 = pairwise_sum(w2);
  r.ess_fraction = sw * sw / sw2 / w.size();
  r.weight_degenerate = r.ess_fraction < 0.1;
  return r;
}

TrapResult trap_diagnostic(const ModelSpec& model, const WEvaluator& we, double t0, const Vec& p, double e_bar,
                           const SimConfig& cfg, const TrapOptions& opts) {
  if (we.mode() == WMode::monte_carlo) throw Error("trap_diagnostic needs a closed-form w");
  const double T = model.horizon_T;
  if (cfg.n_steps < 100 || !(t0 < T)) throw Error("invalid simulation config");
  const int N = cfg.n_steps;
  const int d = model.dim_p;
  const double h = (T - t0) / N;
  const double sq = std::sqrt(h);
  const double level = model.ell1 / 16.0;
  const double slope0 = (e_bar - model.cap_lambda) / (T - t0);
  auto drift_int = [&](double t) {
    return opts.c_prime * (std::pow(T - t0, opts.beta) - std::pow(T - t, opts.beta)) / opts.beta;
  };
  std::vector<std::uint8_t> in_f(cfg.n_paths, 0);
  std::vector<double> gap_pre(cfg.n_paths, 0.0), gap_T(cfg.n_paths, 0.0);
  parallel_for(static_cast<std::size_t>(cfg.n_paths), cfg.threads, [&](std::size_t b, std::size_t e) {
    for (std::size_t i = b; i < e; ++i) {
      GaussianStream rng(cfg.seed, i);
      Vec P = p;
      double M = 0.0, sup = 0.0, M_pre = 0.0;
      for (int k = 0; k < N; ++k) {
        const double t = t0 + k * h;
        if (k == N - 1) M_pre = M;
        const Vec g = we.dp(t, P);
        const Mat sig = model.diffusion(P);
        Vec dw{};
        for (int c = 0; c < d; ++c) dw[c] = sq * rng();
        double inc = 0.0;
        for (int c = 0; c < d; ++c) {
          double col = 0.0;
          for (int r = 0; r < d; ++r) col += sig[r * kMaxDim + c] * g[r];
          inc += col * dw[c];
        }
        M += inc / (T - t);
        sup = std::max(sup, std::abs(M));
        const Vec bp = model.drift(P);
        Vec next = P;
        for (int r = 0; r < d; ++r) {
          double acc = bp[r] * h;
          for (int c = 0; c < d; ++c) acc += sig[r * kMaxDim + c] * dw[c];
          next[r] += acc;
        }
        P = next;
      }
      if (sup < level) {
        in_f[i] = 1;
        auto z = [&](double t, double m, double sgn) {
          return model.cap_lambda + (T - t) * (slope0 + sgn * drift_int(t) + m);
        };
        for (double sgn : {1.0, -1.0}) {
          gap_pre[i] = std::max(gap_pre[i], std::abs(z(T - h, M_pre, sgn) - model.cap_lambda));
          gap_T[i] = std::max(gap_T[i], std::abs(z(T, M, sgn) - model.cap_lambda));
        }
      }
    }
  });
  TrapResult r;
  for (int i = 0; i < cfg.n_paths; ++i) {
    if (!in_f[i]) continue;
    ++r.n_f;
    r.max_gap_pre_terminal = std::max(r.max_gap_pre_terminal, gap_pre[i]);
    r.max_gap_terminal = std::max(r.max_gap_terminal, gap_T[i]);
  }
  r.p_f = static_cast<double>(r.n_f) / cfg.n_paths;
  r.p_f_se = binomial_se(r.p_f, cfg.n_paths);
  r.tolerance = h * model.ell1;
  return r;
}

}  // namespace fbsde

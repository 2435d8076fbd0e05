#include <algorithm>
#include <cmath>
#include <cstdio>

#include "fbsde/mc.hpp"
#include "fbsde/parallel.hpp"
#include "fbsde/rng.hpp"

namespace fbsde {

const Snapshot& PathEnsemble::snapshot(double t) const {
  for (const auto& s : snapshots)
    if (std::abs(s.t - t) <= 1e-9 * (1.0 + std::abs(t))) return s;
  char buf[80];
  std::snprintf(buf, sizeof buf, "no snapshot at t=%.9g", t);
  throw Error(buf);
}

namespace {

/// w tabulated on the field's p nodes at one time, interpolated multilinearly.
struct WTable {
  const Grid* grid = nullptr;
  std::vector<double> w;

  double operator()(const Vec& p) const {
    const Grid& g = *grid;
    auto bracket = [](double x, double lo, double step, int n, int& i, double& wt) {
      double u = std::clamp((x - lo) / step, 0.0, static_cast<double>(n - 1));
      i = std::min(static_cast<int>(u), n - 2);
      wt = u - i;
    };
    int i0, i1 = 0;
    double w0, w1 = 0.0;
    bracket(p[0], g.p_min[0], g.dp(0), g.n_p, i0, w0);
    if (g.dim_p == 1) return (1.0 - w0) * w[i0] + w0 * w[i0 + 1];
    bracket(p[1], g.p_min[1], g.dp(1), g.n_p, i1, w1);
    const int n = g.n_p;
    const double lo = (1.0 - w0) * w[i0 + n * i1] + w0 * w[i0 + 1 + n * i1];
    const double hi = (1.0 - w0) * w[i0 + n * (i1 + 1)] + w0 * w[i0 + 1 + n * (i1 + 1)];
    return (1.0 - w1) * lo + w1 * hi;
  }
};

}  // namespace

PathEnsemble simulate_forward(const ModelSpec& model, const ValueField& field, const WEvaluator& we,
                              const SimConfig& cfg) {
  model.check_constants();
  const double T = model.horizon_T;
  if (cfg.n_steps < 100) throw Error("simulation needs at least 100 steps");
  if (!(cfg.t0 < T)) throw Error("simulation start must precede T");
  if (cfg.n_paths < 1) throw Error("simulation needs at least one path");
  const bool reduced = field.provenance().reduced;
  if (reduced && we.mode() == WMode::monte_carlo) throw Error("reduced fields need a closed-form w");
  const Grid& g = field.grid();
  if (!reduced && g.dim_p != model.dim_p) throw Error("field and model dimensions differ");

  const int N = cfg.n_steps;
  const double h = (T - cfg.t0) / N;
  std::vector<std::size_t> slice_of(N);
  for (int k = 0; k < N; ++k) slice_of[k] = field.slice_index(cfg.t0 + k * h);

  PathEnsemble ens;
  ens.cfg = cfg;
  ens.cap = model.cap_lambda;
  ens.horizon = T;
  ens.dt = h;
  ens.field_provenance = field.provenance();

  // snap_at[k] = index into ens.snapshots, or -1.
  std::vector<int> snap_at(N + 1, -1);
  for (double t : cfg.snapshot_times) {
    const long k = std::lround((t - cfg.t0) / h);
    if (k < 0 || k > N || std::abs(cfg.t0 + k * h - t) > 1e-9 * (1.0 + std::abs(t)))
      throw Error("snapshot time is not on the simulation step grid");
    if (snap_at[k] >= 0) continue;
    snap_at[k] = static_cast<int>(ens.snapshots.size());
    Snapshot s;
    s.t = k == N ? T : cfg.t0 + k * h;
    s.P.resize(cfg.n_paths);
    s.E.resize(cfg.n_paths);
    s.Ebar.resize(cfg.n_paths);
    s.Y.resize(cfg.n_paths);
    ens.snapshots.push_back(std::move(s));
  }
  std::sort(ens.snapshots.begin(), ens.snapshots.end(), [](const Snapshot& a, const Snapshot& b) { return a.t < b.t; });
  std::fill(snap_at.begin(), snap_at.end(), -1);
  for (std::size_t j = 0; j < ens.snapshots.size(); ++j)
    snap_at[std::lround((ens.snapshots[j].t - cfg.t0) / h)] = static_cast<int>(j);

  // Monte Carlo w is only needed for E-bar at snapshot times.
  std::vector<WTable> w_tables(ens.snapshots.size());
  const bool tabulate = we.mode() == WMode::monte_carlo;
  if (tabulate) {
    if (g.dim_p == 0) throw Error("Monte Carlo w needs a p-grid");
    for (std::size_t j = 0; j < ens.snapshots.size(); ++j) {
      w_tables[j].grid = &g;
      w_tables[j].w.resize(g.n_pnodes());
      for (int pf = 0; pf < g.n_pnodes(); ++pf) w_tables[j].w[pf] = we(ens.snapshots[j].t, g.p_point(pf));
    }
  }
  auto w_at = [&](int snap, double t, const Vec& p) {
    if (t >= T) return 0.0;
    return tabulate ? w_tables[snap](p) : we(t, p);
  };

  ens.E_T.resize(cfg.n_paths);
  ens.Y_T.resize(cfg.n_paths);
  ens.Ebar_T.resize(cfg.n_paths);
  ens.P_T.resize(cfg.n_paths);
  ens.escaped.assign(cfg.n_paths, 0);

  const int d = model.dim_p;
  const double sq = std::sqrt(h);
  const double e_lo = g.e_min, e_hi = g.e_max;
  parallel_for(static_cast<std::size_t>(cfg.n_paths), cfg.threads, [&](std::size_t b, std::size_t e) {
    for (std::size_t i = b; i < e; ++i) {
      GaussianStream rng(cfg.seed, i);
      Vec P = cfg.p0;
      double E = cfg.e0;
      double Y = 0.0;
      bool escaped = false;
      for (int k = 0; k < N; ++k) {
        const double t = cfg.t0 + k * h;
        const std::size_t s = slice_of[k];
        if (!escaped) {
          const double x = reduced ? E + we(t, P) : E;
          if (x < e_lo || x > e_hi) escaped = true;
          Y = reduced ? field.interpolate(s, P, x) : field.interpolate(s, P, E);
        }
        if (snap_at[k] >= 0) {
          Snapshot& sn = ens.snapshots[snap_at[k]];
          sn.P[i] = P;
          sn.E[i] = E;
          sn.Ebar[i] = E + w_at(snap_at[k], t, P);
          sn.Y[i] = Y;
        }
        if (!escaped) E -= model.f(P, Y) * h;
        Vec dw{};
        for (int c = 0; c < d; ++c) dw[c] = sq * rng();
        const Vec bp = model.drift(P);
        const Mat sp = model.diffusion(P);
        Vec next = P;
        for (int r = 0; r < d; ++r) {
          double acc = bp[r] * h;
          for (int c = 0; c < d; ++c) acc += sp[r * kMaxDim + c] * dw[c];
          next[r] += acc;
        }
        P = next;
      }
      if (!escaped && (E < e_lo || E > e_hi)) escaped = true;
      ens.E_T[i] = E;
      ens.Y_T[i] = Y;
      ens.Ebar_T[i] = E + w_at(-1, T, P);
      ens.P_T[i] = P;
      ens.escaped[i] = escaped ? 1 : 0;
      if (snap_at[N] >= 0) {
        Snapshot& sn = ens.snapshots[snap_at[N]];
        sn.P[i] = P;
        sn.E[i] = E;
        sn.Ebar[i] = ens.Ebar_T[i];
        sn.Y[i] = Y;
      }
    }
  });
  ens.n_escaped = static_cast<std::size_t>(std::count(ens.escaped.begin(), ens.escaped.end(), 1));
  return ens;
}

std::vector<double> default_delta_ladder(double horizon_to_go) {
  std::vector<double> out;
  for (double f : {1e-2, 3e-3, 1e-3, 3e-4, 1e-4}) out.push_back(f * horizon_to_go);
  return out;
}

std::vector<double> gaussian_control(int n_paths, double e0, double sigma, double horizon_to_go, std::uint64_t seed) {
  std::vector<double> out(n_paths);
  const double s = sigma * std::sqrt(horizon_to_go);
  for (int i = 0; i < n_paths; ++i) {
    GaussianStream rng(seed, static_cast<std::uint64_t>(i));
    out[i] = e0 + s * rng();
  }
  return out;
}

}  // namespace fbsde

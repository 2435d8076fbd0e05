#include "fbsde/field_analysis.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>

namespace fbsde {

namespace {

double interp_block(const Grid& g, const double* block, const Vec& p, double e) {
  auto bracket = [](double x, double lo, double step, int n, int& i, double& w) {
    double u = std::clamp((x - lo) / step, 0.0, static_cast<double>(n - 1));
    i = std::min(static_cast<int>(u), n - 2);
    w = u - i;
  };
  int ie;
  double we;
  bracket(e, g.e_min, g.de(), g.n_e, ie, we);
  auto line = [&](int pf) {
    const double* r = block + static_cast<std::size_t>(pf) * g.n_e;
    return r[ie] + we * (r[ie + 1] - r[ie]);
  };
  if (g.dim_p == 0) return line(0);
  int i0, i1 = 0;
  double w0, w1 = 0.0;
  bracket(p[0], g.p_min[0], g.dp(0), g.n_p, i0, w0);
  if (g.dim_p == 1) return (1.0 - w0) * line(i0) + w0 * line(i0 + 1);
  bracket(p[1], g.p_min[1], g.dp(1), g.n_p, i1, w1);
  const int n = g.n_p;
  const double lo = (1.0 - w0) * line(i0 + n * i1) + w0 * line(i0 + 1 + n * i1);
  const double hi = (1.0 - w0) * line(i0 + n * (i1 + 1)) + w0 * line(i0 + 1 + n * (i1 + 1));
  return (1.0 - w1) * lo + w1 * hi;
}

void require_common(const ValueField& a, const ValueField& b) {
  const Grid& ga = a.grid();
  const Grid& gb = b.grid();
  const bool same = ga.n_e == gb.n_e && ga.dim_p == gb.dim_p && ga.n_p == gb.n_p && ga.e_min == gb.e_min &&
                    ga.e_max == gb.e_max && ga.p_min == gb.p_min && ga.p_max == gb.p_max &&
                    a.n_slices() == b.n_slices();
  if (!same) throw Error("fields are not on a common grid");
  for (std::size_t s = 0; s < a.n_slices(); ++s)
    if (std::abs(a.time(s) - b.time(s)) > 1e-12 * (1.0 + std::abs(a.time(s))))
      throw Error("fields do not share stored times");
}

bool p_in_window(const Vec& p, int d, const LimitWindow& w) {
  for (int k = 0; k < d; ++k) {
    if (w.p_lo && p[k] < (*w.p_lo)[k] - 1e-12) return false;
    if (w.p_hi && p[k] > (*w.p_hi)[k] + 1e-12) return false;
  }
  return true;
}

template <class F>
void for_window(const ValueField& f, const LimitWindow& w, F&& fn) {
  const Grid& g = f.grid();
  const double t_max = g.horizon() - w.delta;
  for (std::size_t s = 0; s < f.n_slices(); ++s) {
    if (f.time(s) > t_max + 1e-12) continue;
    for (int pf = 0; pf < g.n_pnodes(); ++pf) {
      if (!p_in_window(g.p_point(pf), g.dim_p, w)) continue;
      for (int i = 0; i < g.n_e; ++i) {
        const double e = g.e(i);
        if ((w.e_lo && e < *w.e_lo - 1e-12) || (w.e_hi && e > *w.e_hi + 1e-12)) continue;
        fn(s, pf, i);
      }
    }
  }
}

}  // namespace

double DerivativeFields::de_at(std::size_t s, const Vec& p, double e) const {
  return interp_block(grid, de_v.data() + s * grid.slice_size(), p, e);
}

double DerivativeFields::dp_at(int axis, std::size_t s, const Vec& p, double e) const {
  return interp_block(grid, dp_v.data() + axis * de_v.size() + s * grid.slice_size(), p, e);
}

DerivativeFields gradient_fields(const ValueField& field) {
  const Grid& g = field.grid();
  DerivativeFields out;
  out.grid = g;
  out.stored.resize(field.n_slices());
  for (std::size_t s = 0; s < field.n_slices(); ++s) out.stored[s] = field.node_of(s);
  const std::size_t total = field.values().size();
  out.de_v.assign(total, 0.0);
  out.dp_v.assign(total * g.dim_p, 0.0);
  const int ne = g.n_e;
  const double de = g.de();
  for (std::size_t s = 0; s < field.n_slices(); ++s) {
    for (int pf = 0; pf < g.n_pnodes(); ++pf) {
      for (int i = 0; i < ne; ++i) {
        double d;
        if (i == 0)
          d = (field.at(s, pf, 1) - field.at(s, pf, 0)) / de;
        else if (i == ne - 1)
          d = (field.at(s, pf, ne - 1) - field.at(s, pf, ne - 2)) / de;
        else
          d = (field.at(s, pf, i + 1) - field.at(s, pf, i - 1)) / (2.0 * de);
        out.de_v[out.index(s, pf, i)] = d;
      }
    }
    for (int axis = 0; axis < g.dim_p; ++axis) {
      const int n = g.n_p;
      const double dp = g.dp(axis);
      const int stride = axis == 0 ? 1 : n;
      for (int pf = 0; pf < g.n_pnodes(); ++pf) {
        const int j = axis == 0 ? pf % n : pf / n;
        const int lo = j == 0 ? pf : pf - stride;
        const int hi = j == n - 1 ? pf : pf + stride;
        const double span = (hi - lo) / stride * dp;
        for (int i = 0; i < ne; ++i)
          out.dp_v[axis * total + out.index(s, pf, i)] = (field.at(s, hi, i) - field.at(s, lo, i)) / span;
      }
    }
  }
  return out;
}

double max_excess(const ValueField& a, const ValueField& b, const LimitWindow& window) {
  require_common(a, b);
  double m = 0.0;
  for_window(a, window, [&](std::size_t s, int pf, int i) { m = std::max(m, a.at(s, pf, i) - b.at(s, pf, i)); });
  return m;
}

std::pair<ValueField, ConvergenceReport> extract_limit(const std::vector<ValueField>& fields,
                                                       const LimitWindow& window) {
  if (fields.size() < 3) throw Error("extract_limit needs at least 3 fields");
  for (std::size_t k = 1; k < fields.size(); ++k) require_common(fields[0], fields[k]);
  ConvergenceReport rep;
  for (std::size_t k = 0; k + 1 < fields.size(); ++k) {
    double gap = 0.0, inc = 0.0;
    for_window(fields[k], window, [&](std::size_t s, int pf, int i) {
      const double d = fields[k + 1].at(s, pf, i) - fields[k].at(s, pf, i);
      gap = std::max(gap, std::abs(d));
      inc = std::max(inc, d);
    });
    rep.gaps.push_back(gap);
    rep.increase.push_back(inc);
  }
  for (std::size_t k = 1; k < rep.gaps.size(); ++k) {
    const bool ok = rep.gaps[k] < rep.gaps[k - 1] || (rep.gaps[k] == 0.0 && rep.gaps[k - 1] == 0.0);
    if (!ok) {
      rep.converged = false;
      char buf[96];
      std::snprintf(buf, sizeof buf, "gap %zu (%.3g) does not decrease from %.3g", k, rep.gaps[k], rep.gaps[k - 1]);
      rep.note = buf;
      break;
    }
  }
  return {fields.back(), rep};
}

GradientBandReport check_gradient_band(const ValueField& field, const DerivativeFields& derivs,
                                       const ModelSpec& model) {
  const Grid& g = field.grid();
  const double T = g.horizon();
  const double min_tau = 2.0 * g.max_dt() * (1.0 - 1e-9);
  const double de = g.de();
  GradientBandReport rep;
  rep.min_de = std::numeric_limits<double>::infinity();
  for (std::size_t s = 0; s < field.n_slices(); ++s) {
    const double tau = T - field.time(s);
    if (tau < min_tau) continue;
    const double bound = 1.0 / (model.ell1 * tau);
    for (int pf = 0; pf < g.n_pnodes(); ++pf) {
      for (int i = 0; i < g.n_e; ++i) {
        double curv = 0.0;
        if (i > 0 && i < g.n_e - 1)
          curv = std::abs(field.at(s, pf, i + 1) - 2.0 * field.at(s, pf, i) + field.at(s, pf, i - 1)) / (de * de);
        const double tol = std::max(0.05 * bound, 2.0 * de * curv);
        const double d = derivs.de(s, pf, i);
        ++rep.n_checked;
        rep.min_de = std::min(rep.min_de, d);
        const double excess = d - (bound + tol);
        if (excess > rep.worst_excess) {
          rep.worst_excess = excess;
          char buf[96];
          std::snprintf(buf, sizeof buf, "t=%.6g p_flat=%d e=%.6g", field.time(s), pf, g.e(i));
          rep.worst_point = buf;
        }
        if (d < -1e-6 || excess > 0.0) ++rep.n_violations;
      }
    }
  }
  if (rep.n_checked == 0) rep.min_de = 0.0;
  return rep;
}

double min_e_increment(const ValueField& field) {
  const Grid& g = field.grid();
  double m = std::numeric_limits<double>::infinity();
  for (std::size_t s = 0; s < field.n_slices(); ++s)
    for (int pf = 0; pf < g.n_pnodes(); ++pf)
      for (int i = 0; i + 1 < g.n_e; ++i) m = std::min(m, field.at(s, pf, i + 1) - field.at(s, pf, i));
  return m;
}

double conservation_gap(const ValueField& upper, const ValueField& lower, double cap, double m, double t,
                        int p_flat) {
  require_common(upper, lower);
  const Grid& g = upper.grid();
  const double a = cap - m, b = cap + m;
  if (!(m > 0)) throw Error("conservation window half-width must be positive");
  if (a < g.e_min - 1e-12 || b > g.e_max + 1e-12) throw Error("conservation window exceeds the e-domain");
  if (p_flat < 0 || p_flat >= g.n_pnodes()) throw Error("p node out of range");
  const std::size_t s = upper.exact_slice(t);
  const Vec p = g.p_point(p_flat);
  auto diff = [&](double e) { return upper.interpolate(s, p, e) - lower.interpolate(s, p, e); };
  std::vector<double> xs{a};
  for (int i = 0; i < g.n_e; ++i)
    if (g.e(i) > a && g.e(i) < b) xs.push_back(g.e(i));
  xs.push_back(b);
  double sum = 0.0;
  double prev = diff(xs[0]);
  for (std::size_t k = 1; k < xs.size(); ++k) {
    const double cur = diff(xs[k]);
    sum += 0.5 * (prev + cur) * (xs[k] - xs[k - 1]);
    prev = cur;
  }
  return sum;
}

BoundReport bound_report(const ValueField& field, const DerivativeFields& derivs, const ModelSpec& model,
                         const WFunction& w_eval, const BoundOptions& opts) {
  const Grid& g = field.grid();
  const bool reduced = g.dim_p == 0;
  const double T = g.horizon();
  const double cap = model.cap_lambda;
  BoundReport rep;
  auto ebar = [&](double t, const Vec& p, double e) { return reduced ? e : e + w_eval(t, p); };

  for (std::size_t s = 0; s < field.n_slices(); ++s) {
    const double t = field.time(s);
    const double tau = T - t;
    if (tau <= 0.0) continue;
    for (int pf = 0; pf < g.n_pnodes(); ++pf) {
      const Vec p = g.p_point(pf);
      const double shift = reduced ? 0.0 : w_eval(t, p);
      for (int i = 0; i < g.n_e; ++i) {
        if (g.e(i) + shift - cap < opts.far_factor * model.lipschitz_L * tau) continue;
        ++rep.far_nodes;
        rep.far_min_value = std::min(rep.far_min_value, field.at(s, pf, i));
      }
    }
  }
  rep.far_ok = rep.far_min_value >= opts.far_level;

  const double h = g.max_dt();
  for (double hz : opts.horizons) {
    double best = std::numeric_limits<double>::quiet_NaN();
    for (std::size_t s = 0; s < field.n_slices(); ++s) {
      if (std::abs(T - field.time(s) - hz) > 0.5 * h + 1e-12) continue;
      best = 0.0;
      for (int pf = 0; pf < g.n_pnodes(); ++pf) {
        const Vec p = g.p_point(pf);
        for (int i = 2; i < g.n_e - 2; ++i) {
          if (ebar(field.time(s), p, g.e(i)) - cap <= opts.c_off * hz) continue;
          best = std::max(best, derivs.de(s, pf, i));
        }
      }
      break;
    }
    rep.off_cone_horizons.push_back(hz);
    rep.off_cone_max.push_back(best);
  }
  if (rep.off_cone_max.size() >= 2) {
    rep.off_cone_ratio = rep.off_cone_max.front() / rep.off_cone_max.back();
    rep.off_cone_in_band = rep.off_cone_ratio >= opts.ratio_lo && rep.off_cone_ratio <= opts.ratio_hi;
  }
  rep.band = check_gradient_band(field, derivs, model);
  return rep;
}

}  // namespace fbsde

#include <algorithm>
#include <cmath>

#include "fbsde/value_field.hpp"

namespace fbsde {

Vec Grid::p_point(int flat) const {
  Vec p{};
  if (dim_p >= 1) p[0] = this->p(0, flat % n_p);
  if (dim_p == 2) p[1] = this->p(1, flat / n_p);
  return p;
}

double Grid::max_dt() const {
  double h = 0.0;
  for (std::size_t k = 1; k < t_nodes.size(); ++k) h = std::max(h, t_nodes[k] - t_nodes[k - 1]);
  return h;
}

namespace {

Grid base_grid(const ModelSpec& model, int dim_p, double t_start, int n_t, int n_p, Vec p_lo, Vec p_hi) {
  if (n_t < 1) throw Error("grid needs at least one time step");
  if (!(t_start < model.horizon_T)) throw Error("grid start must precede the horizon");
  if (dim_p < 0 || dim_p > kMaxDim) throw Error("grid dim_p must be 0, 1 or 2");
  Grid g;
  g.dim_p = dim_p;
  g.t_nodes.resize(n_t + 1);
  const double h = (model.horizon_T - t_start) / n_t;
  for (int k = 0; k <= n_t; ++k) g.t_nodes[k] = t_start + k * h;
  g.t_nodes.back() = model.horizon_T;
  if (dim_p == 0) {
    g.n_p = 1;
  } else {
    g.n_p = n_p;
    g.p_min = p_lo;
    g.p_max = p_hi;
  }
  return g;
}

}  // namespace

Grid Grid::uniform(const ModelSpec& model, int dim_p, double t_start, int n_t, int n_e, int n_p, Vec p_lo, Vec p_hi,
                   double margin) {
  if (n_e < 3) throw Error("grid needs at least 3 e nodes");
  Grid g = base_grid(model, dim_p, t_start, n_t, n_p, p_lo, p_hi);
  const double half = margin * 2.0 * model.lipschitz_L * (model.horizon_T - t_start);
  const int below = (n_e - 1) / 2;
  const double de = half / below;
  g.n_e = n_e;
  g.e_min = model.cap_lambda - below * de;
  g.e_max = g.e_min + (n_e - 1) * de;
  return g;
}

Grid Grid::uniform_de(const ModelSpec& model, int dim_p, double t_start, int n_t, double de, int n_p, Vec p_lo,
                      Vec p_hi, double margin) {
  if (!(de > 0)) throw Error("grid e-step must be positive");
  Grid g = base_grid(model, dim_p, t_start, n_t, n_p, p_lo, p_hi);
  const double half = margin * 2.0 * model.lipschitz_L * (model.horizon_T - t_start);
  const int below = static_cast<int>(std::ceil(half / de - 1e-9));
  g.n_e = 2 * below + 1;
  g.e_min = model.cap_lambda - below * de;
  g.e_max = model.cap_lambda + below * de;
  return g;
}

void Grid::validate(const ModelSpec& model) const {
  if (t_nodes.size() < 2) throw Error("grid needs at least two time nodes");
  for (std::size_t k = 1; k < t_nodes.size(); ++k)
    if (!(t_nodes[k] > t_nodes[k - 1])) throw Error("grid time nodes must increase");
  if (std::abs(t_nodes.back() - model.horizon_T) > 1e-12 * (1.0 + model.horizon_T))
    throw Error("grid must end at the horizon T");
  if (n_e < 3 || !(e_max > e_min)) throw Error("grid e-axis is degenerate");
  if (dim_p != 0 && dim_p != model.dim_p) throw Error("grid dim_p does not match the model");
  if (dim_p > 0) {
    if (n_p < 3) throw Error("grid needs at least 3 nodes per p axis");
    for (int k = 0; k < dim_p; ++k)
      if (!(p_max[k] > p_min[k])) throw Error("grid p-axis is degenerate");
  }
  const double half = 2.0 * model.lipschitz_L * (model.horizon_T - t_nodes.front());
  const double slack = 1e-9 * (1.0 + half);
  if (e_min > model.cap_lambda - half + slack || e_max < model.cap_lambda + half - slack)
    throw Error("grid e-domain must contain Lambda +- 2L(T - t_start)");
}

ValueField::ValueField(Grid grid, std::vector<std::size_t> stored_nodes, Provenance prov)
    : grid_(std::move(grid)), stored_(std::move(stored_nodes)), prov_(std::move(prov)) {
  values_.assign(stored_.size() * grid_.slice_size(), 0.0);
}

std::vector<double> ValueField::times() const {
  std::vector<double> out(stored_.size());
  for (std::size_t s = 0; s < stored_.size(); ++s) out[s] = time(s);
  return out;
}

std::size_t ValueField::slice_index(double t) const {
  const double slack = 1e-9 * (1.0 + std::abs(t));
  if (stored_.empty() || t < time(0) - slack) throw Error("time precedes the first stored slice");
  std::size_t lo = 0, hi = stored_.size();
  while (hi - lo > 1) {
    const std::size_t mid = (lo + hi) / 2;
    if (time(mid) <= t + slack)
      lo = mid;
    else
      hi = mid;
  }
  return lo;
}

std::size_t ValueField::exact_slice(double t) const {
  const std::size_t s = slice_index(t);
  if (std::abs(time(s) - t) > 1e-9 * (1.0 + std::abs(t))) throw Error("no stored slice at the requested time");
  return s;
}

namespace {

struct Bracket {
  int i;
  double w;
};

Bracket bracket(double x, double lo, double step, int n) {
  double u = (x - lo) / step;
  u = std::clamp(u, 0.0, static_cast<double>(n - 1));
  int i = std::min(static_cast<int>(u), n - 2);
  return {i, u - i};
}

}  // namespace

double ValueField::interpolate(std::size_t s, const Vec& p, double e) const {
  const Bracket be = bracket(e, grid_.e_min, grid_.de(), grid_.n_e);
  auto line = [&](int pf) {
    const double a = at(s, pf, be.i);
    const double b = at(s, pf, be.i + 1);
    return a + be.w * (b - a);
  };
  if (grid_.dim_p == 0) return line(0);
  const Bracket b0 = bracket(p[0], grid_.p_min[0], grid_.dp(0), grid_.n_p);
  if (grid_.dim_p == 1) return (1.0 - b0.w) * line(b0.i) + b0.w * line(b0.i + 1);
  const Bracket b1 = bracket(p[1], grid_.p_min[1], grid_.dp(1), grid_.n_p);
  const int n = grid_.n_p;
  const double lo = (1.0 - b0.w) * line(b0.i + n * b1.i) + b0.w * line(b0.i + 1 + n * b1.i);
  const double hi = (1.0 - b0.w) * line(b0.i + n * (b1.i + 1)) + b0.w * line(b0.i + 1 + n * (b1.i + 1));
  return (1.0 - b1.w) * lo + b1.w * hi;
}

}  // namespace fbsde

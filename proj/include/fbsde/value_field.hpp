#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "fbsde/model.hpp"

namespace fbsde {

/// Tensor grid over (t, p, e). dim_p = 0 is the reduced (t, e-bar) grid.
struct Grid {
  std::vector<double> t_nodes;  // increasing, last entry is T
  double e_min = 0.0;
  double e_max = 1.0;
  int n_e = 2;
  int dim_p = 0;
  Vec p_min{};
  Vec p_max{};
  int n_p = 1;  // nodes per p axis

  double de() const { return (e_max - e_min) / (n_e - 1); }
  double dp(int axis) const { return (p_max[axis] - p_min[axis]) / (n_p - 1); }
  double e(int i) const { return e_min + i * de(); }
  double p(int axis, int j) const { return p_min[axis] + j * dp(axis); }
  /// Number of p nodes (1 for the reduced grid).
  int n_pnodes() const { return dim_p == 0 ? 1 : (dim_p == 1 ? n_p : n_p * n_p); }
  std::size_t slice_size() const { return static_cast<std::size_t>(n_pnodes()) * n_e; }
  /// Coordinates of flat p index j0 + n_p * j1.
  Vec p_point(int flat) const;
  double horizon() const { return t_nodes.back(); }
  double max_dt() const;

  /// Uniform grid on [t_start, T] with n_t steps. The e-axis has n_e nodes, contains Lambda as a node
  /// and covers Lambda +- margin * 2L (T - t_start).
  static Grid uniform(const ModelSpec& model, int dim_p, double t_start, int n_t, int n_e, int n_p = 1,
                      Vec p_lo = {}, Vec p_hi = {}, double margin = 1.0);
  /// Same construction with a prescribed e-step; n_e is derived.
  static Grid uniform_de(const ModelSpec& model, int dim_p, double t_start, int n_t, double de, int n_p = 1,
                         Vec p_lo = {}, Vec p_hi = {}, double margin = 1.0);

  /// Structural checks plus coverage of Lambda +- 2L (T - t_nodes.front()); throws Error.
  void validate(const ModelSpec& model) const;
};

struct Provenance {
  double epsilon = 0.0;
  std::optional<int> mollifier_n;  // empty means the raw heaviside (or other unmollified) data
  bool numerical_viscosity = false;
  std::string scheme_id;
  std::string model_hash;
  std::string tc_label;
  double inviscid_start = 0.0;  // time-to-go below which slices come from characteristics
  bool reduced = false;
};

/// Value function samples on a subset of the grid's time nodes.
class ValueField {
 public:
  ValueField() = default;
  ValueField(Grid grid, std::vector<std::size_t> stored_nodes, Provenance prov);

  const Grid& grid() const { return grid_; }
  const Provenance& provenance() const { return prov_; }
  std::size_t n_slices() const { return stored_.size(); }
  /// Grid time-node index of stored slice s.
  std::size_t node_of(std::size_t s) const { return stored_[s]; }
  double time(std::size_t s) const { return grid_.t_nodes[stored_[s]]; }
  std::vector<double> times() const;

  double at(std::size_t s, int p_flat, int ie) const {
    return values_[(s * grid_.n_pnodes() + p_flat) * static_cast<std::size_t>(grid_.n_e) + ie];
  }
  double& at(std::size_t s, int p_flat, int ie) {
    return values_[(s * grid_.n_pnodes() + p_flat) * static_cast<std::size_t>(grid_.n_e) + ie];
  }
  std::span<const double> slice(std::size_t s) const {
    return {values_.data() + s * grid_.slice_size(), grid_.slice_size()};
  }
  std::span<double> slice(std::size_t s) { return {values_.data() + s * grid_.slice_size(), grid_.slice_size()}; }
  const std::vector<double>& values() const { return values_; }
  std::vector<double>& values() { return values_; }

  /// Latest stored slice with time <= t (up to 1e-9 relative slack); throws if t precedes the first slice.
  std::size_t slice_index(double t) const;
  /// Stored slice whose time matches t within 1e-9; throws otherwise.
  std::size_t exact_slice(double t) const;
  /// Multilinear interpolation in (p, e) on slice s, clamped to the grid box.
  double interpolate(std::size_t s, const Vec& p, double e) const;
  /// Nearest-lower in t, multilinear in (p, e).
  double operator()(double t, const Vec& p, double e) const { return interpolate(slice_index(t), p, e); }

 private:
  Grid grid_;
  std::vector<std::size_t> stored_;
  Provenance prov_;
  std::vector<double> values_;
};

}  // namespace fbsde

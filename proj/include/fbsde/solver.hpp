#pragma once

#include <string>
#include <vector>

#include "fbsde/model.hpp"
#include "fbsde/terminal.hpp"
#include "fbsde/value_field.hpp"

namespace fbsde {

/// Raised when the grid step cannot satisfy the transport stability bound.
class CflViolation : public Error {
 public:
  CflViolation(const std::string& what, double required) : Error(what), required_dt(required) {}
  double required_dt;
};

/// Raised when a slice leaves [-0.01, 1.01] or becomes non-finite.
class Divergence : public Error {
 public:
  using Error::Error;
};

struct SolveOptions {
  /// Times to keep (matched to grid nodes); empty keeps every node. The terminal slice is always kept.
  std::vector<double> store_times;
  /// Reduced solver only: for time-to-go <= inviscid_start the slice is the characteristic solution of the
  /// inviscid equation instead of the scheme output.
  double inviscid_start = 0.0;
  int threads = 0;
};

/// Backward solve of dv/dtau = -f(p,v) dv/de + b.dv/dp + 1/2 tr(sigma sigma^T d2v/dp2) + eps^2/2 (d2v/dp2 + d2v/de2).
/// Transport is explicit first-order upwind (sub-cycled to stay monotone), diffusion implicit.
ValueField solve_mollified(const ModelSpec& model, const Grid& grid, const TerminalCondition& tc, double epsilon,
                           const SolveOptions& opts = {});

/// Solve of dv/dtau = -gamma v dv/de + (1/2 |sigma^T dw/dp|^2 + eps^2/2) d2v/de2 for the affine and
/// linear-drift families on a dim_p = 0 grid in the e-bar variable.
ValueField solve_reduced_1d(const ModelSpec& model, const Grid& grid, const TerminalCondition& tc,
                            const SolveOptions& opts = {}, double epsilon = 0.0);

/// Gradient of w in p for the affine and linear-drift families at time-to-go tau.
Vec reduced_dpw(const ModelSpec& model, double tau);

/// Solution u of u = phi(x - gamma tau u) (inviscid characteristics), by bisection.
double inviscid_characteristic_value(const TerminalCondition& tc, double gamma, double tau, double x);

/// Largest |f(p, y)| over the grid's p nodes for y in {0, 1}.
double max_abs_feedback(const ModelSpec& model, const Grid& grid);

}  // namespace fbsde

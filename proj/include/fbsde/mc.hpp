#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "fbsde/burgers.hpp"
#include "fbsde/field_analysis.hpp"
#include "fbsde/model.hpp"
#include "fbsde/stats.hpp"
#include "fbsde/terminal.hpp"
#include "fbsde/value_field.hpp"

namespace fbsde {

struct SimConfig {
  int n_paths = 10000;
  int n_steps = 1000;
  double t0 = 0.0;
  Vec p0{};
  double e0 = 0.0;
  std::uint64_t seed = 1;
  /// Times (on the step grid) at which (P, E, E-bar, Y) are recorded.
  std::vector<double> snapshot_times;
  int threads = 0;
};

struct Snapshot {
  double t = 0.0;
  std::vector<Vec> P;
  std::vector<double> E, Ebar, Y;
};

struct PathEnsemble {
  SimConfig cfg;
  double cap = 0.0;
  double horizon = 0.0;
  double dt = 0.0;
  Provenance field_provenance;
  std::vector<double> E_T;
  /// Left limit of Y at T: the value used over the last Euler step.
  std::vector<double> Y_T;
  std::vector<double> Ebar_T;
  std::vector<Vec> P_T;
  std::vector<std::uint8_t> escaped;
  std::size_t n_escaped = 0;
  std::vector<Snapshot> snapshots;

  std::size_t size() const { return E_T.size(); }
  std::size_t n_valid() const { return size() - n_escaped; }
  double escape_fraction() const { return size() ? static_cast<double>(n_escaped) / size() : 0.0; }
  /// Snapshot whose time matches t within 1e-9; throws otherwise.
  const Snapshot& snapshot(double t) const;
};

/// Euler scheme for P, explicit Euler for E with the value field frozen at each step's left endpoint
/// (nearest-lower stored slice). Reduced fields are read at e-bar = E + w(t, P). Paths use the
/// counter-based streams (seed, path index), so results do not depend on the thread count.
PathEnsemble simulate_forward(const ModelSpec& model, const ValueField& field, const WEvaluator& we,
                              const SimConfig& cfg);

/// Default delta ladder {1e-2, 3e-3, 1e-3, 3e-4, 1e-4} scaled by T - t0.
std::vector<double> default_delta_ladder(double horizon_to_go);

struct AtomCurve {
  std::vector<double> deltas;
  std::vector<double> fraction;
  std::vector<double> std_error;
  std::size_t n = 0;
  double plateau = 0.0;  // fraction at the smallest delta over fraction at the largest
  double plateau_se = 0.0;
  bool plateau_undefined = false;
};

/// Fraction of |E_T - cap| <= delta over a decreasing delta list spanning >= 2 decades.
AtomCurve dirac_scan(std::span<const double> E_T, double cap, const std::vector<double>& deltas);
AtomCurve dirac_scan(const PathEnsemble& ens, const std::vector<double>& deltas);

/// Control terminal values e0 + sigma (W_T - W_t0) with the same stream layout as simulate_forward.
std::vector<double> gaussian_control(int n_paths, double e0, double sigma, double horizon_to_go, std::uint64_t seed);

struct SupportHistogram {
  std::vector<std::size_t> counts;
  std::size_t n_conditioned = 0;
  double coverage = 0.0;  // fraction of non-empty bins
};

/// Histogram of Y_T on {|E_T - cap| <= delta}; throws if the event is empty.
SupportHistogram conditional_support(const PathEnsemble& ens, double delta, int n_bins = 10);

struct MassCheck {
  double mass = 0.0;
  double std_error = 0.0;
  bool passed = false;  // mass >= 0.5 - 3 SE
};

/// Fraction of paths with |Y_T - y| < 2 eps.
MassCheck lemma_mass_check(const PathEnsemble& ens, double y, double eps);

struct SandwichResult {
  std::size_t n_considered = 0;
  std::size_t n_violations = 0;
  double fraction = 0.0;
};

/// Fraction of paths with |E_T - cap| >= min_distance whose Y_T leaves [phi_-(E_T) - eta, phi_+(E_T) + eta].
SandwichResult terminal_sandwich_check(const PathEnsemble& ens, const TerminalCondition& tc, double eta,
                                       double min_distance = 0.0);

struct SqueezeResult {
  double e_hi = 0.0, e_lo = 0.0;
  std::size_t n_samples = 0;
  std::size_t n_upper_fail = 0;
  std::size_t n_lower_fail = 0;
  double pass_fraction = 0.0;
  double worst_upper = 0.0;  // most negative margin of (e - e') - (E - E')
  double worst_lower = 0.0;  // most negative margin of (E - E') - envelope
  double tolerance = 0.0;
  std::size_t n_pairs = 0;
  std::size_t n_coalesced = 0;
  double coalescence = 0.0;
  double coalescence_se = 0.0;
};

/// Common-noise pairs (e > e'): (e - e') >= E_t - E'_t >= ((T - t)/(T - t0))^(ell2/ell1) (e - e') within
/// 3 ell2 dt, and the fraction of pairs with both E_T within delta_atom of the cap.
std::vector<SqueezeResult> flow_squeeze_check(const ModelSpec& model, const ValueField& field, const WEvaluator& we,
                                              const SimConfig& cfg, const std::vector<std::pair<double, double>>& e_pairs,
                                              const std::vector<double>& t_list, double delta_atom);

struct VarianceRow {
  double t = 0.0;
  double elapsed = 0.0;  // t - t0
  double variance = 0.0;
  double std_error = 0.0;
  bool flagged = false;  // below Monte Carlo resolution
};

struct VarianceTable {
  std::vector<VarianceRow> rows;
  LinearFit time_fit;     // log var against log(t - t0)
  double prefactor = 0.0;  // exp(mean(log var - 3 log(t - t0)))
  bool any_flagged = false;
};

/// Sample variance of E_t over the snapshot times in t_list, grouped-jackknife errors and the log-log slope.
VarianceTable variance_scan(const ModelSpec& model, const ValueField& field, const WEvaluator& we,
                            const SimConfig& cfg, const std::vector<double>& t_list);
/// Same statistics from an existing ensemble (snapshots must cover t_list).
VarianceTable variance_table(const PathEnsemble& ens, const std::vector<double>& t_list);

struct PrefactorVerdict {
  std::vector<double> horizons;  // T - t0, decreasing
  std::vector<double> prefactors;
  LinearFit fit;                  // log prefactor against log(T - t0)
  std::vector<double> local_slopes;
  bool strictly_decreasing = false;
  bool slopes_increasing = false;
  bool superpolynomial = false;  // decreasing, steepening, and global power above 3
};

PrefactorVerdict prefactor_sweep(const std::vector<double>& horizons, const std::vector<double>& prefactors);

struct SignChange {
  double e_lo = 0.0, e_hi = 0.0;
};

struct TransmissionProfile {
  std::vector<double> e, ebar;
  std::vector<double> dp_v;
  std::vector<double> coefficient;   // -d/dp[f(p, v)], equal to alpha - gamma dp_v for the affine family
  std::vector<double> unit_normalized;  // alpha - dp_v
  std::vector<SignChange> sign_changes;
  std::vector<SignChange> unit_sign_changes;
  double in_cone_min = 0.0;  // over (e-bar - cap)/(T - t0) in [3 gamma/8, 5 gamma/8]
  double in_cone_max_abs = 0.0;
  double off_cone_level = 0.0;  // mean over e-bar - cap <= -gamma (T - t0) or >= 2 gamma (T - t0)
  double ratio = 0.0;           // in_cone_max_abs / |off_cone_level|
};

/// d = 1 coefficient profile at stored time t0 and p along e_grid. Full fields use derivs.dp_v;
/// reduced fields use dp v = dw/dp * d vbar / d e-bar.
TransmissionProfile transmission_scan(const ValueField& field, const DerivativeFields& derivs, const ModelSpec& model,
                                      const WEvaluator& we, double t0, const Vec& p, const std::vector<double>& e_grid);

struct FeynmanKacResult {
  double estimate = 0.0;
  double std_error = 0.0;
  double ess_fraction = 1.0;
  bool weight_degenerate = false;  // ESS below 10% of the paths
  std::size_t n_used = 0;
};

/// Pathwise d = 1 estimator of dp v(t0, p0, e0) with the Girsanov weight of d sigma / dp.
FeynmanKacResult feynman_kac_grad_p(const ModelSpec& model, const ValueField& field, const DerivativeFields& derivs,
                                    const WEvaluator& we, const SimConfig& cfg);

struct TrapOptions {
  double c_prime = 0.0;  // drift correction C' of the bridges
  double beta = 0.25;
};

struct TrapResult {
  double p_f = 0.0;
  double p_f_se = 0.0;
  std::size_t n_f = 0;
  double max_gap_pre_terminal = 0.0;  // max over F of |Z-bar^{+-} - cap| at the last step before T
  double max_gap_terminal = 0.0;      // same at T
  double tolerance = 0.0;             // dt * ell1, the largest pre-terminal distance allowed on F
};

/// Trap event F = {sup_t |int (T - s)^{-1} <sigma^T dp w, dW>| < ell1/16} and the bridge endpoints on F.
TrapResult trap_diagnostic(const ModelSpec& model, const WEvaluator& we, double t0, const Vec& p, double e_bar,
                           const SimConfig& cfg, const TrapOptions& opts = {});

}  // namespace fbsde

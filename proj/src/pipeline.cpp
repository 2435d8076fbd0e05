#include "fbsde/pipeline.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <map>
#include <sstream>

#include "fbsde/burgers.hpp"
#include "fbsde/field_analysis.hpp"
#include "fbsde/field_io.hpp"
#include "fbsde/mc.hpp"
#include "fbsde/solver.hpp"

namespace fbsde::lab {

namespace fs = std::filesystem;

std::string to_string(Verdict v) {
  switch (v) {
    case Verdict::pass: return "pass";
    case Verdict::fail: return "fail";
    case Verdict::flagged: return "flagged";
  }
  return "fail";
}

double CheckResult::stat(const std::string& key) const {
  for (const auto& [k, v] : stats)
    if (k == key) return v;
  throw Error("check '" + name + "' has no statistic '" + key + "'");
}

Verdict ExperimentRecord::overall() const {
  if (!error.empty()) return Verdict::fail;
  Verdict v = Verdict::pass;
  for (const auto& c : checks) {
    if (c.verdict == Verdict::fail) return Verdict::fail;
    if (c.verdict == Verdict::flagged) v = Verdict::flagged;
  }
  return v;
}

const CheckResult& ExperimentRecord::check(const std::string& name) const {
  for (const auto& c : checks)
    if (c.name == name) return c;
  throw Error("record has no check '" + name + "'");
}

FlatMap ExperimentRecord::summary() const {
  FlatMap m;
  m["schema_version"] = static_cast<long long>(kSchemaVersion);
  m["scenario"] = scenario;
  m["config_hash"] = config_hash;
  m["seed"] = std::to_string(seed);
  m["overall"] = to_string(overall());
  if (!error.empty()) m["error"] = error;
  for (const auto& c : checks) {
    const std::string prefix = "check." + c.name + ".";
    m[prefix + "verdict"] = to_string(c.verdict);
    if (!c.note.empty()) m[prefix + "note"] = c.note;
    for (const auto& [k, v] : c.stats) m[prefix + k] = v;
  }
  for (const auto& f : files) m["file." + f] = true;
  return m;
}

FlatMap ExperimentRecord::timings() const {
  FlatMap m;
  double total = 0.0;
  for (const auto& c : checks) {
    m["check." + c.name + ".seconds"] = c.seconds;
    total += c.seconds;
  }
  m["total_seconds"] = total;
  return m;
}

namespace {

bool affine_family(const ModelSpec& m) {
  return m.family == Family::affine_constant || m.family == Family::linear_drift;
}

double cone_slope(const ModelSpec& m) { return affine_family(m) ? m.params.gamma : m.ell1; }

bool noise_free_e(const ModelSpec& m) {
  if (!affine_family(m)) return false;
  for (int i = 0; i < m.dim_p; ++i)
    if (m.params.alpha[i] != 0.0) return false;
  return true;
}

/// Smallest multiple of `multiple` time steps over `span` with step <= dt_max.
int nested_steps(double span, double dt_max, int multiple) {
  const double n = std::ceil(span / dt_max / multiple * (1.0 + 1e-9));
  return multiple * std::max(1, static_cast<int>(n));
}

Vec vec_of(const std::vector<double>& v, int d) {
  Vec out{};
  for (int i = 0; i < d && i < static_cast<int>(v.size()); ++i) out[i] = v[i];
  return out;
}

Vec box_lo(const ScenarioConfig& c, int d) {
  Vec v{};
  for (int i = 0; i < d; ++i) v[i] = c.grid.p_lo;
  return v;
}

Vec box_hi(const ScenarioConfig& c, int d) {
  Vec v{};
  for (int i = 0; i < d; ++i) v[i] = c.grid.p_hi;
  return v;
}

WOptions w_options(const ScenarioConfig& c) {
  WOptions o;
  o.seed = c.sim.seed;
  o.threads = c.sim.threads;
  return o;
}

int center_p(const Grid& g) {
  const int c = g.n_p / 2;
  return g.dim_p == 2 ? c + g.n_p * c : (g.dim_p == 1 ? c : 0);
}

}  // namespace

struct Pipeline::State {
  ScenarioConfig cfg;
  ModelSpec model;
  TerminalCondition tc;
  WEvaluator we;
  std::map<double, std::shared_ptr<ValueField>> mc_fields;
  std::shared_ptr<PathEnsemble> default_ensemble;

  explicit State(ScenarioConfig c)
      : cfg(std::move(c)),
        model(cfg.build_model()),
        tc(cfg.build_terminal()),
        we(WEvaluator::for_model(model, w_options(cfg))) {}

  int threads() const { return cfg.sim.threads; }
  double T() const { return model.horizon_T; }

  Grid coarse_grid() const {
    const int d = model.dim_p;
    return Grid::uniform(model, d, cfg.grid.t_start, cfg.grid.n_t, cfg.grid.n_e, cfg.grid.n_p, box_lo(cfg, d),
                         box_hi(cfg, d), cfg.grid.margin);
  }

  /// Fine full grid on [t_start, T] whose step nests `multiple` equal pieces and honours the CFL bound.
  Grid fine_grid(double t_start, int multiple) const {
    const int d = model.dim_p;
    Grid probe = Grid::uniform_de(model, d, t_start, 1, cfg.grid.fine_de, cfg.grid.fine_n_p, box_lo(cfg, d),
                                  box_hi(cfg, d), cfg.grid.margin);
    const double maxf = max_abs_feedback(model, probe);
    const int n_t = nested_steps(T() - t_start, cfg.grid.fine_de / maxf, multiple);
    return Grid::uniform_de(model, d, t_start, n_t, cfg.grid.fine_de, cfg.grid.fine_n_p, box_lo(cfg, d),
                            box_hi(cfg, d), cfg.grid.margin);
  }

  Grid reduced_grid(double t_start, double de, int multiple) const {
    const int n_t = nested_steps(T() - t_start, de / model.params.gamma, multiple);
    return Grid::uniform_de(model, 0, t_start, n_t, de, 1, {}, {}, cfg.grid.margin);
  }

  SolveOptions reduced_options(std::vector<double> store = {}) const {
    SolveOptions o;
    o.store_times = std::move(store);
    o.inviscid_start = cfg.grid.inviscid_start;
    o.threads = threads();
    return o;
  }

  /// Field driving simulations started at t0: reduced for the affine families, fine full grid otherwise.
  const ValueField& mc_field(double t0) {
    auto it = mc_fields.find(t0);
    if (it != mc_fields.end()) return *it->second;
    const double tau0 = T() - t0;
    std::shared_ptr<ValueField> f;
    if (affine_family(model)) {
      const Grid g = reduced_grid(t0, cfg.grid.mc_de_ratio * tau0, cfg.sim.n_steps);
      f = std::make_shared<ValueField>(solve_reduced_1d(model, g, tc, reduced_options()));
    } else {
      SolveOptions o;
      o.threads = threads();
      for (int k = 0; k <= cfg.sim.n_steps; ++k) o.store_times.push_back(t0 + tau0 * k / cfg.sim.n_steps);
      o.store_times.back() = T();
      f = std::make_shared<ValueField>(solve_mollified(model, fine_grid(t0, cfg.sim.n_steps), tc, cfg.epsilon.at(0), o));
    }
    mc_fields[t0] = f;
    return *f;
  }

  SimConfig sim_config(double t0, double e0) const {
    SimConfig s;
    s.n_paths = cfg.sim.n_paths;
    s.n_steps = cfg.sim.n_steps;
    s.t0 = t0;
    s.p0 = vec_of(cfg.sim.p0, model.dim_p);
    s.e0 = e0;
    s.seed = cfg.sim.seed;
    s.threads = threads();
    return s;
  }

  double cone_start(double t0, double fraction) const {
    const Vec p0 = vec_of(cfg.sim.p0, model.dim_p);
    return model.cap_lambda + fraction * cone_slope(model) * (T() - t0) - we(t0, p0);
  }

  double start_e() const {
    if (cfg.sim.e0) return *cfg.sim.e0;
    return cone_start(cfg.sim.t0, cfg.sim.cone_fraction);
  }

  const PathEnsemble& ensemble() {
    if (!default_ensemble) {
      const ValueField& f = mc_field(cfg.sim.t0);
      default_ensemble =
          std::make_shared<PathEnsemble>(simulate_forward(model, f, we, sim_config(cfg.sim.t0, start_e())));
    }
    return *default_ensemble;
  }

  CheckResult validate();
  CheckResult gradient_band();
  CheckResult comparison();
  CheckResult burgers();
  CheckResult dirac_atom();
  CheckResult conditional_support_check();
  CheckResult sandwich();
  CheckResult flow_squeeze();
  CheckResult variance();
  CheckResult transmission();
  CheckResult feynman_kac();
  CheckResult equivalence();
  CheckResult characteristics();
};

Pipeline::Pipeline(ScenarioConfig cfg) : state_(std::make_unique<State>(std::move(cfg))) {}
Pipeline::~Pipeline() = default;

const ScenarioConfig& Pipeline::config() const { return state_->cfg; }

CheckResult Pipeline::run(const std::string& check) {
  const auto start = std::chrono::steady_clock::now();
  CheckResult r;
  try {
    State& s = *state_;
    if (check == "validate") r = s.validate();
    else if (check == "gradient_band") r = s.gradient_band();
    else if (check == "comparison") r = s.comparison();
    else if (check == "burgers_gap") r = s.burgers();
    else if (check == "dirac_atom") r = s.dirac_atom();
    else if (check == "conditional_support") r = s.conditional_support_check();
    else if (check == "sandwich") r = s.sandwich();
    else if (check == "flow_squeeze") r = s.flow_squeeze();
    else if (check == "variance") r = s.variance();
    else if (check == "transmission") r = s.transmission();
    else if (check == "feynman_kac") r = s.feynman_kac();
    else if (check == "equivalence") r = s.equivalence();
    else if (check == "characteristics") r = s.characteristics();
    else throw Error("unknown check '" + check + "'");
  } catch (const Error& e) {
    r = CheckResult{};
    r.verdict = Verdict::fail;
    r.note = e.what();
  }
  r.name = check;
  r.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return r;
}

CheckResult Pipeline::State::validate() {
  CheckResult r;
  SampleBox box;
  box.p_lo = box_lo(cfg, model.dim_p);
  box.p_hi = box_hi(cfg, model.dim_p);
  const ValidationReport rep = validate_assumptions(model, box, 2000, cfg.sim.seed);
  for (const auto& c : rep.checks) r.add(c.name + ".margin", c.worst_margin);
  r.add("elliptic", rep.elliptic ? 1.0 : 0.0);
  r.add("min_eigenvalue", rep.min_eigenvalue);
  r.add("dy_min", rep.dy_min);
  r.add("dy_max", rep.dy_max);
  r.verdict = rep.all_passed() ? Verdict::pass : Verdict::fail;
  for (const auto& c : rep.checks)
    if (!c.passed) r.note += c.name + " violated at " + c.worst_point + "; ";
  for (const auto& d : rep.diagnostics) r.note += d + "; ";
  return r;
}

CheckResult Pipeline::State::gradient_band() {
  CheckResult r;
  const Grid g = coarse_grid();
  SolveOptions o;
  o.threads = threads();
  const ValueField f = solve_mollified(model, g, tc, cfg.epsilon.at(0), o);
  const DerivativeFields d = gradient_fields(f);
  const GradientBandReport rep = check_gradient_band(f, d, model);
  r.add("n_checked", static_cast<double>(rep.n_checked));
  r.add("n_violations", static_cast<double>(rep.n_violations));
  r.add("min_de_v", rep.min_de);
  r.add("worst_excess", rep.worst_excess);
  r.add("min_e_increment", min_e_increment(f));
  r.verdict = rep.passed() ? Verdict::pass : Verdict::fail;
  if (!rep.passed()) r.note = "worst point " + rep.worst_point;

  Table t{{"time_to_go", "max_de_v", "band_upper"}, {}};
  const double two_dt = 2.0 * g.max_dt();
  for (std::size_t s = 0; s < f.n_slices(); ++s) {
    const double tau = T() - f.time(s);
    if (tau < two_dt - 1e-12) continue;
    double mx = 0.0;
    const std::size_t base = s * g.slice_size();
    for (std::size_t k = 0; k < g.slice_size(); ++k) mx = std::max(mx, d.de_v[base + k]);
    t.rows.push_back({tau, mx, 1.0 / (model.ell1 * tau)});
  }
  std::reverse(t.rows.begin(), t.rows.end());
  r.plot = std::move(t);
  return r;
}

CheckResult Pipeline::State::comparison() {
  CheckResult r;
  if (cfg.mollifier_n.size() < 2) throw Error("comparison needs at least two mollifier orders");
  const Grid g = coarse_grid();
  SolveOptions o;
  o.threads = threads();
  const double eps = cfg.epsilon.at(0);
  const double t_mid = g.t_nodes[g.t_nodes.size() / 2];
  const double m = 0.5 * std::min(model.cap_lambda - g.e_min, g.e_max - model.cap_lambda);
  const int pc = center_p(g);

  std::optional<ValueField> prev_up, prev_lo;
  double order_excess = 0.0, seq_excess = 0.0;
  std::vector<double> gaps;
  Table t{{"mollifier_n", "conservation_gap", "order_excess"}, {}};
  for (int n : cfg.mollifier_n) {
    const Mollifier j = Mollifier::polynomial_bump(n);
    ValueField up = solve_mollified(model, g, mollify(tc, j, MollifySide::upper), eps, o);
    ValueField lo = solve_mollified(model, g, mollify(tc, j, MollifySide::lower), eps, o);
    const double ex = max_excess(lo, up, {});
    order_excess = std::max(order_excess, ex);
    gaps.push_back(conservation_gap(up, lo, model.cap_lambda, m, t_mid, pc));
    r.add("gap_n" + std::to_string(n), gaps.back());
    t.rows.push_back({static_cast<double>(n), gaps.back(), ex});
    if (prev_up) {
      seq_excess = std::max(seq_excess, max_excess(up, *prev_up, {}));
      seq_excess = std::max(seq_excess, max_excess(*prev_lo, lo, {}));
    }
    prev_up = std::move(up);
    prev_lo = std::move(lo);
  }
  bool decreasing = true;
  for (std::size_t k = 1; k < gaps.size(); ++k) decreasing = decreasing && gaps[k] < gaps[k - 1];
  r.add("order_excess", order_excess);
  r.add("sequence_excess", seq_excess);
  r.add("gap_time", t_mid);
  r.add("gap_half_width", m);
  r.add("gaps_decreasing", decreasing ? 1.0 : 0.0);
  const bool ok = order_excess <= 1e-6 && seq_excess <= 1e-6 && decreasing;
  r.verdict = ok ? Verdict::pass : Verdict::fail;
  r.plot = std::move(t);
  return r;
}

CheckResult Pipeline::State::burgers() {
  CheckResult r;
  const double span = std::min(0.4, 0.8 * T());
  const std::vector<double> taus{span, span / 2, span / 4, span / 8};
  std::vector<double> times;
  for (double tau : taus) times.push_back(T() - tau);
  const double t_start = T() - span;
  BurgersGapReport rep;
  if (affine_family(model)) {
    const Grid g = reduced_grid(t_start, cfg.grid.reduced_de, 8);
    SolveOptions o = reduced_options(times);
    if (noise_free_e(model) && cfg.epsilon.at(0) == 0.0) o.inviscid_start = span;
    const ValueField f = solve_reduced_1d(model, g, tc, o, cfg.epsilon.at(0));
    rep = burgers_gap(f, we, model, times);
    r.add("grid_de", g.de());
  } else {
    const Grid g = fine_grid(t_start, 8);
    SolveOptions o;
    o.store_times = times;
    o.threads = threads();
    const ValueField f = solve_mollified(model, g, tc, cfg.epsilon.at(0), o);
    GapOptions go;
    go.p_lo = Vec{std::max(-0.5, cfg.grid.p_lo), 0.0};
    go.p_hi = Vec{std::min(0.5, cfg.grid.p_hi), 0.0};
    rep = burgers_gap(f, we, model, times, go);
    r.add("grid_de", g.de());
  }
  Table t{{"t", "sup_gap", "beta_so_far"}, {}};
  for (const auto& row : rep.rows) {
    char key[48];
    std::snprintf(key, sizeof key, "gap_tau_%.3g", row.tau);
    r.add(key, row.sup_gap);
    t.rows.push_back({row.t, row.sup_gap, row.beta_so_far});
  }
  r.add("beta_hat", rep.beta_hat);
  r.add("decreasing", rep.decreasing ? 1.0 : 0.0);
  if (noise_free_e(model) && cfg.epsilon.at(0) == 0.0) {
    bool within = true;
    for (const auto& row : rep.rows) within = within && row.sup_gap <= 2.0 * r.stat("grid_de") / (cone_slope(model) * row.tau);
    r.verdict = within ? Verdict::pass : Verdict::fail;
    r.note = "noise-free model: gap bounded by 2 de / (gamma (T - t))";
  } else {
    r.verdict = rep.decreasing && rep.beta_hat > 0.0 ? Verdict::pass : Verdict::fail;
  }
  r.plot = std::move(t);
  return r;
}

CheckResult Pipeline::State::dirac_atom() {
  CheckResult r;
  const PathEnsemble& ens = ensemble();
  const double tau0 = T() - cfg.sim.t0;
  const auto deltas = default_delta_ladder(tau0);
  const AtomCurve c = dirac_scan(ens, deltas);
  const Mat sig = model.diffusion(vec_of(cfg.sim.p0, model.dim_p));
  const auto ctl_values = gaussian_control(cfg.sim.n_paths, ens.cfg.e0, std::abs(sig[0]), tau0, cfg.sim.seed);
  const AtomCurve ctl = dirac_scan(ctl_values, ens.cfg.e0, deltas);

  r.add("n_paths", static_cast<double>(ens.size()));
  r.add("escape_fraction", ens.escape_fraction());
  r.add("plateau", c.plateau);
  r.add("plateau_se", c.plateau_se);
  r.add("control_plateau", ctl.plateau);
  for (std::size_t k = 0; k < deltas.size(); ++k) r.add("fraction_" + std::to_string(k), c.fraction[k]);

  Table t{{"delta", "atom_fraction", "binomial_se"}, {}};
  for (std::size_t k = 0; k < deltas.size(); ++k) t.rows.push_back({deltas[k], c.fraction[k], c.std_error[k]});
  r.plot = std::move(t);

  bool inclusion = true;
  if (we.mode() != WMode::monte_carlo) {
    const double ebar = ens.cfg.e0 + we(cfg.sim.t0, ens.cfg.p0);
    const TrapResult trap = trap_diagnostic(model, we, cfg.sim.t0, ens.cfg.p0, ebar, sim_config(cfg.sim.t0, ens.cfg.e0));
    r.add("trap_p_f", trap.p_f);
    r.add("trap_p_f_se", trap.p_f_se);
    r.add("trap_max_gap_terminal", trap.max_gap_terminal);
    const double combined = std::hypot(trap.p_f_se, c.std_error.back());
    inclusion = c.fraction.back() >= trap.p_f - 3.0 * combined && trap.max_gap_terminal <= trap.tolerance;
    r.add("trap_inclusion", inclusion ? 1.0 : 0.0);
  }

  if (ens.escape_fraction() > 1e-3) {
    r.verdict = Verdict::fail;
    r.note = "escape rate above 0.1%";
  } else if (c.plateau_undefined) {
    r.verdict = Verdict::flagged;
    r.note = "no hits at the largest delta";
  } else {
    r.verdict = c.plateau >= 0.8 && ctl.plateau <= 0.05 && inclusion ? Verdict::pass : Verdict::fail;
  }
  return r;
}

CheckResult Pipeline::State::conditional_support_check() {
  CheckResult r;
  const PathEnsemble& ens = ensemble();
  const double tau0 = T() - cfg.sim.t0;
  const double delta = default_delta_ladder(tau0).front();
  const SupportHistogram h = conditional_support(ens, delta);
  r.add("n_conditioned", static_cast<double>(h.n_conditioned));
  r.add("coverage", h.coverage);
  Table t{{"y_lo", "y_hi", "count"}, {}};
  const int nb = static_cast<int>(h.counts.size());
  for (int b = 0; b < nb; ++b) t.rows.push_back({static_cast<double>(b) / nb, (b + 1.0) / nb, double(h.counts[b])});
  r.plot = std::move(t);

  // Lemma-type mass check from a start whose value is y, over a short horizon.
  const double tau_l = std::min(0.05, tau0);
  const double t_l = T() - tau_l;
  const double e_l = cone_start(t_l, cfg.sim.cone_fraction);
  const ValueField& f = mc_field(t_l);
  const Vec p0 = vec_of(cfg.sim.p0, model.dim_p);
  const double y = f.interpolate(f.exact_slice(t_l), p0, f.provenance().reduced ? e_l + we(t_l, p0) : e_l);
  const PathEnsemble lens = simulate_forward(model, f, we, sim_config(t_l, e_l));
  const MassCheck mc = lemma_mass_check(lens, y, 0.1);
  r.add("lemma_y", y);
  r.add("lemma_mass", mc.mass);
  r.add("lemma_mass_se", mc.std_error);

  SampleBox box;
  box.p_lo = box_lo(cfg, model.dim_p);
  box.p_hi = box_hi(cfg, model.dim_p);
  const bool elliptic = validate_assumptions(model, box, 200, cfg.sim.seed).elliptic;
  double min_dp = std::numeric_limits<double>::infinity();
  for (int i = 0; i < model.dim_p; ++i) min_dp = std::min(min_dp, std::abs(model.feedback.dp(p0, 0.5)[i]));
  if (!elliptic || !(min_dp >= 1.0 / model.lipschitz_L)) {
    r.verdict = Verdict::flagged;
    r.note = "full support needs an elliptic model with |dp f| >= 1/L";
  } else if (h.n_conditioned < 1000) {
    r.verdict = Verdict::flagged;
    r.note = "fewer than 1000 conditioned paths";
  } else {
    r.verdict = h.coverage == 1.0 && mc.passed ? Verdict::pass : Verdict::fail;
  }
  return r;
}

CheckResult Pipeline::State::sandwich() {
  CheckResult r;
  const PathEnsemble& ens = ensemble();
  const double de = mc_field(cfg.sim.t0).grid().de();
  const SandwichResult s = terminal_sandwich_check(ens, tc, 0.05, 10.0 * de);
  r.add("eta", 0.05);
  r.add("min_distance", 10.0 * de);
  r.add("n_considered", static_cast<double>(s.n_considered));
  r.add("n_violations", static_cast<double>(s.n_violations));
  r.add("violation_fraction", s.fraction);
  r.add("escape_fraction", ens.escape_fraction());
  if (ens.escape_fraction() > 1e-3) {
    r.verdict = Verdict::fail;
    r.note = "escape rate above 0.1%";
  } else if (s.n_considered == 0) {
    r.verdict = Verdict::flagged;
    r.note = "no path ended away from the cap";
  } else {
    r.verdict = s.fraction <= 0.01 ? Verdict::pass : Verdict::fail;
  }
  return r;
}

CheckResult Pipeline::State::flow_squeeze() {
  CheckResult r;
  const double t0 = cfg.sim.t0;
  const double tau0 = T() - t0;
  const double fr = cfg.sim.cone_fraction;
  const double e_hi = cone_start(t0, fr + 0.1), e_lo = cone_start(t0, fr - 0.1);
  std::vector<double> t_list;
  for (int k = 1; k <= 10; ++k) t_list.push_back(k == 10 ? T() : t0 + tau0 * k / 10.0);
  const auto res =
      flow_squeeze_check(model, mc_field(t0), we, sim_config(t0, 0.0), {{e_hi, e_lo}}, t_list, 1e-3 * tau0);
  const SqueezeResult& s = res.front();
  r.add("pass_fraction", s.pass_fraction);
  r.add("n_samples", static_cast<double>(s.n_samples));
  r.add("n_upper_fail", static_cast<double>(s.n_upper_fail));
  r.add("n_lower_fail", static_cast<double>(s.n_lower_fail));
  r.add("worst_upper", s.worst_upper);
  r.add("worst_lower", s.worst_lower);
  r.add("tolerance", s.tolerance);
  r.add("coalescence", s.coalescence);
  r.add("coalescence_se", s.coalescence_se);
  r.verdict = s.pass_fraction >= 0.999 && s.coalescence - 3.0 * s.coalescence_se >= 0.1 ? Verdict::pass
                                                                                       : Verdict::fail;
  return r;
}

CheckResult Pipeline::State::variance() {
  CheckResult r;
  std::vector<double> horizons;
  if (affine_family(model) && T() >= 0.4)
    horizons = {0.4, 0.2, 0.1};
  else
    horizons = {T() - cfg.sim.t0};
  const std::vector<double> fractions{0.025, 0.05, 0.1, 0.2};
  const bool zero_expected = noise_free_e(model);
  Table t{{"horizon", "t_minus_t0", "variance", "jackknife_se"}, {}};
  bool slopes_ok = true, flagged = false, all_zero = true;
  std::vector<double> prefactors;
  for (double H : horizons) {
    const double t0 = T() - H;
    std::vector<double> t_list;
    for (double q : fractions) t_list.push_back(t0 + q * H);
    const VarianceTable vt = variance_scan(model, mc_field(t0), we, sim_config(t0, cone_start(t0, cfg.sim.cone_fraction)), t_list);
    for (const auto& row : vt.rows) {
      t.rows.push_back({H, row.elapsed, row.variance, row.std_error});
      all_zero = all_zero && row.variance == 0.0;
    }
    char key[48];
    std::snprintf(key, sizeof key, "time_slope_H%.3g", H);
    r.add(key, vt.time_fit.slope);
    std::snprintf(key, sizeof key, "time_slope_se_H%.3g", H);
    r.add(key, vt.time_fit.slope_se);
    std::snprintf(key, sizeof key, "prefactor_H%.3g", H);
    r.add(key, vt.prefactor);
    flagged = flagged || vt.any_flagged;
    slopes_ok = slopes_ok && std::abs(vt.time_fit.slope - 3.0) <= 0.3;
    prefactors.push_back(vt.prefactor);
  }
  r.plot = std::move(t);
  if (zero_expected) {
    r.verdict = all_zero ? Verdict::pass : Verdict::fail;
    r.note = "noise never reaches E: variance must vanish";
    return r;
  }
  if (flagged) {
    r.verdict = Verdict::flagged;
    r.note = "variance below Monte Carlo resolution at some time";
    return r;
  }
  bool sweep_ok = true;
  if (horizons.size() >= 3) {
    const PrefactorVerdict pv = prefactor_sweep(horizons, prefactors);
    r.add("horizon_slope", pv.fit.slope);
    for (std::size_t k = 0; k < pv.local_slopes.size(); ++k) r.add("local_slope_" + std::to_string(k), pv.local_slopes[k]);
    r.add("superpolynomial", pv.superpolynomial ? 1.0 : 0.0);
    const double lam = model.family == Family::linear_drift ? model.params.lambda : 0.0;
    if (lam < 0.0) sweep_ok = std::abs(pv.fit.slope - 2.0) <= 0.5;
    else if (lam == 0.0) sweep_ok = pv.superpolynomial;
  }
  r.verdict = slopes_ok && sweep_ok ? Verdict::pass : Verdict::fail;
  return r;
}

CheckResult Pipeline::State::transmission() {
  CheckResult r;
  if (!affine_family(model) || model.dim_p != 1) throw Error("transmission check needs a d = 1 affine-family model");
  const double tau = cfg.transmission_tau;
  const double t0 = T() - tau;
  const Grid g = reduced_grid(t0, cfg.grid.reduced_de, 1);
  const ValueField f = solve_reduced_1d(model, g, tc, reduced_options({t0}));
  const DerivativeFields d = gradient_fields(f);
  const Vec p0 = vec_of(cfg.sim.p0, 1);
  const double w0 = we(t0, p0);
  const double gm = model.params.gamma;
  std::vector<double> e_grid;
  for (int i = 0; i <= 400; ++i) e_grid.push_back(model.cap_lambda - 2.0 * gm * tau + 5.0 * gm * tau * i / 400.0 - w0);
  const TransmissionProfile pr = transmission_scan(f, d, model, we, t0, p0, e_grid);
  double max_abs = 0.0;
  for (double c : pr.coefficient) max_abs = std::max(max_abs, std::abs(c));
  r.add("time_to_go", tau);
  r.add("sign_changes", static_cast<double>(pr.sign_changes.size()));
  r.add("unit_sign_changes", static_cast<double>(pr.unit_sign_changes.size()));
  r.add("in_cone_min", pr.in_cone_min);
  r.add("in_cone_max_abs", pr.in_cone_max_abs);
  r.add("off_cone_level", pr.off_cone_level);
  r.add("ratio", pr.ratio);
  r.add("max_abs", max_abs);
  if (!pr.sign_changes.empty()) {
    r.add("first_change_e_lo", pr.sign_changes.front().e_lo);
    r.add("first_change_e_hi", pr.sign_changes.front().e_hi);
  }
  Table t{{"ebar_minus_cap", "coefficient", "unit_normalized"}, {}};
  for (std::size_t k = 0; k < pr.e.size(); ++k)
    t.rows.push_back({pr.ebar[k] - model.cap_lambda, pr.coefficient[k], pr.unit_normalized[k]});
  r.plot = std::move(t);

  const double lam = model.family == Family::linear_drift ? model.params.lambda : 0.0;
  bool ok;
  if (noise_free_e(model)) {
    ok = max_abs <= 1e-6;
    r.note = "alpha = 0: the coefficient vanishes";
  } else if (lam > 0.0) {
    ok = !pr.sign_changes.empty();
  } else if (lam < 0.0) {
    ok = pr.in_cone_min > 0.0;
    r.note = "lambda < 0: coefficient stays positive in the cone";
  } else {
    ok = pr.ratio <= 0.1;
  }
  r.verdict = ok ? Verdict::pass : Verdict::fail;
  return r;
}

CheckResult Pipeline::State::feynman_kac() {
  CheckResult r;
  if (model.dim_p != 1) throw Error("Feynman-Kac check needs d = 1");
  if (tc.kind() == TcKind::heaviside && !tc.mollifier_n()) {
    r.verdict = Verdict::flagged;
    r.note = "the representation needs smooth terminal data";
    return r;
  }
  const double t0 = cfg.sim.t0;
  const double e0 = start_e();
  const SimConfig sc = sim_config(t0, e0);
  const Vec p0 = sc.p0;
  double oracle;
  FeynmanKacResult fk;
  if (affine_family(model)) {
    const Grid g = reduced_grid(t0, cfg.grid.fk_de, cfg.sim.n_steps);
    const ValueField f = solve_reduced_1d(model, g, tc, reduced_options());
    const DerivativeFields d = gradient_fields(f);
    fk = feynman_kac_grad_p(model, f, d, we, sc);
    const ReducedReconstruction rec(f, we.as_function());
    const std::size_t s = f.exact_slice(t0);
    const double hp = 1e-3;
    oracle = (rec.on_slice(s, {p0[0] + hp}, e0) - rec.on_slice(s, {p0[0] - hp}, e0)) / (2.0 * hp);
  } else {
    SolveOptions o;
    o.threads = threads();
    const ValueField f = solve_mollified(model, fine_grid(t0, cfg.sim.n_steps), tc, cfg.epsilon.at(0), o);
    const DerivativeFields d = gradient_fields(f);
    fk = feynman_kac_grad_p(model, f, d, we, sc);
    oracle = d.dp_at(0, f.exact_slice(t0), p0, e0);
  }
  const double z = (fk.estimate - oracle) / fk.std_error;
  r.add("estimate", fk.estimate);
  r.add("std_error", fk.std_error);
  r.add("pde_dp_v", oracle);
  r.add("z_score", z);
  r.add("ess_fraction", fk.ess_fraction);
  r.add("n_used", static_cast<double>(fk.n_used));
  if (fk.weight_degenerate) {
    r.verdict = Verdict::flagged;
    r.note = "effective sample size below 10%";
  } else {
    r.verdict = std::abs(z) <= 3.0 ? Verdict::pass : Verdict::fail;
  }
  return r;
}

CheckResult Pipeline::State::equivalence() {
  CheckResult r;
  if (!affine_family(model) || model.dim_p != 1) throw Error("equivalence check needs a d = 1 affine-family model");
  const double t_start = cfg.grid.t_start;
  std::vector<double> times;
  for (int k = 0; k < 10; ++k) times.push_back(t_start + (T() - t_start) * k / 10.0);
  const double min_tau = 0.05;

  const Grid gf = fine_grid(t_start, 10);
  SolveOptions o;
  o.store_times = times;
  o.threads = threads();
  const ValueField full = solve_mollified(model, gf, tc, cfg.epsilon.at(0), o);
  Grid gr = Grid::uniform_de(model, 0, t_start, static_cast<int>(gf.t_nodes.size()) - 1, gf.de(), 1, {}, {},
                             cfg.grid.margin);
  const ValueField red = solve_reduced_1d(model, gr, tc, reduced_options(times), cfg.epsilon.at(0));
  const ValueField fine_red =
      solve_reduced_1d(model, reduced_grid(t_start, cfg.grid.reduced_de, 10), tc, reduced_options(times),
                       cfg.epsilon.at(0));

  Table tab{{"time_to_go", "equivalence_sup", "mirror_sup"}, {}};
  double eq_sup = 0.0, mir_sup = 0.0;
  const double gm = model.params.gamma;
  for (double t : times) {
    const double tau = T() - t;
    if (tau < min_tau - 1e-12) continue;
    const std::size_t sf = full.exact_slice(t), sr = red.exact_slice(t);
    double eq = 0.0;
    for (int pf = 0; pf < gf.n_p; ++pf) {
      const Vec p = gf.p_point(pf);
      if (std::abs(p[0]) > 0.5 + 1e-12) continue;
      const double w = we(t, p);
      for (int i = 2; i < gf.n_e - 2; ++i) {
        const double eb = gf.e(i) + w;
        if (eb < gr.e(2) || eb > gr.e(gr.n_e - 3)) continue;
        eq = std::max(eq, std::abs(full.at(sf, pf, i) - red.interpolate(sr, {}, eb)));
      }
    }
    const Grid& gm_grid = fine_red.grid();
    const std::size_t sm = fine_red.exact_slice(t);
    double mir = 0.0;
    for (int i = 2; i < gm_grid.n_e - 2; ++i) {
      const double eb = gm_grid.e(i);
      const double mirror = 2.0 * model.cap_lambda + gm * tau - eb;
      if (mirror < gm_grid.e(2) || mirror > gm_grid.e(gm_grid.n_e - 3)) continue;
      mir = std::max(mir, std::abs(fine_red.at(sm, 0, i) + fine_red.interpolate(sm, {}, mirror) - 1.0));
    }
    eq_sup = std::max(eq_sup, eq);
    mir_sup = std::max(mir_sup, mir);
    tab.rows.push_back({tau, eq, mir});
  }
  std::reverse(tab.rows.begin(), tab.rows.end());
  r.add("equivalence_sup", eq_sup);
  r.add("mirror_sup", mir_sup);
  r.add("min_time_to_go", min_tau);
  r.add("full_de", gf.de());
  r.add("mirror_de", fine_red.grid().de());
  r.plot = std::move(tab);
  r.verdict = eq_sup <= 3e-2 && mir_sup <= 2e-2 ? Verdict::pass : Verdict::fail;
  return r;
}

CheckResult Pipeline::State::characteristics() {
  CheckResult r;
  const double t0 = cfg.sim.t0;
  const double tau0 = T() - t0;
  const BurgersProfile prof{cone_slope(model), model.cap_lambda, T()};
  Table fan{{"t", "e0", "e"}, {}};
  int n_hit = 0, n_cone = 0;
  for (int k = 0; k <= 20; ++k) {
    const double x = -0.5 + 2.0 * k / 20.0;
    const double e0 = model.cap_lambda + x * prof.ell * tau0;
    if (x >= 0.0 && x <= 1.0) ++n_cone;
    for (int j = 0; j <= 50; ++j) {
      const double t = j == 50 ? T() : t0 + tau0 * j / 50.0;
      fan.rows.push_back({t, e0, characteristic(e0, t0, t, prof)});
    }
    if (std::abs(characteristic(e0, t0, T(), prof) - model.cap_lambda) <= 1e-12) ++n_hit;
  }
  r.add("n_lines", 21.0);
  r.add("n_cone_starts", n_cone);
  r.add("n_hitting_cap", n_hit);
  r.verdict = n_hit == n_cone ? Verdict::pass : Verdict::fail;
  r.plot = std::move(fan);
  return r;
}

ExperimentRecord run_scenario(const ScenarioConfig& cfg, const std::optional<fs::path>& out_dir) {
  ExperimentRecord rec;
  rec.scenario = cfg.scenario;
  rec.config_hash = cfg.hash();
  rec.seed = cfg.sim.seed;
  std::unique_ptr<Pipeline> pipe;
  try {
    pipe = std::make_unique<Pipeline>(cfg);
  } catch (const Error& e) {
    rec.error = e.what();
  }
  if (pipe) {
    CheckResult v = pipe->run("validate");
    const bool valid = v.verdict == Verdict::pass;
    rec.checks.push_back(std::move(v));
    if (!valid) {
      rec.error = "model fails validate_assumptions; run refused";
    } else {
      for (const auto& name : cfg.checks)
        if (name != "validate") rec.checks.push_back(pipe->run(name));
    }
  }
  if (out_dir) {
    write_atomic(*out_dir / "config.json", to_json(cfg) + "\n");
    rec.files.push_back("config.json");
    for (const auto& c : rec.checks) {
      if (!c.plot) continue;
      const std::string file = c.name + ".csv";
      write_atomic(*out_dir / file, to_csv(*c.plot));
      rec.files.push_back(file);
    }
    std::sort(rec.files.begin(), rec.files.end());
    write_atomic(*out_dir / "timings.json", to_json(rec.timings()));
    write_atomic(*out_dir / "summary.json", to_json(rec.summary()));
  }
  return rec;
}

Table emit_plot_data(const fs::path& out_dir, const std::string& check) {
  const FlatMap summary = read_flat_json(out_dir / "summary.json");
  if (!summary.count("check." + check + ".verdict")) throw Error("record has no check '" + check + "'");
  if (!summary.count("file." + check + ".csv")) throw Error("check '" + check + "' has no plot data");
  return read_csv(out_dir / (check + ".csv"));
}

SolveArtifacts solve_only(const ScenarioConfig& cfg, const fs::path& out_dir) {
  Pipeline::State s(cfg);
  SolveArtifacts a;
  const Grid g = s.coarse_grid();
  std::vector<double> times;
  for (int k = 0; k <= 4; ++k) times.push_back(g.t_nodes[(g.t_nodes.size() - 1) * k / 4]);
  SolveOptions o;
  o.store_times = times;
  o.threads = s.threads();
  const ValueField full = solve_mollified(s.model, g, s.tc, cfg.epsilon.at(0), o);
  auto dump = [&](const ValueField& f, const std::string& stem) {
    std::ostringstream bin;
    write_field(f, bin);
    write_atomic(out_dir / (stem + ".bin"), bin.str());
    std::ostringstream csv;
    write_slices_csv(f, f.times(), center_p(f.grid()), csv);
    write_atomic(out_dir / (stem + "_slices.csv"), csv.str());
    a.files.push_back(stem + ".bin");
    a.files.push_back(stem + "_slices.csv");
  };
  dump(full, "field_full");
  if (affine_family(s.model) && s.model.dim_p == 1) {
    const Grid gr = s.reduced_grid(g.t_nodes.front(), cfg.grid.reduced_de, 4);
    std::vector<double> rt;
    for (int k = 0; k <= 4; ++k) rt.push_back(gr.t_nodes[(gr.t_nodes.size() - 1) * k / 4]);
    dump(solve_reduced_1d(s.model, gr, s.tc, s.reduced_options(rt), cfg.epsilon.at(0)), "field_reduced");
  }
  return a;
}

SolveArtifacts simulate_only(const ScenarioConfig& cfg, const fs::path& out_dir) {
  Pipeline::State s(cfg);
  SolveArtifacts a;
  const PathEnsemble& ens = s.ensemble();
  Table t{{"path", "E_T", "Ebar_T", "Y_T", "P_T", "escaped"}, {}};
  t.rows.reserve(ens.size());
  for (std::size_t i = 0; i < ens.size(); ++i)
    t.rows.push_back({double(i), ens.E_T[i], ens.Ebar_T[i], ens.Y_T[i], ens.P_T[i][0], double(ens.escaped[i])});
  write_atomic(out_dir / "ensemble_terminal.csv", to_csv(t));
  const AtomCurve c = dirac_scan(ens, default_delta_ladder(s.T() - cfg.sim.t0));
  FlatMap m;
  m["scenario"] = cfg.scenario;
  m["config_hash"] = cfg.hash();
  m["n_paths"] = static_cast<long long>(ens.size());
  m["n_escaped"] = static_cast<long long>(ens.n_escaped);
  m["t0"] = ens.cfg.t0;
  m["e0"] = ens.cfg.e0;
  m["plateau"] = c.plateau;
  m["mean_E_T"] = mean(ens.E_T);
  m["mean_Y_T"] = mean(ens.Y_T);
  write_atomic(out_dir / "ensemble_summary.json", to_json(m));
  a.files = {"ensemble_summary.json", "ensemble_terminal.csv"};
  return a;
}

}  // namespace fbsde::lab

#pragma once

// Reproducible scenario programs over the closed loop: timed demand and
// supply events, per-agent forecast modes and parameter misestimation,
// summary metrics, parameter sweeps and the turnpike diagnostic.

#include "rhg/chain_model.hpp"
#include "rhg/rhg_policy.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>
#include <utility>
#include <vector>

namespace rhg {

/// Multiplies the base demand of `agents` on days [first_day, last_day].
struct DemandEvent {
  std::vector<std::size_t> agents;
  double factor = 1.0;
  std::size_t first_day = 0;
  std::size_t last_day = 0;
};

/// Multiplies the capacity of `supplier` on days [first_day, last_day].
struct SupplyEvent {
  std::size_t supplier = 0;
  double factor = 1.0;
  std::size_t first_day = 0;
  std::size_t last_day = 0;
};

/// Scales entry (row, col) of agent `agent`'s believed demand coefficients.
struct BeliefPerturbation {
  std::size_t agent = 0;
  std::size_t row = 0;
  std::size_t col = 0;
  double factor = 1.0;
};

struct Scenario {
  std::string name = "baseline";
  ChainParameters params;
  VectorXd base_demand;            ///< nominal w per manufacturer
  std::vector<AgentState> x0;
  std::size_t days = 30;
  std::vector<DemandEvent> demand_events;
  std::vector<SupplyEvent> supply_events;
  std::vector<ForecastMode> forecast;  ///< per agent; empty means all perfect
  std::vector<BeliefPerturbation> perturbations;
  bool observe_supply_cap = true;
  SolverSettings settings;
  bool record_plans = true;
  bool check_regularity = false;

  void validate() const {
    rhg::validate(params);
    const std::size_t n_m = params.n_m();
    if (days < 1) throw ParameterError("scenario '" + name + "': days must be >= 1");
    if (static_cast<std::size_t>(base_demand.size()) != n_m) throw DimensionError("scenario '" + name + "': base_demand needs n_m entries");
    if (x0.size() != n_m) throw DimensionError("scenario '" + name + "': initial_state needs n_m entries");
    if (!forecast.empty() && forecast.size() != n_m) throw DimensionError("scenario '" + name + "': forecast needs n_m entries");
    for (const auto& e : demand_events) {
      if (e.first_day > e.last_day || e.last_day >= days) throw ParameterError("scenario '" + name + "': demand event interval outside [0, days)");
      if (!(e.factor > 0.0)) throw ParameterError("scenario '" + name + "': demand event factor must be > 0");
      for (auto a : e.agents) {
        if (a >= n_m) throw DimensionError("scenario '" + name + "': demand event agent out of range");
      }
    }
    for (const auto& e : supply_events) {
      if (e.first_day > e.last_day || e.last_day >= days) throw ParameterError("scenario '" + name + "': supply event interval outside [0, days)");
      if (!(e.factor > 0.0 && e.factor <= 1.0)) throw ParameterError("scenario '" + name + "': supply event factor must be in (0, 1]");
      if (e.supplier >= params.n_s()) throw DimensionError("scenario '" + name + "': supply event supplier out of range");
    }
    for (const auto& p : perturbations) {
      if (p.agent >= n_m || p.row >= n_m || p.col >= n_m) throw DimensionError("scenario '" + name + "': belief perturbation index out of range");
      if (!(p.factor > 0.0)) throw ParameterError("scenario '" + name + "': belief perturbation factor must be > 0");
    }
  }
};

/// Realized base demand over days [0, T + N); events only act inside [0, T).
inline MatrixXd scenario_demand(const Scenario& s) {
  const std::size_t rows = s.days + s.params.horizon;
  MatrixXd w(static_cast<Eigen::Index>(rows), s.base_demand.size());
  for (std::size_t t = 0; t < rows; ++t) w.row(static_cast<Eigen::Index>(t)) = s.base_demand.transpose();
  for (const auto& e : s.demand_events) {
    for (std::size_t t = e.first_day; t <= e.last_day; ++t) {
      for (auto a : e.agents) w(static_cast<Eigen::Index>(t), static_cast<Eigen::Index>(a)) *= e.factor;
    }
  }
  return w;
}

inline MatrixXd scenario_supply_cap(const Scenario& s) {
  MatrixXd cap(static_cast<Eigen::Index>(s.days), static_cast<Eigen::Index>(s.params.n_s()));
  for (std::size_t sup = 0; sup < s.params.n_s(); ++sup) cap.col(static_cast<Eigen::Index>(sup)).setConstant(s.params.suppliers[sup].o_max);
  for (const auto& e : s.supply_events) {
    for (std::size_t t = e.first_day; t <= e.last_day; ++t) cap(static_cast<Eigen::Index>(t), static_cast<Eigen::Index>(e.supplier)) *= e.factor;
  }
  return cap;
}

inline ClosedLoopConfig make_closed_loop(const Scenario& s) {
  s.validate();
  ClosedLoopConfig cfg;
  cfg.true_params = s.params;
  cfg.w_true = scenario_demand(s);
  cfg.supply_cap = scenario_supply_cap(s);
  cfg.x0 = stack_states(s.x0);
  cfg.days = s.days;
  cfg.record_plans = s.record_plans;
  cfg.check_regularity = s.check_regularity;
  const std::size_t n_m = s.params.n_m();
  for (std::size_t v = 0; v < n_m; ++v) {
    AgentPolicy policy;
    policy.belief.theta_hat = s.params;
    policy.forecast = s.forecast.empty() ? ForecastMode::perfect : s.forecast[v];
    policy.observe_supply_cap = s.observe_supply_cap;
    policy.settings = s.settings;
    cfg.policies.push_back(std::move(policy));
  }
  for (const auto& p : s.perturbations) {
    cfg.policies[p.agent].belief.theta_hat.market.beta(static_cast<Eigen::Index>(p.row), static_cast<Eigen::Index>(p.col)) *= p.factor;
  }
  return cfg;
}

struct AgentMetrics {
  double cumulative_net_cash_flow = 0.0;
  double mean_price = 0.0;
  double max_price = 0.0;
  double min_inventory = 0.0;
  double max_inventory = 0.0;
  VectorXd total_orders;  ///< per supplier
  std::size_t rationed_days = 0;
  std::size_t fallback_days = 0;
  std::size_t negative_demand_days = 0;
  double relative_change = 0.0;  ///< % change in cumulative net cash flow vs baseline
};

struct MetricsSummary {
  std::vector<AgentMetrics> agents;
  std::string baseline;  ///< name of the run relative changes refer to
};

inline MetricsSummary compute_metrics(const ScenarioTrace& trace) {
  MetricsSummary m;
  const std::size_t n_m = trace.dims.n_m;
  const auto n_s = static_cast<Eigen::Index>(trace.dims.n_s);
  m.agents.resize(n_m);
  for (std::size_t v = 0; v < n_m; ++v) {
    AgentMetrics& a = m.agents[v];
    a.total_orders = VectorXd::Zero(n_s);
    a.min_inventory = std::numeric_limits<double>::infinity();
    a.max_inventory = -std::numeric_limits<double>::infinity();
    a.max_price = -std::numeric_limits<double>::infinity();
    for (const auto& day : trace.days) {
      const auto vi = static_cast<Eigen::Index>(v);
      a.cumulative_net_cash_flow += day.net_cash_flow(vi);
      a.mean_price += day.actions[v].price;
      a.max_price = std::max(a.max_price, day.actions[v].price);
      a.min_inventory = std::min(a.min_inventory, day.states[v].xi);
      a.max_inventory = std::max(a.max_inventory, day.states[v].xi);
      a.total_orders += day.actions[v].orders;
      if (std::any_of(day.rationed.begin(), day.rationed.end(), [](bool b) { return b; })) ++a.rationed_days;
      if (day.diagnostics[v].fallback) ++a.fallback_days;
      if (day.demand(vi) < 0.0) ++a.negative_demand_days;
    }
    a.mean_price /= static_cast<double>(trace.days.size());
  }
  return m;
}

inline double relative_change(double value, double baseline) {
  if (value == baseline) return 0.0;
  return 100.0 * (value - baseline) / std::abs(baseline);
}

/// Fills `relative_change` of `metrics` against `baseline`.
inline void apply_baseline(MetricsSummary& metrics, const MetricsSummary& baseline, const std::string& baseline_name) {
  if (metrics.agents.size() != baseline.agents.size()) throw DimensionError("apply_baseline: agent count mismatch");
  metrics.baseline = baseline_name;
  for (std::size_t v = 0; v < metrics.agents.size(); ++v) {
    metrics.agents[v].relative_change =
        relative_change(metrics.agents[v].cumulative_net_cash_flow, baseline.agents[v].cumulative_net_cash_flow);
  }
}

struct ScenarioResult {
  ScenarioTrace trace;
  MetricsSummary metrics;
};

inline ScenarioResult run_scenario(const Scenario& s) {
  ScenarioTrace trace = closed_loop_run(make_closed_loop(s));
  MetricsSummary metrics = compute_metrics(trace);
  return {std::move(trace), std::move(metrics)};
}

struct ForecastAsymmetryResult {
  MetricsSummary perfect_first;  ///< case (i): agent 0 perfect, others persistence
  MetricsSummary no_forecast;    ///< case (ii): all persistence
};

/// Runs `spike` twice: agent 0 with perfect preview and everyone else on
/// persistence, then everyone on persistence.
inline ForecastAsymmetryResult run_forecast_asymmetry(Scenario spike) {
  const std::size_t n_m = spike.params.n_m();
  ForecastAsymmetryResult out;
  spike.forecast.assign(n_m, ForecastMode::persistence);
  spike.name += "_no_forecast";
  out.no_forecast = run_scenario(spike).metrics;
  spike.forecast[0] = ForecastMode::perfect;
  spike.name += "_m1_preview";
  out.perfect_first = run_scenario(spike).metrics;
  apply_baseline(out.perfect_first, out.no_forecast, "no_forecast");
  return out;
}

struct SweepPoint {
  double factor = 1.0;
  VectorXd cumulative_net_cash_flow;
  VectorXd relative_change;  ///< % per agent vs exact belief
};

struct SweepTable {
  std::size_t agent = 1;
  std::size_t row = 1;
  std::size_t col = 0;
  std::vector<SweepPoint> points;
};

/// For each factor c, agent `agent` believes beta(row, col) is c times its
/// true value; all other beliefs are exact. Relative changes refer to the
/// run where every belief is exact.
inline SweepTable run_coupling_sweep(const Scenario& base, std::size_t agent, std::size_t row, std::size_t col,
                                     const std::vector<double>& factors) {
  SweepTable table{agent, row, col, {}};
  Scenario exact = base;
  exact.record_plans = false;
  exact.perturbations.clear();
  const MetricsSummary reference = run_scenario(exact).metrics;
  for (double c : factors) {
    if (!(c > 0.0)) throw ParameterError("run_coupling_sweep: factors must be > 0");
    SweepPoint pt;
    pt.factor = c;
    MetricsSummary m;
    if (c == 1.0) {
      m = reference;
    } else {
      Scenario s = exact;
      s.perturbations.push_back({agent, row, col, c});
      m = run_scenario(s).metrics;
    }
    apply_baseline(m, reference, "exact_belief");
    const auto n_m = static_cast<Eigen::Index>(m.agents.size());
    pt.cumulative_net_cash_flow.resize(n_m);
    pt.relative_change.resize(n_m);
    for (Eigen::Index v = 0; v < n_m; ++v) {
      pt.cumulative_net_cash_flow(v) = m.agents[static_cast<std::size_t>(v)].cumulative_net_cash_flow;
      pt.relative_change(v) = m.agents[static_cast<std::size_t>(v)].relative_change;
    }
    table.points.push_back(std::move(pt));
  }
  return table;
}

struct PlanTurnpike {
  std::size_t day = 0;
  std::size_t agent = 0;
  VectorXd plan;  ///< inventory xi_0..xi_N
  double level = 0.0;
  std::size_t entry = 0;
  std::size_t exit = 0;
  bool middle_within = false;
  bool detected = false;  ///< entry > 0, exit < N and middle third within band
};

struct TurnpikeReport {
  double eps = 1.0;
  std::vector<PlanTurnpike> plans;
  double fraction_detected = 0.0;
  double fraction_middle_within = 0.0;
};

/// Level = median of the middle third of the plan (stages [(N+1)/3,
/// 2(N+1)/3)); entry/exit = first/last stage within eps of the level.
inline PlanTurnpike analyze_plan(const Eigen::Ref<const VectorXd>& plan, double eps) {
  const auto len = static_cast<std::size_t>(plan.size());
  if (len < 2) throw DimensionError("analyze_plan: plan needs at least two stages");
  const std::size_t N = len - 1;
  const std::size_t lo = len / 3;
  const std::size_t hi = std::max(lo + 1, 2 * len / 3);
  std::vector<double> middle(plan.data() + lo, plan.data() + hi);
  std::sort(middle.begin(), middle.end());
  const std::size_t m = middle.size();
  PlanTurnpike pt;
  pt.plan = plan;
  pt.level = (m % 2 == 1) ? middle[m / 2] : 0.5 * (middle[m / 2 - 1] + middle[m / 2]);
  pt.entry = N;
  pt.exit = 0;
  bool any = false;
  for (std::size_t k = 0; k <= N; ++k) {
    if (std::abs(plan(static_cast<Eigen::Index>(k)) - pt.level) <= eps) {
      if (!any) pt.entry = k;
      pt.exit = k;
      any = true;
    }
  }
  pt.middle_within = true;
  for (std::size_t k = lo; k < hi; ++k) {
    if (std::abs(plan(static_cast<Eigen::Index>(k)) - pt.level) > eps) pt.middle_within = false;
  }
  pt.detected = any && pt.middle_within && pt.entry > 0 && pt.exit < N;
  return pt;
}

inline TurnpikeReport turnpike_analysis(const ScenarioTrace& trace, double eps) {
  if (!trace.has_plans()) throw DimensionError("turnpike_analysis: trace has no recorded open-loop plans");
  TurnpikeReport rep;
  rep.eps = eps;
  std::size_t detected = 0;
  std::size_t within = 0;
  for (std::size_t t = 0; t < trace.days.size(); ++t) {
    const auto& day = trace.days[t];
    for (std::size_t v = 0; v < day.planned_states.size(); ++v) {
      const VectorXd plan = day.planned_states[v].col(0);
      if (!plan.allFinite()) continue;  // fallback day, no plan
      PlanTurnpike pt = analyze_plan(plan, eps);
      pt.day = t;
      pt.agent = v;
      detected += pt.detected ? 1 : 0;
      within += pt.middle_within ? 1 : 0;
      rep.plans.push_back(std::move(pt));
    }
  }
  if (!rep.plans.empty()) {
    rep.fraction_detected = static_cast<double>(detected) / static_cast<double>(rep.plans.size());
    rep.fraction_middle_within = static_cast<double>(within) / static_cast<double>(rep.plans.size());
  }
  return rep;
}

/// Reference chain: three manufacturers, two suppliers, N = 15, safety stock
/// 25, warehouse capacity 50, x0 = (30, 0, 0), w = 10.
inline Scenario reference_scenario() {
  Scenario s;
  s.name = "baseline";
  s.params.market.beta.resize(3, 3);
  s.params.market.beta << 0.7, 0.3, 0.3,
                          0.3, 0.8, 0.3,
                          0.3, 0.3, 0.6;
  s.params.suppliers = {{1.0, 0.1, 40.0}, {1.5, 0.15, 40.0}};
  const double alpha[3] = {0.9, 0.7, 0.5};
  for (double a : alpha) s.params.manufacturers.push_back({a, 0.1, 25.0, 50.0});
  s.params.horizon = 15;
  s.base_demand = VectorXd::Constant(3, 10.0);
  s.x0.assign(3, AgentState{30.0, 0.0, 0.0});
  s.days = 30;
  return s;
}

/// Demand of manufacturers 1 and 2 doubled on days 10..18, no preview.
inline Scenario demand_spike_scenario() {
  Scenario s = reference_scenario();
  s.name = "demand_spike";
  s.demand_events.push_back({{0, 1}, 2.0, 10, 18});
  s.forecast.assign(3, ForecastMode::persistence);
  return s;
}

/// Capacity of supplier 1 cut by 70% on days 10..18.
inline Scenario supply_shock_scenario() {
  Scenario s = reference_scenario();
  s.name = "supply_shock";
  s.supply_events.push_back({0, 0.3, 10, 18});
  s.forecast.assign(3, ForecastMode::persistence);
  return s;
}

/// Two-manufacturer restriction of the reference chain.
inline Scenario two_manufacturer_scenario() {
  Scenario s = reference_scenario();
  s.name = "two_manufacturers";
  const MatrixXd beta = s.params.market.beta.topLeftCorner(2, 2);
  s.params.market.beta = beta;
  s.params.manufacturers.resize(2);
  s.base_demand = VectorXd::Constant(2, 10.0);
  s.x0.resize(2);
  return s;
}

}  // namespace rhg

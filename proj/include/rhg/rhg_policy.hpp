#pragma once

// Receding-horizon game policy and the closed-loop chain it drives. Every
// day each manufacturer builds the game it believes it is playing from the
// measured global state, solves for a variational equilibrium, and applies its
// own first-stage action. The true chain then advances with the true
// parameters and the realized base demand.

#include "rhg/avi_solver.hpp"
#include "rhg/chain_model.hpp"
#include "rhg/game_builder.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>
#include <string>
#include <utility>
#include <vector>

namespace rhg {

enum class ForecastMode {
  perfect,      ///< knows the realized base demand over the whole horizon
  persistence,  ///< assumes the latest realized base demand persists
};

inline const char* to_string(ForecastMode m) { return m == ForecastMode::perfect ? "perfect" : "persistence"; }

/// Forecast of every agent's base demand over [t, t+N). Prices are set before
/// day t's demand is realized, so persistence carries forward w_{t-1} (w_0 on
/// the first day). Rows of `w_true` beyond its end repeat the last row.
inline MatrixXd make_forecast(ForecastMode mode, const MatrixXd& w_true, std::size_t t, std::size_t horizon) {
  if (w_true.rows() == 0) throw DimensionError("make_forecast: empty demand series");
  const Eigen::Index last = w_true.rows() - 1;
  const auto row = [&](std::size_t day) { return std::min<Eigen::Index>(static_cast<Eigen::Index>(day), last); };
  MatrixXd w_hat(w_true.cols(), static_cast<Eigen::Index>(horizon));
  for (std::size_t k = 0; k < horizon; ++k) {
    const std::size_t day = mode == ForecastMode::perfect ? t + k : (t == 0 ? 0 : t - 1);
    w_hat.col(static_cast<Eigen::Index>(k)) = w_true.row(row(day)).transpose();
  }
  return w_hat;
}

struct AgentPolicy {
  AgentBelief belief;
  ForecastMode forecast = ForecastMode::perfect;
  /// Replace believed supplier capacities by today's actual capacity.
  bool observe_supply_cap = true;
  SolverSettings settings;
  bool warm_start = true;
  std::optional<std::pair<VectorXd, VectorXd>> warm_start_cache;
};

struct SolveDiagnostics {
  int iterations = 0;
  double residual = 0.0;
  KktResiduals kkt;
  SolveStatus status = SolveStatus::max_iterations;
  bool fallback = false;
  bool regularity_checked = false;
  bool licq_ok = false;
  bool second_order_ok = false;
};

/// Outcome of one agent's re-planning step.
struct PolicyOutput {
  AgentAction action;
  AviSolution solution;
  SolveDiagnostics diagnostics;
  MatrixXd planned_states;  ///< (N+1) x 3 own-state plan
  MatrixXd planned_inputs;  ///< N x (n_s+1) own-input plan
  std::vector<AgentAction> predicted_actions;  ///< stage-0 of every agent in the solved game
};

/// Stage blocks shifted one step forward, last stage duplicated; multipliers
/// follow their stage.
inline std::pair<VectorXd, VectorXd> shift_warm_start(const AviSolution& previous, const GameDims& dims) {
  if (previous.u.size() != dims.n_u() || previous.lambda.size() != dims.n_c()) {
    throw DimensionError("shift_warm_start: previous solution does not match the game dimensions");
  }
  const std::size_t N = dims.horizon;
  const Eigen::Index nu = dims.n_input();
  VectorXd u = previous.u;
  VectorXd lambda = previous.lambda;
  const auto next = [N](std::size_t k) { return std::min(k + 1, N - 1); };
  for (std::size_t v = 0; v < dims.n_m; ++v) {
    for (std::size_t k = 0; k < N; ++k) {
      u.segment(dims.input_offset(v, k), nu) = previous.u.segment(dims.input_offset(v, next(k)), nu);
      lambda.segment(dims.input_offset(v, k), nu) = previous.lambda.segment(dims.input_offset(v, next(k)), nu);
    }
    for (std::size_t k = 1; k <= N; ++k) {
      const std::size_t src = std::min(k + 1, N);
      lambda(dims.inventory_row(v, k, true)) = previous.lambda(dims.inventory_row(v, src, true));
      lambda(dims.inventory_row(v, k, false)) = previous.lambda(dims.inventory_row(v, src, false));
    }
  }
  for (std::size_t k = 0; k < N; ++k) {
    for (std::size_t s = 0; s < dims.n_s; ++s) lambda(dims.supply_row(k, s)) = previous.lambda(dims.supply_row(next(k), s));
  }
  return {u, lambda};
}

/// Solves the agent's private game at `x_t` and returns its first action.
/// The belief's forecast must already cover [t, t+N). On solver failure the
/// shifted previous plan (or zero orders and zero price) is applied and the
/// output is flagged.
///
/// `reuse`, when given, is a solution of this exact instance (same belief,
/// state and warm start) computed for another agent.
inline PolicyOutput policy_step(AgentPolicy& policy, std::size_t v, const Eigen::Ref<const VectorXd>& x_t,
                                bool check_regular = false, const AviSolution* reuse = nullptr) {
  const CondensedGame game = build_condensed_game(policy.belief, x_t);
  const AviProblem problem = AviProblem::from_game(game);

  PolicyOutput out;
  if (reuse) {
    out.solution = *reuse;
  } else {
    AviSolver solver(policy.settings);
    out.solution = solver.solve(problem, policy.warm_start ? policy.warm_start_cache : std::nullopt);
  }
  const AviSolution& sol = out.solution;
  out.diagnostics.iterations = sol.iterations;
  out.diagnostics.residual = sol.residual;
  out.diagnostics.kkt = sol.kkt;
  out.diagnostics.status = sol.status;

  const GameDims& dims = game.dims;
  if (sol.converged()) {
    out.action = AgentAction::from(game.first_action(sol.u, v).cwiseMax(0.0));
    for (std::size_t j = 0; j < dims.n_m; ++j) {
      out.predicted_actions.push_back(AgentAction::from(game.first_action(sol.u, j).cwiseMax(0.0)));
    }
    out.planned_states = game.predicted_states(sol.u, v);
    out.planned_inputs = Eigen::Map<const MatrixXd>(sol.u.data() + dims.agent_offset(v), dims.n_input(),
                                                    static_cast<Eigen::Index>(dims.horizon))
                             .transpose();
    if (check_regular) {
      const RegularityReport rep = check_regularity(problem, sol, std::sqrt(policy.settings.tol));
      out.diagnostics.regularity_checked = true;
      out.diagnostics.licq_ok = rep.licq_ok;
      out.diagnostics.second_order_ok = rep.second_order_ok;
    }
    policy.warm_start_cache = shift_warm_start(sol, dims);
    return out;
  }

  out.diagnostics.fallback = true;
  if (policy.warm_start_cache) {
    // The cache already holds the previous plan shifted by one day.
    const VectorXd& u_prev = policy.warm_start_cache->first;
    out.action = AgentAction::from(u_prev.segment(dims.input_offset(v, 0), dims.n_input()).cwiseMax(0.0));
    AviSolution previous;
    previous.u = policy.warm_start_cache->first;
    previous.lambda = policy.warm_start_cache->second;
    policy.warm_start_cache = shift_warm_start(previous, dims);
  } else {
    out.action = AgentAction{VectorXd::Zero(static_cast<Eigen::Index>(dims.n_s)), 0.0};
  }
  out.planned_states = MatrixXd::Constant(static_cast<Eigen::Index>(dims.horizon) + 1, 3, std::numeric_limits<double>::quiet_NaN());
  out.planned_inputs = MatrixXd::Constant(static_cast<Eigen::Index>(dims.horizon), dims.n_input(), std::numeric_limits<double>::quiet_NaN());
  return out;
}

struct ClosedLoopConfig {
  ChainParameters true_params;
  std::vector<AgentPolicy> policies;
  /// Realized base demand, one row per day (>= T rows; extra rows serve
  /// perfect forecasts beyond the last simulated day).
  MatrixXd w_true;
  /// True supplier capacities per day (T x n_s); empty means constant at
  /// `true_params`.
  MatrixXd supply_cap;
  VectorXd x0;
  std::size_t days = 1;
  bool record_plans = true;
  bool check_regularity = false;
};

struct DayRecord {
  std::vector<AgentState> states;
  std::vector<AgentAction> actions;  ///< applied, after rationing
  VectorXd base_demand;
  VectorXd demand;
  VectorXd total_orders;  ///< per supplier
  VectorXd wholesale_price;
  VectorXd supply_cap;
  std::vector<bool> rationed;  ///< per supplier
  VectorXd stage_cost;
  VectorXd net_cash_flow;
  std::vector<SolveDiagnostics> diagnostics;
  std::vector<MatrixXd> planned_states;  ///< per agent, (N+1) x 3
  std::vector<MatrixXd> planned_inputs;  ///< per agent, N x (n_s+1)
  std::vector<std::vector<AgentAction>> predicted_actions;  ///< per agent, its predicted stage-0 of all agents
};

struct ScenarioTrace {
  GameDims dims;
  std::vector<DayRecord> days;
  VectorXd final_state;

  bool has_plans() const { return !days.empty() && !days.front().planned_states.empty(); }
};

namespace detail {

inline bool same_warm_start(const std::optional<std::pair<VectorXd, VectorXd>>& a,
                            const std::optional<std::pair<VectorXd, VectorXd>>& b) {
  if (a.has_value() != b.has_value()) return false;
  if (!a) return true;
  return a->first == b->first && a->second == b->second;
}

inline bool same_settings(const SolverSettings& a, const SolverSettings& b) {
  return a.tol == b.tol && a.max_iter == b.max_iter && a.smoothing_init == b.smoothing_init &&
         a.smoothing_decay == b.smoothing_decay && a.regularization == b.regularization &&
         a.linesearch_factor == b.linesearch_factor && a.min_step == b.min_step && a.armijo == b.armijo;
}

}  // namespace detail

inline ScenarioTrace closed_loop_run(ClosedLoopConfig config) {
  const ChainParameters& truth = config.true_params;
  validate(truth);
  const std::size_t n_m = truth.n_m();
  const std::size_t n_s = truth.n_s();
  if (config.days < 1) throw DimensionError("closed_loop_run: need at least one day");
  if (config.policies.size() != n_m) throw DimensionError("closed_loop_run: need one policy per manufacturer");
  if (config.x0.size() != 3 * static_cast<Eigen::Index>(n_m)) throw DimensionError("closed_loop_run: x0 must have 3*n_m entries");
  if (config.w_true.cols() != static_cast<Eigen::Index>(n_m) || config.w_true.rows() < static_cast<Eigen::Index>(config.days)) {
    throw DimensionError("closed_loop_run: base demand must have >= T rows and n_m columns");
  }
  if (config.supply_cap.size() == 0) {
    config.supply_cap.resize(static_cast<Eigen::Index>(config.days), static_cast<Eigen::Index>(n_s));
    for (std::size_t s = 0; s < n_s; ++s) config.supply_cap.col(static_cast<Eigen::Index>(s)).setConstant(truth.suppliers[s].o_max);
  }
  if (config.supply_cap.rows() < static_cast<Eigen::Index>(config.days) || config.supply_cap.cols() != static_cast<Eigen::Index>(n_s)) {
    throw DimensionError("closed_loop_run: supply caps must be T x n_s");
  }
  for (std::size_t v = 0; v < n_m; ++v) {
    const double xi = config.x0(3 * static_cast<Eigen::Index>(v));
    if (xi < 0.0 || xi > truth.manufacturers[v].xi_max) {
      throw ParameterError("closed_loop_run: initial inventory of manufacturer " + std::to_string(v) + " outside [0, xi_max]");
    }
    const auto& th = config.policies[v].belief.theta_hat;
    if (th.n_m() != n_m || th.n_s() != n_s) {
      throw DimensionError("closed_loop_run: belief of manufacturer " + std::to_string(v) + " has wrong chain dimensions");
    }
  }

  const GlobalLti lti = build_global_lti(truth);
  ScenarioTrace trace;
  trace.dims = GameDims::of(config.policies.front().belief.theta_hat);
  trace.days.reserve(config.days);
  VectorXd x = config.x0;

  for (std::size_t t = 0; t < config.days; ++t) {
    DayRecord day;
    day.states = unstack_states(x);
    day.base_demand = config.w_true.row(static_cast<Eigen::Index>(t)).transpose();
    day.supply_cap = config.supply_cap.row(static_cast<Eigen::Index>(t)).transpose();

    std::vector<PolicyOutput> outputs;
    outputs.reserve(n_m);
    std::vector<std::optional<std::pair<VectorXd, VectorXd>>> warm_before;
    warm_before.reserve(n_m);
    for (std::size_t v = 0; v < n_m; ++v) {
      AgentPolicy& policy = config.policies[v];
      policy.belief.w_hat = make_forecast(policy.forecast, config.w_true, t, policy.belief.theta_hat.horizon);
      if (policy.observe_supply_cap) {
        for (std::size_t s = 0; s < n_s; ++s) policy.belief.theta_hat.suppliers[s].o_max = day.supply_cap(static_cast<Eigen::Index>(s));
      }
      // Agents holding bitwise-identical beliefs and warm starts solve the
      // same instance; reuse the result.
      const AviSolution* reuse = nullptr;
      for (std::size_t j = 0; j < v; ++j) {
        const AgentPolicy& other = config.policies[j];
        if (other.belief.theta_hat == policy.belief.theta_hat && other.belief.w_hat == policy.belief.w_hat &&
            detail::same_settings(other.settings, policy.settings) && other.warm_start == policy.warm_start &&
            detail::same_warm_start(warm_before[j], policy.warm_start_cache)) {
          reuse = &outputs[j].solution;
          break;
        }
      }
      warm_before.push_back(policy.warm_start_cache);
      outputs.push_back(policy_step(policy, v, x, config.check_regularity, reuse));
    }

    // Rationing when beliefs disagree about who orders what.
    std::vector<AgentAction> applied;
    applied.reserve(n_m);
    for (const auto& o : outputs) applied.push_back(o.action);
    day.total_orders = VectorXd::Zero(static_cast<Eigen::Index>(n_s));
    day.rationed.assign(n_s, false);
    for (std::size_t s = 0; s < n_s; ++s) {
      double total = 0.0;
      for (const auto& a : applied) total += a.orders(static_cast<Eigen::Index>(s));
      const double cap = day.supply_cap(static_cast<Eigen::Index>(s));
      if (total > cap + 1e-7 * std::max(1.0, cap)) {
        const double scale = cap / total;
        for (auto& a : applied) a.orders(static_cast<Eigen::Index>(s)) *= scale;
        day.rationed[s] = true;
        total = 0.0;
        for (const auto& a : applied) total += a.orders(static_cast<Eigen::Index>(s));
      }
      day.total_orders(static_cast<Eigen::Index>(s)) = total;
    }

    ChainParameters today = truth;
    for (std::size_t s = 0; s < n_s; ++s) today.suppliers[s].o_max = day.supply_cap(static_cast<Eigen::Index>(s));
    day.wholesale_price.resize(static_cast<Eigen::Index>(n_s));
    for (std::size_t s = 0; s < n_s; ++s) {
      day.wholesale_price(static_cast<Eigen::Index>(s)) = wholesale_price(today.suppliers[s], day.total_orders(static_cast<Eigen::Index>(s)));
    }
    VectorXd prices(static_cast<Eigen::Index>(n_m));
    for (std::size_t v = 0; v < n_m; ++v) prices(static_cast<Eigen::Index>(v)) = applied[v].price;
    day.demand.resize(static_cast<Eigen::Index>(n_m));
    day.stage_cost.resize(static_cast<Eigen::Index>(n_m));
    day.net_cash_flow.resize(static_cast<Eigen::Index>(n_m));
    for (std::size_t v = 0; v < n_m; ++v) {
      const auto vi = static_cast<Eigen::Index>(v);
      day.demand(vi) = demand(truth.market, v, prices, day.base_demand(vi));
      day.net_cash_flow(vi) = net_cash_flow(today, v, applied, day.base_demand(vi));
      day.stage_cost(vi) = stage_cost(today, v, day.states[v], applied, day.base_demand(vi));
    }

    for (auto& o : outputs) {
      day.diagnostics.push_back(o.diagnostics);
      day.predicted_actions.push_back(std::move(o.predicted_actions));
      if (config.record_plans) {
        day.planned_states.push_back(std::move(o.planned_states));
        day.planned_inputs.push_back(std::move(o.planned_inputs));
      }
    }
    day.actions = applied;

    VectorXd u(static_cast<Eigen::Index>(n_m * (n_s + 1)));
    for (std::size_t v = 0; v < n_m; ++v) u.segment(static_cast<Eigen::Index>(v * (n_s + 1)), static_cast<Eigen::Index>(n_s + 1)) = applied[v].vec();
    x = lti_step(lti, x, u, day.base_demand);
    trace.days.push_back(std::move(day));
  }
  trace.final_state = x;
  return trace;
}

}  // namespace rhg

#pragma once

// Physical and economic primitives of a single-product supply chain with
// n_s suppliers and n_m manufacturers competing in one market: linear demand,
// affine wholesale price, inventory balance with a one-day production delay,
// the manufacturers' stage cost and the per-agent/global LTI models.

#include <Eigen/Dense>

#include <cstddef>
#include <stdexcept>
#include <string>
#include <vector>

namespace rhg {

using Eigen::MatrixXd;
using Eigen::VectorXd;

/// Raised when vector/matrix sizes or agent indices do not match the chain.
class DimensionError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Raised when a parameter violates a modelling invariant.
class ParameterError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

struct MarketParams {
  /// Row v holds (beta^{v1}, ..., beta^{v n_m}); beta^{vv} is own-price
  /// elasticity, off-diagonals are cross-price coupling.
  MatrixXd beta;

  std::size_t num_manufacturers() const { return static_cast<std::size_t>(beta.rows()); }
};

struct SupplierParams {
  double rho0 = 0.0;   ///< base wholesale price
  double rho1 = 0.0;   ///< price slope in aggregate orders
  double o_max = 0.0;  ///< daily capacity
};

struct ManufacturerParams {
  double alpha = 1.0;      ///< inventory retention per day, in (0, 1]
  double gamma = 0.0;      ///< safety-stock weight
  double xi_safety = 0.0;  ///< reference inventory
  double xi_max = 0.0;     ///< warehouse capacity
};

struct ChainParameters {
  MarketParams market;
  std::vector<SupplierParams> suppliers;
  std::vector<ManufacturerParams> manufacturers;
  std::size_t horizon = 1;

  std::size_t n_m() const { return manufacturers.size(); }
  std::size_t n_s() const { return suppliers.size(); }
  /// Input width of one agent at one stage: n_s orders plus one price.
  std::size_t n_input() const { return suppliers.size() + 1; }

  bool operator==(const ChainParameters& other) const {
    if (horizon != other.horizon || n_m() != other.n_m() || n_s() != other.n_s()) return false;
    if (market.beta != other.market.beta) return false;
    for (std::size_t s = 0; s < n_s(); ++s) {
      const auto& a = suppliers[s];
      const auto& b = other.suppliers[s];
      if (a.rho0 != b.rho0 || a.rho1 != b.rho1 || a.o_max != b.o_max) return false;
    }
    for (std::size_t v = 0; v < n_m(); ++v) {
      const auto& a = manufacturers[v];
      const auto& b = other.manufacturers[v];
      if (a.alpha != b.alpha || a.gamma != b.gamma || a.xi_safety != b.xi_safety ||
          a.xi_max != b.xi_max) {
        return false;
      }
    }
    return true;
  }
};

/// x^v = (inventory, previous-day production, previous-day demand).
struct AgentState {
  double xi = 0.0;
  double o_prev = 0.0;
  double d_prev = 0.0;

  Eigen::Vector3d vec() const { return {xi, o_prev, d_prev}; }
  static AgentState from(const Eigen::Ref<const Eigen::Vector3d>& x) { return {x(0), x(1), x(2)}; }
};

/// u^v = (o^{v1}, ..., o^{v n_s}, p^v).
struct AgentAction {
  VectorXd orders;
  double price = 0.0;

  double production() const {
    double total = 0.0;
    for (Eigen::Index s = 0; s < orders.size(); ++s) total += orders(s);
    return total;
  }
  VectorXd vec() const {
    VectorXd u(orders.size() + 1);
    u << orders, price;
    return u;
  }
  static AgentAction from(const Eigen::Ref<const VectorXd>& u) {
    return {u.head(u.size() - 1), u(u.size() - 1)};
  }
};

struct AgentLti {
  Eigen::Matrix3d A;
  MatrixXd B_self;                ///< 3 x (n_s+1)
  std::vector<MatrixXd> B_cross;  ///< B^{vj} for all j; entry v is zero, use B_self
  Eigen::Vector3d D;

  /// B^{vj} including the diagonal block.
  const MatrixXd& B(std::size_t v, std::size_t j) const { return j == v ? B_self : B_cross[j]; }
};

struct GlobalLti {
  MatrixXd A;  ///< 3n_m x 3n_m
  MatrixXd B;  ///< 3n_m x (n_s+1)n_m
  MatrixXd D;  ///< 3n_m x n_m
};

/// Throws ParameterError naming the first violated invariant. The rho1 >= 0
/// convexity requirement is not checked here; see `check_convexity`.
inline void validate(const ChainParameters& params) {
  const std::size_t n_m = params.n_m();
  if (n_m == 0) throw ParameterError("chain needs at least one manufacturer");
  if (params.n_s() == 0) throw ParameterError("chain needs at least one supplier");
  if (params.horizon < 1) throw ParameterError("horizon must be >= 1");
  const auto& beta = params.market.beta;
  if (static_cast<std::size_t>(beta.rows()) != n_m || static_cast<std::size_t>(beta.cols()) != n_m) {
    throw DimensionError("beta must be n_m x n_m (" + std::to_string(n_m) + "x" + std::to_string(n_m) + ")");
  }
  for (std::size_t v = 0; v < n_m; ++v) {
    for (std::size_t j = 0; j < n_m; ++j) {
      if (!(beta(v, j) >= 0.0)) {
        throw ParameterError("beta[" + std::to_string(v) + "][" + std::to_string(j) + "] must be >= 0");
      }
    }
    if (!(beta(v, v) > 0.0)) {
      throw ParameterError("beta[" + std::to_string(v) + "][" + std::to_string(v) + "] must be > 0");
    }
  }
  for (std::size_t s = 0; s < params.n_s(); ++s) {
    const auto& sp = params.suppliers[s];
    if (!(sp.rho0 >= 0.0)) throw ParameterError("supplier " + std::to_string(s) + ": rho0 must be >= 0");
    if (!(sp.o_max > 0.0)) throw ParameterError("supplier " + std::to_string(s) + ": o_max must be > 0");
  }
  for (std::size_t v = 0; v < n_m; ++v) {
    const auto& m = params.manufacturers[v];
    const std::string who = "manufacturer " + std::to_string(v) + ": ";
    if (!(m.alpha > 0.0 && m.alpha <= 1.0)) throw ParameterError(who + "alpha must be in (0, 1]");
    if (!(m.gamma > 0.0)) throw ParameterError(who + "gamma must be > 0");
    if (!(m.xi_max > 0.0)) throw ParameterError(who + "xi_max must be > 0");
    if (!(m.xi_safety >= 0.0 && m.xi_safety <= m.xi_max)) {
      throw ParameterError(who + "xi_safety must be in [0, xi_max]");
    }
  }
}

/// The per-agent costs are convex in the agent's own decisions only when every
/// supplier's price slope is nonnegative.
inline void check_convexity(const ChainParameters& params) {
  for (std::size_t s = 0; s < params.n_s(); ++s) {
    if (params.suppliers[s].rho1 < 0.0) {
      throw ParameterError("supplier " + std::to_string(s) +
                           ": rho1 < 0 violates the convexity requirement (rho1 >= 0)");
    }
  }
}

/// Demand faced by manufacturer v. Not clipped at zero.
inline double demand(const MarketParams& market, std::size_t v, const Eigen::Ref<const VectorXd>& prices,
                     double base_demand) {
  const auto n_m = market.num_manufacturers();
  if (static_cast<std::size_t>(prices.size()) != n_m) {
    throw DimensionError("demand: expected " + std::to_string(n_m) + " prices, got " +
                         std::to_string(prices.size()));
  }
  if (v >= n_m) throw DimensionError("demand: agent index out of range");
  // Accumulated in agent order, then the base term, as a row of the LTI.
  double d = 0.0;
  for (std::size_t j = 0; j < n_m; ++j) {
    const double b = market.beta(static_cast<Eigen::Index>(v), static_cast<Eigen::Index>(j));
    d += (j == v ? -b : b) * prices(static_cast<Eigen::Index>(j));
  }
  return d + base_demand;
}

inline double wholesale_price(const SupplierParams& supplier, double total_orders) {
  return supplier.rho0 + supplier.rho1 * total_orders;
}

/// Raw inventory balance; bounds are the policy's concern.
inline double step_inventory(const ManufacturerParams& m, const AgentState& state) {
  return m.alpha * state.xi + state.o_prev - state.d_prev;
}

/// Net cash flow of agent v: revenue minus raw-material spend.
inline double net_cash_flow(const ChainParameters& params, std::size_t v, const std::vector<AgentAction>& actions,
                            double base_demand) {
  const std::size_t n_m = params.n_m();
  if (actions.size() != n_m) throw DimensionError("net_cash_flow: need one action per manufacturer");
  VectorXd prices(n_m);
  for (std::size_t j = 0; j < n_m; ++j) prices(j) = actions[j].price;
  const double revenue = actions[v].price * demand(params.market, v, prices, base_demand);
  double spend = 0.0;
  for (std::size_t s = 0; s < params.n_s(); ++s) {
    double total = 0.0;
    for (const auto& a : actions) total += a.orders(s);
    spend += wholesale_price(params.suppliers[s], total) * actions[v].orders(s);
  }
  return revenue - spend;
}

/// Safety-stock penalty minus net cash flow.
inline double stage_cost(const ChainParameters& params, std::size_t v, const AgentState& state,
                         const std::vector<AgentAction>& actions, double base_demand) {
  if (v >= params.n_m()) throw DimensionError("stage_cost: agent index out of range");
  const auto& m = params.manufacturers[v];
  const double dev = state.xi - m.xi_safety;
  return m.gamma * dev * dev - net_cash_flow(params, v, actions, base_demand);
}

inline AgentLti build_agent_lti(const ChainParameters& params, std::size_t v) {
  const std::size_t n_m = params.n_m();
  const std::size_t n_s = params.n_s();
  if (v >= n_m) throw DimensionError("build_agent_lti: agent index out of range");
  const auto nu = static_cast<Eigen::Index>(n_s + 1);

  AgentLti lti;
  lti.A.setZero();
  lti.A(0, 0) = params.manufacturers[v].alpha;
  lti.A(0, 1) = 1.0;
  lti.A(0, 2) = -1.0;

  lti.B_self = MatrixXd::Zero(3, nu);
  lti.B_self.row(1).head(static_cast<Eigen::Index>(n_s)).setOnes();
  lti.B_self(2, nu - 1) = -params.market.beta(v, v);

  lti.B_cross.assign(n_m, MatrixXd::Zero(3, nu));
  for (std::size_t j = 0; j < n_m; ++j) {
    if (j != v) lti.B_cross[j](2, nu - 1) = params.market.beta(v, j);
  }
  lti.D = Eigen::Vector3d(0.0, 0.0, 1.0);
  return lti;
}

inline GlobalLti build_global_lti(const ChainParameters& params) {
  const auto n_m = static_cast<Eigen::Index>(params.n_m());
  const auto nu = static_cast<Eigen::Index>(params.n_input());
  GlobalLti g{MatrixXd::Zero(3 * n_m, 3 * n_m), MatrixXd::Zero(3 * n_m, nu * n_m), MatrixXd::Zero(3 * n_m, n_m)};
  for (Eigen::Index v = 0; v < n_m; ++v) {
    const AgentLti lti = build_agent_lti(params, static_cast<std::size_t>(v));
    g.A.block<3, 3>(3 * v, 3 * v) = lti.A;
    for (Eigen::Index j = 0; j < n_m; ++j) {
      g.B.block(3 * v, nu * j, 3, nu) = lti.B(static_cast<std::size_t>(v), static_cast<std::size_t>(j));
    }
    g.D.block<3, 1>(3 * v, v) = lti.D;
  }
  return g;
}

/// x+ = A x + B u + D w, each row accumulated left to right over the
/// columns of A, B, D so the result is reproducible to the last bit.
inline VectorXd lti_step(const GlobalLti& g, const Eigen::Ref<const VectorXd>& x, const Eigen::Ref<const VectorXd>& u,
                         const Eigen::Ref<const VectorXd>& w) {
  if (x.size() != g.A.cols() || u.size() != g.B.cols() || w.size() != g.D.cols()) {
    throw DimensionError("lti_step: dimension mismatch");
  }
  VectorXd next(g.A.rows());
  for (Eigen::Index i = 0; i < g.A.rows(); ++i) {
    double acc = 0.0;
    for (Eigen::Index c = 0; c < g.A.cols(); ++c) acc += g.A(i, c) * x(c);
    for (Eigen::Index c = 0; c < g.B.cols(); ++c) acc += g.B(i, c) * u(c);
    for (Eigen::Index c = 0; c < g.D.cols(); ++c) acc += g.D(i, c) * w(c);
    next(i) = acc;
  }
  return next;
}

/// Stacked global state (x^1, ..., x^{n_m}) from per-agent states.
inline VectorXd stack_states(const std::vector<AgentState>& states) {
  VectorXd x(3 * static_cast<Eigen::Index>(states.size()));
  for (std::size_t v = 0; v < states.size(); ++v) x.segment<3>(3 * static_cast<Eigen::Index>(v)) = states[v].vec();
  return x;
}

inline std::vector<AgentState> unstack_states(const Eigen::Ref<const VectorXd>& x) {
  std::vector<AgentState> states(static_cast<std::size_t>(x.size() / 3));
  for (std::size_t v = 0; v < states.size(); ++v) {
    states[v] = AgentState::from(x.segment<3>(3 * static_cast<Eigen::Index>(v)));
  }
  return states;
}

/// One day of the chain evaluated from the scalar model maps rather than the
/// LTI matrices: inventory balance, production sum and realized demand.
inline std::vector<AgentState> step_chain(const ChainParameters& params, const std::vector<AgentState>& states,
                                          const std::vector<AgentAction>& actions,
                                          const Eigen::Ref<const VectorXd>& base_demand) {
  const std::size_t n_m = params.n_m();
  if (states.size() != n_m || actions.size() != n_m || static_cast<std::size_t>(base_demand.size()) != n_m) {
    throw DimensionError("step_chain: inconsistent agent counts");
  }
  VectorXd prices(n_m);
  for (std::size_t j = 0; j < n_m; ++j) prices(j) = actions[j].price;
  std::vector<AgentState> next(n_m);
  for (std::size_t v = 0; v < n_m; ++v) {
    next[v].xi = step_inventory(params.manufacturers[v], states[v]);
    next[v].o_prev = actions[v].production();
    next[v].d_prev = demand(params.market, v, prices, base_demand(static_cast<Eigen::Index>(v)));
  }
  return next;
}

}  // namespace rhg

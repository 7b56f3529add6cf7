#pragma once

// Condensation of the coupled N-stage optimal control problems into a
// quadratic game over the stacked input sequence u = (u^1, ..., u^{n_m}),
// u^v = (u^v_0, ..., u^v_{N-1}). Exposes the pseudo-gradient Hu + f, the
// joint constraints Gu <= g and, for reporting and verification, each agent's
// full quadratic cost.

#include "rhg/chain_model.hpp"

#include <Eigen/Dense>

#include <cstddef>
#include <vector>

namespace rhg {

/// Index arithmetic shared by the game, the solver warm start and the policy.
struct GameDims {
  std::size_t n_m = 0;
  std::size_t n_s = 0;
  std::size_t horizon = 0;

  static GameDims of(const ChainParameters& p) { return {p.n_m(), p.n_s(), p.horizon}; }

  Eigen::Index n_input() const { return static_cast<Eigen::Index>(n_s + 1); }
  Eigen::Index agent_width() const { return static_cast<Eigen::Index>(horizon) * n_input(); }
  Eigen::Index n_u() const { return static_cast<Eigen::Index>(n_m) * agent_width(); }

  Eigen::Index rows_nonneg() const { return n_u(); }
  Eigen::Index rows_inventory() const { return 2 * static_cast<Eigen::Index>(horizon * n_m); }
  Eigen::Index rows_supply() const { return static_cast<Eigen::Index>(horizon * n_s); }
  Eigen::Index n_c() const { return rows_nonneg() + rows_inventory() + rows_supply(); }

  /// Offset of u^v_k in the stacked input.
  Eigen::Index input_offset(std::size_t v, std::size_t k) const {
    return static_cast<Eigen::Index>(v) * agent_width() + static_cast<Eigen::Index>(k) * n_input();
  }
  Eigen::Index agent_offset(std::size_t v) const { return static_cast<Eigen::Index>(v) * agent_width(); }

  /// Row of the upper (upper=true) or lower inventory bound on xi^v_k, k in [1, N].
  Eigen::Index inventory_row(std::size_t v, std::size_t k, bool upper) const {
    return rows_nonneg() + 2 * static_cast<Eigen::Index>(v * horizon + (k - 1)) + (upper ? 0 : 1);
  }
  /// Row of the capacity constraint for supplier s at stage k.
  Eigen::Index supply_row(std::size_t k, std::size_t s) const {
    return rows_nonneg() + rows_inventory() + static_cast<Eigen::Index>(k * n_s + s);
  }
};

/// Stacked responses over stages 0..N of one agent's state:
/// X^v = A_tilde x^v_0 + sum_j B_tilde[j] u^j + D_tilde w^v.
struct PredictionMatrices {
  MatrixXd A_tilde;                ///< 3(N+1) x 3
  std::vector<MatrixXd> B_tilde;   ///< per source agent j: 3(N+1) x N(n_s+1)
  MatrixXd D_tilde;                ///< 3(N+1) x N
};

inline PredictionMatrices build_prediction(const AgentLti& lti, std::size_t v, std::size_t horizon) {
  if (horizon < 1) throw DimensionError("build_prediction: horizon must be >= 1");
  const auto N = static_cast<Eigen::Index>(horizon);
  const auto n_m = lti.B_cross.size();
  const Eigen::Index nu = lti.B_self.cols();

  // Powers A^0..A^N.
  std::vector<Eigen::Matrix3d> powers(horizon + 1);
  powers[0].setIdentity();
  for (std::size_t k = 1; k <= horizon; ++k) powers[k] = lti.A * powers[k - 1];

  PredictionMatrices pm;
  pm.A_tilde.resize(3 * (N + 1), 3);
  for (Eigen::Index k = 0; k <= N; ++k) pm.A_tilde.block<3, 3>(3 * k, 0) = powers[static_cast<std::size_t>(k)];

  pm.B_tilde.assign(n_m, MatrixXd::Zero(3 * (N + 1), N * nu));
  pm.D_tilde = MatrixXd::Zero(3 * (N + 1), N);
  for (Eigen::Index k = 1; k <= N; ++k) {
    for (Eigen::Index i = 0; i < k; ++i) {
      const Eigen::Matrix3d& Ap = powers[static_cast<std::size_t>(k - 1 - i)];
      for (std::size_t j = 0; j < n_m; ++j) {
        pm.B_tilde[j].block(3 * k, nu * i, 3, nu) = Ap * lti.B(v, j);
      }
      pm.D_tilde.block<3, 1>(3 * k, i) = Ap * lti.D;
    }
  }
  return pm;
}

/// Agent v's private view: parameter estimates and base-demand forecasts
/// for every agent over the horizon (row j = forecast for agent j).
struct AgentBelief {
  ChainParameters theta_hat;
  MatrixXd w_hat;  ///< n_m x N
};

/// Full quadratic cost of one agent as a function of the stacked input:
/// J(u) = 0.5 u'Pu + c'u + constant.
struct AgentCost {
  MatrixXd P;
  VectorXd c;
  double constant = 0.0;

  double operator()(const Eigen::Ref<const VectorXd>& u) const { return 0.5 * u.dot(P * u) + c.dot(u) + constant; }
};

struct CondensedGame {
  GameDims dims;
  MatrixXd H;   ///< pseudo-gradient matrix, H1 + H2, not symmetric in general
  MatrixXd H1;  ///< market and wholesale-price part
  MatrixXd H2;  ///< safety-stock part
  VectorXd f;
  MatrixXd G;
  VectorXd g;
  std::vector<AgentCost> costs;
  std::vector<PredictionMatrices> predictions;
  VectorXd x0;  ///< global initial state the game was built at
  MatrixXd w;   ///< n_m x N forecast used

  /// Psi^v u: stage-0 action of agent v.
  VectorXd first_action(const Eigen::Ref<const VectorXd>& u, std::size_t v) const {
    return u.segment(dims.input_offset(v, 0), dims.n_input());
  }
  /// Planned state trajectory x^v_0..x^v_N (rows) of agent v under u.
  MatrixXd predicted_states(const Eigen::Ref<const VectorXd>& u, std::size_t v) const;
};

namespace detail {

/// Rows of X^v selecting inventory at stages 0..N-1, the stages that carry
/// a stage cost.
inline MatrixXd select_costed_inventory(const MatrixXd& stacked, std::size_t horizon) {
  const auto N = static_cast<Eigen::Index>(horizon);
  MatrixXd out(N, stacked.cols());
  for (Eigen::Index k = 0; k < N; ++k) out.row(k) = stacked.row(3 * k);
  return out;
}

inline VectorXd free_response(const PredictionMatrices& pm, const Eigen::Ref<const Eigen::Vector3d>& x0,
                              const Eigen::Ref<const VectorXd>& w) {
  return pm.A_tilde * x0 + pm.D_tilde * w;
}

}  // namespace detail

inline MatrixXd CondensedGame::predicted_states(const Eigen::Ref<const VectorXd>& u, std::size_t v) const {
  const auto& pm = predictions[v];
  VectorXd X = detail::free_response(pm, x0.segment<3>(3 * static_cast<Eigen::Index>(v)), w.row(static_cast<Eigen::Index>(v)).transpose());
  for (std::size_t j = 0; j < dims.n_m; ++j) X += pm.B_tilde[j] * u.segment(dims.agent_offset(j), dims.agent_width());
  const auto N = static_cast<Eigen::Index>(dims.horizon);
  MatrixXd out(N + 1, 3);
  for (Eigen::Index k = 0; k <= N; ++k) out.row(k) = X.segment<3>(3 * k).transpose();
  return out;
}

/// Builds the condensed game seen by an agent holding `belief` at global
/// state `x`. Throws ParameterError on rho1 < 0.
inline CondensedGame build_condensed_game(const AgentBelief& belief, const Eigen::Ref<const VectorXd>& x) {
  const ChainParameters& th = belief.theta_hat;
  validate(th);
  check_convexity(th);
  const GameDims dims = GameDims::of(th);
  const std::size_t n_m = dims.n_m;
  const std::size_t n_s = dims.n_s;
  const std::size_t N = dims.horizon;
  const auto Ni = static_cast<Eigen::Index>(N);
  const Eigen::Index nu = dims.n_input();
  const Eigen::Index aw = dims.agent_width();
  const Eigen::Index n_u = dims.n_u();

  if (x.size() != 3 * static_cast<Eigen::Index>(n_m)) throw DimensionError("build_condensed_game: state must have 3*n_m entries");
  if (belief.w_hat.rows() != static_cast<Eigen::Index>(n_m) || belief.w_hat.cols() != Ni) {
    throw DimensionError("build_condensed_game: forecast must be n_m x N");
  }

  CondensedGame game;
  game.dims = dims;
  game.x0 = x;
  game.w = belief.w_hat;
  game.predictions.reserve(n_m);
  for (std::size_t v = 0; v < n_m; ++v) game.predictions.push_back(build_prediction(build_agent_lti(th, v), v, N));

  // H1 from the per-stage blocks R^{vj}: wholesale slope on orders (own and
  // rivals' orders at the same supplier), price elasticities on prices.
  game.H1 = MatrixXd::Zero(n_u, n_u);
  for (std::size_t v = 0; v < n_m; ++v) {
    for (std::size_t j = 0; j < n_m; ++j) {
      const double scale = (v == j) ? 2.0 : 1.0;
      for (std::size_t k = 0; k < N; ++k) {
        const Eigen::Index r = dims.input_offset(v, k);
        const Eigen::Index c = dims.input_offset(j, k);
        for (std::size_t s = 0; s < n_s; ++s) {
          game.H1(r + static_cast<Eigen::Index>(s), c + static_cast<Eigen::Index>(s)) = scale * th.suppliers[s].rho1;
        }
        const double price_term = (v == j) ? th.market.beta(v, v) : -th.market.beta(v, static_cast<Eigen::Index>(j));
        game.H1(r + nu - 1, c + nu - 1) = scale * price_term;
      }
    }
  }

  // H2 block (v, j) = 2 (B~^{vv})' Q^v B~^{vj}, the Hessian of agent v's
  // safety-stock term with respect to (u^v, u^j).
  game.H2 = MatrixXd::Zero(n_u, n_u);
  game.f = VectorXd::Zero(n_u);
  game.costs.resize(n_m);
  for (std::size_t v = 0; v < n_m; ++v) {
    const auto& pm = game.predictions[v];
    const auto& mp = th.manufacturers[v];
    const VectorXd wv = belief.w_hat.row(static_cast<Eigen::Index>(v)).transpose();
    const VectorXd free_xi =
        detail::select_costed_inventory(detail::free_response(pm, x.segment<3>(3 * static_cast<Eigen::Index>(v)), wv), N);

    // L = [L^{v1} ... L^{v n_m}] maps u to inventory at stages 0..N-1.
    MatrixXd L(Ni, n_u);
    for (std::size_t j = 0; j < n_m; ++j) L.middleCols(dims.agent_offset(j), aw) = detail::select_costed_inventory(pm.B_tilde[j], N);
    const MatrixXd Lv = L.middleCols(dims.agent_offset(v), aw);

    for (std::size_t j = 0; j < n_m; ++j) {
      game.H2.block(dims.agent_offset(v), dims.agent_offset(j), aw, aw) =
          2.0 * mp.gamma * Lv.transpose() * L.middleCols(dims.agent_offset(j), aw);
    }

    // f^v = r^v + 2 (B~^{vv})' Q^v (A~ x^v + D~ w^v) + (B~^{vv})' q^v,
    // q^v = 1_N (x) (-2 gamma xi_safety, 0, 0).
    VectorXd r(aw);
    for (std::size_t k = 0; k < N; ++k) {
      for (std::size_t s = 0; s < n_s; ++s) r(static_cast<Eigen::Index>(k) * nu + static_cast<Eigen::Index>(s)) = th.suppliers[s].rho0;
      r(static_cast<Eigen::Index>(k) * nu + nu - 1) = -wv(static_cast<Eigen::Index>(k));
    }
    const VectorXd deviation = free_xi.array() - mp.xi_safety;
    game.f.segment(dims.agent_offset(v), aw) = r + 2.0 * mp.gamma * Lv.transpose() * deviation;

    // Full cost of agent v over all decisions.
    AgentCost& cost = game.costs[v];
    cost.P = 2.0 * mp.gamma * L.transpose() * L;
    cost.c = 2.0 * mp.gamma * L.transpose() * deviation;
    cost.constant = mp.gamma * deviation.squaredNorm();
    for (std::size_t k = 0; k < N; ++k) {
      const Eigen::Index own = dims.input_offset(v, k);
      for (std::size_t s = 0; s < n_s; ++s) {
        const Eigen::Index os = own + static_cast<Eigen::Index>(s);
        cost.c(os) += th.suppliers[s].rho0;
        for (std::size_t j = 0; j < n_m; ++j) {
          const Eigen::Index js = dims.input_offset(j, k) + static_cast<Eigen::Index>(s);
          const double rho1 = th.suppliers[s].rho1;
          if (j == v) {
            cost.P(os, os) += 2.0 * rho1;
          } else {
            cost.P(os, js) += rho1;
            cost.P(js, os) += rho1;
          }
        }
      }
      const Eigen::Index op = own + nu - 1;
      cost.c(op) -= wv(static_cast<Eigen::Index>(k));
      for (std::size_t j = 0; j < n_m; ++j) {
        const Eigen::Index jp = dims.input_offset(j, k) + nu - 1;
        if (j == v) {
          cost.P(op, op) += 2.0 * th.market.beta(v, v);
        } else {
          const double b = th.market.beta(static_cast<Eigen::Index>(v), static_cast<Eigen::Index>(j));
          cost.P(op, jp) -= b;
          cost.P(jp, op) -= b;
        }
      }
    }
  }
  game.H = game.H1 + game.H2;

  // Constraints: u >= 0; 0 <= xi^v_k <= Xi^v for k = 1..N; per-stage
  // supplier capacity.
  game.G = MatrixXd::Zero(dims.n_c(), n_u);
  game.g = VectorXd::Zero(dims.n_c());
  for (Eigen::Index i = 0; i < n_u; ++i) game.G(i, i) = -1.0;
  for (std::size_t v = 0; v < n_m; ++v) {
    const auto& pm = game.predictions[v];
    const VectorXd wv = belief.w_hat.row(static_cast<Eigen::Index>(v)).transpose();
    const VectorXd free = detail::free_response(pm, x.segment<3>(3 * static_cast<Eigen::Index>(v)), wv);
    for (std::size_t k = 1; k <= N; ++k) {
      const auto row = 3 * static_cast<Eigen::Index>(k);
      const Eigen::Index up = dims.inventory_row(v, k, true);
      const Eigen::Index lo = dims.inventory_row(v, k, false);
      for (std::size_t j = 0; j < n_m; ++j) {
        game.G.block(up, dims.agent_offset(j), 1, aw) = pm.B_tilde[j].row(row);
        game.G.block(lo, dims.agent_offset(j), 1, aw) = -pm.B_tilde[j].row(row);
      }
      game.g(up) = th.manufacturers[v].xi_max - free(row);
      game.g(lo) = free(row);
    }
  }
  for (std::size_t k = 0; k < N; ++k) {
    for (std::size_t s = 0; s < n_s; ++s) {
      const Eigen::Index row = dims.supply_row(k, s);
      for (std::size_t v = 0; v < n_m; ++v) game.G(row, dims.input_offset(v, k) + static_cast<Eigen::Index>(s)) = 1.0;
      game.g(row) = th.suppliers[s].o_max;
    }
  }
  return game;
}

inline VectorXd pseudo_gradient(const CondensedGame& game, const Eigen::Ref<const VectorXd>& u) {
  if (u.size() != game.dims.n_u()) throw DimensionError("pseudo_gradient: u has wrong dimension");
  return game.H * u + game.f;
}

}  // namespace rhg

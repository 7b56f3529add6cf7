#pragma once

// Semismooth Newton solver for the affine variational inequality
//
//   H u + f + G' lambda = 0,   0 <= lambda  _|_  g - G u >= 0,
//
// with H possibly nonsymmetric. Complementarity is reformulated with the
// smoothed Fischer-Burmeister function
//
//   phi_eps(a, b) = a + b - sqrt(a^2 + b^2 + 2 eps^2),
//
// and the smoothing eps is driven to zero along the Newton iterations. The
// final iterations run on the exact (eps = 0) semismooth system.

#include "rhg/chain_model.hpp"
#include "rhg/game_builder.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>
#include <string>
#include <vector>

namespace rhg {

struct AviProblem {
  MatrixXd H;
  VectorXd f;
  MatrixXd G;
  VectorXd g;

  Eigen::Index n_u() const { return H.rows(); }
  Eigen::Index n_c() const { return G.rows(); }

  void check_dimensions() const {
    if (H.rows() != H.cols()) throw DimensionError("AviProblem: H must be square");
    if (f.size() != H.rows()) throw DimensionError("AviProblem: f does not match H");
    if (G.rows() > 0 && G.cols() != H.cols()) throw DimensionError("AviProblem: G does not match H");
    if (g.size() != G.rows()) throw DimensionError("AviProblem: g does not match G");
  }

  /// Takes (H, f, G, g) from a condensed game; checks that every agent's
  /// diagonal block of H is positive semidefinite.
  static AviProblem from_game(const CondensedGame& game) {
    AviProblem p{game.H, game.f, game.G, game.g};
    p.check_dimensions();
    const Eigen::Index aw = game.dims.agent_width();
    for (std::size_t v = 0; v < game.dims.n_m; ++v) {
      const MatrixXd block = game.H.block(game.dims.agent_offset(v), game.dims.agent_offset(v), aw, aw);
      const MatrixXd sym = 0.5 * (block + block.transpose());
      const double min_eig = Eigen::SelfAdjointEigenSolver<MatrixXd>(sym, Eigen::EigenvaluesOnly).eigenvalues().minCoeff();
      if (min_eig < -1e-9 * std::max(1.0, sym.cwiseAbs().maxCoeff())) {
        throw ParameterError("agent " + std::to_string(v) + " cost is not convex in its own decisions");
      }
    }
    return p;
  }
};

struct SolverSettings {
  double tol = 1e-8;
  int max_iter = 200;
  double smoothing_init = 1e-1;
  double smoothing_decay = 0.1;
  double regularization = 1e-9;
  double linesearch_factor = 0.5;
  double min_step = 1e-12;
  double armijo = 1e-4;

  void validate() const {
    if (!(tol > 0.0)) throw ParameterError("solver tol must be > 0");
    if (max_iter < 1) throw ParameterError("solver max_iter must be >= 1");
    if (!(smoothing_init >= 0.0)) throw ParameterError("solver smoothing_init must be >= 0");
    if (!(smoothing_decay > 0.0 && smoothing_decay < 1.0)) throw ParameterError("solver smoothing_decay must be in (0, 1)");
    if (!(regularization >= 0.0)) throw ParameterError("solver regularization must be >= 0");
    if (!(linesearch_factor > 0.0 && linesearch_factor < 1.0)) throw ParameterError("solver linesearch_factor must be in (0, 1)");
  }
};

enum class SolveStatus { converged, max_iterations, degenerate };

inline const char* to_string(SolveStatus s) {
  switch (s) {
    case SolveStatus::converged: return "converged";
    case SolveStatus::max_iterations: return "max_iterations";
    case SolveStatus::degenerate: return "degenerate";
  }
  return "unknown";
}

/// Optimality measures of a primal-dual pair, all in the infinity norm.
struct KktResiduals {
  double stationarity = 0.0;     ///< |Hu + f + G'lambda|
  double feasibility = 0.0;      ///< max(Gu - g, 0)
  double dual = 0.0;             ///< max(-lambda, 0)
  double complementarity = 0.0;  ///< |lambda_i (g_i - G_i u)|
  double fischer = 0.0;          ///< |phi_0(lambda, g - Gu)|

  double max() const { return std::max({stationarity, feasibility, dual, complementarity, fischer}); }
};

struct AviSolution {
  VectorXd u;
  VectorXd lambda;
  double residual = 0.0;
  KktResiduals kkt;
  SolveStatus status = SolveStatus::max_iterations;
  int iterations = 0;
  /// Exact residual recorded each time the smoothing parameter is reduced.
  std::vector<double> outer_residuals;

  bool converged() const { return status == SolveStatus::converged; }
};

inline double fischer_burmeister(double a, double b, double eps) {
  return a + b - std::sqrt(a * a + b * b + 2.0 * eps * eps);
}

/// Stacked (Hu + f + G'lambda, phi_eps(lambda_i, g_i - G_i u)).
inline VectorXd fb_residual(const AviProblem& p, const Eigen::Ref<const VectorXd>& u,
                            const Eigen::Ref<const VectorXd>& lambda, double eps) {
  if (eps < 0.0) throw ParameterError("fb_residual: eps must be >= 0");
  const Eigen::Index n = p.n_u();
  const Eigen::Index m = p.n_c();
  if (u.size() != n || lambda.size() != m) throw DimensionError("fb_residual: wrong primal/dual dimension");
  VectorXd r(n + m);
  r.head(n) = p.H * u + p.f;
  if (m > 0) r.head(n).noalias() += p.G.transpose() * lambda;
  const VectorXd slack = p.g - p.G * u;
  for (Eigen::Index i = 0; i < m; ++i) r(n + i) = fischer_burmeister(lambda(i), slack(i), eps);
  return r;
}

inline KktResiduals kkt_residuals(const AviProblem& p, const Eigen::Ref<const VectorXd>& u,
                                  const Eigen::Ref<const VectorXd>& lambda) {
  KktResiduals k;
  VectorXd stat = p.H * u + p.f;
  if (p.n_c() > 0) stat.noalias() += p.G.transpose() * lambda;
  k.stationarity = stat.size() ? stat.cwiseAbs().maxCoeff() : 0.0;
  const VectorXd slack = p.g - p.G * u;
  for (Eigen::Index i = 0; i < p.n_c(); ++i) {
    k.feasibility = std::max(k.feasibility, -slack(i));
    k.dual = std::max(k.dual, -lambda(i));
    k.complementarity = std::max(k.complementarity, std::abs(lambda(i) * slack(i)));
    k.fischer = std::max(k.fischer, std::abs(fischer_burmeister(lambda(i), slack(i), 0.0)));
  }
  return k;
}

/// Holds the Newton workspace; one solve at a time per instance.
class AviSolver {
 public:
  explicit AviSolver(SolverSettings settings = {}) : settings_(settings) { settings_.validate(); }

  const SolverSettings& settings() const { return settings_; }

  AviSolution solve(const AviProblem& p, const std::optional<std::pair<VectorXd, VectorXd>>& warm_start = std::nullopt) {
    p.check_dimensions();
    const Eigen::Index n = p.n_u();
    const Eigen::Index m = p.n_c();

    AviSolution sol;
    sol.u = VectorXd::Zero(n);
    sol.lambda = VectorXd::Zero(m);
    if (warm_start) {
      if (warm_start->first.size() != n || warm_start->second.size() != m) {
        throw DimensionError("AviSolver: warm start has wrong dimension");
      }
      sol.u = warm_start->first;
      sol.lambda = warm_start->second.cwiseMax(0.0);
    }

    auto finish = [&](SolveStatus status) {
      sol.kkt = kkt_residuals(p, sol.u, sol.lambda);
      sol.residual = sol.kkt.max();
      sol.status = status;
      return sol;
    };

    sol.kkt = kkt_residuals(p, sol.u, sol.lambda);
    double eps = settings_.smoothing_init;
    if (warm_start) eps = std::min(eps, sol.kkt.max());
    const double eps_floor = 0.1 * settings_.tol;
    if (eps < eps_floor) eps = 0.0;

    jacobian_.resize(n + m, n + m);
    VectorXd residual = fb_residual(p, sol.u, sol.lambda, eps);
    VectorXd z(n + m), trial(n + m), step(n + m);

    for (int iter = 0; iter < settings_.max_iter; ++iter) {
      sol.iterations = iter;
      sol.kkt = kkt_residuals(p, sol.u, sol.lambda);
      if (sol.kkt.max() <= settings_.tol) {
        polish(p, sol);
        return finish(SolveStatus::converged);
      }

      // Tighten smoothing once the smoothed system is solved to the current
      // smoothing level.
      while (eps > 0.0 && residual.cwiseAbs().maxCoeff() <= eps) {
        sol.outer_residuals.push_back(sol.kkt.max());
        eps *= settings_.smoothing_decay;
        if (eps < eps_floor) eps = 0.0;
        residual = fb_residual(p, sol.u, sol.lambda, eps);
      }

      assemble_jacobian(p, sol.u, sol.lambda, eps);
      lu_.compute(jacobian_);
      step = lu_.solve(-residual);
      if (!step.allFinite() || (jacobian_ * step + residual).cwiseAbs().maxCoeff() >
                                   1e-6 * std::max(1.0, residual.cwiseAbs().maxCoeff())) {
        sol.iterations = iter + 1;
        return finish(SolveStatus::degenerate);
      }

      z << sol.u, sol.lambda;
      const double merit = 0.5 * residual.squaredNorm();
      double t = 1.0;
      VectorXd trial_residual;
      bool accepted = false;
      while (t >= settings_.min_step) {
        trial = z + t * step;
        trial_residual = fb_residual(p, trial.head(n), trial.tail(m), eps);
        if (0.5 * trial_residual.squaredNorm() <= (1.0 - 2.0 * settings_.armijo * t) * merit) {
          accepted = true;
          break;
        }
        t *= settings_.linesearch_factor;
      }
      if (!accepted) {
        if (eps == 0.0) {
          sol.iterations = iter + 1;
          return finish(SolveStatus::degenerate);
        }
        // The smoothed merit stalled; fall back to the exact system.
        eps = 0.0;
        residual = fb_residual(p, sol.u, sol.lambda, eps);
        continue;
      }
      sol.u = trial.head(n);
      sol.lambda = trial.tail(m);
      residual = std::move(trial_residual);
    }
    sol.iterations = settings_.max_iter;
    sol.kkt = kkt_residuals(p, sol.u, sol.lambda);
    return finish(sol.kkt.max() <= settings_.tol ? SolveStatus::converged : SolveStatus::max_iterations);
  }

 private:
  // One exact Newton step past the tolerance, kept only if it lowers the
  // KKT residual.
  void polish(const AviProblem& p, AviSolution& sol) {
    const Eigen::Index n = p.n_u();
    const Eigen::Index m = p.n_c();
    jacobian_.resize(n + m, n + m);
    assemble_jacobian(p, sol.u, sol.lambda, 0.0);
    lu_.compute(jacobian_);
    const VectorXd step = lu_.solve(-fb_residual(p, sol.u, sol.lambda, 0.0));
    if (!step.allFinite()) return;
    const VectorXd u = sol.u + step.head(n);
    const VectorXd lambda = sol.lambda + step.tail(m);
    const KktResiduals k = kkt_residuals(p, u, lambda);
    if (k.max() < sol.kkt.max()) {
      sol.u = u;
      sol.lambda = lambda;
      sol.kkt = k;
      ++sol.iterations;
    }
  }

  // [[H + dI, G'], [-Db G, Da + dI]] with Da, Db an element of the
  // (smoothed) generalized Jacobian of phi.
  void assemble_jacobian(const AviProblem& p, const VectorXd& u, const VectorXd& lambda, double eps) {
    const Eigen::Index n = p.n_u();
    const Eigen::Index m = p.n_c();
    const VectorXd slack = p.g - p.G * u;
    jacobian_.topLeftCorner(n, n) = p.H;
    jacobian_.topLeftCorner(n, n).diagonal().array() += settings_.regularization;
    jacobian_.topRightCorner(n, m) = p.G.transpose();
    jacobian_.bottomRightCorner(m, m).setZero();
    for (Eigen::Index i = 0; i < m; ++i) {
      const double a = lambda(i);
      const double b = slack(i);
      const double norm = std::sqrt(a * a + b * b + 2.0 * eps * eps);
      double da = 0.0;
      double db = 0.0;
      if (norm > 0.0) {
        da = 1.0 - a / norm;
        db = 1.0 - b / norm;
      } else {
        da = db = 1.0 - 1.0 / std::sqrt(2.0);
      }
      jacobian_.row(n + i).head(n) = -db * p.G.row(i);
      jacobian_(n + i, n + i) = da + settings_.regularization;
    }
  }

  SolverSettings settings_;
  MatrixXd jacobian_;
  Eigen::PartialPivLU<MatrixXd> lu_;
};

struct RegularityReport {
  std::vector<Eigen::Index> active_set;
  bool licq_ok = true;
  bool second_order_ok = true;
  Eigen::Index active_rank = 0;
  Eigen::Index rank_gap = 0;  ///< |A| - rank(G_A)
  /// Smallest eigenvalue of Z'((H+H')/2)Z on the null space of the active
  /// rows; +inf when the null space is trivial.
  double min_curvature = 0.0;
};

inline RegularityReport check_regularity(const AviProblem& p, const AviSolution& sol, double tol_active) {
  const Eigen::Index n = p.n_u();
  RegularityReport rep;
  const VectorXd slack = p.g - p.G * sol.u;
  for (Eigen::Index i = 0; i < p.n_c(); ++i) {
    if (std::abs(slack(i)) <= tol_active) rep.active_set.push_back(i);
  }
  const auto n_active = static_cast<Eigen::Index>(rep.active_set.size());
  MatrixXd GA(n_active, n);
  for (Eigen::Index r = 0; r < n_active; ++r) GA.row(r) = p.G.row(rep.active_set[static_cast<std::size_t>(r)]);

  MatrixXd Z;
  if (n_active == 0) {
    Z = MatrixXd::Identity(n, n);
  } else {
    // Rank and an orthonormal null-space basis from the SVD of the active rows.
    Eigen::JacobiSVD<MatrixXd> svd(GA, Eigen::ComputeFullV);
    const VectorXd& sv = svd.singularValues();
    const double thresh = 1e-10 * std::max(1.0, sv.size() ? sv(0) : 0.0);
    Eigen::Index rank = 0;
    for (Eigen::Index i = 0; i < sv.size(); ++i) {
      if (sv(i) > thresh) ++rank;
    }
    rep.active_rank = rank;
    Z = svd.matrixV().rightCols(n - rank);
  }
  rep.rank_gap = n_active - rep.active_rank;
  rep.licq_ok = rep.rank_gap == 0;

  if (Z.cols() == 0) {
    rep.min_curvature = std::numeric_limits<double>::infinity();
    rep.second_order_ok = true;
  } else {
    const MatrixXd sym = 0.5 * (p.H + p.H.transpose());
    const MatrixXd reduced = Z.transpose() * sym * Z;
    rep.min_curvature =
        Eigen::SelfAdjointEigenSolver<MatrixXd>(reduced, Eigen::EigenvaluesOnly).eigenvalues().minCoeff();
    rep.second_order_ok = rep.min_curvature > 1e-10 * std::max(1.0, sym.cwiseAbs().maxCoeff());
  }
  return rep;
}

}  // namespace rhg

#pragma once

#include <Eigen/Core>
#include <Eigen/SparseCholesky>
#include <memory>
#include <optional>

#include "pfbv/assembly.hpp"

namespace pfbv {

/// Augmented-Lagrangian multiplier and penalty data carried between z-solves.
struct ALState {
  Eigen::VectorXd lambda;
  double mu = 0.0;
  double beta_box = 0.0;
  double beta_ball = 0.0;
  double prev_box_violation = kInfinity;
  double prev_ball_violation = kInfinity;
};

struct ZSolveReport {
  Eigen::VectorXd z;
  Eigen::VectorXd lambda;
  double mu = 0.0;
  double xi_norm_dual = 0.0;
  bool constraint_active = false;
  double stationarity_residual = 0.0;
  int al_iters = 0;
  int newton_iters = 0;
  double ball_norm = 0.0;
  double objective = 0.0;
  int clamp_count = 0;
};

/// Multiplier update: lambda <- max(0, lambda + beta_box c_box), mu <- max(0, mu + beta_ball c_ball);
/// each penalty grows by beta_growth when its violation did not shrink by a factor 4.
void al_penalty_update(ALState& st, const Eigen::VectorXd& box_residual, double ball_residual,
                       const SchemeParams& params);

/// Minimizes 0.5 z^T A z - b^T z subject to min(0, z_prev) <= z <= z_prev and N(z - z_prev) <= rho.
/// The matrix structure is fixed at construction; A must share it.
class BallBoxSolver {
 public:
  BallBoxSolver(const SparseMatrix& structure, Eigen::VectorXd weights, const VNorm* norm,
                SchemeParams params);

  ZSolveReport solve(const SparseMatrix& A, const Eigen::VectorXd& b, const Eigen::VectorXd& z_prev,
                     double rho, ALState* warm = nullptr, const Eigen::VectorXd* z_init = nullptr);

  /// J(z) = 0.5 z^T A z - b^T z.
  static double objective(const SparseMatrix& A, const Eigen::VectorXd& b, const Eigen::VectorXd& z);

 private:
  struct Inner;
  int minimize_on_box(Inner& in, Eigen::VectorXd& z, double tol, int min_iters = 0);
  double natural_residual(const Inner& in, const Eigen::VectorXd& z, const Eigen::VectorXd& g) const;

  Eigen::VectorXd w_;
  const VNorm* norm_;
  SchemeParams params_;
  Eigen::SimplicialLDLT<SparseMatrix> ldlt_;
  SparseMatrix H_;
};

class DisplacementSolver {
 public:
  explicit DisplacementSolver(const FemModel& fem);
  Eigen::VectorXd solve(double t, const Eigen::VectorXd& z);
  double last_residual() const { return last_residual_; }

 private:
  const FemModel& fem_;
  SparseMatrix K_;
  SparseMatrix Kff_;
  std::vector<int> ff_slots_;  // value index in K_ for each value of Kff_
  std::vector<int> free_index_;
  Eigen::SimplicialLLT<SparseMatrix> llt_;
  bool analyzed_ = false;
  double last_residual_ = 0.0;
};

class DamageSolver {
 public:
  DamageSolver(const FemModel& fem, const SchemeParams& params);
  /// rho = infinity drops the ball constraint.
  ZSolveReport solve(const Eigen::VectorXd& u, const Eigen::VectorXd& z_prev, double rho,
                     ALState* warm = nullptr, const Eigen::VectorXd* z_init = nullptr);
  const VNorm& norm() const { return *norm_; }

 private:
  const FemModel& fem_;
  std::unique_ptr<VNorm> norm_;
  SchemeParams params_;
  BallBoxSolver core_;
};

Eigen::VectorXd solve_u(const FemModel& fem, double t, const Eigen::VectorXd& z, const SchemeParams& params);

ZSolveReport solve_z(const FemModel& fem, double t, const Eigen::VectorXd& u, const Eigen::VectorXd& z_prev,
                     double rho, const SchemeParams& params);

}  // namespace pfbv

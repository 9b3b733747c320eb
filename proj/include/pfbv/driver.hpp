#pragma once

#include <Eigen/Core>
#include <functional>
#include <optional>
#include <vector>

#include "pfbv/assembly.hpp"
#include "pfbv/diagnostics.hpp"
#include "pfbv/solvers.hpp"
#include "pfbv/trace.hpp"

namespace pfbv {

/// What the time-stepping driver needs from a discretized rate-independent system.
class EvolutionProblem {
 public:
  virtual ~EvolutionProblem() = default;
  virtual Eigen::VectorXd solve_u(double t, const Eigen::VectorXd& z) = 0;
  virtual ZSolveReport solve_z(double t, const Eigen::VectorXd& u, const Eigen::VectorXd& z_prev, double rho,
                               ALState* warm, const Eigen::VectorXd* z_init) = 0;
  virtual double energy(const State& s) const = 0;
  virtual DissipationValue dissipation(const Eigen::VectorXd& dz) const = 0;
  virtual double norm_V(const Eigen::VectorXd& dz) const = 0;
  virtual DualDistance dual_distance(const State& s) const = 0;
  virtual LoadMode load_mode() const = 0;
  /// Reaction along the load direction (Dirichlet mode only).
  virtual double reaction(const State& s) const = 0;
  virtual double ubar(double t) const = 0;
  /// Integral of the partial time derivative of E along the affine segment (traction mode).
  virtual double traction_work(double t0, const Eigen::VectorXd& u0, double t1, const Eigen::VectorXd& u1) const = 0;
  /// Scale used to make the displacement change in the AM stopping rule relative.
  virtual double u_scale(const Eigen::VectorXd& u) const { return u.lpNorm<Eigen::Infinity>(); }
};

class FemProblem final : public EvolutionProblem {
 public:
  FemProblem(const FemModel& fem, const SchemeParams& params);
  Eigen::VectorXd solve_u(double t, const Eigen::VectorXd& z) override;
  ZSolveReport solve_z(double t, const Eigen::VectorXd& u, const Eigen::VectorXd& z_prev, double rho,
                       ALState* warm, const Eigen::VectorXd* z_init) override;
  double energy(const State& s) const override;
  DissipationValue dissipation(const Eigen::VectorXd& dz) const override;
  double norm_V(const Eigen::VectorXd& dz) const override;
  DualDistance dual_distance(const State& s) const override;
  LoadMode load_mode() const override { return fem_.load().mode; }
  double reaction(const State& s) const override;
  double ubar(double t) const override { return fem_.load().ubar(t); }
  double traction_work(double t0, const Eigen::VectorXd& u0, double t1, const Eigen::VectorXd& u1) const override;
  const FemModel& fem() const { return fem_; }

 private:
  const FemModel& fem_;
  SchemeParams params_;
  DisplacementSolver us_;
  DamageSolver zs_;
};

struct AmResult {
  Eigen::VectorXd u;
  Eigen::VectorXd z;
  Eigen::VectorXd u_first;
  int iters = 0;
  bool converged = false;
  ZSolveReport last;
  std::vector<double> values;  // E + R after every half-step
  double max_rel_increase = 0.0;
};

/// Alternate minimization at fixed time t_k inside the ball around z_km1.
AmResult am_loop(EvolutionProblem& prob, double t_k, const Eigen::VectorXd& z_km1, double rho,
                 const SchemeParams& params, const Eigen::VectorXd* u_prev = nullptr, ALState* warm = nullptr);

/// t_{k+1} = min(t_k + rho - ||z_k - z_{k-1}||_V, T).
double time_update(double t_k, double dz_norm_V, double rho, double T, double tol = 1e-6);

struct RunOptions {
  SnapshotPolicy snapshots;
  std::function<void(const Trace&, const State&)> on_step;
  long max_steps = 100000000;
  bool keep_am_values = false;
};

Trace run(EvolutionProblem& prob, const SchemeParams& params, const Eigen::VectorXd& z0, const RunOptions& opts = {});
Trace run(const FemModel& fem, const SchemeParams& params, const Eigen::VectorXd& z0, const RunOptions& opts = {});

/// Uniform grid t_k = k T / n_steps, no ball constraint.
Trace run_pure_am(EvolutionProblem& prob, const SchemeParams& params, const Eigen::VectorXd& z0, int n_steps,
                  const RunOptions& opts = {});
Trace run_pure_am(const FemModel& fem, const SchemeParams& params, const Eigen::VectorXd& z0, int n_steps,
                  const RunOptions& opts = {});
/// Pure AM on a prescribed non-decreasing time list starting at 0 and ending at T.
Trace run_pure_am_on_grid(EvolutionProblem& prob, const SchemeParams& params, const Eigen::VectorXd& z0,
                          const std::vector<double>& times, const RunOptions& opts = {});

}  // namespace pfbv

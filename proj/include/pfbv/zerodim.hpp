#pragma once

#include "pfbv/driver.hpp"

namespace pfbv {

/// E(t,u,z) = 0.5 (z^2 + eta) a u^2 - ell(t) u + 0.5 kappa_E z^2,  R(v) = kappa_R |v| for v <= 0.
struct ZeroDimModel {
  double a = 1.0;
  double eta = 0.01;
  double kappa_E = 0.1;
  double kappa_R = 1.0;
  double ell_rate = 1.0;  // ell(t) = ell_rate * t
  double T = 2.0;
  double rho = 0.02;
  double z0 = 1.0;

  void validate() const;
  double ell(double t) const { return ell_rate * t; }
  double energy(double t, double u, double z) const;
  /// E + R(z - z_prev), infinite for z > z_prev.
  double objective(double t, double u, double z, double z_prev) const;
};

/// Exhaustive minimization of E(t,u,.) + R(. - z_prev) over the grid on [max(0, z_prev - rho), z_prev].
double brute_force_z_step(double t, double u, double z_prev, double rho, const ZeroDimModel& model, double grid_step);

class ZeroDimProblem final : public EvolutionProblem {
 public:
  explicit ZeroDimProblem(const ZeroDimModel& m) : m_(m) {}
  Eigen::VectorXd solve_u(double t, const Eigen::VectorXd& z) override;
  ZSolveReport solve_z(double t, const Eigen::VectorXd& u, const Eigen::VectorXd& z_prev, double rho,
                       ALState* warm, const Eigen::VectorXd* z_init) override;
  double energy(const State& s) const override;
  DissipationValue dissipation(const Eigen::VectorXd& dz) const override;
  double norm_V(const Eigen::VectorXd& dz) const override { return std::abs(dz[0]); }
  DualDistance dual_distance(const State& s) const override;
  LoadMode load_mode() const override { return LoadMode::TractionRamp; }
  double reaction(const State&) const override;
  double ubar(double) const override { return 0.0; }
  double traction_work(double t0, const Eigen::VectorXd& u0, double t1, const Eigen::VectorXd& u1) const override;
  const ZeroDimModel& model() const { return m_; }

 private:
  ZeroDimModel m_;
};

/// Scalar z-step by projected Newton on [z_prev - rho, z_prev].
ZSolveReport zero_dim_z_step(const ZeroDimModel& m, double u, double z_prev, double rho);

SchemeParams zero_dim_scheme(const ZeroDimModel& m);

Trace run_zero_dim(const ZeroDimModel& m, const SchemeParams& params, const RunOptions& opts = {});
Trace run_zero_dim(const ZeroDimModel& m);

}  // namespace pfbv

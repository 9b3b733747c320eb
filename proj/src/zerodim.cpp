#include "pfbv/zerodim.hpp"

#include <algorithm>
#include <cmath>

#include "pfbv/errors.hpp"

namespace pfbv {

void ZeroDimModel::validate() const {
  if (!(a > 0.0)) throw ConfigError("zerodim.a must be positive");
  if (!(eta > 0.0)) throw ConfigError("zerodim.eta must be positive");
  if (!(kappa_E >= 0.0) || !(kappa_R >= 0.0)) throw ConfigError("zerodim kappas must be non-negative");
  if (!(T > 0.0)) throw ConfigError("zerodim.T must be positive");
  if (!(rho > 0.0)) throw ConfigError("zerodim.rho must be positive");
  if (!(z0 >= 0.0 && z0 <= 1.0)) throw ConfigError("zerodim.z0 must lie in [0, 1]");
}

double ZeroDimModel::energy(double t, double u, double z) const {
  return 0.5 * (z * z + eta) * a * u * u - ell(t) * u + 0.5 * kappa_E * z * z;
}

double ZeroDimModel::objective(double t, double u, double z, double z_prev) const {
  if (z > z_prev) return kInfinity;
  return energy(t, u, z) + kappa_R * (z_prev - z);
}

double brute_force_z_step(double t, double u, double z_prev, double rho, const ZeroDimModel& model,
                          double grid_step) {
  if (!(grid_step > 0.0)) throw ConfigError("grid_step must be positive");
  const double lo = std::max(0.0, z_prev - std::max(rho, 0.0));
  const long n = static_cast<long>(std::floor((z_prev - lo) / grid_step));
  double best = z_prev;
  double best_val = model.objective(t, u, z_prev, z_prev);
  auto consider = [&](double z) {
    const double v = model.objective(t, u, z, z_prev);
    if (v < best_val) {
      best_val = v;
      best = z;
    }
  };
  for (long j = 1; j <= n; ++j) consider(z_prev - j * grid_step);
  consider(lo);
  return best;
}

ZSolveReport zero_dim_z_step(const ZeroDimModel& m, double u, double z_prev, double rho) {
  const double lo = rho < kInfinity ? z_prev - rho : -kInfinity;
  const double hi = z_prev;
  const double c = m.a * u * u + m.kappa_E;
  auto fp = [&](double z) { return c * z - m.kappa_R; };
  double z = hi;
  int it = 0;
  for (; it < 50; ++it) {
    const double g = fp(z);
    double next = c > 0.0 ? z - g / c : (g < 0.0 ? hi : z);
    next = std::clamp(next, lo, hi);
    if (next == z) break;
    z = next;
  }
  ZSolveReport rep;
  rep.z = Eigen::VectorXd::Constant(1, z);
  rep.lambda = Eigen::VectorXd::Zero(1);
  const double g = fp(z);
  if (z == hi && g < 0.0) rep.lambda[0] = -g;
  if (rho < kInfinity && z == lo && z < hi && g > 0.0) rep.mu = g;
  rep.xi_norm_dual = rep.mu;
  rep.constraint_active = rep.mu > 0.0;
  rep.stationarity_residual = std::abs(g + rep.lambda[0] - rep.mu * (z < hi ? 1.0 : 0.0));
  rep.newton_iters = it;
  rep.ball_norm = hi - z;
  rep.objective = 0.5 * c * z * z - m.kappa_R * z;
  return rep;
}

Eigen::VectorXd ZeroDimProblem::solve_u(double t, const Eigen::VectorXd& z) {
  return Eigen::VectorXd::Constant(1, m_.ell(t) / ((z[0] * z[0] + m_.eta) * m_.a));
}

ZSolveReport ZeroDimProblem::solve_z(double, const Eigen::VectorXd& u, const Eigen::VectorXd& z_prev, double rho,
                                     ALState*, const Eigen::VectorXd*) {
  return zero_dim_z_step(m_, u[0], z_prev[0], rho);
}

double ZeroDimProblem::energy(const State& s) const { return m_.energy(s.t, s.u[0], s.z[0]); }

DissipationValue ZeroDimProblem::dissipation(const Eigen::VectorXd& dz) const {
  if (dz[0] > 1e-8) return {kInfinity, false};
  return {m_.kappa_R * std::abs(dz[0]), true};
}

DualDistance ZeroDimProblem::dual_distance(const State& s) const {
  const double d = (m_.a * s.u[0] * s.u[0] + m_.kappa_E) * s.z[0];
  return {std::max(0.0, d - m_.kappa_R), false};
}

double ZeroDimProblem::reaction(const State&) const {
  throw UnsupportedModeError("the zero-dimensional system is traction loaded");
}

double ZeroDimProblem::traction_work(double t0, const Eigen::VectorXd& u0, double t1, const Eigen::VectorXd& u1) const {
  return -(t1 - t0) * m_.ell_rate * 0.5 * (u0[0] + u1[0]);
}

SchemeParams zero_dim_scheme(const ZeroDimModel& m) {
  SchemeParams p;
  p.rho = m.rho;
  p.T = m.T;
  p.norm.kind = NormKind::LalphaNodal;
  p.norm.alpha = 2.0;
  p.tol_am = 1e-12;
  return p;
}

Trace run_zero_dim(const ZeroDimModel& m, const SchemeParams& params, const RunOptions& opts) {
  m.validate();
  ZeroDimProblem prob(m);
  RunOptions o = opts;
  o.snapshots.all = true;
  return run(prob, params, Eigen::VectorXd::Constant(1, m.z0), o);
}

Trace run_zero_dim(const ZeroDimModel& m) { return run_zero_dim(m, zero_dim_scheme(m)); }

}  // namespace pfbv

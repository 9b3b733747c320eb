#pragma once

#include <Eigen/Core>
#include <string>
#include <vector>

#include "pfbv/assembly.hpp"
#include "pfbv/trace.hpp"

namespace pfbv {

struct DualDistance {
  double value = 0.0;
  bool surrogate = false;
};

/// ||(d - kappa_R)_+|| in the lumped L^{alpha'} norm, alpha' = alpha / (alpha - 1).
double dual_distance_closed_form(const Eigen::VectorXd& d, const Eigen::VectorXd& w, double kappa_R, double alpha);

/// Distance of -D_zE(state) to the subdifferential of R at 0 (plus the normal cone of z >= 0), in the dual of V.
DualDistance dual_distance(const FemModel& fem, const State& s, const NormSpec& norm);

struct Violation {
  int k = 0;
  double dt = 0.0;
  double value = 0.0;
  std::string what;
};

/// Steps k >= 1 with dt_k > tol_dt while the distance at k-1 exceeds tol_dist.
std::vector<Violation> complementarity_check(const Trace& trace, double tol_dt, double tol_dist);

struct BalanceRow {
  int k = 0;
  double dE = 0.0, R_inc = 0.0, visc = 0.0, work = 0.0, residual = 0.0, cum_residual = 0.0;
};

struct BalanceReport {
  std::vector<BalanceRow> rows;
  bool exact = true;  // false for the Dirichlet reaction-work variant
  double cumulative() const { return rows.empty() ? 0.0 : rows.back().cum_residual; }
};

BalanceReport energy_balance(const Trace& trace);

/// Structural checks on a trace: bounds, irreversibility, ball, time steps, normalization, AM monotonicity.
std::vector<Violation> check_trace_invariants(const Trace& trace, double am_rel_tol = 1e-10);

struct InterpolantSample {
  double s = 0.0;
  double t_hat = 0.0, t_under = 0.0, t_over = 0.0;
  Eigen::VectorXd u_hat, z_hat, u_under, z_under, u_over, z_over;
};

/// Piecewise affine / constant reconstructions over s_k = k rho, k = -1 .. N.
class InterpolantView {
 public:
  explicit InterpolantView(const Trace& trace) : trace_(trace) {}
  double s_min() const { return -trace_.rho(); }
  double s_max() const { return trace_.S(); }
  double t_hat(double s) const;
  double t_under(double s) const;
  double t_over(double s) const;
  /// Slope of t_hat on the cell containing s (right derivative at grid points).
  double t_hat_slope(double s) const;
  /// ||z_hat'|| on the cell containing s, in units of rho^{-1} times the recorded increment norm.
  double z_hat_slope_norm(double s) const;
  InterpolantSample sample(double s, bool fields = true) const;

 private:
  int cell(double s) const;  // k such that s in [s_{k-1}, s_k]
  const Snapshot& snap(int k) const;
  const Trace& trace_;
};

std::vector<InterpolantSample> sample_interpolants(const Trace& trace, const std::vector<double>& s_values,
                                                   bool fields = true);

}  // namespace pfbv

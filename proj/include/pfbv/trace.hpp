#pragma once

#include <Eigen/Core>
#include <limits>
#include <map>
#include <vector>

#include "pfbv/model.hpp"

namespace pfbv {

struct StepRecord {
  int k = 0;
  double t = 0.0;
  double dt = 0.0;
  double dz_norm_V = 0.0;
  int am_iters = 0;
  bool am_converged = true;
  double energy = 0.0;
  double R_inc = 0.0;
  double reaction = std::numeric_limits<double>::quiet_NaN();
  double dual_distance = 0.0;
  bool dual_surrogate = false;
  double xi_norm = 0.0;
  bool ball_active = false;
  double ubar = 0.0;
  double work = 0.0;  // integral of the time derivative of E over the step
  double stationarity = 0.0;
  int al_iters = 0;
  int newton_iters = 0;
  int clamp_count = 0;
  double z_min = 0.0;
  double z_max = 0.0;
  double max_increase = 0.0;  // max_i (z_k - z_{k-1})_i
  double am_max_rel_increase = 0.0;  // largest relative increase of E + R inside the AM loop
  std::vector<double> am_values;     // E + R after every half-step
};

struct Snapshot {
  Eigen::VectorXd u;
  Eigen::VectorXd z;
};

struct SnapshotPolicy {
  int stride = 10;  // 0 disables periodic snapshots
  bool jump_onsets = true;
  bool all = false;
};

struct Trace {
  std::vector<StepRecord> records;  // k = 0 .. N
  SchemeParams scheme;
  LoadMode mode = LoadMode::DirichletRamp;
  bool pure_am = false;
  double initial_energy = 0.0;    // E at (t_{-1}, u_{-1}, z_{-1})
  double initial_reaction = 0.0;  // reaction at the same state (Dirichlet mode)
  std::map<int, Snapshot> snapshots;  // key k, including k = -1

  int N() const { return static_cast<int>(records.size()) - 1; }
  double rho() const { return scheme.rho; }
  double S() const { return N() * scheme.rho; }
  double time(int k) const { return k < 0 ? records.front().t : records[k].t; }
};

}  // namespace pfbv

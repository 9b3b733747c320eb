#include "pfbv/driver.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "pfbv/errors.hpp"

namespace pfbv {

FemProblem::FemProblem(const FemModel& fem, const SchemeParams& params)
    : fem_(fem), params_(params), us_(fem), zs_(fem, params) {}

Eigen::VectorXd FemProblem::solve_u(double t, const Eigen::VectorXd& z) { return us_.solve(t, z); }

ZSolveReport FemProblem::solve_z(double, const Eigen::VectorXd& u, const Eigen::VectorXd& z_prev, double rho,
                                 ALState* warm, const Eigen::VectorXd* z_init) {
  return zs_.solve(u, z_prev, rho, warm, z_init);
}

double FemProblem::energy(const State& s) const { return total_energy(fem_, s); }

DissipationValue FemProblem::dissipation(const Eigen::VectorXd& dz) const {
  return dissipation_R(dz, fem_.material(), fem_.weights(), params_.tol_constraint);
}

double FemProblem::norm_V(const Eigen::VectorXd& dz) const { return zs_.norm().value(dz); }

DualDistance FemProblem::dual_distance(const State& s) const { return pfbv::dual_distance(fem_, s, params_.norm); }

double FemProblem::reaction(const State& s) const { return reaction_force(fem_, s); }

double FemProblem::traction_work(double t0, const Eigen::VectorXd& u0, double t1, const Eigen::VectorXd& u1) const {
  if (fem_.load().mode != LoadMode::TractionRamp) return 0.0;
  const double rate = fem_.load().traction_rate;
  return -(t1 - t0) * rate * fem_.unit_load().dot(0.5 * (u0 + u1));
}

// ---------------------------------------------------------------------------

AmResult am_loop(EvolutionProblem& prob, double t_k, const Eigen::VectorXd& z_km1, double rho,
                 const SchemeParams& params, const Eigen::VectorXd* u_prev, ALState* warm) {
  AmResult res;
  Eigen::VectorXd z = z_km1;
  Eigen::VectorXd u_old;
  bool have_u_old = false;
  if (u_prev) {
    u_old = *u_prev;
    have_u_old = true;
  }
  auto value = [&](const Eigen::VectorXd& u, const Eigen::VectorXd& zz) {
    const DissipationValue R = prob.dissipation(zz - z_km1);
    return prob.energy({t_k, u, zz}) + (R.feasible ? R.value : kInfinity);
  };
  for (int i = 1; i <= params.max_am_iters; ++i) {
    const Eigen::VectorXd u = prob.solve_u(t_k, z);
    if (i == 1) res.u_first = u;
    res.values.push_back(value(u, z));
    ZSolveReport rep = prob.solve_z(t_k, u, z_km1, rho, warm, &z);
    // the previous iterate is feasible for the same step; keep it if the solve only adds tolerance-level noise
    const double before = res.values.back();
    if (value(u, rep.z) > before + 1e-13 * std::abs(before)) rep.z = z;
    res.values.push_back(value(u, rep.z));
    double du = 0.0;
    if (have_u_old) {
      const double scale = std::max(prob.u_scale(u), prob.u_scale(u_old));
      const double diff = (u - u_old).lpNorm<Eigen::Infinity>();
      du = diff == 0.0 ? 0.0 : diff / scale;
    } else {
      du = kInfinity;
    }
    const double dzi = (rep.z - z).lpNorm<Eigen::Infinity>();
    z = rep.z;
    u_old = u;
    have_u_old = true;
    res.iters = i;
    res.last = std::move(rep);
    res.u = u;
    if (std::max(du, dzi) <= params.tol_am) {
      res.converged = true;
      break;
    }
  }
  res.z = z;
  for (std::size_t j = 1; j < res.values.size(); ++j) {
    const double a = res.values[j - 1], b = res.values[j];
    const double rel = (b - a) / std::max(std::abs(a), 1e-300);
    if (b > a) res.max_rel_increase = std::max(res.max_rel_increase, rel);
  }
  return res;
}

double time_update(double t_k, double dz_norm_V, double rho, double T, double tol) {
  if (dz_norm_V > rho * (1.0 + tol)) {
    std::ostringstream os;
    os << "increment norm " << dz_norm_V << " exceeds rho " << rho;
    throw SolverError(os.str());
  }
  const double dz = std::min(dz_norm_V, rho);
  const double t = t_k + (rho - dz);
  return T - t <= 1e-10 * rho ? T : t;
}

namespace {

struct StepInput {
  double t;
  double t_prev;
  double rho;
};

class Recorder {
 public:
  Recorder(EvolutionProblem& prob, Trace& trace, const RunOptions& opts)
      : prob_(prob), trace_(trace), opts_(opts) {}

  void start(double t0, const Eigen::VectorXd& u_first, const Eigen::VectorXd& z0) {
    const State s{t0, u_first, z0};
    trace_.initial_energy = prob_.energy(s);
    trace_.initial_reaction = prob_.load_mode() == LoadMode::DirichletRamp ? prob_.reaction(s) : 0.0;
    trace_.snapshots[-1] = {u_first, z0};
    prev_u_ = u_first;
    prev_reaction_ = trace_.initial_reaction;
    prev_t_ = t0;
  }

  void add(int k, double t, const Eigen::VectorXd& z_km1, AmResult& am, double rho) {
    StepRecord r;
    r.k = k;
    r.t = t;
    r.dt = t - prev_t_;
    const Eigen::VectorXd dz = am.z - z_km1;
    r.dz_norm_V = prob_.norm_V(dz);
    r.am_iters = am.iters;
    r.am_converged = am.converged;
    const State s{t, am.u, am.z};
    r.energy = prob_.energy(s);
    const DissipationValue R = prob_.dissipation(dz);
    r.R_inc = R.feasible ? R.value : kInfinity;
    const DualDistance dd = prob_.dual_distance(s);
    r.dual_distance = dd.value;
    r.dual_surrogate = dd.surrogate;
    r.xi_norm = am.last.xi_norm_dual;
    r.ball_active = rho < kInfinity && am.last.constraint_active;
    r.ubar = prob_.ubar(t);
    if (prob_.load_mode() == LoadMode::DirichletRamp) {
      r.reaction = prob_.reaction(s);
      r.work = 0.5 * (r.reaction + prev_reaction_) * (r.ubar - prob_.ubar(prev_t_));
      prev_reaction_ = r.reaction;
    } else {
      r.work = prob_.traction_work(prev_t_, prev_u_, t, am.u);
    }
    r.stationarity = am.last.stationarity_residual;
    r.al_iters = am.last.al_iters;
    r.newton_iters = am.last.newton_iters;
    r.clamp_count = am.last.clamp_count;
    r.z_min = am.z.minCoeff();
    r.z_max = am.z.maxCoeff();
    r.max_increase = dz.maxCoeff();
    r.am_max_rel_increase = am.max_rel_increase;
    if (opts_.keep_am_values) r.am_values = am.values;

    const auto& pol = opts_.snapshots;
    const bool onset = pol.jump_onsets && r.dt <= trace_.scheme.tol_time &&
                       (trace_.records.empty() || trace_.records.back().dt > trace_.scheme.tol_time);
    if (pol.all || onset || (pol.stride > 0 && k % pol.stride == 0)) trace_.snapshots[k] = {am.u, am.z};
    trace_.records.push_back(r);
    if (opts_.on_step) opts_.on_step(trace_, s);
    prev_u_ = am.u;
    prev_t_ = t;
  }

  void finish(const Eigen::VectorXd& u, const Eigen::VectorXd& z) {
    // the final state is always kept
    trace_.snapshots[trace_.N()] = {u, z};
  }

 private:
  EvolutionProblem& prob_;
  Trace& trace_;
  const RunOptions& opts_;
  Eigen::VectorXd prev_u_;
  double prev_reaction_ = 0.0;
  double prev_t_ = 0.0;
};

void check_z0(const Eigen::VectorXd& z0) {
  if (z0.size() == 0) throw DimensionError("empty initial damage field");
  if (z0.minCoeff() < 0.0 || z0.maxCoeff() > 1.0) throw ConfigError("initial damage must lie in [0, 1]");
}

}  // namespace

Trace run(EvolutionProblem& prob, const SchemeParams& params, const Eigen::VectorXd& z0, const RunOptions& opts) {
  params.validate();
  check_z0(z0);
  Trace trace;
  trace.scheme = params;
  trace.mode = prob.load_mode();
  Recorder rec(prob, trace, opts);
  const double T = params.T;
  const double rho = params.rho;
  double t = 0.0;
  Eigen::VectorXd z_km1 = z0;
  Eigen::VectorXd u_prev;
  ALState al;
  for (long k = 0;; ++k) {
    if (k > opts.max_steps) throw SolverError("step limit reached before the final time");
    AmResult am = am_loop(prob, t, z_km1, rho, params, k == 0 ? nullptr : &u_prev, &al);
    if (k == 0) rec.start(t, am.u_first, z0);
    rec.add(static_cast<int>(k), t, z_km1, am, rho);
    if (t == T) {
      rec.finish(am.u, am.z);
      break;
    }
    t = time_update(t, trace.records.back().dz_norm_V, rho, T);
    z_km1 = am.z;
    u_prev = am.u;
  }
  return trace;
}

Trace run(const FemModel& fem, const SchemeParams& params, const Eigen::VectorXd& z0, const RunOptions& opts) {
  FemProblem prob(fem, params);
  return run(prob, params, z0, opts);
}

Trace run_pure_am_on_grid(EvolutionProblem& prob, const SchemeParams& params, const Eigen::VectorXd& z0,
                          const std::vector<double>& times, const RunOptions& opts) {
  params.validate();
  check_z0(z0);
  if (times.empty() || times.front() != 0.0 || times.back() != params.T)
    throw ConfigError("time grid must start at 0 and end at T");
  for (std::size_t i = 1; i < times.size(); ++i)
    if (times[i] < times[i - 1]) throw ConfigError("time grid must be non-decreasing");
  Trace trace;
  trace.scheme = params;
  trace.mode = prob.load_mode();
  trace.pure_am = true;
  Recorder rec(prob, trace, opts);
  Eigen::VectorXd z_km1 = z0;
  Eigen::VectorXd u_prev;
  ALState al;
  for (std::size_t k = 0; k < times.size(); ++k) {
    AmResult am = am_loop(prob, times[k], z_km1, kInfinity, params, k == 0 ? nullptr : &u_prev, &al);
    if (k == 0) rec.start(times[0], am.u_first, z0);
    rec.add(static_cast<int>(k), times[k], z_km1, am, kInfinity);
    z_km1 = am.z;
    u_prev = am.u;
  }
  rec.finish(u_prev, z_km1);
  return trace;
}

Trace run_pure_am(EvolutionProblem& prob, const SchemeParams& params, const Eigen::VectorXd& z0, int n_steps,
                  const RunOptions& opts) {
  if (n_steps < 1) throw ConfigError("n_steps must be positive");
  std::vector<double> times(n_steps + 1);
  for (int k = 0; k <= n_steps; ++k) times[k] = params.T * k / n_steps;
  times.back() = params.T;
  return run_pure_am_on_grid(prob, params, z0, times, opts);
}

Trace run_pure_am(const FemModel& fem, const SchemeParams& params, const Eigen::VectorXd& z0, int n_steps,
                  const RunOptions& opts) {
  FemProblem prob(fem, params);
  return run_pure_am(prob, params, z0, n_steps, opts);
}

}  // namespace pfbv

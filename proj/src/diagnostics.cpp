#include "pfbv/diagnostics.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>
#include <stdexcept>

#include "pfbv/errors.hpp"

namespace pfbv {

double dual_distance_closed_form(const Eigen::VectorXd& d, const Eigen::VectorXd& w, double kappa_R, double alpha) {
  if (d.size() != w.size()) throw DimensionError("dual distance: size mismatch");
  if (!(alpha > 1.0)) throw ConfigError("dual distance needs alpha > 1");
  const double ap = alpha / (alpha - 1.0);
  double s = 0.0;
  for (Eigen::Index i = 0; i < d.size(); ++i) {
    const double x = d[i] - kappa_R;
    if (x > 0.0) s += w[i] * std::pow(x, ap);
  }
  return std::pow(s, 1.0 / ap);
}

DualDistance dual_distance(const FemModel& fem, const State& s, const NormSpec& norm) {
  ZGradient gz = grad_z(fem, s);
  const double kr = fem.material().dissipation_constant();
  for (Eigen::Index i = 0; i < gz.d.size(); ++i)
    if (s.z[i] <= 0.0) gz.d[i] = std::min(gz.d[i], kr);
  DualDistance out;
  if (norm.kind == NormKind::H1) {
    out.value = dual_distance_closed_form(gz.d, fem.weights(), kr, 2.0);
    out.surrogate = true;
  } else {
    out.value = dual_distance_closed_form(gz.d, fem.weights(), kr, norm.alpha);
    out.surrogate = norm.kind != NormKind::LalphaNodal;
  }
  return out;
}

std::vector<Violation> complementarity_check(const Trace& trace, double tol_dt, double tol_dist) {
  std::vector<Violation> out;
  for (int k = 1; k <= trace.N(); ++k) {
    const auto& r = trace.records[k];
    const double prev = trace.records[k - 1].dual_distance;
    if (r.dt > tol_dt && prev > tol_dist) out.push_back({k, r.dt, prev, "complementarity"});
  }
  return out;
}

BalanceReport energy_balance(const Trace& trace) {
  BalanceReport rep;
  rep.exact = trace.mode == LoadMode::TractionRamp;
  double prevE = trace.initial_energy;
  double cum = 0.0;
  for (const auto& r : trace.records) {
    BalanceRow row;
    row.k = r.k;
    row.dE = r.energy - prevE;
    row.R_inc = r.R_inc;
    row.visc = r.dz_norm_V * r.dual_distance;
    row.work = r.work;
    row.residual = row.dE + row.R_inc + row.visc - row.work;
    cum += row.residual;
    row.cum_residual = cum;
    rep.rows.push_back(row);
    prevE = r.energy;
  }
  return rep;
}

std::vector<Violation> check_trace_invariants(const Trace& trace, double am_rel_tol) {
  std::vector<Violation> out;
  const double rho = trace.rho();
  const int N = trace.N();
  if (N < 0) {
    out.push_back({0, 0.0, 0.0, "empty trace"});
    return out;
  }
  for (int k = 0; k <= N; ++k) {
    const auto& r = trace.records[k];
    if (r.z_min < -1e-8) out.push_back({k, r.dt, r.z_min, "z below 0"});
    if (r.z_max > 1.0 + 1e-8) out.push_back({k, r.dt, r.z_max, "z above 1"});
    if (r.max_increase > 1e-8) out.push_back({k, r.dt, r.max_increase, "irreversibility"});
    if (r.dt < 0.0) out.push_back({k, r.dt, r.dt, "negative dt"});
    if (!trace.pure_am) {
      if (r.dz_norm_V > rho * (1.0 + 1e-6)) out.push_back({k, r.dt, r.dz_norm_V, "ball radius exceeded"});
      if (r.dt > rho * (1.0 + 1e-9)) out.push_back({k, r.dt, r.dt, "dt above rho"});
    }
    if (k > 0 && r.t < trace.records[k - 1].t) out.push_back({k, r.dt, r.t, "time decreased"});
    if (r.am_max_rel_increase > am_rel_tol) out.push_back({k, r.dt, r.am_max_rel_increase, "AM monotonicity"});
    if (!r.am_converged) out.push_back({k, r.dt, static_cast<double>(r.am_iters), "AM not converged"});
  }
  if (trace.records.back().t != trace.scheme.T) out.push_back({N, 0.0, trace.records.back().t, "final time differs from T"});
  if (!trace.pure_am) {
    for (int k = 0; k + 1 <= N; ++k) {
      const double v = (trace.records[k + 1].dt + trace.records[k].dz_norm_V) / rho;
      const bool last = k + 1 == N;
      if ((!last && std::abs(v - 1.0) > 1e-8) || (last && v > 1.0 + 1e-8))
        out.push_back({k + 1, trace.records[k + 1].dt, v, "normalization"});
    }
  }
  return out;
}

// ---------------------------------------------------------------------------

namespace {

double snap_index(double s, double rho) {
  const double x = s / rho;
  const double r = std::round(x);
  return std::abs(x - r) <= 1e-9 ? r : x;
}

}  // namespace

int InterpolantView::cell(double s) const {
  if (s < s_min() - 1e-12 * trace_.rho() || s > s_max() + 1e-12 * trace_.rho())
    throw std::out_of_range("interpolant parameter outside [-rho, S_rho]");
  const double x = snap_index(s, trace_.rho());
  return std::clamp(static_cast<int>(std::ceil(x)), 0, trace_.N());
}

double InterpolantView::t_hat(double s) const {
  const int k = cell(s);
  const double theta = std::clamp(snap_index(s, trace_.rho()) - (k - 1), 0.0, 1.0);
  return trace_.time(k - 1) + theta * (trace_.time(k) - trace_.time(k - 1));
}

double InterpolantView::t_over(double s) const { return trace_.time(cell(s)); }

double InterpolantView::t_under(double s) const {
  cell(s);
  const double x = snap_index(s, trace_.rho());
  return trace_.time(std::clamp(static_cast<int>(std::floor(x)), -1, trace_.N()));
}

double InterpolantView::t_hat_slope(double s) const {
  const double x = snap_index(s, trace_.rho());
  const int k = std::clamp(static_cast<int>(std::floor(x)) + 1, 0, trace_.N());
  return (trace_.time(k) - trace_.time(k - 1)) / trace_.rho();
}

double InterpolantView::z_hat_slope_norm(double s) const {
  const double x = snap_index(s, trace_.rho());
  const int k = std::clamp(static_cast<int>(std::floor(x)) + 1, 0, trace_.N());
  return trace_.records[k].dz_norm_V / trace_.rho();
}

const Snapshot& InterpolantView::snap(int k) const {
  auto it = trace_.snapshots.find(k);
  if (it == trace_.snapshots.end()) throw std::out_of_range("snapshot for step " + std::to_string(k) + " not stored");
  return it->second;
}

InterpolantSample InterpolantView::sample(double s, bool fields) const {
  InterpolantSample out;
  out.s = s;
  out.t_hat = t_hat(s);
  out.t_under = t_under(s);
  out.t_over = t_over(s);
  if (!fields) return out;
  const int k = cell(s);
  const double x = snap_index(s, trace_.rho());
  const double theta = std::clamp(x - (k - 1), 0.0, 1.0);
  const Snapshot& a = snap(k - 1);
  const Snapshot& b = snap(k);
  out.u_hat = a.u + theta * (b.u - a.u);
  out.z_hat = a.z + theta * (b.z - a.z);
  const int ko = k;
  const int ku = std::clamp(static_cast<int>(std::floor(x)), -1, trace_.N());
  out.u_over = snap(ko).u;
  out.z_over = snap(ko).z;
  out.u_under = snap(ku).u;
  out.z_under = snap(ku).z;
  return out;
}

std::vector<InterpolantSample> sample_interpolants(const Trace& trace, const std::vector<double>& s_values,
                                                   bool fields) {
  InterpolantView view(trace);
  std::vector<InterpolantSample> out;
  out.reserve(s_values.size());
  for (double s : s_values) out.push_back(view.sample(s, fields));
  return out;
}

}  // namespace pfbv

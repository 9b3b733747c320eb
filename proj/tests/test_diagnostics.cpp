#include <doctest.h>

#include <cmath>
#include <random>
#include <stdexcept>

#include "pfbv/diagnostics.hpp"
#include "pfbv/driver.hpp"
#include "pfbv/errors.hpp"
#include "pfbv/zerodim.hpp"

using namespace pfbv;

namespace {

// inf over sigma >= lo of |x - sigma|^q by golden section on a bracket
double scalar_projection(double x, double lo, double q) {
  double a = lo, b = lo + std::abs(x - lo) + 1.0;
  const double g = 0.5 * (std::sqrt(5.0) - 1.0);
  auto f = [&](double s) { return std::pow(std::abs(x - s), q); };
  double c = b - g * (b - a), d = a + g * (b - a);
  for (int i = 0; i < 200; ++i) {
    if (f(c) < f(d)) b = d;
    else a = c;
    c = b - g * (b - a);
    d = a + g * (b - a);
  }
  return std::min({f(0.5 * (a + b)), f(lo)});
}

Trace fake_trace(const std::vector<double>& dt, const std::vector<double>& dist) {
  Trace tr;
  tr.scheme.rho = 0.1;
  double t = 0.0;
  for (std::size_t k = 0; k < dt.size(); ++k) {
    StepRecord r;
    r.k = static_cast<int>(k);
    t += dt[k];
    r.t = t;
    r.dt = dt[k];
    r.dual_distance = dist[k];
    tr.records.push_back(r);
  }
  return tr;
}

FemModel bar(double g_c, LoadProgram l) {
  CtMeshOptions o;
  o.notch = false;
  MaterialModel mat;
  mat.g_c = g_c;
  mat.theta = 0.1;
  return FemModel(build_ct_mesh(1.0, 0.25, 0.25, o), mat, l);
}

}  // namespace

TEST_CASE("dual distance: closed form") {
  const Eigen::VectorXd w = Eigen::VectorXd::Constant(3, 0.5);
  CHECK(dual_distance_closed_form(Eigen::Vector3d(-1.0, 0.0, 0.5), w, 0.5, 4.0) == 0.0);
  CHECK(dual_distance_closed_form(Eigen::VectorXd::Constant(1, 3.0), Eigen::VectorXd::Ones(1), 1.0, 2.0) ==
        doctest::Approx(2.0).epsilon(1e-15));
  CHECK_THROWS_AS(dual_distance_closed_form(Eigen::VectorXd::Ones(2), w, 0.0, 2.0), DimensionError);
  CHECK_THROWS_AS(dual_distance_closed_form(w, w, 0.0, 1.0), ConfigError);

  std::mt19937 rng(11);
  std::normal_distribution<double> n;
  std::uniform_real_distribution<double> U(0.1, 1.0);
  for (double alpha : {2.0, 4.0, 8.0})
    for (double kr : {0.0, 1.0})
      for (int rep = 0; rep < 10; ++rep) {
        const int m = 7;
        Eigen::VectorXd d(m), wr(m);
        for (int i = 0; i < m; ++i) d[i] = 2.0 * n(rng), wr[i] = U(rng);
        // ∂R(0) = {sigma >= -kappa_R}; distance of -d measured in the weighted L^{alpha'} norm
        const double q = alpha / (alpha - 1.0);
        double s = 0.0;
        for (int i = 0; i < m; ++i) s += wr[i] * scalar_projection(-d[i], -kr, q);
        const double oracle = std::pow(s, 1.0 / q);
        CHECK(dual_distance_closed_form(d, wr, kr, alpha) == doctest::Approx(oracle).epsilon(1e-8));
      }
}

TEST_CASE("complementarity check") {
  CHECK(complementarity_check(fake_trace({0.0, 0.1, 0.1}, {0.0, 0.0, 0.0}), 1e-10, 1e-7).empty());
  // jump regime: positive distance is exempt while dt = 0
  CHECK(complementarity_check(fake_trace({0.0, 0.0, 0.0, 0.1}, {0.5, 0.5, 0.0, 0.0}), 1e-10, 1e-7).empty());
  const auto v = complementarity_check(fake_trace({0.0, 0.1, 0.05, 0.1}, {0.0, 1.0, 0.0, 0.0}), 1e-10, 1e-7);
  REQUIRE(v.size() == 1);
  CHECK(v[0].k == 2);
  CHECK(v[0].value == 1.0);

  // fault injection into a real trace
  ZeroDimModel m;
  Trace tr = run_zero_dim(m);
  CHECK(complementarity_check(tr, 1e-10, 10 * tr.scheme.tol_newton).empty());
  std::mt19937 rng(2);
  std::vector<int> cand;
  for (int k = 1; k < tr.N(); ++k)
    if (tr.records[k + 1].dt > 1e-10) cand.push_back(k);
  REQUIRE_FALSE(cand.empty());
  const int k = cand[std::uniform_int_distribution<std::size_t>(0, cand.size() - 1)(rng)];
  tr.records[k].dual_distance = 1.0;
  const auto f = complementarity_check(tr, 1e-10, 10 * tr.scheme.tol_newton);
  REQUIRE(f.size() == 1);
  CHECK(f[0].k == k + 1);
}

TEST_CASE("complementarity holds on an elastic run") {
  ZeroDimModel m;
  m.kappa_R = 100.0;  // threshold never reached
  const Trace tr = run_zero_dim(m);
  CHECK(complementarity_check(tr, 1e-10, 10 * tr.scheme.tol_newton).empty());
  for (const auto& r : tr.records) {
    CHECK(r.dual_distance == 0.0);
    if (r.k > 0) CHECK(r.dt == doctest::Approx(m.rho).epsilon(1e-12));
  }
}

TEST_CASE("energy balance: frozen runs close exactly") {
  ZeroDimModel m;
  m.ell_rate = 0.0;
  const BalanceReport b0 = energy_balance(run_zero_dim(m));
  CHECK(b0.exact);
  for (const auto& r : b0.rows) CHECK(std::abs(r.residual) <= 1e-10);

  // damage frozen by a huge toughness, displacement re-solved under a traction ramp
  LoadProgram l;
  l.mode = LoadMode::TractionRamp;
  l.traction_rate = 1.0;
  FemModel fem = bar(1e12, l);
  SchemeParams p;
  p.rho = 0.1;
  const Trace tr = run(fem, p, Eigen::VectorXd::Ones(fem.num_nodes()));
  const BalanceReport b = energy_balance(tr);
  CHECK(b.exact);
  double scale = 0.0;
  for (const auto& r : b.rows) scale = std::max(scale, std::abs(r.dE));
  REQUIRE(scale > 0.0);
  for (const auto& r : b.rows) CHECK(std::abs(r.residual) <= 1e-10 * scale);
}

TEST_CASE("energy balance: zero-dimensional ledger against dense quadrature") {
  ZeroDimModel m;
  const Trace tr = run_zero_dim(m);
  const BalanceReport b = energy_balance(tr);
  REQUIRE(static_cast<int>(b.rows.size()) == tr.N() + 1);
  auto E = [&](double t, double u, double z) {
    return 0.5 * (z * z + m.eta) * m.a * u * u - m.ell_rate * t * u + 0.5 * m.kappa_E * z * z;
  };
  double cum = 0.0;
  for (int k = 0; k <= tr.N(); ++k) {
    const auto& a = tr.snapshots.at(k - 1);
    const auto& c = tr.snapshots.at(k);
    const double t0 = tr.time(k - 1), t1 = tr.time(k);
    // chain-rule work: integral of dE/dt = -ell' u along the affine reconstruction in s
    const int n = 4000;
    double work = 0.0;
    for (int j = 0; j < n; ++j) {
      const double th = (j + 0.5) / n;
      const double u = a.u[0] + th * (c.u[0] - a.u[0]);
      work += -m.ell_rate * u * (t1 - t0) / n;
    }
    const double dz = c.z[0] - a.z[0];
    const double dist = std::max(0.0, (m.a * c.u[0] * c.u[0] + m.kappa_E) * c.z[0] - m.kappa_R);
    const double r = E(t1, c.u[0], c.z[0]) - E(t0, a.u[0], a.z[0]) + m.kappa_R * std::abs(dz) + std::abs(dz) * dist - work;
    cum += r;
    CHECK(std::abs(b.rows[k].work - work) <= 1e-12);
    CHECK(std::abs(b.rows[k].residual - r) <= 1e-12);
  }
  CHECK(std::abs(b.cumulative() - cum) <= 1e-10);
}

TEST_CASE("interpolants") {
  ZeroDimModel m;
  const Trace tr = run_zero_dim(m);
  InterpolantView v(tr);
  const double rho = tr.rho();
  CHECK(v.s_min() == -rho);
  CHECK(v.t_hat(v.s_max()) == tr.scheme.T);
  CHECK(v.t_over(v.s_max()) == tr.scheme.T);
  CHECK(v.t_hat(-rho) == tr.records[0].t);
  for (int k = 0; k <= tr.N(); ++k) {
    const double s = k * rho;
    CHECK(v.t_hat(s) == doctest::Approx(tr.records[k].t).epsilon(1e-14));
    CHECK(v.t_under(s) == tr.records[k].t);
    CHECK(v.t_over(s) == tr.records[k].t);
    if (k > 0) {
      const double mid = (k - 0.5) * rho;
      CHECK(v.t_hat(mid) == doctest::Approx(0.5 * (tr.records[k - 1].t + tr.records[k].t)).epsilon(1e-14));
      CHECK(v.t_under(mid) == tr.records[k - 1].t);
      CHECK(v.t_over(mid) == tr.records[k].t);
      const auto smp = v.sample(mid);
      CHECK(smp.z_hat[0] == doctest::Approx(0.5 * (tr.snapshots.at(k - 1).z[0] + tr.snapshots.at(k).z[0])));
      CHECK(smp.z_under[0] == tr.snapshots.at(k - 1).z[0]);
      CHECK(smp.z_over[0] == tr.snapshots.at(k).z[0]);
    }
  }
  double prev = -1.0;
  for (int j = 0; j <= 1000; ++j) {
    const double t = v.t_hat(v.s_min() + (v.s_max() - v.s_min()) * j / 1000.0);
    CHECK(t >= prev);
    prev = t;
  }

  std::mt19937 rng(8);
  std::uniform_real_distribution<double> U(0.0, tr.S() - rho);
  for (int j = 0; j < 100; ++j) {
    const double s = U(rng);
    CHECK(v.t_hat_slope(s) + v.z_hat_slope_norm(s - rho) == doctest::Approx(1.0).epsilon(1e-8));
  }
  for (const auto& r : tr.records) CHECK(r.dz_norm_V / rho <= 1.0 + 1e-8);

  CHECK_THROWS_AS(v.t_hat(-2 * rho), std::out_of_range);
  CHECK_THROWS_AS(v.sample(tr.S() + rho), std::out_of_range);
  CHECK(sample_interpolants(tr, {0.0, rho}).size() == 2);

  // missing snapshots are reported, times stay available
  LoadProgram l;
  l.ubar_rate = 0.1;
  FemModel fem = bar(1.0, l);
  SchemeParams p;
  p.rho = 0.25;
  RunOptions ro;
  ro.snapshots.stride = 0;
  ro.snapshots.jump_onsets = false;
  const Trace ft = run(fem, p, Eigen::VectorXd::Ones(fem.num_nodes()), ro);
  InterpolantView fv(ft);
  CHECK_NOTHROW(fv.sample(0.5 * p.rho, false));
  CHECK_THROWS_AS(fv.sample(1.5 * p.rho), std::out_of_range);
}

TEST_CASE("lower-bound certificate at converged steps") {
  LoadProgram l;
  l.ubar_rate = 0.3;
  FemModel fem = bar(1.0, l);
  SchemeParams p;
  p.rho = 0.02;
  p.T = 0.5;
  p.tol_am = 1e-10;
  RunOptions ro;
  ro.snapshots.all = true;
  const Trace tr = run(fem, p, Eigen::VectorXd::Ones(fem.num_nodes()), ro);
  const auto norm = make_vnorm(fem, p.norm);
  std::mt19937 rng(4);
  std::uniform_real_distribution<double> U(-1.0, 0.0);
  int checked = 0;
  for (int k = 0; k <= tr.N(); ++k) {
    const auto& r = tr.records[k];
    if (!r.am_converged || r.stationarity > p.tol_newton) continue;
    const auto& zp = tr.snapshots.at(k - 1).z;
    const State s{r.t, tr.snapshots.at(k).u, tr.snapshots.at(k).z};
    const Eigen::VectorXd dz = s.z - zp;
    Eigen::VectorXd g = grad_z(fem, s).g;
    if (r.xi_norm > 0.0) {
      const double pw = norm->power();
      g += r.xi_norm / (pw * std::pow(norm->value(dz), pw - 1.0)) * norm->grad_S(dz);
    }
    for (int j = 0; j < 50; ++j) {
      Eigen::VectorXd v(fem.num_nodes());
      for (Eigen::Index i = 0; i < v.size(); ++i) v[i] = s.z[i] > 0.0 ? U(rng) : 0.0;
      v /= norm->value(v);
      const double R = dissipation_R(v, fem.material(), fem.weights()).value;
      CHECK(-g.dot(v) <= R + 10 * p.tol_newton);
    }
    ++checked;
  }
  CHECK(checked > tr.N() / 2);
}

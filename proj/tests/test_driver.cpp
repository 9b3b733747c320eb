#include <doctest.h>

#include <cmath>

#include "pfbv/diagnostics.hpp"
#include "pfbv/driver.hpp"
#include "pfbv/errors.hpp"

using namespace pfbv;

namespace {

FemModel bar(double g_c, double u_max, int n = 4) {
  CtMeshOptions o;
  o.notch = false;
  MaterialModel mat;
  mat.g_c = g_c;
  mat.theta = 0.1;
  LoadProgram l;
  l.ubar_rate = u_max;
  return FemModel(build_ct_mesh(1.0, 1.0 / n, 1.0 / n, o), mat, l);
}

SchemeParams scheme(double rho) {
  SchemeParams p;
  p.rho = rho;
  p.T = 1.0;
  return p;
}

}  // namespace

TEST_CASE("time update") {
  CHECK(time_update(0.0, 0.03, 0.1, 1.0) == doctest::Approx(0.07));
  CHECK(time_update(0.4, 0.1, 0.1, 1.0) == 0.4);
  CHECK(time_update(0.95, 0.0, 0.1, 1.0) == 1.0);
  CHECK(time_update(0.4, 0.1 * (1 + 1e-9), 0.1, 1.0) == 0.4);
  CHECK_THROWS_AS(time_update(0.4, 0.2, 0.1, 1.0), SolverError);
  double t = 0.0;
  int steps = 0;
  while (t != 1.0) t = time_update(t, 0.0, 0.1, 1.0), ++steps;
  CHECK(steps == 10);
}

TEST_CASE("AM loop: relaxed state is a fixpoint after one iteration") {
  FemModel fem = bar(1.0, 0.3);
  SchemeParams p = scheme(0.05);
  p.tol_am = 1e-10;
  FemProblem prob(fem, p);
  const Eigen::VectorXd z0 = Eigen::VectorXd::Ones(fem.num_nodes());
  const AmResult a = am_loop(prob, 0.5, z0, kInfinity, p);
  CHECK(a.converged);
  CHECK(a.iters > 1);
  const AmResult b = am_loop(prob, 0.5, a.z, kInfinity, p, &a.u);
  CHECK(b.converged);
  CHECK(b.iters == 1);
  CHECK((b.z - a.z).cwiseAbs().maxCoeff() <= 1e-10);
  CHECK(a.max_rel_increase <= 1e-10);
  for (std::size_t i = 1; i < a.values.size(); ++i) CHECK(a.values[i] <= a.values[i - 1] * (1 + 1e-10) + 1e-300);
}

TEST_CASE("no damage possible: z stays, dt = rho, N = ceil(T/rho)") {
  FemModel fem = bar(1e12, 0.3);
  SchemeParams p = scheme(0.1);
  const Eigen::VectorXd z0 = Eigen::VectorXd::Ones(fem.num_nodes());
  RunOptions ro;
  ro.snapshots.all = true;
  const Trace tr = run(fem, p, z0, ro);
  CHECK(tr.N() == 10);
  for (int k = 1; k <= tr.N(); ++k) CHECK(tr.records[k].dt == doctest::Approx(0.1).epsilon(1e-9));
  for (const auto& [k, s] : tr.snapshots) CHECK((s.z - z0).cwiseAbs().maxCoeff() <= 1e-9);
  CHECK(tr.records.back().t == 1.0);
  CHECK(check_trace_invariants(tr).empty());

  // linear force-displacement line in the pure AM baseline
  const Trace am = run_pure_am(fem, p, z0, 8);
  CHECK(am.N() == 8);
  const double k1 = am.records[1].reaction / am.records[1].ubar;
  for (int k = 1; k <= am.N(); ++k) CHECK(am.records[k].reaction / am.records[k].ubar == doctest::Approx(k1).epsilon(1e-9));
}

TEST_CASE("damaging run satisfies the structural invariants") {
  FemModel fem = bar(1.0, 0.4);
  for (NormSpec ns : {NormSpec{NormKind::LalphaNodal, 4.0}, NormSpec{NormKind::LalphaNodal, 2.0},
                      NormSpec{NormKind::H1, 2.0}}) {
    SchemeParams p = scheme(0.05);
    p.norm = ns;
    const Trace tr = run(fem, p, Eigen::VectorXd::Ones(fem.num_nodes()));
    const auto inv = check_trace_invariants(tr);
    for (const auto& v : inv) INFO(v.what << " at " << v.k << " value " << v.value);
    CHECK(inv.empty());
    CHECK(tr.N() >= static_cast<int>(std::ceil(p.T / p.rho)));
    CHECK(tr.records.back().t == p.T);
    bool active = false;
    for (const auto& r : tr.records) active = active || r.ball_active;
    CHECK(active);
    if (ns.kind == NormKind::LalphaNodal) CHECK(complementarity_check(tr, 1e-10, 10 * p.tol_newton).empty());
  }
}

TEST_CASE("initial damage is validated") {
  FemModel fem = bar(1.0, 0.3);
  SchemeParams p = scheme(0.1);
  CHECK_THROWS_AS(run(fem, p, Eigen::VectorXd::Constant(fem.num_nodes(), 1.5)), ConfigError);
  CHECK_THROWS_AS(run_pure_am(fem, p, Eigen::VectorXd::Ones(fem.num_nodes()), 0), ConfigError);
}

TEST_CASE("large rho reproduces pure AM on the same grid") {
  FemModel fem = bar(1.0, 0.3);
  SchemeParams p = scheme(0.1);
  const Eigen::VectorXd z0 = Eigen::VectorXd::Ones(fem.num_nodes());
  const Trace am = run_pure_am(fem, p, z0, 10);
  double max_dz = 0.0, max_dt = 0.0;
  for (const auto& r : am.records) max_dz = std::max(max_dz, r.dz_norm_V), max_dt = std::max(max_dt, r.dt);
  SchemeParams big = p;
  big.rho = 2 * max_dz + max_dt;
  const Trace em = run(fem, big, z0);
  std::vector<double> times;
  for (const auto& r : em.records) times.push_back(r.t);
  FemProblem prob(fem, big);
  const Trace ref = run_pure_am_on_grid(prob, big, z0, times);
  REQUIRE(ref.N() == em.N());
  for (int k = 0; k <= em.N(); ++k) {
    CHECK_FALSE(em.records[k].ball_active);
    CHECK(em.records[k].energy == doctest::Approx(ref.records[k].energy).epsilon(1e-8));
    CHECK(em.records[k].reaction == doctest::Approx(ref.records[k].reaction).epsilon(1e-8));
  }
}

#include <doctest.h>

#include <array>
#include <cmath>
#include <functional>
#include <random>

#include "pfbv/diagnostics.hpp"
#include "pfbv/errors.hpp"
#include "pfbv/solvers.hpp"

using namespace pfbv;

namespace {

Mesh grid(double lx, int nx, int ny) {
  std::vector<double> xs, ys;
  for (int i = 0; i <= nx; ++i) xs.push_back(lx * i / nx);
  for (int j = 0; j <= ny; ++j) ys.push_back(static_cast<double>(j) / ny);
  Mesh m = build_tensor_mesh(xs, ys);
  for (int i = 0; i <= nx; ++i) {
    m.boundary_sets["clamped"].push_back(i);
    m.boundary_sets["loaded"].push_back(ny * (nx + 1) + i);
  }
  return m;
}

// u_y = e y on every node: uniform strain (0, e, 0)
Eigen::VectorXd stretch(const FemModel& fem, double e) {
  Eigen::VectorXd u = Eigen::VectorXd::Zero(fem.num_u_dofs());
  for (int n = 0; n < fem.num_nodes(); ++n) u[2 * n + 1] = e * fem.mesh().nodes[n].y;
  return u;
}

double golden(const std::function<double(double)>& f, double a, double b) {
  const double r = (std::sqrt(5.0) - 1) / 2;
  double c = b - r * (b - a), d = a + r * (b - a);
  while (b - a > 1e-13) {
    if (f(c) < f(d)) b = d;
    else a = c;
    c = b - r * (b - a);
    d = a + r * (b - a);
  }
  return 0.5 * (a + b);
}

}  // namespace

TEST_CASE("displacement step") {
  MaterialModel mat;
  mat.poisson_nu = 0.0;
  LoadProgram l;
  l.ubar_rate = 0.02;
  FemModel fem(grid(1.0, 3, 3), mat, l);
  DisplacementSolver us(fem);
  const Eigen::VectorXd ones = Eigen::VectorXd::Ones(fem.num_nodes());
  CHECK(us.solve(0.0, ones).cwiseAbs().maxCoeff() == 0.0);

  const Eigen::VectorXd u = us.solve(1.0, ones);
  CHECK((u - stretch(fem, 0.02)).cwiseAbs().maxCoeff() <= 1e-14);
  const Eigen::VectorXd r = grad_u(fem, {1.0, u, ones});
  for (int d : fem.free_dofs()) CHECK(std::abs(r[d]) <= 1e-12);
  CHECK(us.last_residual() <= 1e-10);

  // damaged field: momentum balance on free dofs still holds
  std::mt19937 rng(1);
  std::uniform_real_distribution<double> Z(0.0, 1.0);
  Eigen::VectorXd z(fem.num_nodes());
  for (auto& x : z) x = Z(rng);
  const Eigen::VectorXd u2 = us.solve(0.7, z);
  const Eigen::VectorXd r2 = grad_u(fem, {0.7, u2, z});
  for (int d : fem.free_dofs()) CHECK(std::abs(r2[d]) <= 1e-10);
  const Eigen::VectorXd dv = fem.dirichlet_values(0.7);
  for (std::size_t i = 0; i < fem.dirichlet_dofs().size(); ++i) CHECK(u2[fem.dirichlet_dofs()[i]] == dv[i]);
}

TEST_CASE("z quadratic reproduces the energy up to a constant") {
  std::mt19937 rng(4);
  std::uniform_real_distribution<double> U(-0.1, 0.1), Z(0.0, 1.0);
  for (EnergyPreset p : {EnergyPreset::AT, EnergyPreset::Analysis}) {
    MaterialModel mat;
    mat.preset = p;
    FemModel fem(grid(2.0, 2, 1), mat, LoadProgram{});
    Eigen::VectorXd u(fem.num_u_dofs());
    for (auto& x : u) x = U(rng);
    const ZQuadratic q = z_quadratic(fem, u);
    double c0 = 0.0;
    for (int i = 0; i < 5; ++i) {
      Eigen::VectorXd z(fem.num_nodes());
      for (auto& x : z) x = Z(rng);
      const double diff = total_energy(fem, {0.0, u, z}) - BallBoxSolver::objective(q.A, q.b, z);
      if (i == 0) c0 = diff;
      CHECK(diff == doctest::Approx(c0).epsilon(1e-12));
    }
  }
}

TEST_CASE("z step without driving force keeps z") {
  MaterialModel mat;
  SchemeParams sp;
  FemModel fem(grid(1.0, 3, 3), mat, LoadProgram{});
  DamageSolver zs(fem, sp);
  const Eigen::VectorXd zp = Eigen::VectorXd::Ones(fem.num_nodes());
  const auto rep = zs.solve(Eigen::VectorXd::Zero(fem.num_u_dofs()), zp, 0.01);
  CHECK((rep.z - zp).cwiseAbs().maxCoeff() <= 1e-12);
  CHECK(rep.mu == 0.0);
  const auto rep0 = zs.solve(stretch(fem, 0.5), zp, 0.0);
  CHECK(rep0.z == zp);
}

TEST_CASE("single element, uniform strain, unconstrained ball: golden-section oracle") {
  MaterialModel mat;
  LoadProgram l;
  FemModel fem(grid(1.0, 1, 1), mat, l);
  SchemeParams sp;
  DamageSolver zs(fem, sp);
  for (double e : {0.05, 0.1, 0.2, 0.4}) {
    const Eigen::VectorXd u = stretch(fem, e);
    const Eigen::VectorXd zp = Eigen::VectorXd::Ones(4);
    const auto rep = zs.solve(u, zp, kInfinity);
    auto f = [&](double z) { return total_energy(fem, {0.0, u, Eigen::VectorXd::Constant(4, z)}); };
    const double zo = golden(f, 0.0, 1.0);
    for (int i = 0; i < 4; ++i) CHECK(rep.z[i] == doctest::Approx(zo).epsilon(1e-7));
  }
}

TEST_CASE("2x1 mesh, active ball: exhaustive lattice oracle") {
  MaterialModel mat;
  FemModel fem(grid(2.0, 2, 1), mat, LoadProgram{});
  SchemeParams sp;
  sp.norm = {NormKind::LalphaNodal, 4.0};
  DamageSolver zs(fem, sp);
  // non-uniform strain so that nodes move differently
  Eigen::VectorXd u = Eigen::VectorXd::Zero(fem.num_u_dofs());
  for (int n = 0; n < fem.num_nodes(); ++n) {
    const Point& p = fem.mesh().nodes[n];
    u[2 * n + 1] = (0.15 + 0.1 * p.x) * p.y;
  }
  Eigen::VectorXd zp(6);
  zp << 1.0, 0.95, 0.9, 1.0, 0.97, 0.92;
  const double rho = 0.01;
  const auto rep = zs.solve(u, zp, rho);
  CHECK(rep.constraint_active);
  CHECK(rep.ball_norm == doctest::Approx(rho).epsilon(1e-10));

  const ZQuadratic q = z_quadratic(fem, u);
  const Eigen::MatrixXd A(q.A);
  const Eigen::VectorXd& w = fem.weights();
  const double h = 1e-3;
  std::array<int, 6> nmax{};
  for (int i = 0; i < 6; ++i) nmax[i] = static_cast<int>(std::floor(rho / std::pow(w[i], 0.25) / h + 1e-9));
  double best = kInfinity;
  Eigen::VectorXd zbest = zp, z(6);
  std::array<int, 6> k{};
  std::function<void(int, double)> rec = [&](int i, double S) {
    if (i == 6) {
      const double val = 0.5 * z.dot(A * z) - q.b.dot(z);
      if (val < best) best = val, zbest = z;
      return;
    }
    for (k[i] = 0; k[i] <= nmax[i]; ++k[i]) {
      const double dz = k[i] * h;
      const double S2 = S + w[i] * std::pow(dz, 4);
      if (S2 > std::pow(rho, 4) * (1 + 1e-12)) break;
      z[i] = zp[i] - dz;
      rec(i + 1, S2);
    }
  };
  rec(0, 0.0);
  CHECK((rep.z - zbest).cwiseAbs().maxCoeff() <= 2 * h);
  CHECK(BallBoxSolver::objective(q.A, q.b, rep.z) <= best + 1e-12);
}

TEST_CASE("KKT properties for all norm kinds") {
  std::mt19937 rng(31);
  std::uniform_real_distribution<double> U(0.0, 1.0);
  for (NormSpec ns : {NormSpec{NormKind::LalphaNodal, 4.0}, NormSpec{NormKind::LalphaNodal, 2.0},
                      NormSpec{NormKind::LalphaGauss, 4.0}, NormSpec{NormKind::H1, 2.0}}) {
    for (EnergyPreset p : {EnergyPreset::AT, EnergyPreset::Analysis}) {
      MaterialModel mat;
      mat.preset = p;
      mat.kappa_R = 0.5;
      FemModel fem(grid(1.0, 4, 4), mat, LoadProgram{});
      SchemeParams sp;
      sp.norm = ns;
      DamageSolver zs(fem, sp);
      for (int trial = 0; trial < 3; ++trial) {
        Eigen::VectorXd u = Eigen::VectorXd::Zero(fem.num_u_dofs());
        const double amp = p == EnergyPreset::AT ? 0.3 : 1.0;
        for (int n = 0; n < fem.num_nodes(); ++n) {
          const Point& pt = fem.mesh().nodes[n];
          u[2 * n + 1] = amp * (0.5 + U(rng)) * pt.y;
          u[2 * n] = 0.05 * U(rng);
        }
        Eigen::VectorXd zp(fem.num_nodes());
        for (auto& x : zp) x = 0.6 + 0.4 * U(rng);
        const double rho = trial == 0 ? kInfinity : 0.02 * trial;
        const auto rep = zs.solve(u, zp, rho);
        const ZQuadratic q = z_quadratic(fem, u);
        const Eigen::VectorXd b = q.b + mat.dissipation_constant() * fem.weights();
        CHECK((rep.z - zp).maxCoeff() <= 1e-12);
        CHECK(rep.z.minCoeff() >= -1e-8);
        if (rho < kInfinity) CHECK(field_norm_V(fem, rep.z - zp, ns) <= rho * (1 + 1e-6));
        CHECK(rep.stationarity_residual <= sp.tol_newton * 10);
        CHECK(rep.mu >= 0.0);
        CHECK(rep.lambda.minCoeff() >= 0.0);
        CHECK(rep.mu * std::abs(rho < kInfinity ? rho - rep.ball_norm : 0.0) <= sp.tol_constraint);
        for (int i = 0; i < fem.num_nodes(); ++i) CHECK(rep.lambda[i] * (zp[i] - rep.z[i]) <= 1e-10);
        CHECK(BallBoxSolver::objective(q.A, b, rep.z) <= BallBoxSolver::objective(q.A, b, zp) + 1e-12);
      }
    }
  }
}

TEST_CASE("ball multiplier equals the dual distance when no box constraint binds") {
  MaterialModel mat;
  FemModel fem(grid(1.0, 1, 1), mat, LoadProgram{});
  for (double alpha : {2.0, 4.0, 8.0}) {
    SchemeParams sp;
    sp.norm = {NormKind::LalphaNodal, alpha};
    DamageSolver zs(fem, sp);
    const Eigen::VectorXd u = stretch(fem, 0.3);
    const auto rep = zs.solve(u, Eigen::VectorXd::Ones(4), 0.01);
    REQUIRE(rep.constraint_active);
    CHECK((rep.z - Eigen::VectorXd::Ones(4)).maxCoeff() < -1e-3);
    const double dist = dual_distance(fem, {0.0, u, rep.z}, sp.norm).value;
    CHECK(std::abs(rep.xi_norm_dual - dist) <= 10 * sp.tol_newton);
  }
}

TEST_CASE("augmented Lagrangian update rule") {
  SchemeParams sp;
  ALState st;
  st.beta_box = 10.0;
  st.beta_ball = 10.0;
  st.lambda = Eigen::VectorXd::Constant(3, 0.5);
  st.mu = 0.2;
  al_penalty_update(st, Eigen::VectorXd::Zero(3), 0.0, sp);
  CHECK(st.lambda == Eigen::VectorXd::Constant(3, 0.5));
  CHECK(st.mu == 0.2);
  CHECK(st.beta_box == 10.0);

  ALState s2;
  s2.beta_box = 10.0;
  s2.beta_ball = 10.0;
  Eigen::VectorXd v(3);
  v << 0.01, 0.0, -0.3;
  al_penalty_update(s2, v, 0.02, sp);
  CHECK(s2.lambda[0] == doctest::Approx(0.1));
  CHECK(s2.lambda[1] == 0.0);
  CHECK(s2.lambda[2] == 0.0);
  CHECK(s2.mu == doctest::Approx(0.2));
  CHECK(s2.beta_box == 10.0);  // no history yet

  ALState s3;
  s3.beta_box = 10.0;
  s3.beta_ball = 10.0;
  s3.prev_ball_violation = 1.0;
  al_penalty_update(s3, Eigen::VectorXd::Zero(1), 0.1, sp);
  CHECK(s3.beta_ball == 10.0);  // shrank by more than 4
  al_penalty_update(s3, Eigen::VectorXd::Zero(1), 0.09, sp);
  CHECK(s3.beta_ball == 100.0);  // stalled

  ALState big;
  big.beta_box = 1e299;
  big.beta_ball = 1.0;
  big.prev_box_violation = 1.0;
  CHECK_THROWS_AS(al_penalty_update(big, Eigen::VectorXd::Constant(1, 1.0), 0.0, sp), SolverError);
}

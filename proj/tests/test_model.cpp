#include <doctest.h>

#include <Eigen/Eigenvalues>
#include <random>

#include "pfbv/errors.hpp"
#include "pfbv/model.hpp"

using namespace pfbv;

TEST_CASE("plane-strain elasticity") {
  const Voigt C1 = voigt_elasticity(1.0, 0.0);
  CHECK((C1 - Eigen::Vector3d(1.0, 1.0, 0.5).asDiagonal().toDenseMatrix()).norm() < 1e-15);

  const double E = 100.0, nu = 0.3;
  const double lam = E * nu / ((1 + nu) * (1 - 2 * nu));
  const double mu = E / (2 * (1 + nu));
  const Voigt C = voigt_elasticity(E, nu);
  CHECK(C(0, 0) == doctest::Approx(lam + 2 * mu).epsilon(1e-14));
  CHECK(C(1, 1) == doctest::Approx(lam + 2 * mu).epsilon(1e-14));
  CHECK(C(0, 1) == doctest::Approx(lam).epsilon(1e-14));
  CHECK(C(1, 0) == doctest::Approx(lam).epsilon(1e-14));
  CHECK(C(2, 2) == doctest::Approx(mu).epsilon(1e-14));
  CHECK(C(0, 2) == 0.0);

  const Voigt L = voigt_elasticity(25840.0, 0.18);
  CHECK((L - L.transpose()).norm() == 0.0);
  CHECK(Eigen::SelfAdjointEigenSolver<Voigt>(L).eigenvalues().minCoeff() > 0.0);

  CHECK_THROWS_AS(voigt_elasticity(1.0, 0.5), ConfigError);
  CHECK_THROWS_AS(voigt_elasticity(1.0, -1.0), ConfigError);
}

TEST_CASE("coercivity constant bounds the energy of random symmetric tensors") {
  const Voigt C = voigt_elasticity(100.0, 0.3);
  const double gamma = coercivity_constant(C);
  CHECK(gamma > 0.0);
  // 2 mu is the smallest eigenvalue of the isotropic tensor on symmetric tensors
  CHECK(gamma == doctest::Approx(100.0 / 1.3).epsilon(1e-12));
  std::mt19937 rng(3);
  std::normal_distribution<double> n;
  for (int i = 0; i < 200; ++i) {
    const double xx = n(rng), yy = n(rng), xy = n(rng);
    const Eigen::Vector3d v(xx, yy, 2 * xy);
    const double energy = v.dot(C * v);
    const double norm2 = xx * xx + yy * yy + 2 * xy * xy;
    CHECK(energy >= gamma * norm2 * (1 - 1e-12));
  }
}

TEST_CASE("degradation and fracture density") {
  CHECK(degradation(0.0, 1e-4) == doctest::Approx(1e-4));
  CHECK(degradation(1.0, 1e-4) == doctest::Approx(1.0001));
  CHECK(degradation(0.5, 0.01) == doctest::Approx(0.26));

  MaterialModel at;
  CHECK(fracture_density(1.0, Eigen::Vector2d::Zero(), at) == 0.0);
  CHECK(fracture_density(0.0, Eigen::Vector2d::Zero(), at) == doctest::Approx(10.0));
  CHECK(fracture_density(1.0, Eigen::Vector2d(1.0, 0.0), at) == doctest::Approx(0.025));

  MaterialModel an;
  an.preset = EnergyPreset::Analysis;
  an.kappa_E = 2.0;
  CHECK(fracture_density(1.0, Eigen::Vector2d::Zero(), an) == doctest::Approx(1.0));
  CHECK(fracture_density(1.0, Eigen::Vector2d(1.0, 1.0), an) == doctest::Approx(3.0));
}

TEST_CASE("unidirectional dissipation") {
  MaterialModel m;
  m.preset = EnergyPreset::Analysis;
  m.kappa_R = 1.0;
  const Eigen::VectorXd w = Eigen::VectorXd::Constant(4, 0.25);
  CHECK(dissipation_R(Eigen::VectorXd::Zero(4), m, w).value == 0.0);
  const auto r = dissipation_R(Eigen::VectorXd::Constant(4, -0.1), m, w);
  CHECK(r.feasible);
  CHECK(r.value == doctest::Approx(0.1));
  Eigen::VectorXd bad = Eigen::VectorXd::Constant(4, -0.1);
  bad[2] = 1e-3;
  CHECK_FALSE(dissipation_R(bad, m, w).feasible);

  std::mt19937 rng(5);
  std::uniform_real_distribution<double> U(-1.0, 0.0);
  for (int i = 0; i < 20; ++i) {
    Eigen::VectorXd v(4);
    for (int j = 0; j < 4; ++j) v[j] = U(rng);
    const double lam = 3.7;
    const double base = dissipation_R(v, m, w).value;
    CHECK(dissipation_R(lam * v, m, w).value == doctest::Approx(lam * base).epsilon(1e-14));
    CHECK(base >= m.kappa_R * v.cwiseAbs().dot(w) * (1 - 1e-14));
  }

  MaterialModel at;
  at.kappa_R = 5.0;
  CHECK(dissipation_R(Eigen::VectorXd::Constant(4, -0.1), at, w).value == 0.0);
  CHECK_FALSE(dissipation_R(bad, at, w).feasible);
}

TEST_CASE("parameter validation") {
  MaterialModel m;
  CHECK_NOTHROW(m.validate());
  m.eta = 0.0;
  CHECK_THROWS_AS(m.validate(), ConfigError);
  m = {};
  m.theta = -1;
  CHECK_THROWS_AS(m.validate(), ConfigError);
  m = {};
  m.kappa_R = -1;
  CHECK_THROWS_AS(m.validate(), ConfigError);

  SchemeParams s;
  CHECK_NOTHROW(s.validate());
  s.rho = 0.0;
  CHECK_THROWS_AS(s.validate(), ConfigError);
  s = {};
  s.norm.alpha = 1.5;
  CHECK_THROWS_AS(s.validate(), ConfigError);
  s = {};
  s.tol_am = 0.0;
  CHECK_THROWS_AS(s.validate(), ConfigError);

  LoadProgram l;
  l.T = 0.0;
  CHECK_THROWS_AS(l.validate(), ConfigError);
  l = {};
  l.ubar_rate = 2.0;
  CHECK(l.ubar(0.25) == 0.5);
  CHECK(l.ell(0.25) == 0.0);
}

#include "pfbv/model.hpp"

#include <Eigen/Eigenvalues>
#include <cmath>

#include "pfbv/errors.hpp"

namespace pfbv {

Voigt voigt_elasticity(double young_E, double poisson_nu) {
  if (!(poisson_nu > -1.0) || !(poisson_nu < 0.5))
    throw ConfigError("poisson_nu must lie in (-1, 0.5); 0.5 is incompressible");
  if (!(young_E > 0.0)) throw ConfigError("young_E must be positive");
  const double lambda = young_E * poisson_nu / ((1.0 + poisson_nu) * (1.0 - 2.0 * poisson_nu));
  const double mu = young_E / (2.0 * (1.0 + poisson_nu));
  Voigt C;
  C << lambda + 2 * mu, lambda, 0, lambda, lambda + 2 * mu, 0, 0, 0, mu;
  return C;
}

double coercivity_constant(const Voigt& C) {
  // with v = (xi11, xi22, 2 xi12): xi:xi = v1^2 + v2^2 + v3^2/2, so rescale the shear row/col
  Eigen::Matrix3d S = C;
  S.row(2) *= std::sqrt(2.0);
  S.col(2) *= std::sqrt(2.0);
  Eigen::SelfAdjointEigenSolver<Eigen::Matrix3d> es(S);
  return es.eigenvalues().minCoeff();
}

void MaterialModel::validate() const {
  voigt_elasticity(young_E, poisson_nu);
  if (!(eta > 0.0)) throw ConfigError("material.eta must be positive");
  if (!(g_c > 0.0)) throw ConfigError("material.g_c must be positive");
  if (!(theta > 0.0)) throw ConfigError("material.theta must be positive");
  if (!(kappa_E > 0.0)) throw ConfigError("material.kappa_E must be positive");
  if (!(kappa_R >= 0.0)) throw ConfigError("material.kappa_R must be non-negative");
}

double degradation(double z, double eta) { return z * z + eta; }

double fracture_density(double z, const Eigen::Vector2d& grad_z, const MaterialModel& model) {
  if (model.preset == EnergyPreset::AT)
    return model.g_c * ((1.0 - z) * (1.0 - z) / (4.0 * model.theta) + model.theta * grad_z.squaredNorm());
  return 0.5 * model.kappa_E * (z * z + grad_z.squaredNorm());
}

DissipationValue dissipation_R(const Eigen::VectorXd& dz, const MaterialModel& model,
                               const Eigen::VectorXd& weights, double tol) {
  if (dz.size() != weights.size()) throw DimensionError("dissipation_R: size mismatch");
  if ((dz.array() > tol).any()) return {kInfinity, false};
  const double k = model.dissipation_constant();
  return {k * weights.dot(dz.cwiseAbs()), true};
}

void LoadProgram::validate() const {
  if (!(T > 0.0)) throw ConfigError("load.T must be positive");
  if (std::abs(direction.norm() - 1.0) > 1e-12) throw ConfigError("load.direction must be a unit vector");
}

void NormSpec::validate() const {
  if (kind != NormKind::H1) {
    if (!(alpha >= 1.0)) throw ConfigError("scheme.alpha must be >= 1");
  }
}

std::string NormSpec::name() const {
  switch (kind) {
    case NormKind::LalphaNodal: return "lalpha";
    case NormKind::LalphaGauss: return "lalpha_gauss";
    case NormKind::H1: return "h1";
  }
  return "?";
}

void SchemeParams::validate() const {
  if (!(rho > 0.0)) throw ConfigError("scheme.rho must be positive");
  norm.validate();
  if (norm.kind != NormKind::H1 && !(norm.alpha >= 2.0)) throw ConfigError("scheme.alpha must be >= 2");
  if (!(T > 0.0)) throw ConfigError("scheme.T must be positive");
  if (!(tol_am > 0.0) || !(tol_newton > 0.0) || !(tol_constraint > 0.0))
    throw ConfigError("scheme tolerances must be positive");
  if (max_am_iters < 1 || max_al_iters < 1 || max_newton_iters < 1)
    throw ConfigError("scheme iteration caps must be positive");
  if (!(beta0 >= 0.0) || !(beta_growth > 1.0)) throw ConfigError("scheme AL penalty controls invalid");
}

}  // namespace pfbv

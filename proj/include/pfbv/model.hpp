#pragma once

#include <Eigen/Core>
#include <limits>
#include <string>

namespace pfbv {

enum class EnergyPreset { Analysis, AT };
enum class LoadMode { DirichletRamp, TractionRamp };
enum class NormKind { LalphaNodal, LalphaGauss, H1 };

using Voigt = Eigen::Matrix3d;

/// Plane-strain Hooke law in Voigt form with engineering shear strain (eps_xx, eps_yy, 2 eps_xy).
Voigt voigt_elasticity(double young_E, double poisson_nu);

/// Smallest gamma with (C xi):xi >= gamma |xi|^2 for symmetric tensors xi.
double coercivity_constant(const Voigt& C);

struct MaterialModel {
  double young_E = 100.0;
  double poisson_nu = 0.3;
  double eta = 1e-4;
  double g_c = 1.0;
  double theta = 0.025;
  double kappa_E = 1.0;
  double kappa_R = 0.0;
  EnergyPreset preset = EnergyPreset::AT;

  void validate() const;
  Voigt C() const { return voigt_elasticity(young_E, poisson_nu); }
  /// kappa_R for AT (where R vanishes on feasible increments) is forced to zero.
  double dissipation_constant() const { return preset == EnergyPreset::AT ? 0.0 : kappa_R; }
};

double degradation(double z, double eta);

double fracture_density(double z, const Eigen::Vector2d& grad_z, const MaterialModel& model);

struct DissipationValue {
  double value = 0.0;
  bool feasible = true;
};

DissipationValue dissipation_R(const Eigen::VectorXd& dz, const MaterialModel& model,
                               const Eigen::VectorXd& weights, double tol = 1e-8);

struct LoadProgram {
  LoadMode mode = LoadMode::DirichletRamp;
  double ubar_rate = 0.0;      // mm per unit time
  double traction_rate = 0.0;  // N/mm^2 per unit time
  Eigen::Vector2d direction{0.0, 1.0};
  double T = 1.0;
  bool constrain_transverse = true;

  double ubar(double t) const { return mode == LoadMode::DirichletRamp ? ubar_rate * t : 0.0; }
  double ell(double t) const { return mode == LoadMode::TractionRamp ? traction_rate * t : 0.0; }
  void validate() const;
};

struct NormSpec {
  NormKind kind = NormKind::LalphaNodal;
  double alpha = 4.0;
  void validate() const;
  std::string name() const;
};

struct SchemeParams {
  double rho = 0.005;
  NormSpec norm;
  double T = 1.0;
  double tol_am = 1e-6;
  double tol_newton = 1e-8;
  double tol_constraint = 1e-8;
  int max_am_iters = 500;
  int max_al_iters = 50;
  int max_newton_iters = 100;
  double beta0 = 0.0;  // 0: derived from the objective scale
  double beta_growth = 10.0;
  double tol_time = 1e-10;  // dt below this counts as a jump step

  void validate() const;
};

inline constexpr double kInfinity = std::numeric_limits<double>::infinity();

}  // namespace pfbv

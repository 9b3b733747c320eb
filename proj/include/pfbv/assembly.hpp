#pragma once

#include <Eigen/Core>
#include <Eigen/SparseCore>
#include <memory>
#include <vector>

#include "pfbv/mesh.hpp"
#include "pfbv/model.hpp"

namespace pfbv {

using SparseMatrix = Eigen::SparseMatrix<double>;

struct State {
  double t = 0.0;
  Eigen::VectorXd u;
  Eigen::VectorXd z;
};

/// Gauss-Legendre nodes and weights on [-1, 1].
void gauss_legendre(int n, std::vector<double>& x, std::vector<double>& w);

struct QuadPoint {
  double N[4];
  double dx[4];
  double dy[4];
  double w;  // weight times Jacobian determinant
};

/// Per-element quadrature data for a tensor Gauss rule of the given order.
struct QuadratureCache {
  int order = 0;
  std::vector<std::vector<QuadPoint>> points;  // [element][qp]
};

QuadratureCache build_quadrature(const Mesh& mesh, int order);

/// Compressed sparsity pattern plus per-element value slots for scatter assembly.
struct Pattern {
  int dofs_per_node = 1;
  SparseMatrix matrix;             // structure only, values zero
  std::vector<int> element_slots;  // [element][(4d)^2], row-major local (a, b)
  std::vector<int> diag_slots;     // value index of (i, i)
  int local_size() const { return 4 * dofs_per_node; }
};

Pattern build_pattern(const Mesh& mesh, int dofs_per_node);

class FemModel {
 public:
  FemModel(Mesh mesh, MaterialModel material, LoadProgram load, int quad_order = 3);

  const Mesh& mesh() const { return mesh_; }
  const MaterialModel& material() const { return material_; }
  const LoadProgram& load() const { return load_; }
  const Voigt& C() const { return C_; }
  int num_nodes() const { return mesh_.num_nodes(); }
  int num_u_dofs() const { return 2 * mesh_.num_nodes(); }
  double area() const { return area_; }

  const Eigen::VectorXd& weights() const { return weights_; }
  const QuadratureCache& quadrature() const { return quad_; }
  const Pattern& scalar_pattern() const { return scalar_pattern_; }
  const Pattern& vector_pattern() const { return vector_pattern_; }
  const SparseMatrix& mass() const { return mass_; }
  const SparseMatrix& laplacian() const { return laplacian_; }

  /// Consistent nodal load for unit traction along the load direction on "loaded".
  const Eigen::VectorXd& unit_load() const { return unit_load_; }
  Eigen::VectorXd load_vector(double t) const;

  const std::vector<int>& dirichlet_dofs() const { return dirichlet_dofs_; }
  const std::vector<int>& free_dofs() const { return free_dofs_; }
  /// Prescribed values on dirichlet_dofs() at time t.
  Eigen::VectorXd dirichlet_values(double t) const;
  void apply_dirichlet(double t, Eigen::VectorXd& u) const;

  /// Strain (Voigt, engineering shear) at a quadrature point.
  Eigen::Vector3d strain(int e, const QuadPoint& q, const Eigen::VectorXd& u) const;

 private:
  Mesh mesh_;
  MaterialModel material_;
  LoadProgram load_;
  Voigt C_;
  double area_ = 0.0;
  Eigen::VectorXd weights_;
  QuadratureCache quad_;
  Pattern scalar_pattern_;
  Pattern vector_pattern_;
  SparseMatrix mass_;
  SparseMatrix laplacian_;
  Eigen::VectorXd unit_load_;
  std::vector<int> dirichlet_dofs_;
  std::vector<double> dirichlet_scale_;  // value = ubar(t) * scale
  std::vector<int> free_dofs_;
};

double total_energy(const FemModel& fem, const State& s);

/// K(z) u - l(t) on all dofs.
Eigen::VectorXd grad_u(const FemModel& fem, const State& s);

struct ZGradient {
  Eigen::VectorXd g;  // assembled derivative with respect to nodal z
  Eigen::VectorXd d;  // nodal density g_i / w_i
};

ZGradient grad_z(const FemModel& fem, const State& s);

/// Stiffness K(z) on all dofs (no elimination).
SparseMatrix assemble_K(const FemModel& fem, const Eigen::VectorXd& z);
/// Refill an existing matrix that carries fem.vector_pattern().
void assemble_K_into(const FemModel& fem, const Eigen::VectorXd& z, SparseMatrix& K);

/// Energy as a function of z for fixed u: 0.5 z^T A z - b^T z + const.
struct ZQuadratic {
  SparseMatrix A;
  Eigen::VectorXd b;
};

ZQuadratic z_quadratic(const FemModel& fem, const Eigen::VectorXd& u);

/// Ball norm written as N(v) = (S(v) + eps)^(1/p) with smooth S.
class VNorm {
 public:
  virtual ~VNorm() = default;
  virtual double power() const = 0;
  virtual double S(const Eigen::VectorXd& v) const = 0;
  virtual Eigen::VectorXd grad_S(const Eigen::VectorXd& v) const = 0;
  /// Add scale * Hessian of S into values of a matrix with fem.scalar_pattern().
  virtual void add_hess_S(const Eigen::VectorXd& v, double scale, SparseMatrix& H) const = 0;
  double value(const Eigen::VectorXd& v) const;
};

std::unique_ptr<VNorm> make_vnorm(const FemModel& fem, const NormSpec& spec);

double field_norm_V(const FemModel& fem, const Eigen::VectorXd& dz, const NormSpec& spec);

/// Sum over "loaded" nodes of (K(z)u - l) projected on the load direction.
double reaction_force(const FemModel& fem, const State& s);
/// Same projection over an arbitrary boundary set.
double boundary_force(const FemModel& fem, const State& s, const std::string& set_name);

}  // namespace pfbv

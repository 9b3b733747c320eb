#include "pfbv/assembly.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <set>

#include "pfbv/errors.hpp"

namespace pfbv {

void gauss_legendre(int n, std::vector<double>& x, std::vector<double>& w) {
  if (n < 1) throw ConfigError("quadrature order must be >= 1");
  x.assign(n, 0.0);
  w.assign(n, 0.0);
  const double pi = std::acos(-1.0);
  for (int i = 0; i < (n + 1) / 2; ++i) {
    double r = std::cos(pi * (i + 0.75) / (n + 0.5));
    double dp = 1.0;
    for (int it = 0; it < 100; ++it) {
      double p0 = 1.0, p1 = r;
      for (int k = 2; k <= n; ++k) {
        const double pk = ((2.0 * k - 1.0) * r * p1 - (k - 1.0) * p0) / k;
        p0 = p1;
        p1 = pk;
      }
      if (n == 1) p0 = 1.0;
      dp = n * (r * p1 - p0) / (r * r - 1.0);
      const double step = p1 / dp;
      r -= step;
      if (std::abs(step) < 1e-16) break;
    }
    // recompute derivative at the converged root
    double p0 = 1.0, p1 = r;
    for (int k = 2; k <= n; ++k) {
      const double pk = ((2.0 * k - 1.0) * r * p1 - (k - 1.0) * p0) / k;
      p0 = p1;
      p1 = pk;
    }
    dp = n == 1 ? 1.0 : n * (r * p1 - p0) / (r * r - 1.0);
    x[i] = -r;
    x[n - 1 - i] = r;
    w[i] = w[n - 1 - i] = 2.0 / ((1.0 - r * r) * dp * dp);
  }
  if (n == 1) {
    x[0] = 0.0;
    w[0] = 2.0;
  }
}

QuadratureCache build_quadrature(const Mesh& mesh, int order) {
  std::vector<double> gx, gw;
  gauss_legendre(order, gx, gw);
  QuadratureCache qc;
  qc.order = order;
  qc.points.resize(mesh.elements.size());
  for (std::size_t e = 0; e < mesh.elements.size(); ++e) {
    const auto& el = mesh.elements[e];
    auto& pts = qc.points[e];
    pts.reserve(order * order);
    for (int i = 0; i < order; ++i) {
      for (int j = 0; j < order; ++j) {
        const double xi = gx[i], et = gx[j];
        QuadPoint q{};
        const double sx[4] = {-1, 1, 1, -1}, sy[4] = {-1, -1, 1, 1};
        double dxi[4], det[4];
        for (int a = 0; a < 4; ++a) {
          q.N[a] = 0.25 * (1 + sx[a] * xi) * (1 + sy[a] * et);
          dxi[a] = 0.25 * sx[a] * (1 + sy[a] * et);
          det[a] = 0.25 * sy[a] * (1 + sx[a] * xi);
        }
        double j11 = 0, j12 = 0, j21 = 0, j22 = 0;
        for (int a = 0; a < 4; ++a) {
          const Point& p = mesh.nodes[el[a]];
          j11 += dxi[a] * p.x;
          j12 += dxi[a] * p.y;
          j21 += det[a] * p.x;
          j22 += det[a] * p.y;
        }
        const double J = j11 * j22 - j12 * j21;
        if (!(J > 0.0)) throw ConfigError("element with non-positive Jacobian");
        for (int a = 0; a < 4; ++a) {
          q.dx[a] = (j22 * dxi[a] - j12 * det[a]) / J;
          q.dy[a] = (-j21 * dxi[a] + j11 * det[a]) / J;
        }
        q.w = gw[i] * gw[j] * J;
        pts.push_back(q);
      }
    }
  }
  return qc;
}

Pattern build_pattern(const Mesh& mesh, int dofs_per_node) {
  Pattern p;
  p.dofs_per_node = dofs_per_node;
  const int n = mesh.num_nodes() * dofs_per_node;
  const int ls = 4 * dofs_per_node;
  std::vector<Eigen::Triplet<double>> trips;
  trips.reserve(mesh.elements.size() * ls * ls);
  auto dof = [dofs_per_node](const std::array<int, 4>& el, int l) {
    return el[l / dofs_per_node] * dofs_per_node + l % dofs_per_node;
  };
  for (const auto& el : mesh.elements)
    for (int a = 0; a < ls; ++a)
      for (int b = 0; b < ls; ++b) trips.emplace_back(dof(el, a), dof(el, b), 1.0);
  for (int i = 0; i < n; ++i) trips.emplace_back(i, i, 1.0);
  p.matrix.resize(n, n);
  p.matrix.setFromTriplets(trips.begin(), trips.end());
  p.matrix.makeCompressed();
  std::fill(p.matrix.valuePtr(), p.matrix.valuePtr() + p.matrix.nonZeros(), 0.0);
  const int* outer = p.matrix.outerIndexPtr();
  const int* inner = p.matrix.innerIndexPtr();
  auto slot = [&](int r, int c) {
    const int* lo = inner + outer[c];
    const int* hi = inner + outer[c + 1];
    return static_cast<int>(std::lower_bound(lo, hi, r) - inner);
  };
  p.element_slots.reserve(mesh.elements.size() * ls * ls);
  for (const auto& el : mesh.elements)
    for (int a = 0; a < ls; ++a)
      for (int b = 0; b < ls; ++b) p.element_slots.push_back(slot(dof(el, a), dof(el, b)));
  p.diag_slots.resize(n);
  for (int i = 0; i < n; ++i) p.diag_slots[i] = slot(i, i);
  return p;
}

namespace {

SparseMatrix zero_like(const Pattern& p) { return p.matrix; }

}  // namespace

FemModel::FemModel(Mesh mesh, MaterialModel material, LoadProgram load, int quad_order)
    : mesh_(std::move(mesh)), material_(material), load_(load) {
  material_.validate();
  load_.validate();
  C_ = material_.C();
  area_ = mesh_.area();
  auto w = norm_quadrature_weights(mesh_);
  weights_ = Eigen::Map<Eigen::VectorXd>(w.data(), static_cast<Eigen::Index>(w.size()));
  quad_ = build_quadrature(mesh_, quad_order);
  scalar_pattern_ = build_pattern(mesh_, 1);
  vector_pattern_ = build_pattern(mesh_, 2);

  mass_ = zero_like(scalar_pattern_);
  laplacian_ = zero_like(scalar_pattern_);
  double* mv = mass_.valuePtr();
  double* lv = laplacian_.valuePtr();
  for (int e = 0; e < mesh_.num_elements(); ++e) {
    const int* slots = &scalar_pattern_.element_slots[16 * e];
    for (const auto& q : quad_.points[e])
      for (int a = 0; a < 4; ++a)
        for (int b = 0; b < 4; ++b) {
          mv[slots[4 * a + b]] += q.w * q.N[a] * q.N[b];
          lv[slots[4 * a + b]] += q.w * (q.dx[a] * q.dx[b] + q.dy[a] * q.dy[b]);
        }
  }

  // boundary edges of "loaded"
  unit_load_ = Eigen::VectorXd::Zero(num_u_dofs());
  auto lit = mesh_.boundary_sets.find("loaded");
  auto cit = mesh_.boundary_sets.find("clamped");
  if (lit == mesh_.boundary_sets.end() || lit->second.empty() || cit == mesh_.boundary_sets.end() ||
      cit->second.empty())
    throw ConfigError("mesh needs non-empty 'clamped' and 'loaded' sets");
  std::set<int> loaded(lit->second.begin(), lit->second.end());
  std::set<int> clamped(cit->second.begin(), cit->second.end());
  std::map<std::pair<int, int>, int> edge_count;
  for (const auto& el : mesh_.elements)
    for (int a = 0; a < 4; ++a) {
      int i = el[a], j = el[(a + 1) % 4];
      edge_count[{std::min(i, j), std::max(i, j)}]++;
    }
  for (const auto& [edge, count] : edge_count) {
    if (count != 1 || !loaded.count(edge.first) || !loaded.count(edge.second)) continue;
    const Point& p = mesh_.nodes[edge.first];
    const Point& q = mesh_.nodes[edge.second];
    const double len = std::hypot(q.x - p.x, q.y - p.y);
    for (int n : {edge.first, edge.second}) {
      unit_load_[2 * n] += 0.5 * len * load_.direction.x();
      unit_load_[2 * n + 1] += 0.5 * len * load_.direction.y();
    }
  }
  if (load_.mode == LoadMode::TractionRamp && unit_load_.squaredNorm() == 0.0) {
    // point-set load: distribute evenly over the loaded nodes
    for (int n : loaded) {
      unit_load_[2 * n] += load_.direction.x() / loaded.size();
      unit_load_[2 * n + 1] += load_.direction.y() / loaded.size();
    }
  }

  std::map<int, double> dir;
  for (int n : clamped) {
    dir[2 * n] = 0.0;
    dir[2 * n + 1] = 0.0;
  }
  if (load_.mode == LoadMode::DirichletRamp) {
    for (int n : loaded) {
      if (clamped.count(n)) continue;
      if (load_.constrain_transverse) {
        dir[2 * n] = load_.direction.x();
        dir[2 * n + 1] = load_.direction.y();
      } else if (std::abs(std::abs(load_.direction.x()) - 1.0) < 1e-12) {
        dir[2 * n] = load_.direction.x();
      } else if (std::abs(std::abs(load_.direction.y()) - 1.0) < 1e-12) {
        dir[2 * n + 1] = load_.direction.y();
      } else {
        throw ConfigError("an unconstrained transverse component needs an axis-aligned load direction");
      }
    }
  }
  for (const auto& [d, s] : dir) {
    dirichlet_dofs_.push_back(d);
    dirichlet_scale_.push_back(s);
  }
  std::vector<char> fixed(num_u_dofs(), 0);
  for (int d : dirichlet_dofs_) fixed[d] = 1;
  for (int d = 0; d < num_u_dofs(); ++d)
    if (!fixed[d]) free_dofs_.push_back(d);
}

Eigen::VectorXd FemModel::load_vector(double t) const { return load_.ell(t) * unit_load_; }

Eigen::VectorXd FemModel::dirichlet_values(double t) const {
  Eigen::VectorXd v(dirichlet_dofs_.size());
  const double ub = load_.ubar(t);
  for (std::size_t i = 0; i < dirichlet_dofs_.size(); ++i) v[i] = ub * dirichlet_scale_[i];
  return v;
}

void FemModel::apply_dirichlet(double t, Eigen::VectorXd& u) const {
  const Eigen::VectorXd v = dirichlet_values(t);
  for (std::size_t i = 0; i < dirichlet_dofs_.size(); ++i) u[dirichlet_dofs_[i]] = v[i];
}

Eigen::Vector3d FemModel::strain(int e, const QuadPoint& q, const Eigen::VectorXd& u) const {
  const auto& el = mesh_.elements[e];
  Eigen::Vector3d eps = Eigen::Vector3d::Zero();
  for (int a = 0; a < 4; ++a) {
    const double ux = u[2 * el[a]], uy = u[2 * el[a] + 1];
    eps[0] += q.dx[a] * ux;
    eps[1] += q.dy[a] * uy;
    eps[2] += q.dy[a] * ux + q.dx[a] * uy;
  }
  return eps;
}

namespace {

void check_state(const FemModel& fem, const State& s) {
  if (s.u.size() != fem.num_u_dofs() || s.z.size() != fem.num_nodes())
    throw DimensionError("state size does not match the mesh");
}

double interp(const QuadPoint& q, const std::array<int, 4>& el, const Eigen::VectorXd& z) {
  return q.N[0] * z[el[0]] + q.N[1] * z[el[1]] + q.N[2] * z[el[2]] + q.N[3] * z[el[3]];
}

}  // namespace

double total_energy(const FemModel& fem, const State& s) {
  check_state(fem, s);
  const auto& mesh = fem.mesh();
  const auto& mat = fem.material();
  double energy = 0.0;
  for (int e = 0; e < mesh.num_elements(); ++e) {
    const auto& el = mesh.elements[e];
    for (const auto& q : fem.quadrature().points[e]) {
      const Eigen::Vector3d eps = fem.strain(e, q, s.u);
      const double zq = interp(q, el, s.z);
      Eigen::Vector2d gz = Eigen::Vector2d::Zero();
      for (int a = 0; a < 4; ++a) gz += Eigen::Vector2d(q.dx[a], q.dy[a]) * s.z[el[a]];
      energy += q.w * (0.5 * degradation(zq, mat.eta) * eps.dot(fem.C() * eps) + fracture_density(zq, gz, mat));
    }
  }
  if (fem.load().mode == LoadMode::TractionRamp) energy -= fem.load_vector(s.t).dot(s.u);
  return energy;
}

Eigen::VectorXd grad_u(const FemModel& fem, const State& s) {
  check_state(fem, s);
  const auto& mesh = fem.mesh();
  Eigen::VectorXd r = Eigen::VectorXd::Zero(fem.num_u_dofs());
  for (int e = 0; e < mesh.num_elements(); ++e) {
    const auto& el = mesh.elements[e];
    for (const auto& q : fem.quadrature().points[e]) {
      const Eigen::Vector3d sig =
          degradation(interp(q, el, s.z), fem.material().eta) * (fem.C() * fem.strain(e, q, s.u));
      for (int a = 0; a < 4; ++a) {
        r[2 * el[a]] += q.w * (q.dx[a] * sig[0] + q.dy[a] * sig[2]);
        r[2 * el[a] + 1] += q.w * (q.dy[a] * sig[1] + q.dx[a] * sig[2]);
      }
    }
  }
  if (fem.load().mode == LoadMode::TractionRamp) r -= fem.load_vector(s.t);
  return r;
}

ZQuadratic z_quadratic(const FemModel& fem, const Eigen::VectorXd& u) {
  if (u.size() != fem.num_u_dofs()) throw DimensionError("z_quadratic: u has wrong size");
  const auto& mesh = fem.mesh();
  const auto& mat = fem.material();
  const auto& pat = fem.scalar_pattern();
  ZQuadratic zq;
  zq.A = pat.matrix;
  double* av = zq.A.valuePtr();
  for (int e = 0; e < mesh.num_elements(); ++e) {
    const int* slots = &pat.element_slots[16 * e];
    for (const auto& q : fem.quadrature().points[e]) {
      const Eigen::Vector3d eps = fem.strain(e, q, u);
      const double psi = q.w * eps.dot(fem.C() * eps);
      for (int a = 0; a < 4; ++a)
        for (int b = 0; b < 4; ++b) av[slots[4 * a + b]] += psi * q.N[a] * q.N[b];
    }
  }
  const Eigen::Index nnz = zq.A.nonZeros();
  const double* mv = fem.mass().valuePtr();
  const double* lv = fem.laplacian().valuePtr();
  if (mat.preset == EnergyPreset::AT) {
    const double cm = mat.g_c / (2.0 * mat.theta), cl = 2.0 * mat.g_c * mat.theta;
    for (Eigen::Index k = 0; k < nnz; ++k) av[k] += cm * mv[k] + cl * lv[k];
    zq.b = cm * fem.weights();
  } else {
    for (Eigen::Index k = 0; k < nnz; ++k) av[k] += mat.kappa_E * (mv[k] + lv[k]);
    zq.b = Eigen::VectorXd::Zero(fem.num_nodes());
  }
  return zq;
}

ZGradient grad_z(const FemModel& fem, const State& s) {
  check_state(fem, s);
  const auto& mesh = fem.mesh();
  const auto& mat = fem.material();
  ZGradient out;
  out.g = Eigen::VectorXd::Zero(fem.num_nodes());
  for (int e = 0; e < mesh.num_elements(); ++e) {
    const auto& el = mesh.elements[e];
    for (const auto& q : fem.quadrature().points[e]) {
      const Eigen::Vector3d eps = fem.strain(e, q, s.u);
      const double psi = eps.dot(fem.C() * eps);
      const double zq = interp(q, el, s.z);
      Eigen::Vector2d gz = Eigen::Vector2d::Zero();
      for (int a = 0; a < 4; ++a) gz += Eigen::Vector2d(q.dx[a], q.dy[a]) * s.z[el[a]];
      for (int a = 0; a < 4; ++a) {
        const double gdot = gz.x() * q.dx[a] + gz.y() * q.dy[a];
        double v = zq * psi * q.N[a];
        if (mat.preset == EnergyPreset::AT)
          v += mat.g_c * (-(1.0 - zq) / (2.0 * mat.theta) * q.N[a] + 2.0 * mat.theta * gdot);
        else
          v += mat.kappa_E * (zq * q.N[a] + gdot);
        out.g[el[a]] += q.w * v;
      }
    }
  }
  out.d = out.g.cwiseQuotient(fem.weights());
  return out;
}

void assemble_K_into(const FemModel& fem, const Eigen::VectorXd& z, SparseMatrix& K) {
  if (z.size() != fem.num_nodes()) throw DimensionError("assemble_K: z has wrong size");
  const auto& mesh = fem.mesh();
  const auto& pat = fem.vector_pattern();
  if (K.nonZeros() != pat.matrix.nonZeros()) K = pat.matrix;
  double* kv = K.valuePtr();
  std::fill(kv, kv + K.nonZeros(), 0.0);
  const Voigt& C = fem.C();
  for (int e = 0; e < mesh.num_elements(); ++e) {
    const auto& el = mesh.elements[e];
    const int* slots = &pat.element_slots[64 * e];
    Eigen::Matrix<double, 8, 8> ke = Eigen::Matrix<double, 8, 8>::Zero();
    for (const auto& q : fem.quadrature().points[e]) {
      Eigen::Matrix<double, 3, 8> B = Eigen::Matrix<double, 3, 8>::Zero();
      for (int a = 0; a < 4; ++a) {
        B(0, 2 * a) = q.dx[a];
        B(1, 2 * a + 1) = q.dy[a];
        B(2, 2 * a) = q.dy[a];
        B(2, 2 * a + 1) = q.dx[a];
      }
      ke.noalias() += (q.w * degradation(interp(q, el, z), fem.material().eta)) * (B.transpose() * C * B);
    }
    for (int a = 0; a < 8; ++a)
      for (int b = 0; b < 8; ++b) kv[slots[8 * a + b]] += ke(a, b);
  }
}

SparseMatrix assemble_K(const FemModel& fem, const Eigen::VectorXd& z) {
  SparseMatrix K = fem.vector_pattern().matrix;
  assemble_K_into(fem, z, K);
  return K;
}

double VNorm::value(const Eigen::VectorXd& v) const {
  return std::pow(std::max(S(v), 0.0), 1.0 / power());
}

namespace {

class NodalLalpha final : public VNorm {
 public:
  NodalLalpha(const FemModel& fem, double alpha) : fem_(fem), alpha_(alpha) {}
  double power() const override { return alpha_; }
  double S(const Eigen::VectorXd& v) const override {
    return fem_.weights().dot(v.cwiseAbs().array().pow(alpha_).matrix());
  }
  Eigen::VectorXd grad_S(const Eigen::VectorXd& v) const override {
    Eigen::VectorXd g(v.size());
    for (Eigen::Index i = 0; i < v.size(); ++i) {
      const double a = std::abs(v[i]);
      g[i] = a == 0.0 ? 0.0 : alpha_ * fem_.weights()[i] * std::pow(a, alpha_ - 1.0) * (v[i] > 0 ? 1.0 : -1.0);
    }
    return g;
  }
  void add_hess_S(const Eigen::VectorXd& v, double scale, SparseMatrix& H) const override {
    double* hv = H.valuePtr();
    const auto& diag = fem_.scalar_pattern().diag_slots;
    for (Eigen::Index i = 0; i < v.size(); ++i)
      hv[diag[i]] += scale * alpha_ * (alpha_ - 1.0) * fem_.weights()[i] * std::pow(std::abs(v[i]), alpha_ - 2.0);
  }

 private:
  const FemModel& fem_;
  double alpha_;
};

int lalpha_gauss_order(double alpha) {
  const double r = std::round(alpha);
  const bool even_int = std::abs(alpha - r) < 1e-12 && static_cast<long>(r) % 2 == 0;
  const int n = static_cast<int>(std::ceil((alpha + 1.0) / 2.0 - 1e-12));
  return std::clamp(even_int ? n : n + 2, 2, 12);
}

class GaussLalpha final : public VNorm {
 public:
  GaussLalpha(const FemModel& fem, double alpha)
      : fem_(fem), alpha_(alpha), quad_(build_quadrature(fem.mesh(), lalpha_gauss_order(alpha))) {}
  double power() const override { return alpha_; }
  double S(const Eigen::VectorXd& v) const override {
    double s = 0.0;
    for (int e = 0; e < fem_.mesh().num_elements(); ++e)
      for (const auto& q : quad_.points[e]) s += q.w * std::pow(std::abs(interp(q, fem_.mesh().elements[e], v)), alpha_);
    return s;
  }
  Eigen::VectorXd grad_S(const Eigen::VectorXd& v) const override {
    Eigen::VectorXd g = Eigen::VectorXd::Zero(v.size());
    for (int e = 0; e < fem_.mesh().num_elements(); ++e) {
      const auto& el = fem_.mesh().elements[e];
      for (const auto& q : quad_.points[e]) {
        const double x = interp(q, el, v);
        if (x == 0.0) continue;
        const double c = q.w * alpha_ * std::pow(std::abs(x), alpha_ - 1.0) * (x > 0 ? 1.0 : -1.0);
        for (int a = 0; a < 4; ++a) g[el[a]] += c * q.N[a];
      }
    }
    return g;
  }
  void add_hess_S(const Eigen::VectorXd& v, double scale, SparseMatrix& H) const override {
    double* hv = H.valuePtr();
    const auto& pat = fem_.scalar_pattern();
    for (int e = 0; e < fem_.mesh().num_elements(); ++e) {
      const auto& el = fem_.mesh().elements[e];
      const int* slots = &pat.element_slots[16 * e];
      for (const auto& q : quad_.points[e]) {
        const double c = scale * q.w * alpha_ * (alpha_ - 1.0) * std::pow(std::abs(interp(q, el, v)), alpha_ - 2.0);
        for (int a = 0; a < 4; ++a)
          for (int b = 0; b < 4; ++b) hv[slots[4 * a + b]] += c * q.N[a] * q.N[b];
      }
    }
  }

 private:
  const FemModel& fem_;
  double alpha_;
  QuadratureCache quad_;
};

class H1Norm final : public VNorm {
 public:
  explicit H1Norm(const FemModel& fem) : fem_(fem), G_(fem.mass() + fem.laplacian()) {}
  double power() const override { return 2.0; }
  double S(const Eigen::VectorXd& v) const override { return v.dot(G_ * v); }
  Eigen::VectorXd grad_S(const Eigen::VectorXd& v) const override { return 2.0 * (G_ * v); }
  void add_hess_S(const Eigen::VectorXd&, double scale, SparseMatrix& H) const override {
    double* hv = H.valuePtr();
    const double* mv = fem_.mass().valuePtr();
    const double* lv = fem_.laplacian().valuePtr();
    for (Eigen::Index k = 0; k < H.nonZeros(); ++k) hv[k] += 2.0 * scale * (mv[k] + lv[k]);
  }

 private:
  const FemModel& fem_;
  SparseMatrix G_;
};

}  // namespace

std::unique_ptr<VNorm> make_vnorm(const FemModel& fem, const NormSpec& spec) {
  spec.validate();
  switch (spec.kind) {
    case NormKind::LalphaNodal: return std::make_unique<NodalLalpha>(fem, spec.alpha);
    case NormKind::LalphaGauss: return std::make_unique<GaussLalpha>(fem, spec.alpha);
    case NormKind::H1: return std::make_unique<H1Norm>(fem);
  }
  throw ConfigError("unknown norm kind");
}

double field_norm_V(const FemModel& fem, const Eigen::VectorXd& dz, const NormSpec& spec) {
  if (dz.size() != fem.num_nodes()) throw DimensionError("field_norm_V: wrong size");
  return make_vnorm(fem, spec)->value(dz);
}

double boundary_force(const FemModel& fem, const State& s, const std::string& set_name) {
  const Eigen::VectorXd r = grad_u(fem, s);
  std::set<int> nodes(fem.mesh().boundary_set(set_name).begin(), fem.mesh().boundary_set(set_name).end());
  const Eigen::Vector2d d = fem.load().direction;
  double f = 0.0;
  for (int n : nodes) f += r[2 * n] * d.x() + r[2 * n + 1] * d.y();
  return f;
}

double reaction_force(const FemModel& fem, const State& s) {
  if (fem.load().mode != LoadMode::DirichletRamp)
    throw UnsupportedModeError("reaction_force is defined for Dirichlet loading only");
  return boundary_force(fem, s, "loaded");
}

}  // namespace pfbv

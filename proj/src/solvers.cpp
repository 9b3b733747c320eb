#include "pfbv/solvers.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "pfbv/errors.hpp"

namespace pfbv {

namespace {

constexpr double kNormReg = 1e-30;

}  // namespace

void al_penalty_update(ALState& st, const Eigen::VectorXd& box_residual, double ball_residual,
                       const SchemeParams& params) {
  if (st.lambda.size() != box_residual.size()) st.lambda = Eigen::VectorXd::Zero(box_residual.size());
  st.lambda = (st.lambda + st.beta_box * box_residual).cwiseMax(0.0);
  st.mu = std::max(0.0, st.mu + st.beta_ball * ball_residual);
  const double vb = box_residual.size() ? std::max(0.0, box_residual.maxCoeff()) : 0.0;
  const double vB = std::max(0.0, ball_residual);
  if (vb > params.tol_constraint && vb > 0.25 * st.prev_box_violation) st.beta_box *= params.beta_growth;
  if (vB > params.tol_constraint && vB > 0.25 * st.prev_ball_violation) st.beta_ball *= params.beta_growth;
  st.prev_box_violation = vb;
  st.prev_ball_violation = vB;
  if (!(st.beta_box < 1e300) || !(st.beta_ball < 1e300))
    throw SolverError("augmented Lagrangian penalty overflow");
}

// ---------------------------------------------------------------------------

struct BallBoxSolver::Inner {
  enum class Mode { None, AL, Nu };
  const SparseMatrix* A = nullptr;
  const Eigen::VectorXd* b = nullptr;
  const Eigen::VectorXd* zp = nullptr;
  Eigen::VectorXd lo;
  Eigen::VectorXd Adiag;
  const VNorm* norm = nullptr;
  double rho = kInfinity;
  Mode mode = Mode::None;
  double mu = 0.0, beta = 0.0, nu = 0.0;

  double p() const { return norm->power(); }
  double clamp(Eigen::Index i, double v) const { return std::clamp(v, lo[i], (*zp)[i]); }
  Eigen::VectorXd project(const Eigen::VectorXd& z) const { return z.cwiseMax(lo).cwiseMin(*zp); }
  double N(const Eigen::VectorXd& dz) const { return std::pow(norm->S(dz) + kNormReg, 1.0 / p()); }

  double phi(const Eigen::VectorXd& z) const {
    double v = 0.5 * z.dot(*A * z) - b->dot(z);
    if (mode == Mode::AL) {
      const double t = std::max(0.0, mu + beta * (N(z - *zp) - rho));
      v += (t * t - mu * mu) / (2.0 * beta);
    } else if (mode == Mode::Nu) {
      v += nu * norm->S(z - *zp);
    }
    return v;
  }

  Eigen::VectorXd grad(const Eigen::VectorXd& z) const {
    Eigen::VectorXd g = *A * z - *b;
    if (mode == Mode::AL) {
      const Eigen::VectorXd dz = z - *zp;
      const double n = N(dz);
      const double t = std::max(0.0, mu + beta * (n - rho));
      if (t > 0.0) g += (t / (p() * std::pow(n, p() - 1.0))) * norm->grad_S(dz);
    } else if (mode == Mode::Nu) {
      g += nu * norm->grad_S(z - *zp);
    }
    return g;
  }
};

BallBoxSolver::BallBoxSolver(const SparseMatrix& structure, Eigen::VectorXd weights, const VNorm* norm,
                             SchemeParams params)
    : w_(std::move(weights)), norm_(norm), params_(params), H_(structure) {
  H_.makeCompressed();
  ldlt_.analyzePattern(H_);
}

double BallBoxSolver::objective(const SparseMatrix& A, const Eigen::VectorXd& b, const Eigen::VectorXd& z) {
  return 0.5 * z.dot(A * z) - b.dot(z);
}

double BallBoxSolver::natural_residual(const Inner& in, const Eigen::VectorXd& z, const Eigen::VectorXd& g) const {
  double r = 0.0;
  for (Eigen::Index i = 0; i < z.size(); ++i) {
    const double step = z[i] - in.clamp(i, z[i] - g[i] / in.Adiag[i]);
    r = std::max(r, std::abs(step) * in.Adiag[i] / w_[i]);
  }
  return r;
}

int BallBoxSolver::minimize_on_box(Inner& in, Eigen::VectorXd& z, double tol, int min_iters) {
  const Eigen::VectorXd& zp = *in.zp;
  const Eigen::Index n = z.size();
  z = in.project(z);
  std::vector<char> bind(n);
  for (int it = 0; it < params_.max_newton_iters; ++it) {
    const Eigen::VectorXd g = in.grad(z);
    const double res = natural_residual(in, z, g);
    if (res <= tol && it >= min_iters) return it;

    double eps = 0.0;
    for (Eigen::Index i = 0; i < n; ++i)
      eps = std::max(eps, std::abs(z[i] - in.clamp(i, z[i] - g[i] / in.Adiag[i])));
    eps = std::min(eps, 1e-3);
    for (Eigen::Index i = 0; i < n; ++i)
      bind[i] = ((zp[i] - z[i] <= eps && g[i] < 0.0) || (z[i] - in.lo[i] <= eps && g[i] > 0.0)) ? 1 : 0;

    // Hessian of the smooth part
    std::copy(in.A->valuePtr(), in.A->valuePtr() + in.A->nonZeros(), H_.valuePtr());
    double c_rank1 = 0.0;
    Eigen::VectorXd v;
    const Eigen::VectorXd dz = z - zp;
    if (in.mode == Inner::Mode::AL) {
      const double nn = in.N(dz);
      const double t = std::max(0.0, in.mu + in.beta * (nn - in.rho));
      if (t > 0.0) {
        const double p = in.p();
        const double s = 1.0 / (p * std::pow(nn, p - 1.0));
        norm_->add_hess_S(dz, t * s, H_);
        v = s * norm_->grad_S(dz);
        c_rank1 = in.beta - t * (p - 1.0) / nn;
      }
    } else if (in.mode == Inner::Mode::Nu && in.nu > 0.0) {
      norm_->add_hess_S(dz, in.nu, H_);
    }
    for (int col = 0; col < H_.outerSize(); ++col)
      for (SparseMatrix::InnerIterator itH(H_, col); itH; ++itH)
        if (bind[itH.row()] || bind[col]) itH.valueRef() = itH.row() == col ? 1.0 : 0.0;
    ldlt_.factorize(H_);
    if (ldlt_.info() != Eigen::Success) throw SolverError("z-step Hessian factorization failed");

    Eigen::VectorXd rhs = -g;
    for (Eigen::Index i = 0; i < n; ++i)
      if (bind[i]) rhs[i] = 0.0;
    Eigen::VectorXd dir = ldlt_.solve(rhs);
    if (c_rank1 != 0.0) {
      for (Eigen::Index i = 0; i < n; ++i)
        if (bind[i]) v[i] = 0.0;
      const Eigen::VectorXd y = ldlt_.solve(v);
      const double denom = 1.0 + c_rank1 * v.dot(y);
      if (std::abs(denom) > 1e-300) dir -= (c_rank1 * v.dot(dir) / denom) * y;
    }
    double slope = 0.0;
    for (Eigen::Index i = 0; i < n; ++i)
      if (!bind[i]) slope += g[i] * dir[i];
    if (!(slope < 0.0)) {
      for (Eigen::Index i = 0; i < n; ++i)
        if (!bind[i]) dir[i] = -g[i] / in.Adiag[i];
    }
    for (Eigen::Index i = 0; i < n; ++i)
      if (bind[i]) dir[i] = -g[i] / in.Adiag[i];

    const double phi0 = in.phi(z);
    double s = 1.0;
    bool accepted = false;
    Eigen::VectorXd zs(n);
    for (int ls = 0; ls < 60; ++ls) {
      zs = in.project(z + s * dir);
      double pred = 0.0;
      for (Eigen::Index i = 0; i < n; ++i)
        pred += bind[i] ? g[i] * (zs[i] - z[i]) : s * g[i] * dir[i];
      const double val = in.phi(zs);
      if (val <= phi0 + 1e-4 * pred + 1e-14 * (std::abs(phi0) + 1.0)) {
        accepted = true;
        break;
      }
      s *= 0.5;
    }
    if (!accepted) return -(it + 1);
    z = zs;
  }
  const Eigen::VectorXd g = in.grad(z);
  return natural_residual(in, z, g) <= tol ? params_.max_newton_iters : -params_.max_newton_iters;
}

ZSolveReport BallBoxSolver::solve(const SparseMatrix& A, const Eigen::VectorXd& b, const Eigen::VectorXd& z_prev,
                                  double rho, ALState* warm, const Eigen::VectorXd* z_init) {
  const Eigen::Index n = z_prev.size();
  if (A.rows() != n || b.size() != n || w_.size() != n) throw DimensionError("z-step: size mismatch");
  if (A.nonZeros() != H_.nonZeros()) throw DimensionError("z-step: matrix structure mismatch");
  Inner in;
  in.A = &A;
  in.b = &b;
  in.zp = &z_prev;
  in.lo = z_prev.cwiseMin(0.0);
  in.Adiag = A.diagonal();
  in.norm = norm_;
  in.rho = rho;
  if ((in.Adiag.array() <= 0.0).any()) throw SolverError("z-step: non-positive diagonal");

  ZSolveReport rep;
  Eigen::VectorXd z = z_init ? in.project(*z_init) : z_prev;
  // floor at round-off of the scaled residual so huge material constants stay solvable
  double ratio = 0.0;
  for (Eigen::Index i = 0; i < n; ++i) ratio = std::max(ratio, in.Adiag[i] / w_[i]);
  const double tol = std::max(params_.tol_newton, 1e-12 * ratio);
  auto fail = [&](const std::string& what, double res) {
    std::ostringstream os;
    os << "z-step " << what << " (residual " << res << ", al_iters " << rep.al_iters << ")";
    throw SolverError(os.str());
  };
  auto newton = [&](Inner& inner, bool strict = true, int min_iters = 0) {
    const int k = minimize_on_box(inner, z, tol, min_iters);
    rep.newton_iters += std::abs(k);
    if (k < 0) {
      const double res = natural_residual(inner, z, inner.grad(z));
      if (res > 100.0 * tol) {
        if (strict) fail("Newton iteration stalled", res);
        return false;
      }
    }
    return true;
  };

  double mu = 0.0;
  if (!(rho < kInfinity) || norm_ == nullptr) {
    in.mode = Inner::Mode::None;
    newton(in);
  } else if (rho <= 0.0) {
    z = z_prev;
  } else {
    ALState local;
    ALState& st = warm ? *warm : local;
    const double p = norm_->power();
    const double area = w_.sum();
    // only the multiplier is carried over; penalties restart so they cannot stiffen across steps
    double scale = 0.0;
    for (Eigen::Index i = 0; i < n; ++i) scale = std::max(scale, in.Adiag[i] / w_[i]);
    st.beta_ball = params_.beta0 > 0.0 ? params_.beta0 : 10.0 * scale * std::pow(area, 1.0 - 2.0 / p);
    st.beta_box = params_.beta0 > 0.0 ? params_.beta0 : 10.0 * in.Adiag.maxCoeff();
    st.prev_ball_violation = st.prev_box_violation = kInfinity;
    const Eigen::VectorXd zero_box = Eigen::VectorXd::Zero(n);
    in.mode = Inner::Mode::AL;
    for (rep.al_iters = 1; rep.al_iters <= params_.max_al_iters; ++rep.al_iters) {
      in.mu = st.mu;
      in.beta = st.beta_ball;
      if (!newton(in, false)) break;  // the polish below works on the smooth multiplier form
      const double c = in.N(z - z_prev) - rho;
      al_penalty_update(st, zero_box, c, params_);
      if (std::max(0.0, c) <= params_.tol_constraint &&
          st.mu * std::max(0.0, -c) <= params_.tol_constraint * std::max(1.0, st.mu))
        break;
    }
    rep.al_iters = std::min(rep.al_iters, params_.max_al_iters);

    // polish the ball multiplier on N(z(nu)) = rho
    double nn = in.N(z - z_prev);
    if (st.mu > 0.0 || nn > rho) {
      in.mode = Inner::Mode::Nu;
      double lo = 0.0, hi = kInfinity;
      double nu = st.mu / (p * std::pow(std::max(nn, 1e-300), p - 1.0));
      bool zero_checked = false;
      bool done = false;
      Eigen::VectorXd z_last = z;
      for (int it = 0; it < 200 && !done; ++it) {
        in.nu = nu;
        // one forced step lets z follow nu below the residual tolerance
        newton(in, true, 1);
        nn = in.N(z - z_prev);
        const double phi = nn - rho;
        if (std::abs(phi) <= 1e-13 * rho || (it >= 20 && std::abs(phi) <= 1e-10 * rho)) break;
        // z is already stationary within tolerance for the new multiplier
        if (it > 0 && z == z_last && std::abs(phi) <= 1e-6 * rho) break;
        z_last = z;
        if (phi > 0.0) lo = std::max(lo, nu);
        else hi = std::min(hi, nu);
        if (phi < 0.0 && nu == 0.0) {
          done = true;  // ball inactive at the box-only minimizer
          break;
        }
        // derivative dN/dnu from the reduced Hessian at the current binding set
        const Eigen::VectorXd dz = z - z_prev;
        const Eigen::VectorXd gS = norm_->grad_S(dz);
        const Eigen::VectorXd g = in.grad(z);
        std::copy(A.valuePtr(), A.valuePtr() + A.nonZeros(), H_.valuePtr());
        if (nu > 0.0) norm_->add_hess_S(dz, nu, H_);
        std::vector<char> bind(n);
        for (Eigen::Index i = 0; i < n; ++i)
          bind[i] = ((z[i] >= z_prev[i] && g[i] <= 0.0) || (z[i] <= in.lo[i] && g[i] >= 0.0)) ? 1 : 0;
        for (int col = 0; col < H_.outerSize(); ++col)
          for (SparseMatrix::InnerIterator itH(H_, col); itH; ++itH)
            if (bind[itH.row()] || bind[col]) itH.valueRef() = itH.row() == col ? 1.0 : 0.0;
        ldlt_.factorize(H_);
        Eigen::VectorXd r = -gS;
        for (Eigen::Index i = 0; i < n; ++i)
          if (bind[i]) r[i] = 0.0;
        const Eigen::VectorXd dzdnu = ldlt_.solve(r);
        const double dN = gS.dot(dzdnu) / (p * std::pow(nn, p - 1.0));
        double next = dN < 0.0 ? nu - phi / dN : -1.0;
        if (!(next > lo && next < hi)) {
          if (hi < kInfinity) next = lo > 0.0 ? std::sqrt(lo * hi) : 0.5 * hi;
          else next = std::max(2.0 * nu, 1e-12);
          if (hi < kInfinity && lo == 0.0 && !zero_checked) {
            next = 0.0;
            zero_checked = true;
          }
        }
        if (hi < kInfinity && (hi - lo) <= 1e-15 * hi) break;
        nu = next;
        if (it == 199 && std::abs(phi) > 1e-6 * rho) fail("ball multiplier polish did not converge", std::abs(phi));
      }
      if (done) {
        in.nu = 0.0;
        mu = 0.0;
      } else {
        mu = in.nu * p * std::pow(nn, p - 1.0);
      }
    }
    const Eigen::VectorXd dz = z - z_prev;
    nn = norm_->value(dz);
    if (nn > rho) z = z_prev + (rho / nn) * dz;
    st.mu = mu;
    rep.mu = mu;
  }

  for (Eigen::Index i = 0; i < n; ++i)
    if (z[i] < -1e-8) {
      z[i] = 0.0;
      ++rep.clamp_count;
    }

  // multipliers and stationarity of the Lagrangian
  Eigen::VectorXd g = A * z - b;
  const Eigen::VectorXd dz = z - z_prev;
  if (mu > 0.0) {
    const double p = norm_->power();
    const double nn = std::pow(norm_->S(dz) + kNormReg, 1.0 / p);
    g += (mu / (p * std::pow(nn, p - 1.0))) * norm_->grad_S(dz);
  }
  rep.lambda = Eigen::VectorXd::Zero(n);
  double res = 0.0;
  for (Eigen::Index i = 0; i < n; ++i) {
    if (z[i] >= z_prev[i]) rep.lambda[i] = std::max(0.0, -g[i]);
    double r = g[i] + rep.lambda[i];
    if (z[i] <= in.lo[i]) r = std::min(r, 0.0);
    res = std::max(res, std::abs(r) / w_[i]);
  }
  if (warm) warm->lambda = rep.lambda;
  rep.stationarity_residual = res;
  rep.ball_norm = norm_ ? norm_->value(dz) : 0.0;
  rep.xi_norm_dual = rep.mu;
  rep.constraint_active = rho < kInfinity && rep.mu > 0.0;
  rep.objective = objective(A, b, z);
  rep.z = std::move(z);
  return rep;
}

// ---------------------------------------------------------------------------

DisplacementSolver::DisplacementSolver(const FemModel& fem) : fem_(fem), K_(fem.vector_pattern().matrix) {
  const int n = fem.num_u_dofs();
  free_index_.assign(n, -1);
  const auto& fr = fem.free_dofs();
  for (std::size_t i = 0; i < fr.size(); ++i) free_index_[fr[i]] = static_cast<int>(i);
  std::vector<Eigen::Triplet<double>> trips;
  for (int col = 0; col < K_.outerSize(); ++col)
    for (SparseMatrix::InnerIterator it(K_, col); it; ++it)
      if (free_index_[it.row()] >= 0 && free_index_[col] >= 0)
        trips.emplace_back(free_index_[it.row()], free_index_[col], 1.0);
  const int nf = static_cast<int>(fr.size());
  Kff_.resize(nf, nf);
  Kff_.setFromTriplets(trips.begin(), trips.end());
  Kff_.makeCompressed();
  ff_slots_.assign(Kff_.nonZeros(), -1);
  const int* outer = Kff_.outerIndexPtr();
  const int* inner = Kff_.innerIndexPtr();
  for (int col = 0; col < K_.outerSize(); ++col) {
    for (int k = K_.outerIndexPtr()[col]; k < K_.outerIndexPtr()[col + 1]; ++k) {
      const int r = K_.innerIndexPtr()[k];
      const int fr_ = free_index_[r], fc = free_index_[col];
      if (fr_ < 0 || fc < 0) continue;
      const int* pos = std::lower_bound(inner + outer[fc], inner + outer[fc + 1], fr_);
      ff_slots_[pos - inner] = k;
    }
  }
}

Eigen::VectorXd DisplacementSolver::solve(double t, const Eigen::VectorXd& z) {
  assemble_K_into(fem_, z, K_);
  const double* kv = K_.valuePtr();
  double* fv = Kff_.valuePtr();
  for (std::size_t i = 0; i < ff_slots_.size(); ++i) fv[i] = kv[ff_slots_[i]];
  if (!analyzed_) {
    llt_.analyzePattern(Kff_);
    analyzed_ = true;
  }
  llt_.factorize(Kff_);
  if (llt_.info() != Eigen::Success)
    throw SolverError("displacement system is singular; check boundary conditions");
  Eigen::VectorXd u = Eigen::VectorXd::Zero(fem_.num_u_dofs());
  fem_.apply_dirichlet(t, u);
  const Eigen::VectorXd f = fem_.load_vector(t);
  const Eigen::VectorXd Ku = K_ * u;
  const auto& fr = fem_.free_dofs();
  Eigen::VectorXd rhs(fr.size());
  for (std::size_t i = 0; i < fr.size(); ++i) rhs[i] = f[fr[i]] - Ku[fr[i]];
  const Eigen::VectorXd x = llt_.solve(rhs);
  for (std::size_t i = 0; i < fr.size(); ++i) u[fr[i]] = x[i];
  const Eigen::VectorXd r = K_ * u - f;
  last_residual_ = 0.0;
  for (int d : fr) last_residual_ = std::max(last_residual_, std::abs(r[d]));
  return u;
}

DamageSolver::DamageSolver(const FemModel& fem, const SchemeParams& params)
    : fem_(fem),
      norm_(make_vnorm(fem, params.norm)),
      params_(params),
      core_(fem.scalar_pattern().matrix, fem.weights(), norm_.get(), params) {}

ZSolveReport DamageSolver::solve(const Eigen::VectorXd& u, const Eigen::VectorXd& z_prev, double rho,
                                 ALState* warm, const Eigen::VectorXd* z_init) {
  if (z_prev.size() != fem_.num_nodes()) throw DimensionError("solve_z: z_prev has wrong size");
  ZQuadratic q = z_quadratic(fem_, u);
  const double kr = fem_.material().dissipation_constant();
  if (kr != 0.0) q.b += kr * fem_.weights();
  return core_.solve(q.A, q.b, z_prev, rho, warm, z_init);
}

Eigen::VectorXd solve_u(const FemModel& fem, double t, const Eigen::VectorXd& z, const SchemeParams&) {
  if (z.size() != fem.num_nodes()) throw DimensionError("solve_u: z has wrong size");
  DisplacementSolver s(fem);
  return s.solve(t, z);
}

ZSolveReport solve_z(const FemModel& fem, double, const Eigen::VectorXd& u, const Eigen::VectorXd& z_prev,
                     double rho, const SchemeParams& params) {
  DamageSolver s(fem, params);
  return s.solve(u, z_prev, rho);
}

}  // namespace pfbv

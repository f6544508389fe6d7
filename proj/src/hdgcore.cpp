#include "hdgplus/hdgcore.hpp"

#include <Eigen/LU>
#ifdef HDGPLUS_HAVE_CHOLMOD
#include <Eigen/CholmodSupport>
#endif

#include <algorithm>
#include <sstream>

namespace hdgplus {

namespace {

std::string sci(double v) {
  std::ostringstream s;
  s.precision(3);
  s << std::scientific << v;
  return s.str();
}

}  // namespace

// ---------------------------------------------------------------------------
// Setup
// ---------------------------------------------------------------------------

HdgSetup::HdgSetup(TetMesh mesh, IsotropicCompliance material, ScalarField density, HdgOptions options)
    : mesh_(std::move(mesh)), material_(std::move(material)), density_(std::move(density)), options_(std::move(options)) {
  if (options_.k < 1) throw InvalidArgument("HDG+ needs polynomial degree k >= 1");
  if (!(options_.c_tau > 0)) throw InvalidArgument("c_tau must be positive");
  quad_order_ = options_.quad_order < 0 ? default_quad_order(options_.k) : options_.quad_order;
  if (quad_order_ < 2 * options_.k + 2) throw InvalidArgument("quadrature order below 2k+2 cannot integrate the mass block");

  skeleton_index_.assign(mesh_.num_faces(), -1);
  for (int f = 0; f < mesh_.num_faces(); ++f)
    if (!mesh_.faces()[f].boundary()) skeleton_index_[f] = num_interior_faces_++;

  elem_rule_ = quad_tet(quad_order_);
  face_rule_ = quad_tri(quad_order_);
  phi_k_ = tet_basis(k()).tabulate(elem_rule_.points);
  phi_k1_ = tet_basis(k() + 1).tabulate(elem_rule_.points);
  grad_phi_k_ = tet_basis(k()).tabulate_grad(elem_rule_.points);
  psi_ref_ = tri_basis(k()).tabulate(face_rule_.points);

  geometry_.reserve(mesh_.num_elements());
  for (int e = 0; e < mesh_.num_elements(); ++e) geometry_.push_back(mesh_.geometry(e));

  tau_.resize(mesh_.num_elements());
  for (int e = 0; e < mesh_.num_elements(); ++e) {
    const double h = geometry_[e].diameter();
    for (int i = 0; i < 4; ++i) {
      if (options_.tau_override) {
        const Mat3 t = options_.tau_override(e, i);
        if ((t - t.transpose()).norm() > 1e-12 * t.norm() || Eigen::SelfAdjointEigenSolver<Mat3>(t).eigenvalues().minCoeff() <= 0)
          throw InvalidArgument("tau override is not symmetric positive definite on element " + std::to_string(e));
        tau_[e][i] = t;
        continue;
      }
      const PhysicalRule fr = face_rule(mesh_.element_face(e, i));
      double area = 0, lam = 0, mu = 0;
      for (std::size_t q = 0; q < fr.weights.size(); ++q) {
        area += fr.weights[q];
        lam += fr.weights[q] * material_.lambda(fr.points[q]);
        mu += fr.weights[q] * material_.mu(fr.points[q]);
      }
      const double scale = options_.tau_scaling == TauScaling::shear ? 2 * mu / area : (2 * mu + lam) / area;
      tau_[e][i] = options_.c_tau * scale / h * Mat3::Identity();
    }
  }
}

PhysicalRule HdgSetup::element_rule(int e) const {
  const TetGeometry& g = geometry_[e];
  PhysicalRule r;
  r.points.reserve(elem_rule_.size());
  r.weights.reserve(elem_rule_.size());
  const double jac = std::abs(g.J());
  for (std::size_t q = 0; q < elem_rule_.size(); ++q) {
    r.points.push_back(g.to_physical(elem_rule_.points[q]));
    r.weights.push_back(elem_rule_.weights[q] * jac);
  }
  return r;
}

PhysicalRule HdgSetup::face_rule(int face) const {
  const FaceFrame fr = mesh_.face_frame(face);
  PhysicalRule r;
  for (std::size_t q = 0; q < face_rule_.size(); ++q) {
    r.points.push_back(fr.point(face_rule_.points[q]));
    r.weights.push_back(face_rule_.weights[q] * fr.jacobian());
  }
  return r;
}

Mat3 HdgSetup::eval_sigma(int e, const VecX& coeffs, const Vec3& x) const {
  const VecX phi = tet_basis(k()).eval(geometry_[e].to_reference(x));
  Eigen::Matrix<double, 6, 1> v = Eigen::Matrix<double, 6, 1>::Zero();
  for (int i = 0; i < phi.size(); ++i) v += phi(i) * coeffs.segment<6>(6 * i);
  return vec_to_sym(v);
}

Vec3 HdgSetup::eval_u(int e, const VecX& coeffs, const Vec3& x) const {
  const VecX phi = tet_basis(k() + 1).eval(geometry_[e].to_reference(x));
  Vec3 v = Vec3::Zero();
  for (int i = 0; i < phi.size(); ++i) v += phi(i) * coeffs.segment<3>(3 * i);
  return v;
}

// ---------------------------------------------------------------------------
// Local blocks
// ---------------------------------------------------------------------------

LocalBlocks assemble_local(const HdgSetup& setup, int e, double mass_coeff) {
  const int nk = poly_dim(3, setup.k()), nk1 = poly_dim(3, setup.k() + 1), nb = setup.face_functions();
  const int ns = setup.n_sigma(), nu = setup.n_u(), nh = setup.n_uhat(), fd = setup.face_dofs();
  const TetGeometry& g = setup.geometry(e);
  const Mat3 BinvT = g.B_inv().transpose();
  const auto& E = sym_basis();
  LocalBlocks b;
  b.mass_coeff = mass_coeff;
  b.A = MatX::Zero(ns, ns);
  b.D = MatX::Zero(nu, ns);
  b.C = MatX::Zero(ns, nh);
  b.Suu = MatX::Zero(nu, nu);
  b.Suh = MatX::Zero(nu, nh);
  b.Shh = MatX::Zero(nh, nh);
  b.M = MatX::Zero(nu, nu);

  const PhysicalRule rule = setup.element_rule(e);
  const MatX& pk = setup.phi_k();
  const MatX& pk1 = setup.phi_k1();
  const auto& gk = setup.grad_phi_k();
  MatX mass_scalar = MatX::Zero(nk1, nk1);
  for (std::size_t q = 0; q < rule.weights.size(); ++q) {
    const double w = rule.weights[q];
    const Vec3& x = rule.points[q];
    const Sym6 Aq = setup.material().A_matrix(x);
    const double rho = setup.density().value(x);
    if (!(rho > 0)) throw InvalidArgument("nonpositive density in element " + std::to_string(e));
    for (int i = 0; i < nk; ++i)
      for (int j = 0; j < nk; ++j) b.A.block<6, 6>(6 * i, 6 * j) += (w * pk(q, i) * pk(q, j)) * Aq;
    for (int i = 0; i < nk; ++i) {
      const Vec3 grad = BinvT * Vec3(gk[0](q, i), gk[1](q, i), gk[2](q, i));
      for (int c = 0; c < 6; ++c) {
        const Vec3 div = E[c] * grad;  // div(phi_i E_c)
        for (int j = 0; j < nk1; ++j) b.D.block<3, 1>(3 * j, 6 * i + c) += (w * pk1(q, j)) * div;
      }
    }
    mass_scalar += (w * rho) * pk1.row(q).transpose() * pk1.row(q);
  }
  for (int i = 0; i < nk1; ++i)
    for (int j = 0; j < nk1; ++j)
      for (int d = 0; d < 3; ++d) b.M(3 * i + d, 3 * j + d) = mass_scalar(i, j);

  const MatX& psi_ref = setup.psi_ref();
  for (int lf = 0; lf < 4; ++lf) {
    const int f = setup.mesh().element_face(e, lf);
    const MeshFace& mf = setup.mesh().faces()[f];
    const FaceFrame frame = setup.mesh().face_frame(f);
    const Vec3 n = mf.left == e ? frame.normal : Vec3(-frame.normal);
    const PhysicalRule fr = setup.face_rule(f);
    const MatX psi = psi_ref / std::sqrt(frame.jacobian());
    std::vector<Vec3> ref(fr.points.size());
    for (std::size_t q = 0; q < ref.size(); ++q) ref[q] = g.to_reference(fr.points[q]);
    const MatX fk = tet_basis(setup.k()).tabulate(ref);
    const MatX fk1 = tet_basis(setup.k() + 1).tabulate(ref);

    MatX Qs = MatX::Zero(nb, nk1);  // <phi_j, psi_b>_F
    MatX Cs = MatX::Zero(nk, nb);   // <phi_i, psi_b>_F
    for (std::size_t q = 0; q < fr.weights.size(); ++q) {
      Qs += fr.weights[q] * psi.row(q).transpose() * fk1.row(q);
      Cs += fr.weights[q] * fk.row(q).transpose() * psi.row(q);
    }
    MatX Q = MatX::Zero(fd, nu);
    for (int bb = 0; bb < nb; ++bb)
      for (int j = 0; j < nk1; ++j)
        for (int d = 0; d < 3; ++d) Q(3 * bb + d, 3 * j + d) = Qs(bb, j);
    MatX T = MatX::Zero(fd, fd);
    for (int bb = 0; bb < nb; ++bb) T.block<3, 3>(3 * bb, 3 * bb) = setup.tau(e, lf);
    const MatX QtT = Q.transpose() * T;
    b.Suu += QtT * Q;
    b.Suh.middleCols(lf * fd, fd) = QtT;
    b.Shh.block(lf * fd, lf * fd, fd, fd) = T;
    for (int i = 0; i < nk; ++i)
      for (int c = 0; c < 6; ++c) {
        const Vec3 En = E[c] * n;
        for (int bb = 0; bb < nb; ++bb) b.C.block<1, 3>(6 * i + c, lf * fd + 3 * bb) = Cs(i, bb) * En.transpose();
      }
  }
  return b;
}

VecX assemble_element_load(const HdgSetup& setup, int e, const VectorFn& f) {
  const int nk1 = poly_dim(3, setup.k() + 1);
  const PhysicalRule rule = setup.element_rule(e);
  const MatX& pk1 = setup.phi_k1();
  VecX F = VecX::Zero(setup.n_u());
  for (std::size_t q = 0; q < rule.weights.size(); ++q) {
    const Vec3 fv = rule.weights[q] * f(rule.points[q]);
    for (int j = 0; j < nk1; ++j) F.segment<3>(3 * j) += pk1(q, j) * fv;
  }
  return F;
}

// ---------------------------------------------------------------------------
// Condensation
// ---------------------------------------------------------------------------

CondensedElement condense(LocalBlocks blocks, int element_id) {
  const int ns = blocks.A.rows(), nu = blocks.M.rows(), nh = blocks.Shh.rows();
  MatX L(ns + nu, ns + nu);
  L.topLeftCorner(ns, ns) = blocks.A;
  L.topRightCorner(ns, nu) = blocks.D.transpose();
  L.bottomLeftCorner(nu, ns) = blocks.D;
  L.bottomRightCorner(nu, nu) = -(blocks.Suu + blocks.mass_coeff * blocks.M);
  MatX G(ns + nu, nh);
  G.topRows(ns) = blocks.C;
  G.bottomRows(nu) = -blocks.Suh;

  CondensedElement ce;
  Eigen::PartialPivLU<MatX> lu(L);
  ce.rcond = lu.rcond();
  if (!(ce.rcond > 1e-14))
    throw NumericalError("singular interior block in element " + std::to_string(element_id) + " (reciprocal condition " + sci(ce.rcond) + ")");
  ce.W = lu.solve(G);
  MatX rhs = MatX::Zero(ns + nu, nu);
  rhs.bottomRows(nu).setIdentity();
  ce.Z = lu.solve(rhs);
  ce.K = blocks.Shh + G.transpose() * ce.W;
  const double scale = std::max(ce.K.cwiseAbs().maxCoeff(), 1e-300);
  ce.asymmetry = (ce.K - ce.K.transpose()).cwiseAbs().maxCoeff() / scale;
  ce.K = 0.5 * (ce.K + ce.K.transpose()).eval();
  ce.blocks = std::move(blocks);
  return ce;
}

void recover_interior(const CondensedElement& ce, const VecX& uhat_e, const VecX& load, VecX& sigma, VecX& u) {
  const int ns = ce.blocks.A.rows(), nu = ce.blocks.M.rows();
  const VecX x = ce.W * uhat_e - ce.Z * load;
  sigma = x.head(ns);
  u = x.tail(nu);
}

double local_residual(const LocalBlocks& b, const VecX& sigma, const VecX& u, const VecX& uhat_e, const VecX& load) {
  const VecX t1 = b.A * sigma, t2 = b.D.transpose() * u, t3 = b.C * uhat_e;
  const VecX s1 = b.D * sigma, s2 = (b.Suu + b.mass_coeff * b.M) * u, s3 = b.Suh * uhat_e;
  const double r1 = (t1 + t2 - t3).norm() / std::max({t1.norm(), t2.norm(), t3.norm(), 1e-300});
  const double r2 = (-s1 + s2 - s3 - load).norm() / std::max({s1.norm(), s2.norm(), s3.norm(), load.norm(), 1e-300});
  return std::max(r1, r2);
}

// ---------------------------------------------------------------------------
// Global system
// ---------------------------------------------------------------------------

Eigen::SparseMatrix<double> assemble_skeleton_matrix(const HdgSetup& setup, const std::vector<CondensedElement>& elements) {
  const int fd = setup.face_dofs();
  std::vector<Eigen::Triplet<double>> trip;
  trip.reserve(elements.size() * 16 * fd * fd);
  for (int e = 0; e < setup.mesh().num_elements(); ++e) {
    const MatX& K = elements[e].K;
    for (int a = 0; a < 4; ++a) {
      const int ga = setup.skeleton_index(setup.mesh().element_face(e, a));
      if (ga < 0) continue;
      for (int b = 0; b < 4; ++b) {
        const int gb = setup.skeleton_index(setup.mesh().element_face(e, b));
        if (gb < 0) continue;
        for (int i = 0; i < fd; ++i)
          for (int j = 0; j < fd; ++j) trip.emplace_back(ga * fd + i, gb * fd + j, K(a * fd + i, b * fd + j));
      }
    }
  }
  Eigen::SparseMatrix<double> A(setup.num_skeleton_dofs(), setup.num_skeleton_dofs());
  A.setFromTriplets(trip.begin(), trip.end());
  return A;
}

VecX gather_uhat(const HdgSetup& setup, int e, const VecX& uhat) {
  const int fd = setup.face_dofs();
  VecX out(4 * fd);
  for (int a = 0; a < 4; ++a) out.segment(a * fd, fd) = uhat.segment(setup.mesh().element_face(e, a) * fd, fd);
  return out;
}

VecX skeleton_rhs(const HdgSetup& setup, const std::vector<CondensedElement>& elements, const std::vector<VecX>& loads,
                  const VecX& dirichlet) {
  const int fd = setup.face_dofs();
  VecX rhs = VecX::Zero(setup.num_skeleton_dofs());
  for (int e = 0; e < setup.mesh().num_elements(); ++e) {
    const CondensedElement& ce = elements[e];
    const int ns = ce.blocks.A.rows(), nu = ce.blocks.M.rows();
    VecX r = VecX::Zero(4 * fd);
    if (!loads.empty()) {
      MatX G(ns + nu, 4 * fd);
      G.topRows(ns) = ce.blocks.C;
      G.bottomRows(nu) = -ce.blocks.Suh;
      r = G.transpose() * (ce.Z * loads[e]);
    }
    VecX ub = VecX::Zero(4 * fd);
    for (int b = 0; b < 4; ++b) {
      const int f = setup.mesh().element_face(e, b);
      if (setup.skeleton_index(f) < 0) ub.segment(b * fd, fd) = dirichlet.segment(f * fd, fd);
    }
    r -= ce.K * ub;
    for (int a = 0; a < 4; ++a) {
      const int ga = setup.skeleton_index(setup.mesh().element_face(e, a));
      if (ga >= 0) rhs.segment(ga * fd, fd) += r.segment(a * fd, fd);
    }
  }
  return rhs;
}

SkeletonSystem assemble_global(const HdgSetup& setup, const std::vector<CondensedElement>& elements,
                               const std::vector<VecX>& loads, const VecX& dirichlet) {
  SkeletonSystem s;
  s.matrix = assemble_skeleton_matrix(setup, elements);
  s.rhs = skeleton_rhs(setup, elements, loads, dirichlet);
  const Eigen::SparseMatrix<double> diff = Eigen::SparseMatrix<double>(s.matrix.transpose()) - s.matrix;
  for (int c = 0; c < diff.outerSize(); ++c)
    for (Eigen::SparseMatrix<double>::InnerIterator it(diff, c); it; ++it) s.asymmetry = std::max(s.asymmetry, std::abs(it.value()));
  return s;
}

VecX scatter_skeleton(const HdgSetup& setup, const VecX& skeleton, const VecX& dirichlet) {
  const int fd = setup.face_dofs();
  VecX out = dirichlet.size() ? dirichlet : VecX::Zero(setup.num_face_coeffs());
  for (int f = 0; f < setup.mesh().num_faces(); ++f) {
    const int s = setup.skeleton_index(f);
    if (s >= 0) out.segment(f * fd, fd) = skeleton.segment(s * fd, fd);
  }
  return out;
}

VecX project_faces(const HdgSetup& setup, const VectorFn& g, bool boundary_only) {
  const int fd = setup.face_dofs(), nb = setup.face_functions();
  VecX out = VecX::Zero(setup.num_face_coeffs());
  for (int f = 0; f < setup.mesh().num_faces(); ++f) {
    if (boundary_only && !setup.mesh().faces()[f].boundary()) continue;
    const PhysicalRule fr = setup.face_rule(f);
    const double s = 1.0 / std::sqrt(setup.mesh().face_frame(f).jacobian());
    for (std::size_t q = 0; q < fr.weights.size(); ++q) {
      const Vec3 gv = fr.weights[q] * s * g(fr.points[q]);
      for (int b = 0; b < nb; ++b) out.segment<3>(f * fd + 3 * b) += setup.psi_ref()(q, b) * gv;
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Solver
// ---------------------------------------------------------------------------

struct SkeletonSolver::Impl {
#ifdef HDGPLUS_HAVE_CHOLMOD
  Eigen::CholmodSimplicialLDLT<Eigen::SparseMatrix<double>> ldlt;
#else
  Eigen::SimplicialLDLT<Eigen::SparseMatrix<double>> ldlt;
#endif
  Eigen::SparseLU<Eigen::SparseMatrix<double>, Eigen::COLAMDOrdering<int>> lu;
};

SkeletonSolver::~SkeletonSolver() = default;

SkeletonSolver::SkeletonSolver(Eigen::SparseMatrix<double> matrix, bool symmetric_positive)
    : matrix_(std::move(matrix)), impl_(std::make_unique<Impl>()) {
  matrix_.makeCompressed();
  const int n = matrix_.rows();
  path_ = symmetric_positive ? "ldlt" : "lu";
  if (n == 0) {
    cond_ = 1.0;
    return;
  }
  if (symmetric_positive) {
    impl_->ldlt.compute(matrix_);
    if (impl_->ldlt.info() != Eigen::Success) throw NumericalError("LDL^T factorization of the skeleton system failed (zero or negative pivot)");
#ifndef HDGPLUS_HAVE_CHOLMOD
    const VecX d = impl_->ldlt.vectorD();
    const double dmin = d.minCoeff(), dmax = d.cwiseAbs().maxCoeff();
    if (!(dmin > 1e-14 * dmax))
      throw NumericalError("skeleton system is not positive definite (LDL^T pivot ratio " + sci(dmin / dmax) + ")");
#endif
  } else {
    impl_->lu.analyzePattern(matrix_);
    impl_->lu.factorize(matrix_);
    if (impl_->lu.info() != Eigen::Success) throw NumericalError("LU factorization of the skeleton system failed: " + impl_->lu.lastErrorMessage());
  }
  // Power iterations on A and A^-1 (both symmetric) for a 2-norm condition estimate.
  VecX x(n), y(n);
  for (int i = 0; i < n; ++i) x(i) = 1.0 + 0.5 * std::sin(1.0 + i);
  y = x;
  double big = 0, small = 0;
  for (int it = 0; it < 25; ++it) {
    x.normalize();
    x = matrix_ * x;
    big = x.norm();
    y.normalize();
    y = raw_solve(y);
    small = y.norm();
  }
  cond_ = big * small;
}

VecX SkeletonSolver::raw_solve(const VecX& b) const {
  if (b.size() == 0) return b;
  return path_ == "ldlt" ? VecX(impl_->ldlt.solve(b)) : VecX(impl_->lu.solve(b));
}

VecX SkeletonSolver::solve(const VecX& rhs, SolveReport* report) const {
  VecX x = raw_solve(rhs);
  if (report) {
    report->path = path_;
    report->dofs = static_cast<int>(rhs.size());
    const double bn = rhs.norm();
    report->residual = bn > 0 ? (matrix_ * x - rhs).norm() / bn : (matrix_ * x).norm();
    report->condition_estimate = cond_;
    if (cond_ > 1e12)
      report->warnings.push_back("skeleton system is near singular (condition estimate " + sci(cond_) + "); possible resonance");
  }
  return x;
}

// ---------------------------------------------------------------------------
// Operator
// ---------------------------------------------------------------------------

HdgOperator::HdgOperator(const HdgSetup& setup, double mass_coeff) : setup_(setup), mass_coeff_(mass_coeff) {
  elements_.reserve(setup.mesh().num_elements());
  for (int e = 0; e < setup.mesh().num_elements(); ++e) {
    elements_.push_back(condense(assemble_local(setup, e, mass_coeff), e));
    min_rcond_ = std::min(min_rcond_, elements_.back().rcond);
  }
  solver_ = std::make_unique<SkeletonSolver>(assemble_skeleton_matrix(setup, elements_), mass_coeff >= 0);
}

HdgSolution HdgOperator::solve(const std::vector<VecX>& loads, const VecX& dirichlet) const {
  HdgSolution sol;
  const VecX dir = dirichlet.size() ? dirichlet : VecX::Zero(setup_.num_face_coeffs());
  const VecX rhs = skeleton_rhs(setup_, elements_, loads, dir);
  const VecX x = solver_->solve(rhs, &sol.report);
  sol.report.min_element_rcond = min_rcond_;
  sol.uhat = scatter_skeleton(setup_, x, dir);
  const int ne = setup_.mesh().num_elements();
  sol.sigma.resize(ne);
  sol.u.resize(ne);
  const VecX zero = VecX::Zero(setup_.n_u());
  for (int e = 0; e < ne; ++e)
    recover_interior(elements_[e], gather_uhat(setup_, e, sol.uhat), loads.empty() ? zero : loads[e], sol.sigma[e], sol.u[e]);
  return sol;
}

std::pair<double, double> traction_jump(const HdgSetup& setup, const std::vector<CondensedElement>& elements,
                                        const HdgSolution& sol) {
  const int fd = setup.face_dofs();
  VecX sum = VecX::Zero(setup.num_face_coeffs());
  double scale = 0;
  for (int e = 0; e < setup.mesh().num_elements(); ++e) {
    const LocalBlocks& b = elements[e].blocks;
    const VecX uh = gather_uhat(setup, e, sol.uhat);
    const VecX t = b.C.transpose() * sol.sigma[e] - b.Suh.transpose() * sol.u[e] + b.Shh * uh;
    for (int a = 0; a < 4; ++a) {
      const int f = setup.mesh().element_face(e, a);
      sum.segment(f * fd, fd) += t.segment(a * fd, fd);
      scale = std::max(scale, t.segment(a * fd, fd).norm());
    }
  }
  double jump = 0;
  for (int f = 0; f < setup.mesh().num_faces(); ++f)
    if (setup.skeleton_index(f) >= 0) jump = std::max(jump, sum.segment(f * fd, fd).norm());
  return {jump, scale};
}

FieldErrors field_errors(const HdgSetup& setup, const std::vector<VecX>& sigma, const std::vector<VecX>& u,
                         const MatrixFn& sigma_exact, const VectorFn& u_exact, int quad_order) {
  if (quad_order < 0) quad_order = setup.quad_order();
  const TetQuadrature rule = quad_tet(quad_order);
  const MatX pk = tet_basis(setup.k()).tabulate(rule.points);
  const MatX pk1 = tet_basis(setup.k() + 1).tabulate(rule.points);
  const int nk = pk.cols(), nk1 = pk1.cols();
  double es = 0, eu = 0, ns = 0, nu = 0;
  for (int e = 0; e < setup.mesh().num_elements(); ++e) {
    const TetGeometry& g = setup.geometry(e);
    const double jac = std::abs(g.J());
    for (std::size_t q = 0; q < rule.size(); ++q) {
      const Vec3 x = g.to_physical(rule.points[q]);
      const double w = rule.weights[q] * jac;
      Eigen::Matrix<double, 6, 1> sv = Eigen::Matrix<double, 6, 1>::Zero();
      for (int i = 0; i < nk; ++i) sv += pk(q, i) * sigma[e].segment<6>(6 * i);
      Vec3 uv = Vec3::Zero();
      for (int j = 0; j < nk1; ++j) uv += pk1(q, j) * u[e].segment<3>(3 * j);
      const Mat3 se = sigma_exact(x);
      const Vec3 ue = u_exact(x);
      es += w * (vec_to_sym(sv) - se).squaredNorm();
      ns += w * se.squaredNorm();
      eu += w * (uv - ue).squaredNorm();
      nu += w * ue.squaredNorm();
    }
  }
  FieldErrors out;
  out.norm_sigma = std::sqrt(ns);
  out.norm_u = std::sqrt(nu);
  out.E_sigma = ns > 0 ? std::sqrt(es / ns) : std::sqrt(es);
  out.E_u = nu > 0 ? std::sqrt(eu / nu) : std::sqrt(eu);
  return out;
}

}  // namespace hdgplus

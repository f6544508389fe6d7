#include "hdgplus/hdgcore.hpp"

#include <gtest/gtest.h>

#include <algorithm>
#include <map>
#include <random>

using namespace hdgplus;

namespace {

const TetMesh& single_tet() {
  static const TetMesh m({Vec3(0.1, 0.0, 0.2), Vec3(1.2, 0.1, 0.0), Vec3(0.3, 0.9, 0.1), Vec3(0.2, 0.3, 1.1)}, {{0, 1, 2, 3}});
  return m;
}

HdgSetup make_setup(const TetMesh& mesh, const ManufacturedCase& c, int k, double c_tau = 1.0) {
  HdgOptions o;
  o.k = k;
  o.c_tau = c_tau;
  return HdgSetup(mesh, c.material, c.density, o);
}

std::vector<VecX> steady_loads(const HdgSetup& s, const ManufacturedCase& c, double scale = 1.0) {
  std::vector<VecX> loads;
  for (int e = 0; e < s.mesh().num_elements(); ++e)
    loads.push_back(assemble_element_load(s, e, [&](const Vec3& x) { return Vec3(scale * c.load_steady(x)); }));
  return loads;
}

VecX dirichlet(const HdgSetup& s, const ManufacturedCase& c, double scale = 1.0) {
  return project_faces(s, [&](const Vec3& x) { return Vec3(scale * c.U_value(x)); });
}

// L2 projections on the physical element via its own quadrature; the
// reference bases are orthonormal so the physical Gram matrix is |J| I.
VecX project_sigma(const HdgSetup& s, int e, const ManufacturedCase& c) {
  const PhysicalRule r = s.element_rule(e);
  const double jac = std::abs(s.geometry(e).J());
  VecX out = VecX::Zero(s.n_sigma());
  for (std::size_t q = 0; q < r.weights.size(); ++q) {
    const auto v = sym_to_vec(c.stress_U(r.points[q]));
    for (int i = 0; i < s.phi_k().cols(); ++i) out.segment<6>(6 * i) += r.weights[q] * s.phi_k()(q, i) * v / jac;
  }
  return out;
}

VecX project_u(const HdgSetup& s, int e, const ManufacturedCase& c) {
  const PhysicalRule r = s.element_rule(e);
  const double jac = std::abs(s.geometry(e).J());
  VecX out = VecX::Zero(s.n_u());
  for (std::size_t q = 0; q < r.weights.size(); ++q) {
    const Vec3 v = c.U_value(r.points[q]);
    for (int j = 0; j < s.phi_k1().cols(); ++j) out.segment<3>(3 * j) += r.weights[q] * s.phi_k1()(q, j) * v / jac;
  }
  return out;
}

}  // namespace

class LocalExactness : public ::testing::TestWithParam<int> {};

TEST_P(LocalExactness, ExactPolynomialDataSatisfiesLocalEquations) {
  const int k = GetParam();
  const auto c = case_polynomial(k + 1, 1.7, 0.9, 21);
  const HdgSetup s = make_setup(single_tet(), c, k);
  const LocalBlocks b = assemble_local(s, 0, 0.0);
  const VecX sig = project_sigma(s, 0, c), u = project_u(s, 0, c);
  const VecX uh = gather_uhat(s, 0, project_faces(s, [&](const Vec3& x) { return c.U_value(x); }, false));
  const VecX F = assemble_element_load(s, 0, [&](const Vec3& x) { return c.load_steady(x); });
  EXPECT_LT(local_residual(b, sig, u, uh, F), 1e-12);
}

INSTANTIATE_TEST_SUITE_P(Degrees, LocalExactness, ::testing::Values(1, 2, 3));

TEST(LocalBlocks, DivergenceBlockMatchesIntegrationByParts) {
  // Oracle: (div sigma, w) = <sigma n, w>_dK - (sigma, eps(w)), from the P_{k+1} gradients.
  const int k = 2;
  const auto c = case_paper_transient();
  const HdgSetup s = make_setup(single_tet(), c, k);
  const LocalBlocks b = assemble_local(s, 0, 0.0);
  const TetGeometry& g = s.geometry(0);
  const auto& Ek = sym_basis();
  const int nk = poly_dim(3, k), nk1 = poly_dim(3, k + 1);
  MatX D = MatX::Zero(s.n_u(), s.n_sigma());
  const TetQuadrature qt = quad_tet(2 * k + 4);
  const MatX pk = tet_basis(k).tabulate(qt.points);
  const auto gk1 = tet_basis(k + 1).tabulate_grad(qt.points);
  for (std::size_t q = 0; q < qt.size(); ++q) {
    const double w = qt.weights[q] * std::abs(g.J());
    for (int j = 0; j < nk1; ++j) {
      const Vec3 gr = g.B_inv().transpose() * Vec3(gk1[0](q, j), gk1[1](q, j), gk1[2](q, j));
      for (int d = 0; d < 3; ++d) {
        const Mat3 eps = sym_part(Vec3::Unit(d) * gr.transpose());
        for (int i = 0; i < nk; ++i)
          for (int cc = 0; cc < 6; ++cc) D(3 * j + d, 6 * i + cc) -= w * pk(q, i) * frob(Ek[cc], eps);
      }
    }
  }
  const TriQuadrature qf = quad_tri(2 * k + 4);
  for (int f = 0; f < 4; ++f) {
    const FaceFrame fr = g.face(f);
    std::vector<Vec3> ref;
    for (const auto& st : qf.points) ref.push_back(g.to_reference(fr.point(st)));
    const MatX fk = tet_basis(k).tabulate(ref), fk1 = tet_basis(k + 1).tabulate(ref);
    for (std::size_t q = 0; q < qf.size(); ++q) {
      const double w = qf.weights[q] * fr.jacobian();
      for (int j = 0; j < nk1; ++j)
        for (int d = 0; d < 3; ++d)
          for (int i = 0; i < nk; ++i)
            for (int cc = 0; cc < 6; ++cc) D(3 * j + d, 6 * i + cc) += w * fk(q, i) * fk1(q, j) * (Ek[cc] * fr.normal)(d);
    }
  }
  EXPECT_LT((D - b.D).cwiseAbs().maxCoeff(), 1e-12 * b.D.cwiseAbs().maxCoeff());
}

TEST(LocalBlocks, StabilizationIsPsdWithTraceKernel) {
  const auto c = case_paper_transient();
  const HdgSetup s = make_setup(single_tet(), c, 1);
  const LocalBlocks b = assemble_local(s, 0, 0.0);
  const int nu = s.n_u(), nh = s.n_uhat();
  MatX S(nu + nh, nu + nh);
  S << b.Suu, -b.Suh, -b.Suh.transpose(), b.Shh;
  const Eigen::SelfAdjointEigenSolver<MatX> es(S);
  const VecX ev = es.eigenvalues();
  const double top = ev.maxCoeff();
  EXPECT_GT(ev.minCoeff(), -1e-12 * top);
  // kernel {uhat = P_M u}: one direction per u coefficient
  int kernel = 0;
  for (int i = 0; i < ev.size(); ++i) kernel += std::abs(ev(i)) < 1e-10 * top;
  EXPECT_EQ(kernel, nu);
}

TEST(LocalBlocks, StabilizationLinearInCtau) {
  const auto c = case_paper_transient();
  const LocalBlocks b1 = assemble_local(make_setup(single_tet(), c, 1, 1.0), 0, 0.0);
  const LocalBlocks b2 = assemble_local(make_setup(single_tet(), c, 1, 2.0), 0, 0.0);
  EXPECT_LT((b2.Suu - 2 * b1.Suu).cwiseAbs().maxCoeff(), 1e-13 * b1.Suu.cwiseAbs().maxCoeff());
  EXPECT_LT((b2.Suh - 2 * b1.Suh).cwiseAbs().maxCoeff(), 1e-13 * b1.Suh.cwiseAbs().maxCoeff());
  EXPECT_LT((b2.Shh - 2 * b1.Shh).cwiseAbs().maxCoeff(), 1e-13 * b1.Shh.cwiseAbs().maxCoeff());
  EXPECT_EQ((b2.A - b1.A).norm(), 0.0);
}

TEST(LocalBlocks, TauOverrideMustBeSpd) {
  const auto c = case_paper_transient();
  HdgOptions o;
  o.tau_override = [](int, int) { return Mat3(Mat3::Identity() * -1.0); };
  EXPECT_THROW(HdgSetup(single_tet(), c.material, c.density, o), InvalidArgument);
  o.tau_override = [](int, int) {
    Mat3 t;
    t << 3, 1, 0, 1, 2, 0, 0, 0, 1;
    return t;
  };
  const HdgSetup s(single_tet(), c.material, c.density, o);
  EXPECT_EQ(s.tau(0, 2)(0, 1), 1.0);
}

TEST(Condense, RecoveryConsistencyForRandomTraces) {
  const auto c = case_paper_transient();
  const HdgSetup s = make_setup(single_tet(), c, 2);
  for (double m : {0.0, -3.0, 40.0}) {
    const CondensedElement ce = condense(assemble_local(s, 0, m), 0);
    EXPECT_LT(ce.asymmetry, 1e-12);
    std::mt19937 rng(5);
    std::normal_distribution<double> n;
    for (int t = 0; t < 10; ++t) {
      VecX uh(s.n_uhat()), F(s.n_u());
      for (int i = 0; i < uh.size(); ++i) uh(i) = n(rng);
      for (int i = 0; i < F.size(); ++i) F(i) = n(rng);
      VecX sig, u;
      recover_interior(ce, uh, F, sig, u);
      EXPECT_LT(local_residual(ce.blocks, sig, u, uh, F), 1e-10);
    }
  }
}

TEST(Condense, PositiveDefiniteWithOneFaceFixed) {
  // Oracle: dense symmetric eigensolve of K with the face-0 block removed.
  const auto c = case_paper_transient();
  const HdgSetup s = make_setup(single_tet(), c, 1);
  const CondensedElement ce = condense(assemble_local(s, 0, 0.0), 0);
  const int fd = s.face_dofs();
  const MatX Kr = ce.K.bottomRightCorner(3 * fd, 3 * fd);
  EXPECT_GT(Eigen::SelfAdjointEigenSolver<MatX>(Kr).eigenvalues().minCoeff(), 0.0);
  // the full K annihilates rigid motions (6-dimensional kernel)
  const VecX ev = Eigen::SelfAdjointEigenSolver<MatX>(ce.K).eigenvalues();
  int kernel = 0;
  for (int i = 0; i < ev.size(); ++i) kernel += std::abs(ev(i)) < 1e-10 * ev.maxCoeff();
  EXPECT_EQ(kernel, 6);
}

TEST(Global, SkeletonDofCount) {
  const auto c = case_paper_transient();
  EXPECT_EQ(make_setup(structured_cube(1), c, 1).num_skeleton_dofs(), 54);
}

TEST(Global, SingleElementFullDirichletReproducesPolynomial) {
  for (int k : {1, 2}) {
    const auto c = case_polynomial(k + 1, 2.0, 1.0, 3);
    const HdgSetup s = make_setup(single_tet(), c, k);
    EXPECT_EQ(s.num_skeleton_dofs(), 0);
    const HdgOperator op(s, 0.0);
    const HdgSolution sol = op.solve(steady_loads(s, c), dirichlet(s, c));
    const FieldErrors err = field_errors(s, sol.sigma, sol.u, [&](const Vec3& x) { return c.stress_U(x); },
                                         [&](const Vec3& x) { return c.U_value(x); });
    EXPECT_LT(err.E_sigma, 1e-9);
    EXPECT_LT(err.E_u, 1e-9);
  }
}

TEST(Global, TwoElementPatchConservative) {
  const TetMesh patch({Vec3(0, 0, 0), Vec3(1, 0, 0), Vec3(0, 1, 0), Vec3(0, 0, 1), Vec3(0.8, 0.7, 0.9)}, {{0, 1, 2, 3}, {1, 2, 3, 4}});
  const auto c = case_polynomial(2, 1.0, 1.5, 9);
  const HdgSetup s = make_setup(patch, c, 1);
  const HdgOperator op(s, 0.0);
  const HdgSolution sol = op.solve(steady_loads(s, c), dirichlet(s, c));
  const auto [jump, scale] = traction_jump(s, op.elements(), sol);
  EXPECT_LT(jump, 1e-10 * std::max(1.0, scale));
  const FieldErrors err = field_errors(s, sol.sigma, sol.u, [&](const Vec3& x) { return c.stress_U(x); },
                                       [&](const Vec3& x) { return c.U_value(x); });
  EXPECT_LT(err.E_sigma, 1e-10);
  EXPECT_LT(err.E_u, 1e-10);
}

TEST(Global, ZeroDataGivesZeroSolution) {
  const auto c = case_paper_transient();
  const HdgSetup s = make_setup(structured_cube(1), c, 1);
  const HdgOperator op(s, 0.0);
  const HdgSolution sol = op.solve({}, VecX());
  EXPECT_EQ(sol.uhat.norm(), 0.0);
  for (const auto& v : sol.u) EXPECT_EQ(v.norm(), 0.0);
}

TEST(Global, SteadySolveResidualSymmetryAndConservation) {
  const auto c = case_paper_transient();
  const HdgSetup s = make_setup(structured_cube(2), c, 1);
  const HdgOperator op(s, 0.0);
  const auto loads = steady_loads(s, c);
  const VecX g = dirichlet(s, c);
  const SkeletonSystem sys = assemble_global(s, op.elements(), loads, g);
  EXPECT_LT(sys.asymmetry, 1e-12);
  const HdgSolution sol = op.solve(loads, g);
  EXPECT_EQ(sol.report.path, "ldlt");
  EXPECT_LT(sol.report.residual, 1e-10);
  EXPECT_GT(sol.report.condition_estimate, 1.0);
  const auto [jump, scale] = traction_jump(s, op.elements(), sol);
  EXPECT_LT(jump, 1e-9 * scale);
  const HdgOperator harmonic(s, -1.0);
  EXPECT_EQ(harmonic.solve(loads, g).report.path, "lu");
}

TEST(Global, PermutedElementOrderGivesSameTraces) {
  const auto c = case_paper_transient();
  const TetMesh m = structured_cube(2);
  auto tets = m.tets();
  std::mt19937 rng(13);
  std::shuffle(tets.begin(), tets.end(), rng);
  const TetMesh p(m.vertices(), tets);
  const HdgSetup s1 = make_setup(m, c, 1), s2 = make_setup(p, c, 1);
  const HdgSolution a = HdgOperator(s1, 0.0).solve(steady_loads(s1, c), dirichlet(s1, c));
  const HdgSolution b = HdgOperator(s2, 0.0).solve(steady_loads(s2, c), dirichlet(s2, c));
  std::map<std::array<int, 3>, int> index;
  for (int f = 0; f < p.num_faces(); ++f) index[p.faces()[f].vertices] = f;
  const int fd = s1.face_dofs();
  double diff = 0;
  for (int f = 0; f < m.num_faces(); ++f) {
    const int g = index.at(m.faces()[f].vertices);
    diff = std::max(diff, (a.uhat.segment(f * fd, fd) - b.uhat.segment(g * fd, fd)).cwiseAbs().maxCoeff());
  }
  EXPECT_LT(diff, 1e-12 * a.uhat.cwiseAbs().maxCoeff());
}

TEST(Global, SolutionIsHomogeneousInData) {
  const auto c = case_paper_transient();
  const HdgSetup s = make_setup(structured_cube(1), c, 1);
  const HdgOperator op(s, 0.0);
  const double alpha = -3.7;
  const HdgSolution a = op.solve(steady_loads(s, c), dirichlet(s, c));
  const HdgSolution b = op.solve(steady_loads(s, c, alpha), dirichlet(s, c, alpha));
  EXPECT_LT((b.uhat - alpha * a.uhat).norm(), 1e-12 * std::abs(alpha) * a.uhat.norm());
  for (int e = 0; e < s.mesh().num_elements(); ++e) {
    EXPECT_LT((b.sigma[e] - alpha * a.sigma[e]).norm(), 1e-12 * std::abs(alpha) * std::max(1.0, a.sigma[e].norm()));
    EXPECT_LT((b.u[e] - alpha * a.u[e]).norm(), 1e-12 * std::abs(alpha) * std::max(1.0, a.u[e].norm()));
  }
}

TEST(Global, DegreeZeroRejected) {
  const auto c = case_paper_transient();
  EXPECT_THROW(make_setup(single_tet(), c, 0), InvalidArgument);
}

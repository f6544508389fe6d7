#include "hdgplus/refproj.hpp"

#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <random>

using namespace hdgplus;

namespace {

const ReferenceSpaces& spaces(int k) {
  static const ReferenceSpaces s1 = build_spaces(1, 4);
  static const ReferenceSpaces s2 = build_spaces(2, 4);
  return k == 1 ? s1 : s2;
}

FaceTau identity_tau(double scale = 1.0) {
  FaceTau t;
  for (auto& m : t) m = scale * Mat3::Identity();
  return t;
}

// Rank of div: P_k(sym) -> P_{k-1}(R^3) in the monomial basis, exact integer entries.
int monomial_div_rank(int k) {
  std::vector<std::array<int, 3>> src, dst;
  for (int a = 0; a <= k; ++a)
    for (int b = 0; a + b <= k; ++b)
      for (int c = 0; a + b + c <= k; ++c) src.push_back({a, b, c});
  for (int a = 0; a < k; ++a)
    for (int b = 0; a + b < k; ++b)
      for (int c = 0; a + b + c < k; ++c) dst.push_back({a, b, c});
  const std::array<std::array<int, 2>, 6> comp{{{0, 0}, {1, 1}, {2, 2}, {1, 2}, {0, 2}, {0, 1}}};
  MatX D = MatX::Zero(3 * dst.size(), 6 * src.size());
  for (std::size_t m = 0; m < src.size(); ++m)
    for (int c = 0; c < 6; ++c) {
      // sigma = x^alpha (e_i e_j^T + e_j e_i^T); (div sigma)_r = sum_l d_l sigma_rl
      const int i = comp[c][0], j = comp[c][1];
      for (int pass = 0; pass < (i == j ? 1 : 2); ++pass) {
        const int r = pass == 0 ? i : j, l = pass == 0 ? j : i;
        if (src[m][l] == 0) continue;
        std::array<int, 3> e = src[m];
        --e[l];
        const auto it = std::find(dst.begin(), dst.end(), e);
        D(3 * (it - dst.begin()) + r, 6 * m + c) += src[m][l];
      }
    }
  Eigen::JacobiSVD<MatX> svd(D);
  const VecX& sv = svd.singularValues();
  int r = 0;
  for (int i = 0; i < sv.size(); ++i) r += sv(i) > 1e-10 * sv(0);
  return r;
}

}  // namespace

TEST(ReferenceSpaces, DimensionsForDegreeOne) {
  const SpaceDims& d = spaces(1).dims();
  EXPECT_EQ(d.Sigma, 24);
  EXPECT_EQ(d.V_minus, 3);
  EXPECT_EQ(d.V, 12);
  EXPECT_EQ(d.V_plus, 30);
  EXPECT_EQ(d.M, 36);
  EXPECT_EQ(d.Sigma_S, 24 - monomial_div_rank(1));
  EXPECT_EQ(d.Sigma_S, 21);
  EXPECT_EQ(d.Sigma_S0, 0);
  EXPECT_EQ(d.Theta, 9);
  EXPECT_EQ(d.Sigma_plus, 33);
  EXPECT_EQ(d.Sigma_minus, 6);
  EXPECT_EQ(d.Sigma_minus_perp, 27);
  EXPECT_EQ(d.V_minus_perp, 9);
  EXPECT_EQ(d.M, d.Theta + d.traction_S + 6);
}

TEST(ReferenceSpaces, DimensionIdentitiesUpToDegreeThree) {
  for (int k = 1; k <= 3; ++k) {
    const ReferenceSpaces s = build_spaces(k, 4);
    const SpaceDims& d = s.dims();
    EXPECT_EQ(d.Sigma_S, d.Sigma - monomial_div_rank(k)) << k;
    EXPECT_EQ(d.M, d.Theta + d.traction_S + d.rigid) << k;
    EXPECT_EQ(d.M, d.Sigma_minus_perp + d.V_minus_perp) << k;
    EXPECT_EQ(d.Sigma_plus, d.Sigma + d.Theta) << k;
    EXPECT_EQ(d.traction_S, d.Sigma_S - d.Sigma_S0) << k;
    EXPECT_GE(s.checks().min_gap, 10.0) << k;
    for (const auto& [name, id] : s.report()["identities"].items()) EXPECT_TRUE(id["holds"].get<bool>()) << name;
  }
}

TEST(ReferenceSpaces, RigidMotionsAndOrthogonalSum) {
  for (int k = 1; k <= 2; ++k) {
    const auto& c = spaces(k).checks();
    EXPECT_EQ(spaces(k).rigid().cols(), 6);
    EXPECT_LT(c.rigid_strain, 1e-13);
    EXPECT_LT(c.orth_traction_rigid, 1e-10);
    EXPECT_LT(c.orth_theta, 1e-10);
    EXPECT_EQ(c.span_m_decomposition, spaces(k).dims().M);
  }
}

TEST(ReferenceSpaces, TraceOfSigmaMinusComplementPairsThroughDivergence) {
  // <gamma_n sigma, gamma v> = (div sigma, v) + (sigma, eps(v)); for sigma in
  // the complement of Sigma_- and v in the complement of V_- only the
  // divergence of the lifted part survives.
  const ReferenceSpaces& s = spaces(1);
  const SpaceDims& d = s.dims();
  const MatX& S = s.sigma_minus_perp();
  const MatX V = MatX::Identity(d.V_plus, d.V_plus).middleCols(d.V_minus, d.V_minus_perp);
  const MatX pair = (s.traction_big() * S).transpose() * (s.trace() * V);
  const MatX ibp = (s.div_big() * S).transpose() * V + (s.strain_plus().transpose() * S).transpose() * V;
  EXPECT_LT((pair - ibp).cwiseAbs().maxCoeff(), 1e-12);
  const MatX eps_part = (s.strain_plus().transpose() * S).transpose() * V;
  EXPECT_LT(eps_part.cwiseAbs().maxCoeff(), 1e-12);
}

TEST(ReferenceSpaces, LiftedBasisResiduals) {
  const ReferenceSpaces& s = spaces(1);
  EXPECT_LE(s.r_trac(), kMaxLiftingResidual);
  EXPECT_DOUBLE_EQ(s.tol_proj(), std::max(1e-8, 50 * s.r_trac()));
  for (int c = 0; c < s.fill().cols(); ++c) {
    const VecX col = s.fill().col(c);
    EXPECT_LE(s.div_norm(col), s.r_div() * (1 + 1e-12));
    // P_M of the lifted traction is within r_trac of the prescribed one.
    EXPECT_LE((s.traction_big() * col - s.theta().col(c)).norm(), s.r_trac() * (1 + 1e-12));
  }
}

TEST(ReferenceSpaces, RejectsBadParameters) {
  EXPECT_THROW(build_spaces(0, 4), InvalidArgument);
  EXPECT_THROW(build_spaces(1, 0), InvalidArgument);
  try {
    build_spaces(1, 1);
    FAIL() << "q = 1 accepted";
  } catch (const NumericalError& e) {
    EXPECT_NE(std::string(e.what()).find("r_trac"), std::string::npos);
  }
}

TEST(Lifting, ZeroTraction) {
  const Lifting l = lift_traction(spaces(1), VecX::Zero(spaces(1).dims().M));
  EXPECT_EQ(l.sigma.norm(), 0.0);
  EXPECT_EQ(l.r_trac, 0.0);
  EXPECT_EQ(l.r_div, 0.0);
}

TEST(Lifting, ReproducesDivergenceFreeStress) {
  // Linear stresses are compatible strains, so the lifting returns them exactly.
  const ReferenceSpaces& s = spaces(1);
  std::mt19937 rng(3);
  std::normal_distribution<double> nd;
  VecX c(s.sigma_S().cols());
  for (int i = 0; i < c.size(); ++i) c(i) = nd(rng);
  const VecX sigma = s.sigma_S() * c;
  const VecX mu = s.traction_big().leftCols(s.dims().Sigma) * sigma;
  const Lifting l = lift_traction(s, mu);
  EXPECT_LT(l.r_trac, 1e-8 * mu.norm());
  EXPECT_LT(l.r_div, 1e-8 * mu.norm());
  VecX expect = VecX::Zero(s.n_big());
  expect.head(sigma.size()) = sigma;
  EXPECT_LT((l.sigma - expect).norm(), 1e-8 * sigma.norm());
}

TEST(Lifting, RejectsRigidTraces) {
  const ReferenceSpaces& s = spaces(1);
  const VecX mu = s.trace() * s.rigid().col(0);
  EXPECT_THROW(lift_traction(s, mu), InvalidArgument);
}

TEST(Lifting, TractionResidualDecreasesWithQ) {
  const ReferenceSpaces s2 = build_spaces(1, 2);
  std::mt19937 rng(11);
  std::normal_distribution<double> nd;
  VecX m0(s2.dims().M);
  for (int i = 0; i < m0.size(); ++i) m0(i) = nd(rng);
  const VecX mu = s2.theta() * (s2.theta().transpose() * m0);
  double prev = std::numeric_limits<double>::infinity();
  for (int q = 2; q <= 5; ++q) {
    const ReferenceSpaces s = build_spaces(1, q);
    const double r = lift_traction(s, mu).r_trac;
    EXPECT_LT(r, prev) << q;
    prev = r;
  }
}

TEST(Projection, FixedPointOnDiscreteSpaces) {
  for (int k = 1; k <= 2; ++k) {
    const ReferenceSpaces& s = spaces(k);
    const SmoothPair d = polynomial_pair(k, k + 1, 5 + k);
    std::mt19937 rng(k);
    const ProjectionResult p = project(s, d.sigma, d.u, random_tau(rng, 0.5, 2.0));
    const VecX ps = l2_project_element([&](const Vec3& x) { return d.sigma(x); }, k, Rank::symmat3).coeffs;
    const VecX pu = l2_project_element([&](const Vec3& x) { return d.u(x); }, k + 1, Rank::vector3).coeffs;
    EXPECT_LT((p.sigma_c - ps).norm(), 1e-10 * ps.norm()) << k;
    EXPECT_LT((p.u - pu).norm(), 1e-10 * pu.norm()) << k;
    EXPECT_LT(p.rest.norm(), 1e-10) << k;
    EXPECT_LT(p.delta.norm(), 1e-10) << k;
    EXPECT_EQ(p.pi0.system_size, s.dims().Sigma_plus + s.dims().V_plus);
  }
}

TEST(Projection, ZeroDataGivesZero) {
  const auto zs = [](const Vec3&) { return Mat3::Zero().eval(); };
  const auto zu = [](const Vec3&) { return Vec3::Zero().eval(); };
  const ProjectionResult p = project(spaces(1), zs, zu, identity_tau());
  EXPECT_EQ(p.sigma_ext.norm(), 0.0);
  EXPECT_EQ(p.u.norm(), 0.0);
  EXPECT_EQ(p.delta.norm(), 0.0);
}

TEST(Projection, NegativeDefiniteTauIsSolvable) {
  const ReferenceSpaces& s = spaces(1);
  const SmoothPair d = smooth_pair(4);
  const ProjectionResult p = project(s, d.sigma, d.u, identity_tau(-1.0));
  for (double r : p.pi0.residuals) EXPECT_LT(r, 1e-12);
  EXPECT_GT(p.pi0.rcond, kPi0ConditionWarning);
  const PhysicalProjection pp(s, TetGeometry::reference(), identity_tau(-1.0), p);
  EXPECT_LT(check_conditions(s, pp, d).max(), 1e-10);
}

TEST(Projection, RejectsIndefiniteOrAsymmetricTau) {
  const SmoothPair d = smooth_pair(1);
  FaceTau t = identity_tau();
  t[2](0, 0) = -1.0;
  EXPECT_THROW(project(spaces(1), d.sigma, d.u, t), InvalidArgument);
  t = identity_tau();
  t[1](0, 1) = 0.3;
  EXPECT_THROW(project(spaces(1), d.sigma, d.u, t), InvalidArgument);
}

TEST(Projection, AdjointFlip) {
  std::mt19937 rng(21);
  for (int k = 1; k <= 2; ++k)
    for (unsigned seed = 0; seed < 3; ++seed) {
      const SmoothPair d = smooth_pair(seed);
      EXPECT_LT(adjoint_flip_residual(spaces(k), d.sigma, d.u, random_tau(rng, 0.5, 2.0)), 1e-10);
    }
}

TEST(Projection, ConditionsOnRandomTetrahedra) {
  std::mt19937 rng(8);
  for (int k = 1; k <= 2; ++k)
    for (int t = 0; t < 3; ++t) {
      const TetGeometry K = random_shape_regular_tet(rng, 0.7);
      const FaceTau tau = random_tau(rng, 0.5, 2.0, K.diameter());
      const SmoothPair d = smooth_pair(static_cast<unsigned>(rng()));
      const PhysicalProjection p = push_forward_project(spaces(k), K, d.sigma, d.u, tau, t);
      const ConditionResiduals r = check_conditions(spaces(k), p, d);
      EXPECT_LT(r.a, 1e-10);
      EXPECT_LT(r.b, 1e-10);
      EXPECT_LT(r.c, 1e-10);
      EXPECT_LT(r.mean, 1e-10);
    }
}

TEST(Projection, PushForwardWithIdentityMatchesReference) {
  const ReferenceSpaces& s = spaces(2);
  const SmoothPair d = smooth_pair(9);
  std::mt19937 rng(2);
  const FaceTau tau = random_tau(rng, 0.5, 2.0);
  const ProjectionResult ref = project(s, d.sigma, d.u, tau);
  const PhysicalProjection p = push_forward_project(s, TetGeometry::reference(), d.sigma, d.u, tau);
  EXPECT_LT((p.reference().sigma_c - ref.sigma_c).norm(), 1e-12 * ref.sigma_c.norm());
  EXPECT_LT((p.reference().u - ref.u).norm(), 1e-12 * ref.u.norm());
  EXPECT_LT((p.reference().rest - ref.rest).norm(), 1e-12 * std::max(ref.rest.norm(), 1.0));
  for (int f = 0; f < 4; ++f) EXPECT_DOUBLE_EQ(p.face_ratio(f), 1.0);
}

TEST(Projection, PushForwardFieldsAreConsistent) {
  // The physical divergence is the divergence of the physical stress.
  std::mt19937 rng(5);
  const TetGeometry K = random_shape_regular_tet(rng, 0.5);
  const SmoothPair d = smooth_pair(2);
  const PhysicalProjection p = push_forward_project(spaces(2), K, d.sigma, d.u, random_tau(rng, 0.5, 2.0, 0.5));
  const Vec3 x = K.to_physical(Vec3(0.2, 0.3, 0.25));
  const double e = 1e-5;
  Vec3 div = Vec3::Zero();
  for (int l = 0; l < 3; ++l) div += (p.sigma(x + e * Vec3::Unit(l)) - p.sigma(x - e * Vec3::Unit(l))).col(l) / (2 * e);
  EXPECT_LT((div - p.div_sigma(x)).norm(), 1e-6 * std::max(1.0, div.norm()));
  EXPECT_THROW(push_forward_project(spaces(1), TetGeometry::reference(), d.sigma, d.u, identity_tau()).delta(4, x),
               InvalidArgument);
}

TEST(Projection, RemainderScalingSlope) {
  for (int k = 1; k <= 2; ++k) {
    const ScalingStudy sc = remainder_scaling(spaces(k), smooth_pair(3));
    EXPECT_GE(sc.slope, (k + 1) - 0.5 - 0.2) << k;
    for (std::size_t i = 1; i < sc.delta.size(); ++i) EXPECT_LT(sc.delta[i], sc.delta[i - 1]);
  }
}

TEST(Projection, StabilityOverRandomTau) {
  const ReferenceSpaces& s = spaces(1);
  const SmoothPair d = smooth_pair(12);
  // H1(K^) norm of the data by quadrature and central differences.
  const TetQuadrature q = quad_tet(12);
  double h1 = 0.0;
  const double e = 1e-5;
  for (std::size_t p = 0; p < q.size(); ++p) {
    const Vec3& x = q.points[p];
    double v = d.sigma(x).squaredNorm() + d.u(x).squaredNorm();
    for (int l = 0; l < 3; ++l) {
      const Vec3 dx = e * Vec3::Unit(l);
      v += ((d.sigma(x + dx) - d.sigma(x - dx)) / (2 * e)).squaredNorm() + ((d.u(x + dx) - d.u(x - dx)) / (2 * e)).squaredNorm();
    }
    h1 += q.weights[p] * v;
  }
  h1 = std::sqrt(h1);
  std::mt19937 rng(99);
  std::vector<double> C;
  for (int i = 0; i < 100; ++i) {
    const Pi0Result r = solve_pi0(s, d.sigma, d.u, random_tau(rng, 0.5, 2.0));
    C.push_back((r.sigma.norm() + r.u.norm()) / h1);
  }
  std::vector<double> sorted = C;
  std::sort(sorted.begin(), sorted.end());
  const double median = sorted[sorted.size() / 2];
  for (double c : C) EXPECT_TRUE(std::isfinite(c));
  EXPECT_LE(sorted.back(), 2.0 * median);
}

TEST(Verification, ReportIsDeterministicAndPasses) {
  const VerificationReport a = verify_projection(1, 4, 2, 17, 2);
  const VerificationReport b = verify_projection(1, 4, 2, 17, 2);
  EXPECT_EQ(a.json.dump(), b.json.dump());
  EXPECT_TRUE(a.passed);
  EXPECT_TRUE(a.json["passed_strict"].get<bool>());
  EXPECT_EQ(a.json["dims"]["M"], 36);
  EXPECT_GT(a.json["scaling"]["slope"].get<double>(), 1.3);
}

TEST(Verification, RandomTetrahedraAreShapeRegular) {
  std::mt19937 rng(4);
  for (int i = 0; i < 50; ++i) {
    const TetGeometry K = random_shape_regular_tet(rng, 2.0);
    EXPECT_GT(K.J(), 0.0);
    EXPECT_GT(K.inradius() / K.diameter(), 0.08);
    EXPECT_NEAR(K.diameter(), 2.0, 0.41);
  }
  EXPECT_THROW(random_tau(rng, 0.0, 1.0), InvalidArgument);
}

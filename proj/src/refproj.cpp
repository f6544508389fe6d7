#include "hdgplus/refproj.hpp"

#include <Eigen/Geometry>
#include <Eigen/SVD>

#include <algorithm>
#include <cstdio>
#include <limits>

namespace hdgplus {

namespace {

using nlohmann::json;

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.3e", v);
  return buf;
}

/// Column space and null space of A with the relative cut kRankCut. Records
/// the distance of the nearest singular value to the cut and refuses
/// decisions closer than a factor 10.
struct Split {
  int rank = 0;
  MatX range, null;
};

Split rank_split(const MatX& A, double& min_gap, const std::string& what) {
  Split out;
  if (A.rows() == 0 || A.cols() == 0) {
    out.range = MatX::Zero(A.rows(), 0);
    out.null = MatX::Identity(A.cols(), A.cols());
    return out;
  }
  Eigen::BDCSVD<MatX> svd(A, Eigen::ComputeFullU | Eigen::ComputeFullV);
  const VecX& sv = svd.singularValues();
  const double smax = sv(0);
  if (smax > 0) {
    const double cut = kRankCut * smax;
    for (int i = 0; i < sv.size(); ++i) {
      if (sv(i) > cut) ++out.rank;
      if (sv(i) <= 0) continue;
      const double ratio = sv(i) > cut ? sv(i) / cut : cut / sv(i);
      min_gap = std::min(min_gap, ratio);
      if (ratio < 10.0)
        throw NumericalError("ambiguous rank decision for " + what + ": singular value " + fmt(sv(i)) +
                             " within a factor 10 of the cut " + fmt(cut));
    }
  }
  out.range = svd.matrixU().leftCols(out.rank);
  out.null = svd.matrixV().rightCols(A.cols() - out.rank);
  return out;
}

/// S(6j + c, 3i + d) = (eps(phi_i e_d), phi_j E_c) for a vector basis with
/// gradients G at the element rule, against the big scalar basis.
MatX strain_matrix(const TetQuadrature& rule, const MatX& big_vals, const std::array<MatX, 3>& G) {
  const int nb = static_cast<int>(big_vals.cols()), n = static_cast<int>(G[0].cols());
  const int np = static_cast<int>(rule.size());
  MatX Wbig = big_vals;
  for (int p = 0; p < np; ++p) Wbig.row(p) *= rule.weights[p];
  std::array<MatX, 6> E;
  for (auto& m : E) m = MatX::Zero(np, 3 * n);
  for (int p = 0; p < np; ++p)
    for (int i = 0; i < n; ++i) {
      const Vec3 g(G[0](p, i), G[1](p, i), G[2](p, i));
      for (int d = 0; d < 3; ++d) {
        const Mat3 e = 0.5 * (Vec3::Unit(d) * g.transpose() + g * Vec3::Unit(d).transpose());
        const auto v = sym_to_vec(e);
        for (int c = 0; c < 6; ++c) E[c](p, 3 * i + d) = v(c);
      }
    }
  MatX S = MatX::Zero(6 * nb, 3 * n);
  for (int c = 0; c < 6; ++c) {
    const MatX Sc = Wbig.transpose() * E[c];
    for (int j = 0; j < nb; ++j) S.row(6 * j + c) = Sc.row(j);
  }
  return S;
}

/// Symmetric stress at tabulated point p from big coefficients.
Mat3 eval_big(const MatX& vals, int p, const VecX& c) {
  Eigen::Matrix<double, 6, 1> v = Eigen::Matrix<double, 6, 1>::Zero();
  for (int j = 0; j < vals.cols(); ++j) v += vals(p, j) * c.segment<6>(6 * j);
  return vec_to_sym(v);
}

Vec3 div_big_at(const std::array<MatX, 3>& G, int p, const VecX& c, int n) {
  Vec3 out = Vec3::Zero();
  for (int j = 0; j < n; ++j) {
    const Vec3 g(G[0](p, j), G[1](p, j), G[2](p, j));
    out += vec_to_sym(c.segment<6>(6 * j)) * g;
  }
  return out;
}

double relative(double num, std::initializer_list<double> scales) {
  double s = 0.0;
  for (double v : scales) s = std::max(s, v);
  if (num == 0.0) return 0.0;
  return num / std::max(s, 1e-300);
}

Mat3 random_rotation(std::mt19937& rng) {
  std::normal_distribution<double> nd;
  Eigen::Quaterniond q(nd(rng), nd(rng), nd(rng), nd(rng));
  q.normalize();
  return q.toRotationMatrix();
}

}  // namespace

// ---------------------------------------------------------------------------
// Data fields
// ---------------------------------------------------------------------------

SmoothPair smooth_pair(unsigned seed) {
  std::mt19937 rng(seed);
  std::uniform_real_distribution<double> amp(-1.0, 1.0), phase(0.0, 6.283185307179586), freq(-2.0, 2.0);
  struct Mode {
    Mat3 A;
    Vec3 w;
    double phi;
  };
  std::vector<Mode> sm, um;
  for (int m = 0; m < 3; ++m) {
    Mat3 A;
    for (int i = 0; i < 3; ++i)
      for (int j = 0; j < 3; ++j) A(i, j) = amp(rng);
    sm.push_back({sym_part(A), Vec3(freq(rng), freq(rng), freq(rng)), phase(rng)});
  }
  for (int m = 0; m < 3; ++m) {
    Mat3 A = Mat3::Zero();
    A.col(0) = Vec3(amp(rng), amp(rng), amp(rng));
    um.push_back({A, Vec3(freq(rng), freq(rng), freq(rng)), phase(rng)});
  }
  SmoothPair out;
  out.sigma = [sm](const Vec3& x) {
    Mat3 s = Mat3::Zero();
    for (const auto& m : sm) s += m.A * std::sin(m.w.dot(x) + m.phi);
    return s;
  };
  out.div_sigma = [sm](const Vec3& x) {
    Vec3 d = Vec3::Zero();
    for (const auto& m : sm) d += m.A * m.w * std::cos(m.w.dot(x) + m.phi);
    return d;
  };
  out.u = [um](const Vec3& x) {
    Vec3 u = Vec3::Zero();
    for (const auto& m : um) u += m.A.col(0) * std::cos(m.w.dot(x) + m.phi);
    return u;
  };
  return out;
}

SmoothPair polynomial_pair(int sigma_degree, int u_degree, unsigned seed) {
  if (sigma_degree < 0 || u_degree < 0) throw InvalidArgument("polynomial_pair: degrees must be >= 0");
  std::mt19937 rng(seed);
  std::uniform_real_distribution<double> amp(-1.0, 1.0);
  using Exp = std::array<int, 3>;
  auto exponents = [](int deg) {
    std::vector<Exp> e;
    for (int a = 0; a <= deg; ++a)
      for (int b = 0; a + b <= deg; ++b)
        for (int c = 0; a + b + c <= deg; ++c) e.push_back({a, b, c});
    return e;
  };
  auto mono = [](const Exp& e, const Vec3& x) { return std::pow(x(0), e[0]) * std::pow(x(1), e[1]) * std::pow(x(2), e[2]); };
  struct Term {
    Exp e;
    Mat3 A;
  };
  std::vector<Term> st, ut;
  for (const auto& e : exponents(sigma_degree)) {
    Mat3 A;
    for (int i = 0; i < 3; ++i)
      for (int j = 0; j < 3; ++j) A(i, j) = amp(rng);
    st.push_back({e, sym_part(A)});
  }
  for (const auto& e : exponents(u_degree)) {
    Mat3 A = Mat3::Zero();
    A.col(0) = Vec3(amp(rng), amp(rng), amp(rng));
    ut.push_back({e, A});
  }
  SmoothPair out;
  out.sigma = [st, mono](const Vec3& x) {
    Mat3 s = Mat3::Zero();
    for (const auto& t : st) s += t.A * mono(t.e, x);
    return s;
  };
  out.div_sigma = [st, mono](const Vec3& x) {
    Vec3 d = Vec3::Zero();
    for (const auto& t : st)
      for (int j = 0; j < 3; ++j) {
        if (t.e[j] == 0) continue;
        Exp e = t.e;
        --e[j];
        d += t.A.col(j) * (t.e[j] * mono(e, x));
      }
    return d;
  };
  out.u = [ut, mono](const Vec3& x) {
    Vec3 u = Vec3::Zero();
    for (const auto& t : ut) u += t.A.col(0) * mono(t.e, x);
    return u;
  };
  return out;
}

// ---------------------------------------------------------------------------
// Reference spaces
// ---------------------------------------------------------------------------

namespace {
int data_order(int k, int q) { return std::max(2 * (k + q) + 2, 20); }
}  // namespace

ReferenceSpaces::ReferenceSpaces(int k, int q)
    : k_(k), q_(q), faces_((k < 1 || q < 1) ? 0 : k, data_order(std::max(k, 0), std::max(q, 0))) {
  if (k < 1) throw InvalidArgument("reference spaces need k >= 1");
  if (q < 1) throw InvalidArgument("lifting degree offset q must be >= 1");
  const TetBasis& bk = tet_basis(k);
  const TetBasis& bk1 = tet_basis(k + 1);
  const TetBasis& bbig = tet_basis(big_degree());
  const TetBasis& blift = tet_basis(k + q);
  const int nk = bk.size(), nk1 = bk1.size(), nbs = bbig.size();
  const int nS = 6 * nk, nVp = 3 * nk1, nM = faces_.size(), fd = faces_.face_dofs();

  dims_.V_minus = 3 * poly_dim(3, k - 1);
  dims_.V = 3 * nk;
  dims_.V_plus = nVp;
  dims_.Sigma = nS;
  dims_.M = nM;
  dims_.V_minus_perp = dims_.V - dims_.V_minus;
  dims_.V_perp = nVp - dims_.V;

  elem_rule_ = quad_tet(data_order(k, q));
  big_vals_ = bbig.tabulate(elem_rule_.points);
  big_grads_ = bbig.tabulate_grad(elem_rule_.points);
  v1_vals_ = bk1.tabulate(elem_rule_.points);
  v1_grads_ = bk1.tabulate_grad(elem_rule_.points);
  for (int f = 0; f < 4; ++f) {
    big_face_vals_[f] = bbig.tabulate(faces_.points(f));
    v1_face_vals_[f] = bk1.tabulate(faces_.points(f));
  }
  const std::size_t np = elem_rule_.size();

  strain_plus_ = strain_matrix(elem_rule_, big_vals_, v1_grads_);
  strain_lift_ = strain_matrix(elem_rule_, big_vals_, blift.tabulate_grad(elem_rule_.points));

  // (div (phi_j E_c), phi1_i e_d) = sum_l E_c(d,l) (d_l phi_j, phi1_i)
  {
    MatX W1 = v1_vals_;
    for (std::size_t p = 0; p < np; ++p) W1.row(p) *= elem_rule_.weights[p];
    const auto& E = sym_basis();
    div_big_ = MatX::Zero(nVp, 6 * nbs);
    for (int l = 0; l < 3; ++l) {
      const MatX Ml = W1.transpose() * big_grads_[l];
      for (int i = 0; i < nk1; ++i)
        for (int j = 0; j < nbs; ++j)
          for (int c = 0; c < 6; ++c)
            for (int d = 0; d < 3; ++d) div_big_(3 * i + d, 6 * j + c) += E[c](d, l) * Ml(i, j);
    }
  }

  // <phi_j E_c n, psi_b e_d>
  traction_big_ = MatX::Zero(nM, 6 * nbs);
  {
    const auto& E = sym_basis();
    for (int f = 0; f < 4; ++f) {
      MatX Wf = faces_.psi(f);
      for (Eigen::Index p = 0; p < Wf.rows(); ++p) Wf.row(p) *= faces_.weights(f)[p];
      const MatX N = Wf.transpose() * big_face_vals_[f];
      const Vec3 n = faces_.frame(f).normal;
      for (int b = 0; b < faces_.face_functions(); ++b)
        for (int j = 0; j < nbs; ++j)
          for (int c = 0; c < 6; ++c) {
            const Vec3 t = E[c] * n;
            for (int d = 0; d < 3; ++d) traction_big_(f * fd + 3 * b + d, 6 * j + c) = N(b, j) * t(d);
          }
    }
  }

  trace_ = faces_.trace_matrix(bk1);
  const MatX trace_lift = faces_.trace_matrix(blift);

  // Rigid motions: translations and infinitesimal rotations.
  rigid_ = MatX::Zero(nVp, 6);
  for (int r = 0; r < 6; ++r) {
    auto fn = [r](const Vec3& x) -> Vec3 {
      if (r < 3) return Vec3::Unit(r);
      const Vec3 axis = Vec3::Unit(r - 3);
      return axis.cross(x);
    };
    rigid_.col(r) = l2_project_element(fn, k + 1, Rank::vector3).coeffs;
  }
  dims_.rigid = 6;
  checks_.rigid_strain = (strain_plus_ * rigid_).cwiseAbs().maxCoeff();

  double gap = std::numeric_limits<double>::infinity();

  const MatX D_minus = div_big_.topRows(dims_.V_minus).leftCols(nS);
  const MatX T_sigma = traction_big_.leftCols(nS);

  const Split S = rank_split(D_minus, gap, "div on Sigma");
  sigma_S_ = S.null;
  dims_.Sigma_S = static_cast<int>(sigma_S_.cols());

  MatX stacked(D_minus.rows() + nM, nS);
  stacked << D_minus, T_sigma;
  sigma_S0_ = rank_split(stacked, gap, "div-free zero-traction stresses").null;
  dims_.Sigma_S0 = static_cast<int>(sigma_S0_.cols());

  const MatX TS = T_sigma * sigma_S_;
  const MatX R = trace_ * rigid_;
  dims_.traction_S = rank_split(TS, gap, "tractions of Sigma_S").rank;

  MatX TR(nM, TS.cols() + R.cols());
  TR << TS, R;
  {
    Eigen::BDCSVD<MatX> svd(TR, Eigen::ComputeFullU);
    const Split sp = rank_split(TR, gap, "tractions of Sigma_S plus rigid traces");
    theta_ = svd.matrixU().rightCols(nM - sp.rank);
  }
  dims_.Theta = static_cast<int>(theta_.cols());
  {
    const double nts = TS.cols() ? TS.colwise().norm().maxCoeff() : 1.0;
    const double nr = R.colwise().norm().maxCoeff();
    checks_.orth_traction_rigid = TS.cols() ? (TS.transpose() * R).cwiseAbs().maxCoeff() / (nts * nr) : 0.0;
    checks_.orth_theta = dims_.Theta ? (theta_.transpose() * TR).cwiseAbs().maxCoeff() / std::max(nts, nr) : 0.0;
  }

  // Sigma_- = Sigma_S0 + eps(V).
  {
    const MatX epsV = strain_plus_.topRows(nS).leftCols(dims_.V);
    MatX A(nS, sigma_S0_.cols() + epsV.cols());
    A << sigma_S0_, epsV;
    sigma_minus_ = rank_split(A, gap, "Sigma_minus").range;
    dims_.Sigma_minus = static_cast<int>(sigma_minus_.cols());
  }

  // Galerkin lifting modulo rigid motions:
  // (eps(u), eps(v)) + <gamma m, gamma v> . l = <mu, gamma v>, <gamma u, gamma m_r> = 0.
  {
    const int nL = n_lift();
    const MatX Eg = strain_lift_.transpose() * strain_lift_;
    const MatX G = R.transpose() * trace_lift;  // 6 x nL
    MatX K = MatX::Zero(nL + 6, nL + 6);
    K.topLeftCorner(nL, nL) = Eg;
    K.topRightCorner(nL, 6) = G.transpose();
    K.bottomLeftCorner(6, nL) = G;
    MatX rhs = MatX::Zero(nL + 6, nM);
    rhs.topRows(nL) = trace_lift.transpose();
    Eigen::FullPivLU<MatX> lu(K);
    if (lu.rank() < K.rows()) throw NumericalError("lifting saddle system is singular");
    lift_ = lu.solve(rhs).topRows(nL);
  }
  fill_ = strain_lift_ * lift_ * theta_;
  for (int c = 0; c < fill_.cols(); ++c) {
    const VecX sc = fill_.col(c);
    r_trac_ = std::max(r_trac_, traction_residual(sc, theta_.col(c)));
    r_div_ = std::max(r_div_, div_norm(sc));
  }

  // Sigma_+ = Sigma + Sigma_fill inside the big space.
  const int nB = n_big();
  MatX plus = MatX::Zero(nB, nS + fill_.cols());
  plus.topLeftCorner(nS, nS).setIdentity();
  plus.rightCols(fill_.cols()) = fill_;
  const Split P = rank_split(plus, gap, "Sigma_plus");
  dims_.Sigma_plus = P.rank;

  MatX Em = MatX::Zero(nB, sigma_minus_.cols());
  Em.topRows(nS) = sigma_minus_;
  const MatX Qperp = P.range - Em * (Em.transpose() * P.range);
  sigma_minus_perp_ = rank_split(Qperp, gap, "Sigma_minus complement").range;
  dims_.Sigma_minus_perp = static_cast<int>(sigma_minus_perp_.cols());

  const MatX A1 = traction_big_ * sigma_minus_perp_;
  const MatX B1 = trace_.middleCols(dims_.V_minus, dims_.V_minus_perp);
  const double na = A1.cols() ? A1.colwise().norm().maxCoeff() : 1.0;
  const double nb1 = B1.cols() ? B1.colwise().norm().maxCoeff() : 1.0;
  checks_.orth_m_decomposition = (A1.cols() && B1.cols()) ? (A1.transpose() * B1).cwiseAbs().maxCoeff() / (na * nb1) : 0.0;
  MatX AB(nM, A1.cols() + B1.cols());
  AB << A1, B1;
  checks_.span_m_decomposition = rank_split(AB, gap, "traces of the M-decomposition").rank;
  checks_.min_gap = gap;
}

double ReferenceSpaces::traction_residual(const VecX& big_sigma, const VecX& mu) const {
  if (big_sigma.size() != n_big() || mu.size() != faces_.size()) throw InvalidArgument("traction_residual: size mismatch");
  const int fd = faces_.face_dofs();
  double s = 0.0;
  for (int f = 0; f < 4; ++f) {
    const Vec3 n = faces_.frame(f).normal;
    const MatX& psi = faces_.psi(f);
    for (int p = 0; p < psi.rows(); ++p) {
      Vec3 m = Vec3::Zero();
      for (int b = 0; b < psi.cols(); ++b) m += psi(p, b) * mu.segment<3>(f * fd + 3 * b);
      s += faces_.weights(f)[p] * (eval_big(big_face_vals_[f], p, big_sigma) * n - m).squaredNorm();
    }
  }
  return std::sqrt(s);
}

double ReferenceSpaces::div_norm(const VecX& big_sigma) const {
  if (big_sigma.size() != n_big()) throw InvalidArgument("div_norm: size mismatch");
  const int nbs = static_cast<int>(big_vals_.cols());
  double s = 0.0;
  for (std::size_t p = 0; p < elem_rule_.size(); ++p)
    s += elem_rule_.weights[p] * div_big_at(big_grads_, static_cast<int>(p), big_sigma, nbs).squaredNorm();
  return std::sqrt(s);
}

json ReferenceSpaces::report() const {
  const SpaceDims& d = dims_;
  json j;
  j["k"] = k_;
  j["q"] = q_;
  j["dims"] = {{"V_minus", d.V_minus},       {"V", d.V},
               {"V_plus", d.V_plus},         {"Sigma", d.Sigma},
               {"M", d.M},                   {"Sigma_S", d.Sigma_S},
               {"Sigma_S0", d.Sigma_S0},     {"traction_S", d.traction_S},
               {"rigid", d.rigid},           {"Theta", d.Theta},
               {"Sigma_plus", d.Sigma_plus}, {"Sigma_minus", d.Sigma_minus},
               {"Sigma_minus_perp", d.Sigma_minus_perp}, {"V_minus_perp", d.V_minus_perp},
               {"V_perp", d.V_perp}};
  j["identities"] = {
      {"M_eq_Theta_plus_tractions_plus_rigid",
       {{"lhs", d.M}, {"rhs", d.Theta + d.traction_S + d.rigid}, {"holds", d.M == d.Theta + d.traction_S + d.rigid}}},
      {"M_eq_Sigma_minus_perp_plus_V_minus_perp",
       {{"lhs", d.M}, {"rhs", d.Sigma_minus_perp + d.V_minus_perp}, {"holds", d.M == d.Sigma_minus_perp + d.V_minus_perp}}},
      {"Sigma_plus_full_rank",
       {{"lhs", d.Sigma_plus}, {"rhs", d.Sigma + d.Theta}, {"holds", d.Sigma_plus == d.Sigma + d.Theta}}}};
  j["checks"] = {{"rigid_strain", checks_.rigid_strain},
                 {"orth_traction_rigid", checks_.orth_traction_rigid},
                 {"orth_theta", checks_.orth_theta},
                 {"orth_m_decomposition", checks_.orth_m_decomposition},
                 {"span_m_decomposition", checks_.span_m_decomposition},
                 {"min_rank_gap", checks_.min_gap}};
  j["r_trac"] = r_trac_;
  j["r_div"] = r_div_;
  j["tol_proj"] = tol_proj();
  return j;
}

ReferenceSpaces build_spaces(int k, int q) {
  if (k < 1) throw InvalidArgument("reference spaces need k >= 1");
  if (q < 1) throw InvalidArgument("lifting degree offset q must be >= 1");
  ReferenceSpaces s(k, q);
  if (q < 2)
    throw NumericalError("q = 1 is too small: lifting residual r_trac = " + fmt(s.r_trac()) +
                         " and the lifted stresses cannot leave P_k; use q >= 2");
  if (!(s.r_trac() <= kMaxLiftingResidual))
    throw NumericalError("lifting residual r_trac = " + fmt(s.r_trac()) + " exceeds " + fmt(kMaxLiftingResidual) +
                         " for k = " + std::to_string(k) + ", q = " + std::to_string(q) + "; increase q");
  return s;
}

Lifting lift_traction(const ReferenceSpaces& s, const VecX& mu) {
  if (mu.size() != s.faces().size()) throw InvalidArgument("lift_traction: traction has wrong size");
  const MatX R = s.trace() * s.rigid();
  const VecX r = R.transpose() * mu;
  for (int i = 0; i < r.size(); ++i)
    if (std::abs(r(i)) > 1e-10 * R.col(i).norm() * std::max(mu.norm(), 1e-300) && std::abs(r(i)) > 1e-300)
      throw InvalidArgument("lift_traction: traction is not orthogonal to the rigid-motion traces");
  Lifting out;
  out.u = s.lift() * mu;
  out.sigma = s.strain_lift() * out.u;
  out.r_trac = s.traction_residual(out.sigma, mu);
  out.r_div = s.div_norm(out.sigma);
  return out;
}

// ---------------------------------------------------------------------------
// Extended and composite projections
// ---------------------------------------------------------------------------

Pi0Result solve_pi0(const ReferenceSpaces& s, const MatrixFn& sigma, const VectorFn& u, const FaceTau& tau) {
  for (int f = 0; f < 4; ++f) {
    const Mat3& t = tau[f];
    if (!t.allFinite()) throw InvalidArgument("tau is not finite on face " + std::to_string(f));
    if ((t - t.transpose()).norm() > 1e-12 * std::max(t.norm(), 1e-300))
      throw InvalidArgument("tau is not symmetric on face " + std::to_string(f));
    const Eigen::Vector3d ev = Eigen::SelfAdjointEigenSolver<Mat3>(t).eigenvalues();
    if (!(ev.minCoeff() > 0 || ev.maxCoeff() < 0))
      throw InvalidArgument("tau must be definite on face " + std::to_string(f) + " (eigenvalues " + fmt(ev(0)) + ", " +
                            fmt(ev(1)) + ", " + fmt(ev(2)) + ")");
  }
  const SpaceDims& d = s.dims();
  const int nS = d.Sigma, nT = d.Theta, nVp = d.V_plus, nM = d.M, nVm = d.V_minus, nV = d.V;
  const int nSm = d.Sigma_minus, nVperp = d.V_perp;
  const int nk = nS / 6, nk1 = nVp / 3;
  const int fd = s.faces().face_dofs();
  const auto& rule = s.element_rule();
  const std::size_t np = rule.size();

  // Data moments.
  VecX Ps = VecX::Zero(nS), Pu = VecX::Zero(nVp), Dw = VecX::Zero(nVp);
  const MatX& bv = s.big_values();
  const MatX& v1 = s.vplus_values();
  const auto& g1 = s.vplus_gradients();
  for (std::size_t p = 0; p < np; ++p) {
    const Mat3 sp = sigma(rule.points[p]);
    const Vec3 up = u(rule.points[p]);
    const auto sv = sym_to_vec(sp);
    const double w = rule.weights[p];
    for (int j = 0; j < nk; ++j) Ps.segment<6>(6 * j) += w * bv(p, j) * sv;
    for (int i = 0; i < nk1; ++i) {
      Pu.segment<3>(3 * i) += w * v1(p, i) * up;
      const Vec3 g(g1[0](p, i), g1[1](p, i), g1[2](p, i));
      Dw.segment<3>(3 * i) -= w * (sp * g);
    }
  }
  VecX Tn = VecX::Zero(nM), PMu = VecX::Zero(nM);
  for (int f = 0; f < 4; ++f) {
    const Vec3 n = s.faces().frame(f).normal;
    const MatX& psi = s.faces().psi(f);
    const MatX& v1f = s.vplus_face_values(f);
    const auto& pts = s.faces().points(f);
    for (std::size_t p = 0; p < pts.size(); ++p) {
      const Vec3 tn = sigma(pts[p]) * n;
      const Vec3 up = u(pts[p]);
      const double w = s.faces().weights(f)[p];
      for (int b = 0; b < psi.cols(); ++b) {
        Tn.segment<3>(f * fd + 3 * b) += w * psi(p, b) * tn;
        PMu.segment<3>(f * fd + 3 * b) += w * psi(p, b) * up;
      }
      for (int i = 0; i < nk1; ++i) Dw.segment<3>(3 * i) += w * v1f(p, i) * tn;
    }
  }

  MatX tauM = MatX::Zero(nM, nM);
  for (int f = 0; f < 4; ++f)
    for (int b = 0; b < fd / 3; ++b) tauM.block<3, 3>(f * fd + 3 * b, f * fd + 3 * b) = tau[f];

  const MatX fill_top = s.fill().topRows(nS);
  const MatX Tsig = s.traction_big().leftCols(nS);
  const MatX Tfill = s.traction_big() * s.fill();
  const MatX Dsig = s.div_big().leftCols(nS);
  const MatX Dfill = s.div_big() * s.fill();
  const MatX& tr = s.trace();
  const MatX tr_perp = tr.rightCols(nVperp);

  const int n = nS + nT + nVp;
  MatX A = MatX::Zero(n, n);
  VecX rhs = VecX::Zero(n);
  std::array<int, 5> row{0, nVm, nVm + nSm, nVm + nSm + nM, nVm + nSm + nM + nVperp};
  if (row[4] != n)
    throw NumericalError("projection system is not square: " + std::to_string(row[4]) + " equations for " +
                         std::to_string(n) + " unknowns");
  // (u_K - u, v), v in V-
  A.block(row[0], nS + nT, nVm, nVm).setIdentity();
  rhs.segment(row[0], nVm) = Pu.head(nVm);
  // (sigma_K - sigma, theta), theta in Sigma-
  const MatX& Sm = s.sigma_minus();
  A.block(row[1], 0, nSm, nS) = Sm.transpose();
  A.block(row[1], nS, nSm, nT) = Sm.transpose() * fill_top;
  rhs.segment(row[1], nSm) = Sm.transpose() * Ps;
  // <gamma_n(sigma_K - sigma) - tau P_M gamma(u_K - u), mu>
  A.block(row[2], 0, nM, nS) = Tsig;
  A.block(row[2], nS, nM, nT) = Tfill;
  A.block(row[2], nS + nT, nM, nVp) = -tauM * tr;
  rhs.segment(row[2], nM) = Tn - tauM * PMu;
  // -(div(sigma_K - sigma), w) + <tau P_M gamma(u_K - u), gamma w>, w in V^perp
  A.block(row[3], 0, nVperp, nS) = -Dsig.bottomRows(nVperp);
  A.block(row[3], nS, nVperp, nT) = -Dfill.bottomRows(nVperp);
  A.block(row[3], nS + nT, nVperp, nVp) = tr_perp.transpose() * tauM * tr;
  rhs.segment(row[3], nVperp) = -Dw.tail(nVperp) + tr_perp.transpose() * tauM * PMu;
  (void)nV;

  Eigen::PartialPivLU<MatX> lu(A);
  Pi0Result out;
  out.system_size = n;
  out.rcond = lu.rcond();
  if (!(out.rcond > std::numeric_limits<double>::epsilon()))
    throw NumericalError("projection system is singular (rcond " + fmt(out.rcond) + ")");
  if (out.rcond < kPi0ConditionWarning) out.warnings.push_back("projection system is ill-conditioned (rcond " + fmt(out.rcond) + ")");
  const VecX x = lu.solve(rhs);
  const VecX cS = x.head(nS);
  out.theta = x.segment(nS, nT);
  out.u = x.tail(nVp);
  out.sigma = s.fill() * out.theta;
  out.sigma.head(nS) += cS;
  const VecX res = A * x - rhs;
  for (int g = 0; g < 4; ++g) {
    const int len = row[g + 1] - row[g];
    const double scale = std::max(rhs.segment(row[g], len).norm(), (A.middleRows(row[g], len) * x).norm());
    out.residuals[g] = relative(res.segment(row[g], len).norm(), {scale});
  }
  return out;
}

ProjectionResult project(const ReferenceSpaces& s, const MatrixFn& sigma, const VectorFn& u, const FaceTau& tau) {
  ProjectionResult out;
  out.pi0 = solve_pi0(s, sigma, u, tau);
  const int nS = s.dims().Sigma;
  out.sigma_ext = out.pi0.sigma;
  out.sigma_c = out.sigma_ext.head(nS);
  out.u = out.pi0.u;
  out.tau = tau;
  out.rest = out.sigma_ext;
  out.rest.head(nS).setZero();
  out.delta = s.traction_big() * out.rest;
  const double full = s.traction_residual(out.rest, VecX::Zero(s.dims().M));
  const double outside = s.traction_residual(out.rest, out.delta);
  out.delta_outside_M = relative(outside, {full});
  return out;
}

// ---------------------------------------------------------------------------
// Physical element
// ---------------------------------------------------------------------------

PhysicalProjection::PhysicalProjection(const ReferenceSpaces& s, TetGeometry K, FaceTau tau, ProjectionResult ref)
    : s_(&s), K_(std::move(K)), tau_(tau), ref_(std::move(ref)) {
  const TetGeometry R = TetGeometry::reference();
  for (int f = 0; f < 4; ++f) ratio_[f] = K_.face(f).area / R.face(f).area;
}

Mat3 PhysicalProjection::sigma(const Vec3& x) const {
  const Vec3 xh = K_.to_reference(x);
  const VecX phi = tet_basis(s_->k()).eval(xh);
  Eigen::Matrix<double, 6, 1> v = Eigen::Matrix<double, 6, 1>::Zero();
  for (int j = 0; j < phi.size(); ++j) v += phi(j) * ref_.sigma_c.segment<6>(6 * j);
  return K_.B() * vec_to_sym(v) * K_.B().transpose() / std::abs(K_.J());
}

Vec3 PhysicalProjection::div_sigma(const Vec3& x) const {
  const Vec3 xh = K_.to_reference(x);
  const auto g = tet_basis(s_->k()).grad(xh);
  Vec3 d = Vec3::Zero();
  for (int j = 0; j < g.rows(); ++j) d += vec_to_sym(ref_.sigma_c.segment<6>(6 * j)) * g.row(j).transpose();
  return K_.B() * d / std::abs(K_.J());
}

Vec3 PhysicalProjection::u(const Vec3& x) const {
  const Vec3 xh = K_.to_reference(x);
  const VecX phi = tet_basis(s_->k() + 1).eval(xh);
  Vec3 v = Vec3::Zero();
  for (int i = 0; i < phi.size(); ++i) v += phi(i) * ref_.u.segment<3>(3 * i);
  return K_.B_inv().transpose() * v;
}

Vec3 PhysicalProjection::delta(int f, const Vec3& x) const {
  if (f < 0 || f > 3) throw InvalidArgument("face index out of range");
  const VecX phi = tet_basis(s_->big_degree()).eval(K_.to_reference(x));
  Eigen::Matrix<double, 6, 1> v = Eigen::Matrix<double, 6, 1>::Zero();
  for (int j = 0; j < phi.size(); ++j) v += phi(j) * ref_.rest.segment<6>(6 * j);
  return K_.B() * (vec_to_sym(v) * s_->faces().frame(f).normal) / ratio_[f];
}

double PhysicalProjection::delta_norm() const {
  double sum = 0.0;
  for (int f = 0; f < 4; ++f) {
    const MatX& vals = s_->big_face_values(f);
    const Vec3 n = s_->faces().frame(f).normal;
    for (int p = 0; p < vals.rows(); ++p) {
      const Vec3 dh = eval_big(vals, p, ref_.rest) * n;
      sum += s_->faces().weights(f)[p] * ratio_[f] * (K_.B() * dh / ratio_[f]).squaredNorm();
    }
  }
  return std::sqrt(sum);
}

SmoothPair pull_back(const TetGeometry& K, const SmoothPair& data) {
  const Mat3 B = K.B(), Bi = K.B_inv();
  const double J = std::abs(K.J());
  SmoothPair out;
  out.sigma = [=](const Vec3& xh) { return Mat3(J * Bi * data.sigma(K.to_physical(xh)) * Bi.transpose()); };
  out.div_sigma = [=](const Vec3& xh) { return Vec3(J * Bi * data.div_sigma(K.to_physical(xh))); };
  out.u = [=](const Vec3& xh) { return Vec3(B.transpose() * data.u(K.to_physical(xh))); };
  return out;
}

FaceTau pull_back_tau(const TetGeometry& K, const FaceTau& tau) {
  const TetGeometry R = TetGeometry::reference();
  FaceTau out;
  for (int f = 0; f < 4; ++f) {
    const double a = K.face(f).area / R.face(f).area;
    out[f] = a * K.B_inv() * tau[f] * K.B_inv().transpose();
  }
  return out;
}

PhysicalProjection push_forward_project(const ReferenceSpaces& s, const TetGeometry& K, const MatrixFn& sigma,
                                        const VectorFn& u, const FaceTau& tau, int element_id) {
  const double scale = std::pow(K.diameter(), 3);
  if (!(std::abs(K.J()) > 1e-12 * scale))
    throw NumericalError("degenerate element" + (element_id >= 0 ? " " + std::to_string(element_id) : std::string()) +
                         " (|J| = " + fmt(std::abs(K.J())) + ")");
  SmoothPair data{sigma, [](const Vec3&) { return Vec3::Zero(); }, u};
  const SmoothPair hat = pull_back(K, data);
  return PhysicalProjection(s, K, tau, project(s, hat.sigma, hat.u, pull_back_tau(K, tau)));
}

ConditionResiduals check_conditions(const ReferenceSpaces& s, const PhysicalProjection& p, const SmoothPair& data) {
  const TetGeometry& K = p.geometry();
  const int k = s.k();
  const int nVm = poly_dim(3, k - 1), nk1 = poly_dim(3, k + 1), fd = s.faces().face_dofs(), nb = fd / 3;
  const double J = std::abs(K.J());
  const auto& rule = s.element_rule();
  const MatX& v1 = s.vplus_values();

  VecX Ra = VecX::Zero(3 * nVm), Sa = Ra;
  VecX Tb1 = VecX::Zero(3 * nk1), Tb2 = Tb1, Tb3 = Tb1, Sb = Tb1;
  Eigen::Matrix<double, 6, 1> Rm = Eigen::Matrix<double, 6, 1>::Zero(), Sm = Rm;
  for (std::size_t q = 0; q < rule.size(); ++q) {
    const Vec3 x = K.to_physical(rule.points[q]);
    const double w = rule.weights[q] * J;
    const Vec3 eu = p.u(x) - data.u(x);
    const Vec3 ud = data.u(x);
    const Vec3 ed = p.div_sigma(x) - data.div_sigma(x);
    const Vec3 dd = data.div_sigma(x);
    const Mat3 sd = data.sigma(x);
    for (int i = 0; i < nVm; ++i) {
      Ra.segment<3>(3 * i) += w * v1(q, i) * eu;
      Sa.segment<3>(3 * i) += w * v1(q, i) * ud;
    }
    for (int i = 0; i < nk1; ++i) {
      Tb1.segment<3>(3 * i) -= w * v1(q, i) * ed;
      Sb.segment<3>(3 * i) += w * v1(q, i) * dd;
    }
    Rm += w * sym_to_vec(p.sigma(x) - sd);
    Sm += w * sym_to_vec(sd);
  }

  VecX Tc1 = VecX::Zero(s.faces().size()), Tc3 = Tc1, Sc = Tc1;
  for (int f = 0; f < 4; ++f) {
    const Vec3 n = K.face(f).normal;
    const double a = p.face_ratio(f);
    const MatX& psi = s.faces().psi(f);
    const MatX& v1f = s.vplus_face_values(f);
    const auto& pts = s.faces().points(f);
    const auto& wts = s.faces().weights(f);
    const Mat3& tau = p.tau()[f];
    std::vector<Vec3> x(pts.size()), g(pts.size());
    VecX c = VecX::Zero(fd);
    for (std::size_t q = 0; q < pts.size(); ++q) {
      x[q] = K.to_physical(pts[q]);
      g[q] = p.u(x[q]) - data.u(x[q]);
      for (int b = 0; b < nb; ++b) c.segment<3>(3 * b) += wts[q] * psi(q, b) * g[q];
    }
    for (std::size_t q = 0; q < pts.size(); ++q) {
      const double w = wts[q] * a;
      Vec3 pm = Vec3::Zero();
      for (int b = 0; b < nb; ++b) pm += psi(q, b) * c.segment<3>(3 * b);
      const Vec3 dl = p.delta(f, x[q]);
      const Mat3 sd = data.sigma(x[q]);
      const Vec3 tr = (p.sigma(x[q]) - sd) * n - tau * g[q];
      const Vec3 scale = sd * n + tau * data.u(x[q]);
      for (int i = 0; i < nk1; ++i) {
        Tb2.segment<3>(3 * i) += w * v1f(q, i) * (tau * pm);
        Tb3.segment<3>(3 * i) += w * v1f(q, i) * dl;
      }
      for (int b = 0; b < nb; ++b) {
        Tc1.segment<3>(f * fd + 3 * b) -= w * psi(q, b) * tr;
        Tc3.segment<3>(f * fd + 3 * b) += w * psi(q, b) * dl;
        Sc.segment<3>(f * fd + 3 * b) += w * psi(q, b) * scale;
      }
    }
  }

  ConditionResiduals r;
  r.a = relative(Ra.norm(), {Sa.norm()});
  r.b = relative((Tb1 + Tb2 - Tb3).norm(), {Tb1.norm(), Tb2.norm(), Tb3.norm(), Sb.norm()});
  r.c = relative((Tc1 - Tc3).norm(), {Tc1.norm(), Tc3.norm(), Sc.norm()});
  r.mean = relative(Rm.norm(), {Sm.norm()});
  return r;
}

double adjoint_flip_residual(const ReferenceSpaces& s, const MatrixFn& sigma, const VectorFn& u, const FaceTau& tau) {
  const VectorFn neg = [u](const Vec3& x) { return Vec3(-u(x)); };
  FaceTau ntau;
  for (int f = 0; f < 4; ++f) ntau[f] = -tau[f];
  const ProjectionResult p1 = project(s, sigma, neg, tau);
  const ProjectionResult p2 = project(s, sigma, u, ntau);
  const double diff = std::max({(p1.sigma_c - p2.sigma_c).norm(), (p1.u + p2.u).norm(), (p1.rest - p2.rest).norm()});
  return relative(diff, {p1.sigma_c.norm(), p1.u.norm(), p1.rest.norm()});
}

ScalingStudy remainder_scaling(const ReferenceSpaces& s, const SmoothPair& data, const std::vector<double>& hs) {
  if (hs.size() < 2) throw InvalidArgument("remainder_scaling needs at least two sizes");
  ScalingStudy out;
  for (double h : hs) {
    if (!(h > 0)) throw InvalidArgument("element sizes must be positive");
    const TetGeometry K({Vec3::Zero(), Vec3(h, 0, 0), Vec3(0, h, 0), Vec3(0, 0, h)});
    FaceTau tau;
    for (auto& t : tau) t = Mat3::Identity() / h;
    const PhysicalProjection p = push_forward_project(s, K, data.sigma, data.u, tau);
    out.h.push_back(h);
    out.delta.push_back(p.delta_norm());
  }
  const int n = static_cast<int>(hs.size());
  double mx = 0, my = 0;
  for (int i = 0; i < n; ++i) {
    mx += std::log(out.h[i]) / n;
    my += std::log(out.delta[i]) / n;
  }
  double sxy = 0, sxx = 0;
  for (int i = 0; i < n; ++i) {
    const double dx = std::log(out.h[i]) - mx;
    sxy += dx * (std::log(out.delta[i]) - my);
    sxx += dx * dx;
  }
  out.slope = sxx > 0 ? sxy / sxx : std::numeric_limits<double>::quiet_NaN();
  return out;
}

// ---------------------------------------------------------------------------
// Random inputs and verification
// ---------------------------------------------------------------------------

TetGeometry random_shape_regular_tet(std::mt19937& rng, double size) {
  if (!(size > 0)) throw InvalidArgument("tetrahedron size must be positive");
  std::uniform_real_distribution<double> pert(-0.25, 0.25), scale(0.8, 1.2), shift(-1.0, 1.0);
  const std::array<Vec3, 4> regular{Vec3(1, 1, 1), Vec3(1, -1, -1), Vec3(-1, 1, -1), Vec3(-1, -1, 1)};
  for (int attempt = 0; attempt < 100; ++attempt) {
    const Mat3 Q = random_rotation(rng);
    std::array<Vec3, 4> v;
    for (int i = 0; i < 4; ++i) v[i] = Q * (regular[i] + Vec3(pert(rng), pert(rng), pert(rng)));
    const Vec3 c = Vec3(shift(rng), shift(rng), shift(rng));
    const double diam = TetGeometry(v).diameter();
    const double target = size * scale(rng);
    for (auto& x : v) x = x * (target / diam) + c * size;
    if ((v[1] - v[0]).cross(v[2] - v[0]).dot(v[3] - v[0]) < 0) std::swap(v[2], v[3]);
    TetGeometry K(v);
    if (K.inradius() / K.diameter() > 0.08) return K;
  }
  throw NumericalError("could not draw a shape-regular tetrahedron");
}

FaceTau random_tau(std::mt19937& rng, double lo, double hi, double h) {
  if (!(lo > 0 && hi >= lo && h > 0)) throw InvalidArgument("random_tau needs 0 < lo <= hi and h > 0");
  std::uniform_real_distribution<double> ev(lo, hi);
  FaceTau out;
  for (auto& t : out) {
    const Mat3 Q = random_rotation(rng);
    const Vec3 d(ev(rng), ev(rng), ev(rng));
    t = Q * d.asDiagonal() * Q.transpose() / h;
    t = sym_part(t);
  }
  return out;
}

VerificationReport verify_projection(int k, int q, int trials, unsigned seed, int tets) {
  if (trials < 1 || tets < 1) throw InvalidArgument("verify_projection needs trials >= 1 and tets >= 1");
  const ReferenceSpaces s = build_spaces(k, q);
  VerificationReport out;
  json& j = out.json;
  j = s.report();
  j["seed"] = seed;
  j["trials"] = trials;
  j["tets"] = tets;
  const double tol = s.tol_proj();
  bool ok = true;
  for (const auto& [name, id] : j["identities"].items()) ok = ok && id["holds"].get<bool>();

  std::mt19937 rng(seed);
  ConditionResiduals worst;
  double worst_flip = 0.0, worst_eq = 0.0, min_rcond = 1.0, worst_outside = 0.0;
  json per_tet = json::array();
  for (int t = 0; t < tets; ++t) {
    const TetGeometry K = random_shape_regular_tet(rng, 1.0);
    const FaceTau tau = random_tau(rng, 0.5, 2.0, K.diameter());
    ConditionResiduals tw;
    double tflip = 0.0;
    for (int i = 0; i < trials; ++i) {
      const SmoothPair data = smooth_pair(static_cast<unsigned>(rng()));
      const PhysicalProjection p = push_forward_project(s, K, data.sigma, data.u, tau, t);
      const ConditionResiduals r = check_conditions(s, p, data);
      tw.a = std::max(tw.a, r.a);
      tw.b = std::max(tw.b, r.b);
      tw.c = std::max(tw.c, r.c);
      tw.mean = std::max(tw.mean, r.mean);
      for (double e : p.reference().pi0.residuals) worst_eq = std::max(worst_eq, e);
      min_rcond = std::min(min_rcond, p.reference().pi0.rcond);
      worst_outside = std::max(worst_outside, p.reference().delta_outside_M);
      const SmoothPair hat = pull_back(K, data);
      tflip = std::max(tflip, adjoint_flip_residual(s, hat.sigma, hat.u, pull_back_tau(K, tau)));
    }
    per_tet.push_back({{"diameter", K.diameter()},
                       {"shape", K.inradius() / K.diameter()},
                       {"a", tw.a},
                       {"b", tw.b},
                       {"c", tw.c},
                       {"mean", tw.mean},
                       {"flip", tflip}});
    worst.a = std::max(worst.a, tw.a);
    worst.b = std::max(worst.b, tw.b);
    worst.c = std::max(worst.c, tw.c);
    worst.mean = std::max(worst.mean, tw.mean);
    worst_flip = std::max(worst_flip, tflip);
  }
  j["elements"] = per_tet;
  j["max_residuals"] = {{"a", worst.a}, {"b", worst.b}, {"c", worst.c}, {"mean", worst.mean}, {"flip", worst_flip},
                        {"system", worst_eq}};
  j["min_rcond"] = min_rcond;
  const ScalingStudy sc = remainder_scaling(s, smooth_pair(seed));
  j["scaling"] = {{"h", sc.h}, {"delta", sc.delta}, {"slope", sc.slope}};
  j["max_delta_outside_M"] = worst_outside;
  j["strict_tolerance"] = 1e-8;
  j["passed_strict"] = ok && worst.max() < 1e-8 && worst_flip < 1e-8;
  ok = ok && worst.max() < tol && worst_flip < tol;
  j["passed"] = ok;
  out.passed = ok;
  return out;
}

}  // namespace hdgplus

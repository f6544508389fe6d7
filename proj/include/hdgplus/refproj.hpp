#pragma once

/// Reference-element spaces of the HDG+ elasticity projection: the
/// M-decomposition pieces (divergence-free stresses, rigid motions, the
/// traction complement Theta and its lifted stresses Sigma_fill), the
/// extended projection Pi0 onto (Sigma + Sigma_fill) x P_{k+1}, the composite
/// projection with its boundary remainder, and the push-forward to a
/// physical tetrahedron.
///
/// Coefficients refer to the orthonormal bases of polyspaces: Sigma = P_k
/// symmetric (function-major, 6 per scalar), V+ = P_{k+1} vector (3 per
/// scalar; its prefixes are V- = P_{k-1} and V = P_k), M = R_k on the faces
/// (FaceSystem layout). Lifted stresses live in P_{k+q-1} symmetric, whose
/// first dim(Sigma) coefficients are Sigma.

#include "hdgplus/common.hpp"
#include "hdgplus/geometry.hpp"
#include "hdgplus/hdgcore.hpp"
#include "hdgplus/polyspaces.hpp"

#include <json.hpp>

#include <array>
#include <random>
#include <string>
#include <vector>

namespace hdgplus {

/// Singular values below kRankCut * s_max count as zero.
inline constexpr double kRankCut = 1e-10;
/// Largest traction residual of the lifted basis accepted by build_spaces.
/// The exact lifting of a piecewise traction is singular along the edges, so
/// the L2 traction residual of the polynomial lifting decays slowly in q.
inline constexpr double kMaxLiftingResidual = 3.0;

using FaceTau = std::array<Mat3, 4>;

/// Stress/displacement data with the stress divergence in closed form.
struct SmoothPair {
  MatrixFn sigma;
  VectorFn div_sigma;
  VectorFn u;
};

/// Random trigonometric fields (non-polynomial), amplitude O(1).
SmoothPair smooth_pair(unsigned seed);
/// Random polynomial fields: sigma in P_sigma_degree, u in P_u_degree.
SmoothPair polynomial_pair(int sigma_degree, int u_degree, unsigned seed);

struct SpaceDims {
  int V_minus = 0, V = 0, V_plus = 0, Sigma = 0, M = 0;
  int Sigma_S = 0;        // div-free
  int Sigma_S0 = 0;       // div-free with zero normal traction
  int traction_S = 0;     // dim of the normal traces of Sigma_S
  int rigid = 0;
  int Theta = 0;
  int Sigma_plus = 0;     // numerical rank of [Sigma | Sigma_fill]
  int Sigma_minus = 0;
  int Sigma_minus_perp = 0;
  int V_minus_perp = 0;
  int V_perp = 0;         // complement of V in V+
};

/**
 * @brief Spaces and operators on the reference tetrahedron for degree k.
 *
 * Sigma_fill is approximated by Galerkin lifting in P_{k+q}(R^3) modulo
 * rigid motions; r_trac and r_div measure how far the lifted stresses are
 * from having exactly the prescribed traction and zero divergence.
 */
class ReferenceSpaces {
 public:
  ReferenceSpaces(int k, int q);

  int k() const { return k_; }
  int q() const { return q_; }
  /// Degree of the symmetric polynomial space holding the lifted stresses.
  int big_degree() const { return k_ + q_ - 1; }
  int n_big() const { return 6 * poly_dim(3, big_degree()); }
  int n_lift() const { return 3 * poly_dim(3, k_ + q_); }
  const SpaceDims& dims() const { return dims_; }
  const FaceSystem& faces() const { return faces_; }

  // Bases as coefficient columns.
  const MatX& rigid() const { return rigid_; }               // V+ coefficients
  const MatX& sigma_S() const { return sigma_S_; }           // Sigma coefficients
  const MatX& sigma_S0() const { return sigma_S0_; }
  const MatX& sigma_minus() const { return sigma_minus_; }   // orthonormal
  const MatX& theta() const { return theta_; }               // M coefficients, orthonormal
  const MatX& fill() const { return fill_; }                 // big coefficients
  const MatX& sigma_minus_perp() const { return sigma_minus_perp_; }  // big coefficients

  // Operators.
  const MatX& traction_big() const { return traction_big_; }  // M x big: P_M of sigma n
  const MatX& div_big() const { return div_big_; }            // V+ x big: (div sigma, w)
  const MatX& strain_plus() const { return strain_plus_; }    // big x V+: eps(w)
  const MatX& trace() const { return trace_; }                // M x V+: P_M of the trace
  const MatX& lift() const { return lift_; }                  // lift x M: Galerkin lifting
  const MatX& strain_lift() const { return strain_lift_; }    // big x lift

  // Tabulations at the element rule and the face rule of faces().
  const TetQuadrature& element_rule() const { return elem_rule_; }
  const MatX& big_values() const { return big_vals_; }
  const std::array<MatX, 3>& big_gradients() const { return big_grads_; }
  const MatX& big_face_values(int f) const { return big_face_vals_[f]; }
  const MatX& vplus_values() const { return v1_vals_; }
  const std::array<MatX, 3>& vplus_gradients() const { return v1_grads_; }
  const MatX& vplus_face_values(int f) const { return v1_face_vals_[f]; }

  /// || sigma n - mu ||_{dK} for a big stress and mu in M.
  double traction_residual(const VecX& big_sigma, const VecX& mu) const;
  /// || div sigma ||_K for a big stress.
  double div_norm(const VecX& big_sigma) const;

  /// Max over the Theta basis of the lifting residuals (unit traction).
  double r_trac() const { return r_trac_; }
  double r_div() const { return r_div_; }
  /// max(1e-8, 50 r_trac)
  double tol_proj() const { return std::max(1e-8, 50.0 * r_trac_); }

  /// Dimensions, identities and residuals as JSON.
  nlohmann::json report() const;

  struct Checks {
    double rigid_strain = 0;          // max |eps(m)|
    double orth_traction_rigid = 0;   // traces of Sigma_S vs traces of rigid motions
    double orth_theta = 0;            // Theta vs both
    double orth_m_decomposition = 0;  // traces of Sigma_-^perp vs V_-^perp
    int span_m_decomposition = 0;     // rank of their union
    double min_gap = 0;               // smallest ratio to the cut over all rank decisions
  };
  const Checks& checks() const { return checks_; }

 private:
  int k_, q_;
  FaceSystem faces_;
  SpaceDims dims_;
  Checks checks_;
  MatX rigid_, sigma_S_, sigma_S0_, sigma_minus_, theta_, fill_, sigma_minus_perp_;
  MatX traction_big_, div_big_, strain_plus_, trace_, lift_, strain_lift_;
  double r_trac_ = 0, r_div_ = 0;
  // Tabulations for residuals.
  TetQuadrature elem_rule_;
  MatX big_vals_;                      // element points x big scalar basis
  std::array<MatX, 3> big_grads_;
  std::array<MatX, 4> big_face_vals_;  // face points x big scalar basis
  MatX v1_vals_;
  std::array<MatX, 3> v1_grads_;
  std::array<MatX, 4> v1_face_vals_;
};

/// Builds the spaces; throws if q < 2, a rank decision is ambiguous or the
/// lifting residual exceeds kMaxLiftingResidual.
ReferenceSpaces build_spaces(int k, int q = 4);

struct Lifting {
  VecX u;      // P_{k+q} vector coefficients
  VecX sigma;  // eps(u), big coefficients
  double r_div = 0, r_trac = 0;
};

/// Galerkin lifting of a traction mu in M orthogonal to rigid-motion traces.
Lifting lift_traction(const ReferenceSpaces& s, const VecX& mu);

struct Pi0Result {
  VecX sigma;  // big coefficients of the extended stress
  VecX theta;  // its Sigma_fill coordinates (per Theta column)
  VecX u;      // V+ coefficients
  int system_size = 0;
  double rcond = 0;
  std::array<double, 4> residuals{};  // V-, Sigma-, M, V^perp equation groups
  std::vector<std::string> warnings;
};

/// Reciprocal condition below which solve_pi0 warns.
inline constexpr double kPi0ConditionWarning = 1e-12;

/// Extended projection on the reference element. tau must be definite
/// (all positive or all negative eigenvalues) on each face.
Pi0Result solve_pi0(const ReferenceSpaces& s, const MatrixFn& sigma, const VectorFn& u, const FaceTau& tau);

/// The remainder is the normal trace of sigma_ext - sigma_c. It lies in M when
/// the lifting is exact; delta holds its M part and delta_outside_M the
/// relative size of the rest.
struct ProjectionResult {
  VecX sigma_c;    // Sigma coefficients
  VecX u;          // V+ coefficients
  VecX delta;      // M coefficients of P_M of the remainder
  VecX rest;       // big coefficients of sigma_ext - sigma_c
  double delta_outside_M = 0.0;
  VecX sigma_ext;  // big coefficients of the extended stress
  FaceTau tau;
  Pi0Result pi0;
};

ProjectionResult project(const ReferenceSpaces& s, const MatrixFn& sigma, const VectorFn& u, const FaceTau& tau);

/**
 * @brief Projection on a physical tetrahedron by pull-back to the reference
 * element and push-forward of the results.
 */
class PhysicalProjection {
 public:
  PhysicalProjection(const ReferenceSpaces& s, TetGeometry K, FaceTau tau, ProjectionResult ref);

  const TetGeometry& geometry() const { return K_; }
  const FaceTau& tau() const { return tau_; }
  const ProjectionResult& reference() const { return ref_; }
  /// |a| on each face: physical over reference area.
  double face_ratio(int f) const { return ratio_[f]; }

  Mat3 sigma(const Vec3& x) const;
  Vec3 div_sigma(const Vec3& x) const;
  Vec3 u(const Vec3& x) const;
  /// Remainder (sigma_ext - sigma_c) n on face f at a physical point of that face.
  Vec3 delta(int f, const Vec3& x) const;
  double delta_norm() const;

 private:
  const ReferenceSpaces* s_;
  TetGeometry K_;
  FaceTau tau_;
  ProjectionResult ref_;
  std::array<double, 4> ratio_{};
};

/// Reference data of (sigma, u) on K: |J| B^-1 sigma B^-T, B^T u, and the
/// matching divergence |J| B^-1 div sigma.
SmoothPair pull_back(const TetGeometry& K, const SmoothPair& data);

/// |a| B^-1 tau B^-T per face.
FaceTau pull_back_tau(const TetGeometry& K, const FaceTau& tau);

PhysicalProjection push_forward_project(const ReferenceSpaces& s, const TetGeometry& K, const MatrixFn& sigma,
                                        const VectorFn& u, const FaceTau& tau, int element_id = -1);

/// Relative residuals of the defining conditions on K, evaluated with
/// physical quadrature: (u_K - u) against P_{k-1}; the divergence equation
/// against P_{k+1}; the traction equation against R_k; the elementwise mean.
struct ConditionResiduals {
  double a = 0, b = 0, c = 0, mean = 0;
  double max() const { return std::max({a, b, c, mean}); }
};

ConditionResiduals check_conditions(const ReferenceSpaces& s, const PhysicalProjection& p, const SmoothPair& data);

/// Difference between Pi(sigma, -u; tau) with negated displacement and
/// Pi(sigma, u; -tau), including the remainders, relative to their size.
double adjoint_flip_residual(const ReferenceSpaces& s, const MatrixFn& sigma, const VectorFn& u, const FaceTau& tau);

/// Remainder norms ||delta||_dK on K_h = h K^ with tau = I / h and the least
/// squares slope of log ||delta|| against log h.
struct ScalingStudy {
  std::vector<double> h, delta;
  double slope = 0.0;
};

ScalingStudy remainder_scaling(const ReferenceSpaces& s, const SmoothPair& data,
                               const std::vector<double>& hs = {1.0, 0.5, 0.25, 0.125});

/// Random tetrahedron with vertices perturbed from a regular one, randomly
/// rotated and scaled to diameter about `size`.
TetGeometry random_shape_regular_tet(std::mt19937& rng, double size = 1.0);
/// Random SPD tau per face with spectrum in [lo, hi] / h.
FaceTau random_tau(std::mt19937& rng, double lo, double hi, double h = 1.0);

struct VerificationReport {
  nlohmann::json json;
  bool passed = false;
};

/// Dimension identities plus condition residuals over random smooth data on
/// random tetrahedra, against tol_proj.
VerificationReport verify_projection(int k, int q, int trials, unsigned seed, int tets = 5);

}  // namespace hdgplus

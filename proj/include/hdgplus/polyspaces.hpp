#pragma once

/// Quadrature and L2-orthonormal polynomial bases on the reference
/// tetrahedron and the reference triangle, plus the L2 projections onto
/// element spaces P_k(K;X) and face spaces R_k(dK;R^3).

#include "hdgplus/common.hpp"
#include "hdgplus/geometry.hpp"

#include <array>
#include <span>
#include <string>
#include <type_traits>
#include <vector>

namespace hdgplus {

template <int Dim>
using Point = Eigen::Matrix<double, Dim, 1>;

// ---------------------------------------------------------------------------
// Quadrature
// ---------------------------------------------------------------------------

template <int Dim>
struct QuadratureRule {
  std::vector<Point<Dim>> points;
  std::vector<double> weights;
  int exactness = 0;

  std::size_t size() const { return weights.size(); }
};

using TetQuadrature = QuadratureRule<3>;
using TriQuadrature = QuadratureRule<2>;

inline constexpr int kMaxQuadratureOrder = 60;

/// Collapsed Gauss-Jacobi rule on the reference tetrahedron, exact for total
/// degree <= order. Weights sum to 1/6.
TetQuadrature quad_tet(int order);

/// Collapsed Gauss-Jacobi rule on the reference triangle; weights sum to 1/2.
TriQuadrature quad_tri(int order);

/// n-point Gauss rule on [0,1] for the weight (1-t)^alpha.
void gauss_jacobi01(int n, int alpha, std::vector<double>& x, std::vector<double>& w);

/// dim P_k in Dim variables.
constexpr int poly_dim(int dim, int degree) {
  if (degree < 0) return 0;
  return dim == 3 ? (degree + 1) * (degree + 2) * (degree + 3) / 6
                  : (dim == 2 ? (degree + 1) * (degree + 2) / 2 : degree + 1);
}

/// Default assembly quadrature exactness for HDG+ of degree k.
constexpr int default_quad_order(int k) { return 2 * (k + 1) + 3; }

// ---------------------------------------------------------------------------
// Orthonormal scalar bases
// ---------------------------------------------------------------------------

/**
 * @brief L2-orthonormal basis of P_degree on the reference simplex.
 *
 * Function i is obtained from an earlier function p_i of degree one less by
 * multiplying with the centered coordinate x_{d_i} - c and orthogonalizing
 * (two Gram-Schmidt passes) against functions 0..i-1. Parents follow the
 * graded lexicographic monomial order, so the first poly_dim(Dim,m) functions
 * span P_m for every m. Evaluation replays the recurrence.
 */
template <int Dim>
class OrthonormalBasis {
 public:
  explicit OrthonormalBasis(int degree);

  int degree() const { return degree_; }
  int size() const { return static_cast<int>(exponents_.size()); }
  const std::vector<std::array<int, Dim>>& exponents() const { return exponents_; }

  VecX eval(const Point<Dim>& x) const;
  /// Row i is the reference gradient of function i.
  Eigen::Matrix<double, Eigen::Dynamic, Dim> grad(const Point<Dim>& x) const;

  /// values(p, i) = phi_i(points[p])
  MatX tabulate(std::span<const Point<Dim>> points) const;
  /// result[d](p, i) = d/dx_d phi_i(points[p])
  std::array<MatX, Dim> tabulate_grad(std::span<const Point<Dim>> points) const;

  /// max |Gram - I| measured with an independent quadrature.
  double orthonormality_defect() const;

 private:
  int degree_;
  std::vector<std::array<int, Dim>> exponents_;
  std::vector<int> dir_, parent_;
  MatX R_;  // R_(i, j), j < i: orthogonalization coefficients
  VecX norm_;
  double c0_;  // value of the constant function
};

using TetBasis = OrthonormalBasis<3>;
using TriBasis = OrthonormalBasis<2>;

/// Shared immutable instances, built on first use.
const TetBasis& tet_basis(int degree);
const TriBasis& tri_basis(int degree);

// ---------------------------------------------------------------------------
// Rank-expanded bases
// ---------------------------------------------------------------------------

enum class Rank { scalar = 1, vector3 = 3, symmat3 = 6 };

constexpr int multiplier(Rank r) { return static_cast<int>(r); }

/// Scalar orthonormal basis times the unit vectors (vector3) or the
/// Frobenius-orthonormal E_c (symmat3). Index layout is function-major:
/// index = i * multiplier + component, so prefixes are nested by degree.
template <int Dim>
struct BasisSet {
  const OrthonormalBasis<Dim>* scalar = nullptr;
  Rank rank = Rank::scalar;

  int degree() const { return scalar->degree(); }
  int size() const { return multiplier(rank) * scalar->size(); }
  /// Gram matrix of the expanded basis, by quadrature.
  MatX gram() const;
};

/// Basis of P_degree(K^;X) (Dim = 3) or P_degree(F^;X) (Dim = 2).
template <int Dim>
BasisSet<Dim> basis(int degree, Rank rank) {
  if (degree < 0) throw InvalidArgument("basis degree must be >= 0");
  if constexpr (Dim == 3)
    return BasisSet<3>{&tet_basis(degree), rank};
  else
    return BasisSet<2>{&tri_basis(degree), rank};
}

// ---------------------------------------------------------------------------
// Element L2 projection
// ---------------------------------------------------------------------------

struct ProjectionReport {
  VecX coeffs;
  std::vector<std::string> warnings;
};

namespace detail {
template <class R>
constexpr Rank rank_of() {
  if constexpr (std::is_arithmetic_v<R>)
    return Rank::scalar;
  else if constexpr (R::ColsAtCompileTime == 1)
    return Rank::vector3;
  else
    return Rank::symmat3;
}

template <class R>
Eigen::Matrix<double, Eigen::Dynamic, 1> components(const R& v) {
  if constexpr (rank_of<R>() == Rank::scalar) {
    Eigen::Matrix<double, Eigen::Dynamic, 1> c(1);
    c(0) = v;
    return c;
  } else if constexpr (rank_of<R>() == Rank::vector3) {
    return Vec3(v);
  } else {
    return sym_to_vec(Mat3(v));
  }
}
}  // namespace detail

/**
 * @brief Orthogonal L2(K^) projection of f onto P_degree(K^;X).
 *
 * f maps a reference point to a double, Vec3 or symmetric Mat3 and must agree
 * with `rank`. The projection is computed with a rule of exactness
 * `quad_order` (default 2*degree+6) and re-checked with a rule four orders
 * higher; a discrepancy above 1e-10 (relative) is reported in `warnings`.
 */
template <class F>
ProjectionReport l2_project_element(F&& f, int degree, Rank rank, int quad_order = -1) {
  using R = std::decay_t<decltype(f(Vec3()))>;
  if (detail::rank_of<R>() != rank) throw InvalidArgument("l2_project_element: callable does not match requested rank");
  const auto& b = tet_basis(degree);
  const int m = multiplier(rank);
  if (quad_order < 0) quad_order = 2 * degree + 6;
  auto project = [&](int order) {
    const TetQuadrature q = quad_tet(order);
    const MatX phi = b.tabulate(q.points);
    VecX c = VecX::Zero(m * b.size());
    for (std::size_t p = 0; p < q.size(); ++p) {
      const auto fv = detail::components(f(q.points[p]));
      for (int i = 0; i < b.size(); ++i)
        for (int comp = 0; comp < m; ++comp) c(i * m + comp) += q.weights[p] * phi(p, i) * fv(comp);
    }
    return c;
  };
  ProjectionReport out;
  out.coeffs = project(quad_order);
  const VecX check = project(std::min(quad_order + 4, kMaxQuadratureOrder));
  const double diff = (check - out.coeffs).norm();
  if (diff > 1e-10 * std::max(check.norm(), 1e-300))
    out.warnings.push_back("quadrature order " + std::to_string(quad_order) + " under-resolves the integrand (relative change " +
                           std::to_string(diff / std::max(check.norm(), 1e-300)) + " at order " + std::to_string(quad_order + 4) + ")");
  return out;
}

// ---------------------------------------------------------------------------
// Face system on the reference tetrahedron
// ---------------------------------------------------------------------------

/**
 * @brief Orthonormal basis of R_k(dK^;R^3) and the face quadrature.
 *
 * Face f of K^ is opposite vertex f and is parametrized by its vertices in
 * ascending order. On each face the scalar functions are psi_b =
 * phi_b(s,t)/sqrt(2|F|), orthonormal in L2(F). Coefficient layout:
 * f * face_dofs() + b * 3 + d.
 */
class FaceSystem {
 public:
  explicit FaceSystem(int degree, int quad_order = -1);

  int degree() const { return degree_; }
  int face_functions() const { return basis_->size(); }
  int face_dofs() const { return 3 * basis_->size(); }
  int size() const { return 4 * face_dofs(); }

  const TriQuadrature& rule() const { return rule_; }
  const FaceFrame& frame(int f) const { return frames_[f]; }
  const TriBasis& face_basis() const { return *basis_; }

  /// Quadrature points of face f in reference-element coordinates.
  const std::vector<Vec3>& points(int f) const { return points_[f]; }
  /// Physical face weights (reference weights times 2|F|).
  const std::vector<double>& weights(int f) const { return weights_[f]; }
  /// psi values on face f: (quad point, face function).
  const MatX& psi(int f) const { return psi_[f]; }

  /// Trace matrix: element coefficients of P_k'(K^;R^3) -> R_k coefficients,
  /// i.e. the matrix of P_M composed with the trace.
  MatX trace_matrix(const TetBasis& element_basis) const;

  /// P_M applied to a trace sampled at points(f) on every face.
  VecX project(std::span<const std::vector<Vec3>> samples) const;

 private:
  int degree_;
  const TriBasis* basis_;
  TriQuadrature rule_;
  std::array<FaceFrame, 4> frames_;
  std::array<std::vector<Vec3>, 4> points_;
  std::array<std::vector<double>, 4> weights_;
  std::array<MatX, 4> psi_;
};

/// P_M of a trace given as samples at FaceSystem(degree).points(f).
VecX pm_face_project(std::span<const std::vector<Vec3>> samples, int degree);

}  // namespace hdgplus

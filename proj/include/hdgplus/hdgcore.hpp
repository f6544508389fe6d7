#pragma once

/// HDG+ discretization of linear elasticity on a tetrahedral mesh: element
/// blocks, static condensation onto the face unknowns, the global skeleton
/// system with Dirichlet elimination, and interior recovery.
///
/// Per element K the unknowns are sigma in P_k(K;Sym), u in P_{k+1}(K;R^3)
/// and, per face F, uhat in P_k(F;R^3). The local equations are
///   (A sigma, theta) + (u, div theta) - <uhat, theta n> = 0
///   -(div sigma, w) + <tau P_M(u - uhat), w> + m (rho u, w) = (f, w)
/// and the skeleton equation sums <sigma n - tau P_M(u - uhat), mu> over
/// the two sides of every interior face.

#include "hdgplus/common.hpp"
#include "hdgplus/elastmat.hpp"
#include "hdgplus/polyspaces.hpp"
#include "hdgplus/tetmesh.hpp"

#include <Eigen/Sparse>

#include <functional>
#include <memory>
#include <string>
#include <vector>

namespace hdgplus {

using VectorFn = std::function<Vec3(const Vec3&)>;
using MatrixFn = std::function<Mat3(const Vec3&)>;

/// Material scale s_F of the default stabilization tau = c_tau s_F / h_K I,
/// with face-averaged Lame values: shear uses 2 mu_F, lame uses 2 mu_F + lambda_F.
enum class TauScaling { shear, lame };

struct HdgOptions {
  int k = 1;
  double c_tau = 1.0;
  TauScaling tau_scaling = TauScaling::shear;
  /// Element and face quadrature exactness; -1 selects default_quad_order(k).
  int quad_order = -1;
  /// Optional SPD tau per (element, local face), replacing the default.
  std::function<Mat3(int element, int local_face)> tau_override;
};

/// Physical quadrature on one element or face.
struct PhysicalRule {
  std::vector<Vec3> points;
  std::vector<double> weights;
};

/**
 * @brief Mesh, material and discrete spaces of one HDG+ problem.
 *
 * Global face coefficients are laid out as face * face_dofs() + b * 3 + d,
 * with b running over the orthonormal face basis of the face's global frame
 * (built from its sorted vertex triple) so both neighbours share it.
 */
class HdgSetup {
 public:
  HdgSetup(TetMesh mesh, IsotropicCompliance material, ScalarField density, HdgOptions options = {});

  const TetMesh& mesh() const { return mesh_; }
  const IsotropicCompliance& material() const { return material_; }
  const ScalarField& density() const { return density_; }
  const HdgOptions& options() const { return options_; }
  int k() const { return options_.k; }
  int quad_order() const { return quad_order_; }

  int n_sigma() const { return 6 * poly_dim(3, k()); }
  int n_u() const { return 3 * poly_dim(3, k() + 1); }
  int face_functions() const { return poly_dim(2, k()); }
  int face_dofs() const { return 3 * face_functions(); }
  int n_uhat() const { return 4 * face_dofs(); }
  int num_face_coeffs() const { return mesh_.num_faces() * face_dofs(); }
  int num_skeleton_dofs() const { return num_interior_faces_ * face_dofs(); }
  /// Position of an interior face in the skeleton numbering, -1 on the boundary.
  int skeleton_index(int face) const { return skeleton_index_[face]; }

  const TetGeometry& geometry(int e) const { return geometry_[e]; }
  const Mat3& tau(int e, int local_face) const { return tau_[e][local_face]; }

  PhysicalRule element_rule(int e) const;
  PhysicalRule face_rule(int face) const;
  /// Reference tabulations at the element rule points.
  const MatX& phi_k() const { return phi_k_; }
  const MatX& phi_k1() const { return phi_k1_; }
  const std::array<MatX, 3>& grad_phi_k() const { return grad_phi_k_; }
  /// Face basis values (point, function), to be divided by sqrt(2|F|).
  const MatX& psi_ref() const { return psi_ref_; }

  /// Field evaluation from element coefficients.
  Mat3 eval_sigma(int e, const VecX& coeffs, const Vec3& x) const;
  Vec3 eval_u(int e, const VecX& coeffs, const Vec3& x) const;

 private:
  TetMesh mesh_;
  IsotropicCompliance material_;
  ScalarField density_;
  HdgOptions options_;
  int quad_order_;
  int num_interior_faces_ = 0;
  std::vector<int> skeleton_index_;
  std::vector<TetGeometry> geometry_;
  std::vector<std::array<Mat3, 4>> tau_;
  TetQuadrature elem_rule_;
  TriQuadrature face_rule_;
  MatX phi_k_, phi_k1_, psi_ref_;
  std::array<MatX, 3> grad_phi_k_;
};

/// Element matrices. Local face dofs follow the element's local face order,
/// each face in its global frame.
struct LocalBlocks {
  MatX A;     // n_sigma x n_sigma: (A sigma, theta)
  MatX D;     // n_u x n_sigma: (div sigma, w)
  MatX C;     // n_sigma x n_uhat: <uhat, theta n>
  MatX Suu;   // n_u x n_u: <tau P_M u, w>
  MatX Suh;   // n_u x n_uhat: <tau uhat, P_M w>
  MatX Shh;   // n_uhat x n_uhat: <tau uhat, mu>
  MatX M;     // n_u x n_u: (rho u, w)
  double mass_coeff = 0.0;
};

LocalBlocks assemble_local(const HdgSetup& setup, int e, double mass_coeff);

/// (f, w)_K for the displacement test functions.
VecX assemble_element_load(const HdgSetup& setup, int e, const VectorFn& f);

/**
 * @brief Element condensed onto its face unknowns.
 *
 * With L = [[A, D^T], [D, -(Suu + m M)]] and G = [C; -Suh], the interior
 * state is [sigma; u] = W uhat - Z F where W = L^-1 G and Z = L^-1 [0; I].
 * The Schur matrix is K = Shh + G^T W and the load contributes G^T Z F.
 */
struct CondensedElement {
  LocalBlocks blocks;
  MatX K, W, Z;
  double rcond = 0.0;       // reciprocal condition estimate of L
  double asymmetry = 0.0;   // max |K - K^T| / max |K| before symmetrization
};

CondensedElement condense(LocalBlocks blocks, int element_id = -1);

/// Sparse system over interior-face dofs with the boundary dofs eliminated.
struct SkeletonSystem {
  Eigen::SparseMatrix<double> matrix;
  VecX rhs;
  double asymmetry = 0.0;  // max |A - A^T|
};

/// Matrix only; the right-hand side comes from skeleton_rhs.
Eigen::SparseMatrix<double> assemble_skeleton_matrix(const HdgSetup& setup, const std::vector<CondensedElement>& elements);

/// RHS from element loads and full face coefficients (only boundary faces read).
VecX skeleton_rhs(const HdgSetup& setup, const std::vector<CondensedElement>& elements, const std::vector<VecX>& loads,
                  const VecX& dirichlet);

SkeletonSystem assemble_global(const HdgSetup& setup, const std::vector<CondensedElement>& elements,
                               const std::vector<VecX>& loads, const VecX& dirichlet);

struct SolveReport {
  std::string path;  // "ldlt" (symmetric positive) or "lu"
  int dofs = 0;
  double residual = 0.0;            // ||Ax - b|| / ||b||
  double condition_estimate = 0.0;  // ||A||_2 ||A^-1||_2 estimate
  double min_element_rcond = 1.0;
  std::vector<std::string> warnings;
};

/**
 * @brief Factorized skeleton matrix reused across right-hand sides.
 *
 * `symmetric_positive` selects the LDL^T path; otherwise sparse LU is used.
 */
class SkeletonSolver {
 public:
  SkeletonSolver(Eigen::SparseMatrix<double> matrix, bool symmetric_positive);
  ~SkeletonSolver();

  VecX solve(const VecX& rhs, SolveReport* report = nullptr) const;
  const std::string& path() const { return path_; }
  double condition_estimate() const { return cond_; }
  const Eigen::SparseMatrix<double>& matrix() const { return matrix_; }

 private:
  struct Impl;
  VecX raw_solve(const VecX& b) const;

  Eigen::SparseMatrix<double> matrix_;
  std::string path_;
  std::unique_ptr<Impl> impl_;
  double cond_ = 0.0;
};

/// Full face coefficient vector: skeleton values on interior faces, the given
/// Dirichlet coefficients on boundary faces.
VecX scatter_skeleton(const HdgSetup& setup, const VecX& skeleton, const VecX& dirichlet);

/// Local face coefficients of element e, in local face order.
VecX gather_uhat(const HdgSetup& setup, int e, const VecX& uhat);

/// Interior recovery [sigma; u] = W uhat_e - Z F.
void recover_interior(const CondensedElement& ce, const VecX& uhat_e, const VecX& load, VecX& sigma, VecX& u);

/// L2 projection onto P_k(F;R^3) on every face (interior faces too if
/// boundary_only is false); other entries are zero.
VecX project_faces(const HdgSetup& setup, const VectorFn& g, bool boundary_only = true);

/// Residual of the two local equations, relative to the size of their terms.
double local_residual(const LocalBlocks& b, const VecX& sigma, const VecX& u, const VecX& uhat_e, const VecX& load);

struct HdgSolution {
  std::vector<VecX> sigma, u;
  VecX uhat;
  SolveReport report;
};

/// Condensed operator for one mass coefficient, factorized once. Keeps a
/// reference to `setup`, which must outlive it.
class HdgOperator {
 public:
  HdgOperator(const HdgSetup& setup, double mass_coeff);

  const HdgSetup& setup() const { return setup_; }
  double mass_coeff() const { return mass_coeff_; }
  const std::vector<CondensedElement>& elements() const { return elements_; }
  const SkeletonSolver& solver() const { return *solver_; }

  HdgSolution solve(const std::vector<VecX>& loads, const VecX& dirichlet) const;

 private:
  const HdgSetup& setup_;
  double mass_coeff_;
  std::vector<CondensedElement> elements_;
  std::unique_ptr<SkeletonSolver> solver_;
  double min_rcond_ = 1.0;
};

/// Face-L2 jump of the numerical traction sigma n - tau P_M(u - uhat) over
/// interior faces: (max jump, max one-sided traction norm).
std::pair<double, double> traction_jump(const HdgSetup& setup, const std::vector<CondensedElement>& elements,
                                        const HdgSolution& sol);

struct FieldErrors {
  double E_sigma = 0, E_u = 0;          // relative L2 errors
  double norm_sigma = 0, norm_u = 0;    // L2 norms of the exact fields
};

/// Relative L2(Omega) errors against exact fields, by element quadrature of
/// exactness quad_order (-1: setup default).
FieldErrors field_errors(const HdgSetup& setup, const std::vector<VecX>& sigma, const std::vector<VecX>& u,
                         const MatrixFn& sigma_exact, const VectorFn& u_exact, int quad_order = -1);

}  // namespace hdgplus

#pragma once

/// Steady, time-harmonic and transient HDG+ solvers for manufactured cases,
/// error measurement and convergence studies.

#include "hdgplus/elastmat.hpp"
#include "hdgplus/hdgcore.hpp"
#include "hdgplus/tetmesh.hpp"

#include <json.hpp>

#include <memory>
#include <string>
#include <vector>

namespace hdgplus {

struct SolverConfig {
  int k = 1;
  double c_tau = 1.0;
  TauScaling tau_scaling = TauScaling::shear;
  int quad_order = -1;
};

HdgOptions to_options(const SolverConfig& c);

/// Element loads (f, w)_K for every element.
std::vector<VecX> element_loads(const HdgSetup& setup, const VectorFn& f);

struct SteadyResult {
  std::shared_ptr<const HdgSetup> setup;
  HdgSolution solution;
  FieldErrors errors;
  nlohmann::json diagnostics;
};

/// One condensed solve with mass coefficient 0, load -div sigma(U) and
/// boundary data U.
SteadyResult solve_steady(const TetMesh& mesh, const ManufacturedCase& c, const SolverConfig& cfg);

struct HarmonicResult {
  std::shared_ptr<const HdgSetup> setup;
  HdgSolution re, im;
  /// Complex relative L2 errors: sqrt(|e_re|^2 + |e_im|^2) / sqrt(|x_re|^2 + |x_im|^2).
  FieldErrors errors;
  std::vector<std::string> warnings;
  nlohmann::json diagnostics;
};

/// Condition estimate above which a harmonic solve is flagged as near-resonant.
inline constexpr double kResonanceCondition = 1e10;

/// Time-harmonic solve with mass coefficient -kappa^2. The data of `c` is
/// scaled by exp(i c.phase); real and imaginary parts share one factorization.
HarmonicResult solve_timeharmonic(const TetMesh& mesh, const ManufacturedCase& c, const SolverConfig& cfg, double kappa);

/// Discrete state of the second-order-in-time semi-discrete system.
struct TransientState {
  double t = 0.0;
  std::vector<VecX> sigma, u, v, a;  // a: discrete acceleration
  VecX uhat;                          // full face coefficients
};

/**
 * @brief Trapezoidal (Newmark 1/4, 1/2) stepping of the condensed system.
 *
 * Each step solves with mass coefficient 4/dt^2 and the effective load
 * F(t+dt) + M (4/dt^2 u + 4/dt v + a). The factorization is built once.
 */
class NewmarkStepper {
 public:
  NewmarkStepper(const HdgSetup& setup, double dt);

  double dt() const { return dt_; }
  const HdgOperator& op() const { return op_; }

  /// Sets s.a from the semi-discrete equation at the current (sigma, u, uhat).
  void init_acceleration(TransientState& s, const std::vector<VecX>& loads) const;

  /// Advances by dt. `loads` and `dirichlet` are taken at s.t + dt (empty
  /// means zero). Returns the solve report of the step.
  SolveReport step(TransientState& s, const std::vector<VecX>& loads, const VecX& dirichlet) const;

  /// 1/2 |sigma|_A^2 + 1/2 |v|_rho^2 + 1/2 |P_M(u - uhat)|_tau^2
  double energy(const TransientState& s) const;

 private:
  const HdgSetup& setup_;
  double dt_;
  HdgOperator op_;
};

struct TransientConfig {
  double T = 1.5;
  int nsteps = 8;
  /// "zero", "exact-paper" or "approx".
  std::string init_mode = "zero";
  bool record_energy = true;
};

struct TransientResult {
  std::shared_ptr<const HdgSetup> setup;
  TransientState state;
  FieldErrors errors;
  std::vector<double> energy;  // per step, including t = 0
  std::vector<std::string> notes;
  double max_residual = 0.0;
  nlohmann::json diagnostics;
};

TransientResult solve_transient(const TetMesh& mesh, const ManufacturedCase& c, const SolverConfig& cfg,
                                const TransientConfig& tc);

/// Steady solve with load -div sigma(u(., t0)) and boundary data u(., t0).
HdgSolution solve_initial_displacement(const HdgSetup& setup, const ManufacturedCase& c, double t0 = 0.0);

struct LevelResult {
  int n = 0;
  double h = 0.0;
  int nsteps = 0;  // transient only
  FieldErrors errors;
  double order_sigma = 0.0, order_u = 0.0;  // NaN when not applicable
};

/// Errors below this level carry no order information.
inline constexpr double kOrderErrorFloor = 1e-11;

struct ErrorReport {
  int k = 1;
  std::string regime;
  std::vector<LevelResult> rows;

  /// Fills orders as log(e_prev / e) / log(h_prev / h).
  void compute_orders();
  /// Columns k,h,E_sigma,order_sigma,E_u,order_u; 4 significant digits; NA for
  /// missing orders.
  std::string to_csv() const;
  nlohmann::json to_json() const;
};

struct StudyConfig {
  std::string regime = "steady";  // steady | harmonic | transient
  std::vector<int> levels{2, 4, 8};
  SolverConfig solver;
  double kappa = 1.0;
  double T = 1.5;
  /// Steps on the coarsest level; finer levels use dt ~ h^((k+2)/2).
  int coarse_steps = 8;
  std::string init_mode = "zero";
};

/// Number of steps on a level of size h given the coarsest size h0.
int transient_steps(int coarse_steps, double h0, double h, int k);

/// Runs every level on structured_cube(n) and computes observed orders.
ErrorReport convergence_study(const ManufacturedCase& c, const StudyConfig& cfg);

}  // namespace hdgplus

#pragma once

#include "hdgplus/common.hpp"

#include <json.hpp>

#include <functional>
#include <string>
#include <vector>

namespace hdgplus {

using Sym6 = Eigen::Matrix<double, 6, 6>;

/// Scalar field with gradient.
struct ScalarField {
  std::function<double(const Vec3&)> value;
  std::function<Vec3(const Vec3&)> gradient;

  static ScalarField constant(double c);
};

/**
 * @brief Isotropic compliance A xi = xi/(2 mu) - lambda/(2 mu (2 mu + 3 lambda)) tr(xi) I.
 *
 * The inverse is A^-1 eps = 2 mu eps + lambda tr(eps) I. Nonpositive Lame
 * values at an evaluation point raise InvalidArgument.
 */
class IsotropicCompliance {
 public:
  IsotropicCompliance(ScalarField lambda, ScalarField mu) : lambda_(std::move(lambda)), mu_(std::move(mu)) {}
  static IsotropicCompliance constant(double lambda, double mu);

  double lambda(const Vec3& x) const;
  double mu(const Vec3& x) const;
  Vec3 grad_lambda(const Vec3& x) const { return lambda_.gradient(x); }
  Vec3 grad_mu(const Vec3& x) const { return mu_.gradient(x); }

  Mat3 apply_A(const Vec3& x, const Mat3& xi) const;
  Mat3 apply_A_inv(const Vec3& x, const Mat3& eps) const;
  /// Matrix of A in the Frobenius-orthonormal symmetric coordinates.
  Sym6 A_matrix(const Vec3& x) const;

 private:
  ScalarField lambda_, mu_;
};

/// Time factor with its first two derivatives.
struct TimeFactor {
  std::function<std::array<double, 3>(double)> eval;

  static TimeFactor one();
  /// t^3 (1-t)^2
  static TimeFactor cubic_quadratic();
};

/// Function of one variable returning (f, f', f'').
using Fn1D = std::function<std::array<double, 3>(double)>;

/// coef * f0(x) f1(y) f2(z)
struct SeparableTerm {
  double coef = 1.0;
  std::array<Fn1D, 3> f;
};

/// Value, gradient (grad(i,j) = d_j u_i) and Hessians (hess[i](j,l) = d_j d_l u_i).
struct Jet {
  Vec3 value = Vec3::Zero();
  Mat3 grad = Mat3::Zero();
  std::array<Mat3, 3> hess{Mat3::Zero(), Mat3::Zero(), Mat3::Zero()};
};

/// Vector field whose components are sums of separable terms.
class SeparableField {
 public:
  std::array<std::vector<SeparableTerm>, 3> components;

  Jet jet(const Vec3& x) const;
  Vec3 value(const Vec3& x) const;

  static Fn1D monomial(int p);
  static Fn1D cos_mode(double w);  // cos(w s)
  static Fn1D sin_mode(double w);  // sin(w s)
  static Fn1D polynomial(std::vector<double> coeffs);  // sum c_i s^i
};

/**
 * @brief Manufactured solution u(x,t) = H(t) U(x) with derived data.
 *
 * sigma = A^-1 eps(u); the transient load is rho u_tt - div sigma, the steady
 * load -div sigma(U) and the time-harmonic load -div sigma(U) - kappa^2 rho U.
 */
class ManufacturedCase {
 public:
  std::string name;
  IsotropicCompliance material;
  ScalarField density;
  SeparableField U;
  TimeFactor H;
  double phase = 0.0;  // time-harmonic data is scaled by exp(i phase)

  ManufacturedCase(std::string n, IsotropicCompliance m, ScalarField rho, SeparableField u, TimeFactor h)
      : name(std::move(n)), material(std::move(m)), density(std::move(rho)), U(std::move(u)), H(std::move(h)) {}

  Vec3 U_value(const Vec3& x) const { return U.value(x); }
  Mat3 strain_U(const Vec3& x) const;
  Mat3 stress_U(const Vec3& x) const;
  Vec3 div_stress_U(const Vec3& x) const;

  Vec3 displacement(const Vec3& x, double t) const { return H.eval(t)[0] * U.value(x); }
  Vec3 velocity(const Vec3& x, double t) const { return H.eval(t)[1] * U.value(x); }
  Vec3 acceleration(const Vec3& x, double t) const { return H.eval(t)[2] * U.value(x); }
  Mat3 stress(const Vec3& x, double t) const { return H.eval(t)[0] * stress_U(x); }

  Vec3 load_steady(const Vec3& x) const { return -div_stress_U(x); }
  Vec3 load_transient(const Vec3& x, double t) const;
  Vec3 load_harmonic(const Vec3& x, double kappa) const;
};

/// Variable Lame fields lambda = (2+|x|^2)/(1+|x|^2), mu = 3 + cos(xyz),
/// rho = 1, with the trigonometric/polynomial U and H = t^3 (1-t)^2.
ManufacturedCase case_paper_transient();

/// Divergence-free polynomial U vanishing on the unit cube boundary, constant
/// Lame parameters, H = t^3 (1-t)^2.
ManufacturedCase case_locking(double lambda0, double mu0);

/// Spatial part of case_paper_transient, H = 1, for the time-harmonic regime.
ManufacturedCase case_timeharmonic(double kappa, double phase = 0.0);

/// Random vector polynomial of total degree `degree`, constant Lame, rho = 1.
ManufacturedCase case_polynomial(int degree, double lambda0, double mu0, unsigned seed);

/// Adds the rigid motion a + b x X to U; the stress is unchanged.
ManufacturedCase with_rigid_shift(ManufacturedCase c, const Vec3& a, const Vec3& b);

/// Poisson ratio lambda / (2 (lambda + mu)).
inline double poisson_ratio(double lambda, double mu) { return lambda / (2.0 * (lambda + mu)); }

/// Case by name: "paper", "locking", "timeharmonic", "polynomial". Parameters
/// (lambda, mu, kappa, phase, degree, seed) are read from `params`; velocity v
/// adds v t to the time factor. Unknown keys raise InvalidArgument.
ManufacturedCase make_case(const std::string& name, const nlohmann::json& params = nlohmann::json::object());

}  // namespace hdgplus

#include "hdgplus/elastmat.hpp"

#include <random>
#include <set>

namespace hdgplus {

ScalarField ScalarField::constant(double c) {
  return {[c](const Vec3&) { return c; }, [](const Vec3&) { return Vec3::Zero().eval(); }};
}

IsotropicCompliance IsotropicCompliance::constant(double lambda, double mu) {
  if (!(lambda > 0) || !(mu > 0)) throw InvalidArgument("Lame parameters must be positive");
  return {ScalarField::constant(lambda), ScalarField::constant(mu)};
}

double IsotropicCompliance::lambda(const Vec3& x) const {
  const double l = lambda_.value(x);
  if (!(l > 0)) throw InvalidArgument("nonpositive lambda at evaluation point");
  return l;
}

double IsotropicCompliance::mu(const Vec3& x) const {
  const double m = mu_.value(x);
  if (!(m > 0)) throw InvalidArgument("nonpositive mu at evaluation point");
  return m;
}

Mat3 IsotropicCompliance::apply_A(const Vec3& x, const Mat3& xi) const {
  const double l = lambda(x), m = mu(x);
  return xi / (2 * m) - l / (2 * m * (2 * m + 3 * l)) * xi.trace() * Mat3::Identity();
}

Mat3 IsotropicCompliance::apply_A_inv(const Vec3& x, const Mat3& eps) const {
  return 2 * mu(x) * eps + lambda(x) * eps.trace() * Mat3::Identity();
}

Sym6 IsotropicCompliance::A_matrix(const Vec3& x) const {
  const double l = lambda(x), m = mu(x);
  Eigen::Matrix<double, 6, 1> t;
  t << 1, 1, 1, 0, 0, 0;
  return Sym6::Identity() / (2 * m) - l / (2 * m * (2 * m + 3 * l)) * t * t.transpose();
}

TimeFactor TimeFactor::one() {
  return {[](double) { return std::array<double, 3>{1.0, 0.0, 0.0}; }};
}

TimeFactor TimeFactor::cubic_quadratic() {
  return {[](double t) {
    const double s = 1 - t;
    return std::array<double, 3>{t * t * t * s * s, 3 * t * t * s * s - 2 * t * t * t * s,
                                 6 * t * s * s - 12 * t * t * s + 2 * t * t * t};
  }};
}

// ---------------------------------------------------------------------------

Fn1D SeparableField::monomial(int p) {
  return [p](double s) {
    const double v = p >= 0 ? std::pow(s, p) : 0.0;
    const double d1 = p >= 1 ? p * std::pow(s, p - 1) : 0.0;
    const double d2 = p >= 2 ? p * (p - 1) * std::pow(s, p - 2) : 0.0;
    return std::array<double, 3>{v, d1, d2};
  };
}

Fn1D SeparableField::cos_mode(double w) {
  return [w](double s) { return std::array<double, 3>{std::cos(w * s), -w * std::sin(w * s), -w * w * std::cos(w * s)}; };
}

Fn1D SeparableField::sin_mode(double w) {
  return [w](double s) { return std::array<double, 3>{std::sin(w * s), w * std::cos(w * s), -w * w * std::sin(w * s)}; };
}

Fn1D SeparableField::polynomial(std::vector<double> c) {
  return [c = std::move(c)](double s) {
    std::array<double, 3> r{0, 0, 0};
    for (int i = static_cast<int>(c.size()) - 1; i >= 0; --i) {
      r[2] = r[2] * s + 2 * r[1];
      r[1] = r[1] * s + r[0];
      r[0] = r[0] * s + c[i];
    }
    return r;
  };
}

Jet SeparableField::jet(const Vec3& x) const {
  Jet j;
  for (int i = 0; i < 3; ++i)
    for (const auto& term : components[i]) {
      std::array<std::array<double, 3>, 3> f;
      for (int d = 0; d < 3; ++d) f[d] = term.f[d](x(d));
      j.value(i) += term.coef * f[0][0] * f[1][0] * f[2][0];
      for (int a = 0; a < 3; ++a) {
        double g = term.coef;
        for (int d = 0; d < 3; ++d) g *= f[d][d == a ? 1 : 0];
        j.grad(i, a) += g;
        for (int b = 0; b < 3; ++b) {
          double h = term.coef;
          for (int d = 0; d < 3; ++d) h *= f[d][(d == a) + (d == b)];
          j.hess[i](a, b) += h;
        }
      }
    }
  return j;
}

Vec3 SeparableField::value(const Vec3& x) const {
  Vec3 v = Vec3::Zero();
  for (int i = 0; i < 3; ++i)
    for (const auto& term : components[i]) v(i) += term.coef * term.f[0](x(0))[0] * term.f[1](x(1))[0] * term.f[2](x(2))[0];
  return v;
}

// ---------------------------------------------------------------------------

Mat3 ManufacturedCase::strain_U(const Vec3& x) const { return sym_part(U.jet(x).grad); }

Mat3 ManufacturedCase::stress_U(const Vec3& x) const { return material.apply_A_inv(x, strain_U(x)); }

Vec3 ManufacturedCase::div_stress_U(const Vec3& x) const {
  const Jet j = U.jet(x);
  const Mat3 eps = sym_part(j.grad);
  const double l = material.lambda(x), m = material.mu(x);
  Vec3 div_eps, grad_div;
  for (int i = 0; i < 3; ++i) {
    grad_div(i) = j.hess[0](i, 0) + j.hess[1](i, 1) + j.hess[2](i, 2);
    div_eps(i) = 0.5 * (j.hess[i].trace() + grad_div(i));
  }
  return 2 * eps * material.grad_mu(x) + 2 * m * div_eps + material.grad_lambda(x) * eps.trace() + l * grad_div;
}

Vec3 ManufacturedCase::load_transient(const Vec3& x, double t) const {
  const auto h = H.eval(t);
  return density.value(x) * h[2] * U.value(x) - h[0] * div_stress_U(x);
}

Vec3 ManufacturedCase::load_harmonic(const Vec3& x, double kappa) const {
  return -div_stress_U(x) - kappa * kappa * density.value(x) * U.value(x);
}

namespace {

constexpr double kPi = 3.14159265358979323846;

SeparableTerm term(double c, Fn1D a, Fn1D b, Fn1D d) { return {c, {std::move(a), std::move(b), std::move(d)}}; }

SeparableField paper_field() {
  using S = SeparableField;
  SeparableField u;
  u.components[0] = {term(1, S::cos_mode(kPi), S::sin_mode(kPi), S::cos_mode(kPi))};
  u.components[1] = {term(5, S::monomial(2), S::monomial(1), S::monomial(1)), term(4, S::monomial(1), S::monomial(2), S::monomial(1)),
                     term(3, S::monomial(1), S::monomial(1), S::monomial(2)), term(17, S::monomial(0), S::monomial(0), S::monomial(0))};
  u.components[2] = {term(1, S::cos_mode(2), S::cos_mode(3), S::cos_mode(1))};
  return u;
}

IsotropicCompliance paper_material() {
  ScalarField lambda{[](const Vec3& x) { return (2 + x.squaredNorm()) / (1 + x.squaredNorm()); },
                     [](const Vec3& x) {
                       const double d = 1 + x.squaredNorm();
                       return Vec3(-2 * x / (d * d));
                     }};
  ScalarField mu{[](const Vec3& x) { return 3 + std::cos(x(0) * x(1) * x(2)); },
                 [](const Vec3& x) {
                   const double s = -std::sin(x(0) * x(1) * x(2));
                   return Vec3(s * x(1) * x(2), s * x(0) * x(2), s * x(0) * x(1));
                 }};
  return {lambda, mu};
}

}  // namespace

ManufacturedCase case_paper_transient() {
  return {"paper", paper_material(), ScalarField::constant(1.0), paper_field(), TimeFactor::cubic_quadratic()};
}

ManufacturedCase case_locking(double lambda0, double mu0) {
  using S = SeparableField;
  // a(s) = s^2 (s-1)^2, b(s) = s (s-1)(2s-1), c(s) = s (1-s)
  const Fn1D a = S::polynomial({0, 0, 1, -2, 1});
  const Fn1D b = S::polynomial({0, 1, -3, 2});
  const Fn1D c = S::polynomial({0, 1, -1});
  SeparableField u;
  u.components[0] = {term(-1, a, b, c)};
  u.components[1] = {term(1, b, a, c)};
  return {"locking", IsotropicCompliance::constant(lambda0, mu0), ScalarField::constant(1.0), u, TimeFactor::cubic_quadratic()};
}

ManufacturedCase case_timeharmonic(double kappa, double phase) {
  if (!(kappa > 0)) throw InvalidArgument("kappa must be positive");
  ManufacturedCase c{"timeharmonic", paper_material(), ScalarField::constant(1.0), paper_field(), TimeFactor::one()};
  c.phase = phase;
  return c;
}

ManufacturedCase case_polynomial(int degree, double lambda0, double mu0, unsigned seed) {
  if (degree < 0) throw InvalidArgument("polynomial degree must be >= 0");
  std::mt19937 rng(seed);
  std::uniform_real_distribution<double> coef(-1.0, 1.0);
  SeparableField u;
  for (int i = 0; i < 3; ++i)
    for (int p = 0; p <= degree; ++p)
      for (int q = 0; p + q <= degree; ++q)
        for (int r = 0; p + q + r <= degree; ++r)
          u.components[i].push_back(term(coef(rng), SeparableField::monomial(p), SeparableField::monomial(q), SeparableField::monomial(r)));
  return {"polynomial", IsotropicCompliance::constant(lambda0, mu0), ScalarField::constant(1.0), u, TimeFactor::one()};
}

ManufacturedCase with_rigid_shift(ManufacturedCase c, const Vec3& a, const Vec3& b) {
  using S = SeparableField;
  const Fn1D one = S::monomial(0), lin = S::monomial(1);
  // b x X = (b1 z - b2 y, b2 x - b0 z, b0 y - b1 x)
  c.U.components[0].push_back(term(a(0), one, one, one));
  c.U.components[0].push_back(term(b(1), one, one, lin));
  c.U.components[0].push_back(term(-b(2), one, lin, one));
  c.U.components[1].push_back(term(a(1), one, one, one));
  c.U.components[1].push_back(term(b(2), lin, one, one));
  c.U.components[1].push_back(term(-b(0), one, one, lin));
  c.U.components[2].push_back(term(a(2), one, one, one));
  c.U.components[2].push_back(term(b(0), one, lin, one));
  c.U.components[2].push_back(term(-b(1), lin, one, one));
  c.name += "+rigid";
  return c;
}

ManufacturedCase make_case(const std::string& name, const nlohmann::json& params) {
  static const std::set<std::string> known{"lambda", "mu", "kappa", "phase", "degree", "seed", "velocity"};
  for (const auto& [key, value] : params.items())
    if (!known.count(key)) throw InvalidArgument("unknown case parameter '" + key + "'");
  auto get = [&](const char* key, double def) { return params.contains(key) ? params.at(key).get<double>() : def; };
  ManufacturedCase c = [&] {
    if (name == "paper") return case_paper_transient();
    if (name == "locking") return case_locking(get("lambda", 150.0), get("mu", 3.0));
    if (name == "timeharmonic") return case_timeharmonic(get("kappa", 1.0), get("phase", 0.0));
    if (name == "polynomial")
      return case_polynomial(static_cast<int>(get("degree", 2)), get("lambda", 1.0), get("mu", 1.0), static_cast<unsigned>(get("seed", 1)));
    throw InvalidArgument("unknown case '" + name + "' (expected paper, locking, timeharmonic or polynomial)");
  }();
  // velocity v adds v t to the time factor, giving nonzero initial velocity.
  if (const double v = get("velocity", 0.0); v != 0.0) {
    c.H = {[h = c.H, v](double t) {
      auto r = h.eval(t);
      r[0] += v * t;
      r[1] += v;
      return r;
    }};
  }
  return c;
}

}  // namespace hdgplus

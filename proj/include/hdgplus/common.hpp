#pragma once

#include <Eigen/Dense>

#include <array>
#include <cmath>
#include <stdexcept>
#include <string>

namespace hdgplus {

using Vec2 = Eigen::Vector2d;
using Vec3 = Eigen::Vector3d;
using Mat3 = Eigen::Matrix3d;
using VecX = Eigen::VectorXd;
using MatX = Eigen::MatrixXd;

// ---------------------------------------------------------------------------
// Errors
// ---------------------------------------------------------------------------

/// Base class of every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Bad argument or precondition violated by the caller.
class InvalidArgument : public Error {
 public:
  using Error::Error;
};

/// Malformed input file; carries the offending line number.
class ParseError : public Error {
 public:
  ParseError(const std::string& what, long line)
      : Error(what + " (line " + std::to_string(line) + ")"), line_(line) {}
  long line() const noexcept { return line_; }

 private:
  long line_;
};

/// Singular/ill-posed algebra, failed factorization, degenerate geometry.
class NumericalError : public Error {
 public:
  using Error::Error;
};

/// Recognized request the library refuses to carry out.
class Unsupported : public Error {
 public:
  using Error::Error;
};

// ---------------------------------------------------------------------------
// Symmetric 3x3 matrices
//
// Components are ordered (xx, yy, zz, yz, xz, xy). The matrices E_c below are
// orthonormal for the Frobenius product, so a symmetric field expanded in
// scalar orthonormal functions times E_c is L2-orthonormal.
// ---------------------------------------------------------------------------

inline constexpr int kSymComponents = 6;

inline const std::array<Mat3, 6>& sym_basis() {
  static const std::array<Mat3, 6> basis = [] {
    std::array<Mat3, 6> e;
    const double r = 1.0 / std::sqrt(2.0);
    for (auto& m : e) m.setZero();
    e[0](0, 0) = 1.0;
    e[1](1, 1) = 1.0;
    e[2](2, 2) = 1.0;
    e[3](1, 2) = e[3](2, 1) = r;
    e[4](0, 2) = e[4](2, 0) = r;
    e[5](0, 1) = e[5](1, 0) = r;
    return e;
  }();
  return basis;
}

/// Frobenius coordinates of a symmetric matrix in the E_c basis.
inline Eigen::Matrix<double, 6, 1> sym_to_vec(const Mat3& m) {
  const double s = std::sqrt(2.0);
  Eigen::Matrix<double, 6, 1> v;
  v << m(0, 0), m(1, 1), m(2, 2), s * 0.5 * (m(1, 2) + m(2, 1)),
      s * 0.5 * (m(0, 2) + m(2, 0)), s * 0.5 * (m(0, 1) + m(1, 0));
  return v;
}

inline Mat3 vec_to_sym(const Eigen::Ref<const Eigen::Matrix<double, 6, 1>>& v) {
  Mat3 m = Mat3::Zero();
  const auto& e = sym_basis();
  for (int c = 0; c < 6; ++c) m += v(c) * e[c];
  return m;
}

inline double frob(const Mat3& a, const Mat3& b) { return (a.array() * b.array()).sum(); }

inline Mat3 sym_part(const Mat3& m) { return 0.5 * (m + m.transpose()); }

}  // namespace hdgplus

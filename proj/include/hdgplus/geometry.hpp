#pragma once

#include "hdgplus/common.hpp"

#include <array>

namespace hdgplus {

/// Affine parametrization x = origin + s*e1 + t*e2 of a triangular face over
/// the reference triangle {s,t >= 0, s+t <= 1}.
struct FaceFrame {
  Vec3 origin = Vec3::Zero();
  Vec3 e1 = Vec3::UnitX();
  Vec3 e2 = Vec3::UnitY();
  Vec3 normal = Vec3::UnitZ();  // outward w.r.t. the owning element
  double area = 0.5;

  Vec3 point(double s, double t) const { return origin + s * e1 + t * e2; }
  Vec3 point(const Vec2& st) const { return point(st(0), st(1)); }
  /// ds = jacobian() * (reference triangle measure)
  double jacobian() const { return 2.0 * area; }
};

/// Tetrahedron with the affine map F(xh) = v0 + B xh from the reference
/// element {x,y,z > 0, x+y+z < 1}. Local face i is opposite vertex i.
class TetGeometry {
 public:
  TetGeometry() = default;
  explicit TetGeometry(const std::array<Vec3, 4>& vertices);

  static TetGeometry reference();

  const std::array<Vec3, 4>& vertices() const { return v_; }
  const Mat3& B() const { return B_; }
  const Mat3& B_inv() const { return B_inv_; }
  double J() const { return J_; }
  double volume() const { return std::abs(J_) / 6.0; }

  Vec3 to_physical(const Vec3& xh) const { return v_[0] + B_ * xh; }
  Vec3 to_reference(const Vec3& x) const { return B_inv_ * (x - v_[0]); }

  /// Longest edge.
  double diameter() const;
  /// 3 |K| / |dK|.
  double inradius() const;

  /// Face i parametrized with its vertices taken in ascending local order.
  FaceFrame face(int i) const;
  /// Face i parametrized by the given vertex order (local vertex indices).
  FaceFrame face(int i, const std::array<int, 3>& local_order) const;

  /// Local vertex indices of face i in ascending order.
  static std::array<int, 3> face_vertices(int i);

 private:
  std::array<Vec3, 4> v_{};
  Mat3 B_ = Mat3::Identity();
  Mat3 B_inv_ = Mat3::Identity();
  double J_ = 1.0;
};

}  // namespace hdgplus

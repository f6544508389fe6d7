#include "hdgplus/geometry.hpp"

#include <algorithm>

namespace hdgplus {

TetGeometry::TetGeometry(const std::array<Vec3, 4>& vertices) : v_(vertices) {
  B_.col(0) = v_[1] - v_[0];
  B_.col(1) = v_[2] - v_[0];
  B_.col(2) = v_[3] - v_[0];
  J_ = B_.determinant();
  const double scale = std::pow(B_.norm(), 3);
  if (!(std::abs(J_) > 1e-14 * scale)) throw NumericalError("degenerate tetrahedron (det B = " + std::to_string(J_) + ")");
  B_inv_ = B_.inverse();
}

TetGeometry TetGeometry::reference() {
  return TetGeometry({Vec3(0, 0, 0), Vec3(1, 0, 0), Vec3(0, 1, 0), Vec3(0, 0, 1)});
}

double TetGeometry::diameter() const {
  double h = 0.0;
  for (int i = 0; i < 4; ++i)
    for (int j = i + 1; j < 4; ++j) h = std::max(h, (v_[i] - v_[j]).norm());
  return h;
}

double TetGeometry::inradius() const {
  double surface = 0.0;
  for (int i = 0; i < 4; ++i) surface += face(i).area;
  return 3.0 * volume() / surface;
}

std::array<int, 3> TetGeometry::face_vertices(int i) {
  std::array<int, 3> out{};
  int n = 0;
  for (int j = 0; j < 4; ++j)
    if (j != i) out[n++] = j;
  return out;
}

FaceFrame TetGeometry::face(int i) const { return face(i, face_vertices(i)); }

FaceFrame TetGeometry::face(int i, const std::array<int, 3>& order) const {
  FaceFrame f;
  f.origin = v_[order[0]];
  f.e1 = v_[order[1]] - f.origin;
  f.e2 = v_[order[2]] - f.origin;
  const Vec3 c = f.e1.cross(f.e2);
  f.area = 0.5 * c.norm();
  f.normal = c / c.norm();
  if (f.normal.dot(v_[i] - f.origin) > 0) f.normal = -f.normal;
  return f;
}

}  // namespace hdgplus

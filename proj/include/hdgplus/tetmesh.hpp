#pragma once

#include "hdgplus/common.hpp"
#include "hdgplus/geometry.hpp"

#include <json.hpp>

#include <array>
#include <string>
#include <vector>

namespace hdgplus {

/// Global face keyed by its sorted vertex triple. The left element is the one
/// that first referenced the face; `right` is -1 on the boundary.
struct MeshFace {
  std::array<int, 3> vertices{};  // ascending global ids
  int left = -1, right = -1;
  int left_local = -1, right_local = -1;  // local face index in each element
  int tag = 0;                            // boundary tag, 0 for interior faces

  bool boundary() const { return right < 0; }
};

/**
 * @brief Tetrahedral mesh with face topology.
 *
 * Tets are stored with positive orientation. Local face i of a tet is the one
 * opposite local vertex i. Immutable once built.
 */
class TetMesh {
 public:
  TetMesh() = default;
  /// Builds the face topology. Negatively oriented tets are reordered;
  /// `boundary_tags` maps sorted boundary triples to tags (default 1).
  TetMesh(std::vector<Vec3> vertices, std::vector<std::array<int, 4>> tets,
          const std::vector<std::pair<std::array<int, 3>, int>>& boundary_tags = {});

  const std::vector<Vec3>& vertices() const { return vertices_; }
  const std::vector<std::array<int, 4>>& tets() const { return tets_; }
  const std::vector<MeshFace>& faces() const { return faces_; }
  /// Global face id of local face i of element e.
  int element_face(int e, int i) const { return tet_faces_[e][i]; }

  int num_elements() const { return static_cast<int>(tets_.size()); }
  int num_faces() const { return static_cast<int>(faces_.size()); }
  int num_boundary_faces() const;

  TetGeometry geometry(int e) const;
  /// Frame of a global face built from its sorted vertex triple, normal
  /// pointing out of the left element.
  FaceFrame face_frame(int f) const;

  double volume() const;
  double h_max() const;
  /// max h_K / rho_K
  double shape_constant() const;

 private:
  std::vector<Vec3> vertices_;
  std::vector<std::array<int, 4>> tets_;
  std::vector<MeshFace> faces_;
  std::vector<std::array<int, 4>> tet_faces_;
};

/// Affine element data for F: K^ -> K.
struct AffineMap {
  Mat3 B, B_inv;
  double J = 1.0;
  std::array<double, 4> a{};  // area(F_i) / area(F^_i)
  double h = 0.0, rho = 0.0;
  std::array<Vec3, 4> normals{};  // outward unit normals
};

std::vector<AffineMap> affine_maps(const TetMesh& mesh);

/// n^3 cubes over the box [lo, hi], each split into six tets around the main
/// diagonal (Kuhn subdivision). All boundary faces get tag 1.
TetMesh structured_cube(int n, const Vec3& lo = Vec3::Zero(), const Vec3& hi = Vec3::Ones());

/// Gmsh MSH 2.2 ASCII. Tets (type 4) form the mesh, triangles (type 2) carry
/// boundary tags via their physical group; points and lines are skipped.
TetMesh load_msh(const std::string& path);
void write_msh(const TetMesh& mesh, const std::string& path);

/// Counts, volume, h_max, shape constant.
nlohmann::json mesh_summary(const TetMesh& mesh);

}  // namespace hdgplus

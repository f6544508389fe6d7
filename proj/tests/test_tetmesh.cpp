#include "hdgplus/polyspaces.hpp"
#include "hdgplus/tetmesh.hpp"

#include <gtest/gtest.h>

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <set>

using namespace hdgplus;

namespace {

std::string temp_path(const std::string& name) {
  return (std::filesystem::temp_directory_path() / ("hdgplus_test_" + name)).string();
}

void write_text(const std::string& path, const std::string& text) { std::ofstream(path) << text; }

// Oracle: count faces by listing every element face and deduplicating.
std::pair<int, int> brute_force_faces(const TetMesh& m) {
  std::vector<std::array<int, 3>> all;
  for (const auto& t : m.tets())
    for (int i = 0; i < 4; ++i) {
      std::array<int, 3> f;
      int n = 0;
      for (int j = 0; j < 4; ++j)
        if (j != i) f[n++] = t[j];
      std::sort(f.begin(), f.end());
      all.push_back(f);
    }
  std::sort(all.begin(), all.end());
  int faces = 0, boundary = 0;
  for (std::size_t i = 0; i < all.size();) {
    std::size_t j = i;
    while (j < all.size() && all[j] == all[i]) ++j;
    ++faces;
    if (j - i == 1) ++boundary;
    i = j;
  }
  return {faces, boundary};
}

}  // namespace

TEST(StructuredCube, SingleCubeCounts) {
  const TetMesh m = structured_cube(1);
  EXPECT_EQ(m.num_elements(), 6);
  EXPECT_EQ(m.num_faces(), 18);
  EXPECT_EQ(m.num_boundary_faces(), 12);
  const auto [faces, boundary] = brute_force_faces(m);
  EXPECT_EQ(faces, m.num_faces());
  EXPECT_EQ(boundary, m.num_boundary_faces());
  EXPECT_NEAR(m.volume(), 1.0, 1e-14);
  for (int e = 0; e < 6; ++e) EXPECT_NEAR(m.geometry(e).diameter(), std::sqrt(3.0), 1e-14);
}

TEST(StructuredCube, RefinedCountsAndVolume) {
  for (int n : {2, 3}) {
    const TetMesh m = structured_cube(n);
    EXPECT_EQ(m.num_elements(), 6 * n * n * n);
    EXPECT_NEAR(m.volume(), 1.0, 1e-13);
    const auto [faces, boundary] = brute_force_faces(m);
    EXPECT_EQ(faces, m.num_faces());
    EXPECT_EQ(boundary, m.num_boundary_faces());
  }
  EXPECT_THROW(structured_cube(0), InvalidArgument);
}

TEST(StructuredCube, ShapeConstantRefinementIndependent) {
  const double c1 = structured_cube(1).shape_constant();
  EXPECT_NEAR(structured_cube(2).shape_constant(), c1, 1e-12);
  EXPECT_NEAR(structured_cube(4).shape_constant(), c1, 1e-12);
}

TEST(TetMeshTopology, Invariants) {
  const TetMesh m = structured_cube(2, Vec3(-1, 0, 2), Vec3(1, 0.5, 3));
  std::vector<int> refs(m.num_faces(), 0);
  for (int e = 0; e < m.num_elements(); ++e) {
    EXPECT_GT(m.geometry(e).J(), 0);
    for (int i = 0; i < 4; ++i) {
      const int f = m.element_face(e, i);
      ++refs[f];
      // face vertex set matches the element's local face
      std::array<int, 3> v;
      const auto lv = TetGeometry::face_vertices(i);
      for (int j = 0; j < 3; ++j) v[j] = m.tets()[e][lv[j]];
      std::sort(v.begin(), v.end());
      EXPECT_EQ(v, m.faces()[f].vertices);
    }
  }
  for (int f = 0; f < m.num_faces(); ++f) EXPECT_EQ(refs[f], m.faces()[f].boundary() ? 1 : 2);
}

TEST(TetMeshTopology, NormalsOpposeAcrossInteriorFaces) {
  const TetMesh m = structured_cube(2);
  for (const auto& f : m.faces()) {
    if (f.boundary()) continue;
    const Vec3 nl = m.geometry(f.left).face(f.left_local).normal;
    const Vec3 nr = m.geometry(f.right).face(f.right_local).normal;
    EXPECT_NEAR((nl + nr).norm(), 0.0, 1e-14);
  }
}

TEST(TetMeshTopology, SharedFaceQuadraturePointsAgree) {
  // Both sides evaluate at the points of the global face frame, so their
  // reference-element coordinates must map back to the same physical point.
  const TetMesh m = structured_cube(2);
  const auto q = quad_tri(5);
  for (int f = 0; f < m.num_faces(); ++f) {
    const auto& mf = m.faces()[f];
    if (mf.boundary()) continue;
    const FaceFrame fr = m.face_frame(f);
    const TetGeometry gl = m.geometry(mf.left), gr = m.geometry(mf.right);
    for (const auto& st : q.points) {
      const Vec3 x = fr.point(st);
      EXPECT_LT((gl.to_physical(gl.to_reference(x)) - gr.to_physical(gr.to_reference(x))).norm(), 1e-13);
      // the point lies on the local face of both elements (zero barycentric)
      const Vec3 xl = gl.to_reference(x);
      const double bl = mf.left_local == 0 ? 1 - xl.sum() : xl(mf.left_local - 1);
      EXPECT_NEAR(bl, 0.0, 1e-13);
    }
    EXPECT_NEAR(fr.normal.dot(gl.face(mf.left_local).normal), 1.0, 1e-14);
  }
}

TEST(AffineMaps, ReferenceAndScaled) {
  const double h = 0.3;
  const TetMesh ref({Vec3(0, 0, 0), Vec3(1, 0, 0), Vec3(0, 1, 0), Vec3(0, 0, 1)}, {{0, 1, 2, 3}});
  const TetMesh scaled({Vec3(0, 0, 0), Vec3(h, 0, 0), Vec3(0, h, 0), Vec3(0, 0, h)}, {{0, 1, 2, 3}});
  const auto mr = affine_maps(ref)[0];
  EXPECT_LT((mr.B - Mat3::Identity()).norm(), 1e-15);
  EXPECT_NEAR(mr.J, 1.0, 1e-15);
  for (double a : mr.a) EXPECT_NEAR(a, 1.0, 1e-14);
  const auto ms = affine_maps(scaled)[0];
  EXPECT_NEAR(ms.J, h * h * h, 1e-15);
  for (double a : ms.a) EXPECT_NEAR(a, h * h, 1e-14);
}

TEST(AffineMaps, JacobianAndAreaInvariants) {
  const TetMesh m = structured_cube(2, Vec3::Zero(), Vec3(1, 2, 3));
  const auto maps = affine_maps(m);
  const TetGeometry ref = TetGeometry::reference();
  for (int e = 0; e < m.num_elements(); ++e) {
    const TetGeometry g = m.geometry(e);
    EXPECT_NEAR(std::abs(maps[e].J), 6 * g.volume(), 1e-12 * std::abs(maps[e].J));
    for (int i = 0; i < 4; ++i) EXPECT_NEAR(maps[e].a[i], g.face(i).area / ref.face(i).area, 1e-12 * maps[e].a[i]);
  }
}

TEST(Msh, SingleTetAndOrientationFix) {
  const std::string p = temp_path("single.msh");
  write_text(p,
             "$MeshFormat\n2.2 0 8\n$EndMeshFormat\n$Nodes\n4\n1 0 0 0\n2 1 0 0\n3 0 1 0\n4 0 0 1\n$EndNodes\n"
             "$Elements\n1\n1 4 2 1 1 1 3 2 4\n$EndElements\n");
  const TetMesh m = load_msh(p);
  EXPECT_EQ(m.num_elements(), 1);
  EXPECT_EQ(m.num_boundary_faces(), 4);
  EXPECT_NEAR(m.volume(), 1.0 / 6.0, 1e-15);
  EXPECT_GT(m.geometry(0).J(), 0);
  for (const auto& f : m.faces()) EXPECT_EQ(f.tag, 1);
}

TEST(Msh, PhysicalTagsAndRoundTrip) {
  const TetMesh m = structured_cube(2);
  const std::string p = temp_path("cube2.msh");
  write_msh(m, p);
  const TetMesh r = load_msh(p);
  EXPECT_EQ(r.tets(), m.tets());
  ASSERT_EQ(r.vertices().size(), m.vertices().size());
  for (std::size_t i = 0; i < m.vertices().size(); ++i) EXPECT_EQ(r.vertices()[i], m.vertices()[i]);
  ASSERT_EQ(r.num_faces(), m.num_faces());
  for (int f = 0; f < m.num_faces(); ++f) EXPECT_EQ(r.faces()[f].vertices, m.faces()[f].vertices);

  const std::string q = temp_path("tagged.msh");
  write_text(q,
             "$MeshFormat\n2.2 0 8\n$EndMeshFormat\n$PhysicalNames\n1\n2 7 \"wall\"\n$EndPhysicalNames\n"
             "$Nodes\n4\n1 0 0 0\n2 1 0 0\n3 0 1 0\n4 0 0 1\n$EndNodes\n"
             "$Elements\n3\n1 15 2 0 0 1\n2 2 2 7 3 1 2 3\n3 4 2 1 1 1 2 3 4\n$EndElements\n");
  const TetMesh t = load_msh(q);
  int tagged = 0;
  for (const auto& f : t.faces()) tagged += f.tag == 7;
  EXPECT_EQ(tagged, 1);
}

TEST(Msh, Errors) {
  const std::string p = temp_path("bad.msh");
  write_text(p, "$MeshFormat\n2.2 0 8\n$EndMeshFormat\n$Nodes\n2\n1 0 0 0\n2 1 zero 0\n$EndNodes\n");
  try {
    load_msh(p);
    FAIL() << "expected ParseError";
  } catch (const ParseError& e) {
    EXPECT_EQ(e.line(), 7);
  }
  write_text(p,
             "$MeshFormat\n2.2 0 8\n$EndMeshFormat\n$Nodes\n8\n1 0 0 0\n2 1 0 0\n3 1 1 0\n4 0 1 0\n5 0 0 1\n6 1 0 1\n7 1 1 1\n8 0 1 1\n"
             "$EndNodes\n$Elements\n1\n1 5 2 1 1 1 2 3 4 5 6 7 8\n$EndElements\n");
  EXPECT_THROW(load_msh(p), Unsupported);
  EXPECT_THROW(load_msh(temp_path("does_not_exist.msh")), InvalidArgument);
}

TEST(MeshSummary, Fields) {
  const auto j = mesh_summary(structured_cube(2));
  EXPECT_EQ(j["elements"], 48);
  EXPECT_NEAR(j["volume"].get<double>(), 1.0, 1e-13);
  EXPECT_NEAR(j["h_max"].get<double>(), std::sqrt(3.0) / 2, 1e-14);
  EXPECT_TRUE(j.contains("shape_constant"));
}

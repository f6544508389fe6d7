#include "hdgplus/tetmesh.hpp"

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <unordered_map>

namespace hdgplus {

namespace {

std::array<int, 3> sorted(std::array<int, 3> v) {
  std::sort(v.begin(), v.end());
  return v;
}

double signed_volume(const std::vector<Vec3>& x, const std::array<int, 4>& t) {
  return (x[t[1]] - x[t[0]]).cross(x[t[2]] - x[t[0]]).dot(x[t[3]] - x[t[0]]) / 6.0;
}

}  // namespace

TetMesh::TetMesh(std::vector<Vec3> vertices, std::vector<std::array<int, 4>> tets,
                 const std::vector<std::pair<std::array<int, 3>, int>>& boundary_tags)
    : vertices_(std::move(vertices)), tets_(std::move(tets)) {
  const int nv = static_cast<int>(vertices_.size());
  std::map<std::array<int, 3>, int> index;
  tet_faces_.resize(tets_.size());
  for (std::size_t e = 0; e < tets_.size(); ++e) {
    auto& t = tets_[e];
    for (int v : t)
      if (v < 0 || v >= nv) throw InvalidArgument("element " + std::to_string(e) + " references a missing vertex");
    if (signed_volume(vertices_, t) < 0) std::swap(t[2], t[3]);
    double scale = 0;
    for (int i = 1; i < 4; ++i) scale = std::max(scale, (vertices_[t[i]] - vertices_[t[0]]).norm());
    if (!(signed_volume(vertices_, t) > 1e-14 * scale * scale * scale))
      throw NumericalError("degenerate element " + std::to_string(e));
    for (int i = 0; i < 4; ++i) {
      const auto lv = TetGeometry::face_vertices(i);
      const auto key = sorted({t[lv[0]], t[lv[1]], t[lv[2]]});
      auto [it, fresh] = index.emplace(key, static_cast<int>(faces_.size()));
      if (fresh) {
        MeshFace f;
        f.vertices = key;
        f.left = static_cast<int>(e);
        f.left_local = i;
        faces_.push_back(f);
      } else {
        MeshFace& f = faces_[it->second];
        if (f.right >= 0) throw InvalidArgument("face shared by more than two elements");
        f.right = static_cast<int>(e);
        f.right_local = i;
      }
      tet_faces_[e][i] = it->second;
    }
  }
  for (auto& f : faces_) f.tag = f.boundary() ? 1 : 0;
  for (const auto& [tri, tag] : boundary_tags) {
    auto it = index.find(sorted(tri));
    if (it != index.end() && faces_[it->second].boundary()) faces_[it->second].tag = tag;
  }
}

int TetMesh::num_boundary_faces() const {
  return static_cast<int>(std::count_if(faces_.begin(), faces_.end(), [](const MeshFace& f) { return f.boundary(); }));
}

TetGeometry TetMesh::geometry(int e) const {
  const auto& t = tets_[e];
  try {
    return TetGeometry({vertices_[t[0]], vertices_[t[1]], vertices_[t[2]], vertices_[t[3]]});
  } catch (const NumericalError&) {
    throw NumericalError("degenerate element " + std::to_string(e));
  }
}

FaceFrame TetMesh::face_frame(int f) const {
  const MeshFace& mf = faces_[f];
  FaceFrame fr;
  fr.origin = vertices_[mf.vertices[0]];
  fr.e1 = vertices_[mf.vertices[1]] - fr.origin;
  fr.e2 = vertices_[mf.vertices[2]] - fr.origin;
  const Vec3 c = fr.e1.cross(fr.e2);
  fr.area = 0.5 * c.norm();
  fr.normal = c / c.norm();
  const auto& t = tets_[mf.left];
  if (fr.normal.dot(vertices_[t[mf.left_local]] - fr.origin) > 0) fr.normal = -fr.normal;
  return fr;
}

double TetMesh::volume() const {
  double v = 0;
  for (const auto& t : tets_) v += signed_volume(vertices_, t);
  return v;
}

double TetMesh::h_max() const {
  double h = 0;
  for (int e = 0; e < num_elements(); ++e) h = std::max(h, geometry(e).diameter());
  return h;
}

double TetMesh::shape_constant() const {
  double c = 0;
  for (int e = 0; e < num_elements(); ++e) {
    const TetGeometry g = geometry(e);
    c = std::max(c, g.diameter() / g.inradius());
  }
  return c;
}

std::vector<AffineMap> affine_maps(const TetMesh& mesh) {
  const TetGeometry ref = TetGeometry::reference();
  std::vector<AffineMap> maps(mesh.num_elements());
  for (int e = 0; e < mesh.num_elements(); ++e) {
    const TetGeometry g = mesh.geometry(e);
    AffineMap& m = maps[e];
    m.B = g.B();
    m.B_inv = g.B_inv();
    m.J = g.J();
    m.h = g.diameter();
    m.rho = g.inradius();
    for (int i = 0; i < 4; ++i) {
      const FaceFrame f = g.face(i);
      m.a[i] = f.area / ref.face(i).area;
      m.normals[i] = f.normal;
    }
  }
  return maps;
}

TetMesh structured_cube(int n, const Vec3& lo, const Vec3& hi) {
  if (n < 1) throw InvalidArgument("structured_cube needs n >= 1");
  if (!((hi - lo).minCoeff() > 0)) throw InvalidArgument("structured_cube needs hi > lo componentwise");
  const int m = n + 1;
  auto id = [m](int i, int j, int k) { return i + m * (j + m * k); };
  std::vector<Vec3> x;
  x.reserve(m * m * m);
  for (int k = 0; k < m; ++k)
    for (int j = 0; j < m; ++j)
      for (int i = 0; i < m; ++i)
        x.emplace_back(lo(0) + (hi(0) - lo(0)) * i / n, lo(1) + (hi(1) - lo(1)) * j / n, lo(2) + (hi(2) - lo(2)) * k / n);
  static const int perms[6][3] = {{0, 1, 2}, {0, 2, 1}, {1, 0, 2}, {1, 2, 0}, {2, 0, 1}, {2, 1, 0}};
  std::vector<std::array<int, 4>> tets;
  tets.reserve(6 * n * n * n);
  for (int k = 0; k < n; ++k)
    for (int j = 0; j < n; ++j)
      for (int i = 0; i < n; ++i)
        for (const auto& p : perms) {
          std::array<int, 3> c{i, j, k};
          std::array<int, 4> t{};
          t[0] = id(c[0], c[1], c[2]);
          for (int s = 0; s < 3; ++s) {
            ++c[p[s]];
            t[s + 1] = id(c[0], c[1], c[2]);
          }
          tets.push_back(t);
        }
  return TetMesh(std::move(x), std::move(tets));
}

// ---------------------------------------------------------------------------
// Gmsh 2.2 ASCII
// ---------------------------------------------------------------------------

namespace {

struct LineReader {
  std::ifstream in;
  long line = 0;
  bool next(std::string& s) {
    if (!std::getline(in, s)) return false;
    ++line;
    if (!s.empty() && s.back() == '\r') s.pop_back();
    return true;
  }
  std::string expect_next(const char* what) {
    std::string s;
    if (!next(s)) throw ParseError(std::string("unexpected end of file, expected ") + what, line + 1);
    return s;
  }
};

}  // namespace

TetMesh load_msh(const std::string& path) {
  LineReader r;
  r.in.open(path);
  if (!r.in) throw InvalidArgument("cannot open mesh file '" + path + "'");
  std::unordered_map<long, int> node_index;
  std::vector<Vec3> x;
  std::vector<std::array<long, 4>> raw_tets;
  std::vector<std::pair<std::array<long, 3>, int>> raw_tris;
  bool have_format = false, have_nodes = false, have_elements = false;
  std::string s;
  while (r.next(s)) {
    if (s.empty()) continue;
    if (s == "$MeshFormat") {
      std::istringstream ls(r.expect_next("format line"));
      double version;
      int filetype, dsize;
      if (!(ls >> version >> filetype >> dsize)) throw ParseError("malformed $MeshFormat line", r.line);
      if (version < 2.0 || version >= 3.0) throw ParseError("unsupported MSH version " + std::to_string(version) + " (need 2.2)", r.line);
      if (filetype != 0) throw ParseError("binary MSH files are not supported", r.line);
      if (r.expect_next("$EndMeshFormat") != "$EndMeshFormat") throw ParseError("expected $EndMeshFormat", r.line);
      have_format = true;
    } else if (s == "$Nodes") {
      long count;
      if (!(std::istringstream(r.expect_next("node count")) >> count) || count < 0) throw ParseError("malformed node count", r.line);
      for (long i = 0; i < count; ++i) {
        std::istringstream ls(r.expect_next("node"));
        long tag;
        double a, b, c;
        if (!(ls >> tag >> a >> b >> c)) throw ParseError("malformed node line", r.line);
        if (!node_index.emplace(tag, static_cast<int>(x.size())).second) throw ParseError("duplicate node id " + std::to_string(tag), r.line);
        x.emplace_back(a, b, c);
      }
      if (r.expect_next("$EndNodes") != "$EndNodes") throw ParseError("expected $EndNodes", r.line);
      have_nodes = true;
    } else if (s == "$Elements") {
      long count;
      if (!(std::istringstream(r.expect_next("element count")) >> count) || count < 0) throw ParseError("malformed element count", r.line);
      for (long i = 0; i < count; ++i) {
        std::istringstream ls(r.expect_next("element"));
        long id;
        int type, ntags;
        if (!(ls >> id >> type >> ntags) || ntags < 0) throw ParseError("malformed element line", r.line);
        std::vector<long> tags(ntags);
        for (auto& t : tags)
          if (!(ls >> t)) throw ParseError("malformed element tags", r.line);
        const int nn = type == 4 ? 4 : type == 2 ? 3 : type == 1 ? 2 : type == 15 ? 1 : -1;
        if (nn < 0) throw Unsupported("unsupported element type " + std::to_string(type) + " at line " + std::to_string(r.line));
        std::array<long, 4> v{};
        for (int j = 0; j < nn; ++j)
          if (!(ls >> v[j])) throw ParseError("element has too few nodes", r.line);
        if (type == 4) raw_tets.push_back(v);
        if (type == 2) raw_tris.push_back({{v[0], v[1], v[2]}, ntags > 0 ? static_cast<int>(tags[0]) : 1});
      }
      if (r.expect_next("$EndElements") != "$EndElements") throw ParseError("expected $EndElements", r.line);
      have_elements = true;
    } else if (s[0] == '$') {
      const std::string end = "$End" + s.substr(1);
      std::string t;
      do {
        t = r.expect_next(end.c_str());
      } while (t != end);
    } else {
      throw ParseError("unexpected content '" + s + "'", r.line);
    }
  }
  if (!have_format) throw ParseError("missing $MeshFormat section", r.line);
  if (!have_nodes || !have_elements) throw ParseError("missing $Nodes or $Elements section", r.line);
  if (raw_tets.empty()) throw InvalidArgument("mesh file contains no tetrahedra");
  auto lookup = [&](long tag) {
    auto it = node_index.find(tag);
    if (it == node_index.end()) throw InvalidArgument("element references unknown node " + std::to_string(tag));
    return it->second;
  };
  std::vector<std::array<int, 4>> tets;
  for (const auto& t : raw_tets) tets.push_back({lookup(t[0]), lookup(t[1]), lookup(t[2]), lookup(t[3])});
  std::vector<std::pair<std::array<int, 3>, int>> tags;
  for (const auto& [t, tag] : raw_tris) tags.push_back({{lookup(t[0]), lookup(t[1]), lookup(t[2])}, tag});
  return TetMesh(std::move(x), std::move(tets), tags);
}

void write_msh(const TetMesh& mesh, const std::string& path) {
  const std::string tmp = path + ".tmp";
  {
    std::ofstream out(tmp);
    if (!out) throw InvalidArgument("cannot write mesh file '" + path + "'");
    out.precision(17);
    out << "$MeshFormat\n2.2 0 8\n$EndMeshFormat\n$Nodes\n" << mesh.vertices().size() << "\n";
    for (std::size_t i = 0; i < mesh.vertices().size(); ++i) {
      const Vec3& v = mesh.vertices()[i];
      out << i + 1 << " " << v(0) << " " << v(1) << " " << v(2) << "\n";
    }
    const int nb = mesh.num_boundary_faces();
    out << "$EndNodes\n$Elements\n" << nb + mesh.num_elements() << "\n";
    long id = 1;
    for (const auto& f : mesh.faces())
      if (f.boundary()) {
        // Orient the triangle outward from its element.
        const auto& t = mesh.tets()[f.left];
        const auto lv = TetGeometry::face_vertices(f.left_local);
        std::array<int, 3> v{t[lv[0]], t[lv[1]], t[lv[2]]};
        if (f.left_local % 2 == 1) std::swap(v[1], v[2]);
        out << id++ << " 2 2 " << f.tag << " " << f.tag << " " << v[0] + 1 << " " << v[1] + 1 << " " << v[2] + 1 << "\n";
      }
    for (const auto& t : mesh.tets()) out << id++ << " 4 2 1 1 " << t[0] + 1 << " " << t[1] + 1 << " " << t[2] + 1 << " " << t[3] + 1 << "\n";
    out << "$EndElements\n";
    if (!out) throw InvalidArgument("failed writing mesh file '" + path + "'");
  }
  std::filesystem::rename(tmp, path);
}

nlohmann::json mesh_summary(const TetMesh& mesh) {
  return {{"vertices", mesh.vertices().size()},
          {"elements", mesh.num_elements()},
          {"faces", mesh.num_faces()},
          {"boundary_faces", mesh.num_boundary_faces()},
          {"interior_faces", mesh.num_faces() - mesh.num_boundary_faces()},
          {"volume", mesh.volume()},
          {"h_max", mesh.h_max()},
          {"shape_constant", mesh.shape_constant()}};
}

}  // namespace hdgplus

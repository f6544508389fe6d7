#include "hdgplus/vtu.hpp"

#include <cstdio>
#include <sstream>

namespace hdgplus {

namespace {

void put(std::ostringstream& os, double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.10e", v);
  os << buf;
}

}  // namespace

std::string vtu_document(const TetMesh& mesh, const std::vector<CellField>& fields) {
  const int ne = mesh.num_elements();
  for (const auto& f : fields)
    if (f.components < 1 || f.values.size() != static_cast<std::size_t>(ne * f.components))
      throw InvalidArgument("cell field '" + f.name + "' has " + std::to_string(f.values.size()) + " values for " +
                            std::to_string(ne) + " elements");
  std::ostringstream os;
  os << "<?xml version=\"1.0\"?>\n"
     << "<VTKFile type=\"UnstructuredGrid\" version=\"0.1\" byte_order=\"LittleEndian\">\n"
     << "  <UnstructuredGrid>\n"
     << "    <Piece NumberOfPoints=\"" << mesh.vertices().size() << "\" NumberOfCells=\"" << ne << "\">\n"
     << "      <Points>\n        <DataArray type=\"Float64\" NumberOfComponents=\"3\" format=\"ascii\">\n";
  for (const Vec3& v : mesh.vertices()) {
    os << "          ";
    for (int d = 0; d < 3; ++d) {
      put(os, v(d));
      os << (d < 2 ? " " : "\n");
    }
  }
  os << "        </DataArray>\n      </Points>\n      <Cells>\n"
     << "        <DataArray type=\"Int64\" Name=\"connectivity\" format=\"ascii\">\n";
  for (const auto& t : mesh.tets()) os << "          " << t[0] << ' ' << t[1] << ' ' << t[2] << ' ' << t[3] << '\n';
  os << "        </DataArray>\n        <DataArray type=\"Int64\" Name=\"offsets\" format=\"ascii\">\n";
  for (int e = 0; e < ne; ++e) os << "          " << 4 * (e + 1) << '\n';
  os << "        </DataArray>\n        <DataArray type=\"UInt8\" Name=\"types\" format=\"ascii\">\n";
  for (int e = 0; e < ne; ++e) os << "          10\n";
  os << "        </DataArray>\n      </Cells>\n      <CellData>\n";
  for (const auto& f : fields) {
    os << "        <DataArray type=\"Float64\" Name=\"" << f.name << "\" NumberOfComponents=\"" << f.components
       << "\" format=\"ascii\">\n";
    for (int e = 0; e < ne; ++e) {
      os << "          ";
      for (int c = 0; c < f.components; ++c) {
        put(os, f.values[e * f.components + c]);
        os << (c + 1 < f.components ? " " : "\n");
      }
    }
    os << "        </DataArray>\n";
  }
  os << "      </CellData>\n    </Piece>\n  </UnstructuredGrid>\n</VTKFile>\n";
  return os.str();
}

std::vector<CellField> centroid_fields(const HdgSetup& setup, const std::vector<VecX>& sigma, const std::vector<VecX>& u) {
  const int ne = setup.mesh().num_elements();
  if (static_cast<int>(sigma.size()) != ne || static_cast<int>(u.size()) != ne)
    throw InvalidArgument("centroid_fields: coefficient vectors do not match the mesh");
  CellField fu{"u", 3, {}}, fs{"sigma", 9, {}};
  for (int e = 0; e < ne; ++e) {
    const Vec3 c = setup.geometry(e).to_physical(Vec3::Constant(0.25));
    const Vec3 uv = setup.eval_u(e, u[e], c);
    const Mat3 sv = setup.eval_sigma(e, sigma[e], c);
    for (int d = 0; d < 3; ++d) fu.values.push_back(uv(d));
    for (int i = 0; i < 3; ++i)
      for (int j = 0; j < 3; ++j) fs.values.push_back(sv(i, j));
  }
  return {fu, fs};
}

}  // namespace hdgplus

#pragma once

/// ASCII VTK XML unstructured-grid output of per-element fields.

#include "hdgplus/hdgcore.hpp"
#include "hdgplus/tetmesh.hpp"

#include <string>
#include <vector>

namespace hdgplus {

struct CellField {
  std::string name;
  int components = 1;
  std::vector<double> values;  // element-major, `components` per element
};

/// VTU document with tetrahedral cells and the given cell data.
std::string vtu_document(const TetMesh& mesh, const std::vector<CellField>& fields);

/// Element-centroid values of u (3 components) and sigma (9 components).
std::vector<CellField> centroid_fields(const HdgSetup& setup, const std::vector<VecX>& sigma, const std::vector<VecX>& u);

}  // namespace hdgplus

#pragma once

#include <functional>
#include <string>
#include <vector>

#include "symsurf/common.hpp"

namespace symsurf {

struct TriMesh {
    std::vector<Vec3> vertices;
    std::vector<Eigen::Vector3i> faces;

    bool empty() const { return faces.empty(); }
};

using ScalarField = std::function<Scalar(const Vec3&)>;

// Marching-cubes triangulation of the zero-level set on a regular grid with
// `resolution` cells per axis. Linear interpolation along cell edges. A field
// without a zero crossing inside the bounds yields an empty mesh.
TriMesh extract_mesh(const ScalarField& field, int resolution, const Vec3& lo, const Vec3& hi);

void write_obj(const std::string& path, const TriMesh& mesh);

}  // namespace symsurf

#include "symsurf/mesh.hpp"

#include <array>
#include <cstdint>
#include <fstream>
#include <unordered_map>

namespace symsurf {

#include "mesh_tables.inc"

namespace {

// Cube corner offsets in the conventional ordering.
const int kCorner[8][3] = {{0, 0, 0}, {1, 0, 0}, {1, 1, 0}, {0, 1, 0},
                           {0, 0, 1}, {1, 0, 1}, {1, 1, 1}, {0, 1, 1}};
// Edge -> (corner, corner).
const int kEdge[12][2] = {{0, 1}, {1, 2}, {2, 3}, {3, 0}, {4, 5}, {5, 6},
                          {6, 7}, {7, 4}, {0, 4}, {1, 5}, {2, 6}, {3, 7}};

Vec3 interpolate(const Vec3& pa, const Vec3& pb, Scalar va, Scalar vb) {
    Scalar denom = vb - va;
    Scalar t = std::abs(denom) < 1e-30 ? 0.5 : -va / denom;
    t = std::min(1.0, std::max(0.0, t));
    return pa + t * (pb - pa);
}

}  // namespace

TriMesh extract_mesh(const ScalarField& field, int resolution, const Vec3& lo, const Vec3& hi) {
    if (resolution < 1) throw Error("mesh: resolution must be positive");
    const int n = resolution + 1;
    const Vec3 step = (hi - lo) / Scalar(resolution);

    // Sample the grid once; values are reused by the eight cells touching a node.
    std::vector<Scalar> values(std::size_t(n) * n * n);
    auto node = [&](int i, int j, int k) -> std::size_t {
        return (std::size_t(k) * n + j) * n + i;
    };
    for (int k = 0; k < n; ++k) {
        for (int j = 0; j < n; ++j) {
            for (int i = 0; i < n; ++i) {
                Vec3 p = lo + Vec3(i * step.x(), j * step.y(), k * step.z());
                values[node(i, j, k)] = field(p);
            }
        }
    }

    TriMesh mesh;
    // Deduplicate vertices by the grid edge they sit on: (node index, axis).
    std::unordered_map<std::uint64_t, int> edge_vertex;
    auto edge_key = [&](int i, int j, int k, int axis) -> std::uint64_t {
        return (std::uint64_t(node(i, j, k)) << 2) | std::uint64_t(axis);
    };

    for (int k = 0; k < resolution; ++k) {
        for (int j = 0; j < resolution; ++j) {
            for (int i = 0; i < resolution; ++i) {
                Scalar v[8];
                int cube = 0;
                for (int c = 0; c < 8; ++c) {
                    v[c] = values[node(i + kCorner[c][0], j + kCorner[c][1], k + kCorner[c][2])];
                    if (v[c] < 0.0) cube |= 1 << c;
                }
                if (kEdgeTable[cube] == 0) continue;

                int verts[12];
                for (int e = 0; e < 12; ++e) {
                    if (!(kEdgeTable[cube] & (1 << e))) continue;
                    const int* ca = kCorner[kEdge[e][0]];
                    const int* cb = kCorner[kEdge[e][1]];
                    // Identify the grid edge: base node plus the varying axis.
                    int bi = i + std::min(ca[0], cb[0]);
                    int bj = j + std::min(ca[1], cb[1]);
                    int bk = k + std::min(ca[2], cb[2]);
                    int axis = ca[0] != cb[0] ? 0 : (ca[1] != cb[1] ? 1 : 2);
                    std::uint64_t key = edge_key(bi, bj, bk, axis);
                    auto it = edge_vertex.find(key);
                    if (it != edge_vertex.end()) {
                        verts[e] = it->second;
                        continue;
                    }
                    Vec3 pa = lo + Vec3((i + ca[0]) * step.x(), (j + ca[1]) * step.y(),
                                        (k + ca[2]) * step.z());
                    Vec3 pb = lo + Vec3((i + cb[0]) * step.x(), (j + cb[1]) * step.y(),
                                        (k + cb[2]) * step.z());
                    Vec3 p = interpolate(pa, pb, v[kEdge[e][0]], v[kEdge[e][1]]);
                    verts[e] = int(mesh.vertices.size());
                    mesh.vertices.push_back(p);
                    edge_vertex.emplace(key, verts[e]);
                }

                for (int t = 0; kTriTable[cube][t] != -1; t += 3) {
                    mesh.faces.emplace_back(verts[kTriTable[cube][t]],
                                            verts[kTriTable[cube][t + 1]],
                                            verts[kTriTable[cube][t + 2]]);
                }
            }
        }
    }
    return mesh;
}

void write_obj(const std::string& path, const TriMesh& mesh) {
    std::ofstream out(path);
    if (!out) throw Error("mesh: cannot open " + path);
    out.precision(9);
    for (const Vec3& v : mesh.vertices) {
        out << "v " << v.x() << ' ' << v.y() << ' ' << v.z() << '\n';
    }
    for (const auto& f : mesh.faces) {
        out << "f " << f[0] + 1 << ' ' << f[1] + 1 << ' ' << f[2] + 1 << '\n';
    }
    if (!out) throw Error("mesh: write failed for " + path);
}

}  // namespace symsurf

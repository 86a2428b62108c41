#pragma once

#include <string>
#include <vector>

#include "symsurf/camera.hpp"
#include "symsurf/common.hpp"
#include "symsurf/symmetry.hpp"

namespace symsurf {

struct PointCloud {
    std::vector<Vec3> points;
};

// World-to-canonical placement derived from the point cloud: canonical z is
// up, y the extracted long axis, the box is centred at the origin.
struct CanonicalFrame {
    RigidFrame world_to_canonical;
    Vec3 box_min = Vec3::Zero();   // canonical coordinates
    Vec3 box_max = Vec3::Zero();
    Scalar ground_height = 0.0;    // canonical z of the box bottom
    Vec3 plane_normal = Vec3::UnitY();  // symmetry plane, world coordinates
    Scalar plane_offset = 0.0;          // plane: normal . x = offset

    Vec3 semi_axes() const { return 0.5 * (box_max - box_min); }
};

// Keeps the largest radius-linkage component, then prunes points with fewer
// than `min_neighbors` neighbours within `radius` (iterated to a fixpoint so
// the operation is idempotent). Throws if nothing survives.
PointCloud filter_cloud(const PointCloud& cloud, Scalar radius = 0.2, int min_neighbors = 16);

// Normalized mean of the cameras' world-space up axes.
Vec3 estimate_up(const std::vector<Camera>& cameras);

struct Line2d {
    Vec2 direction = Vec2::UnitX();
    Vec2 point = Vec2::Zero();
};

// Max-inlier two-point RANSAC followed by a least-squares refit to the
// inliers. First-found model wins ties.
Line2d ransac_line_2d(const std::vector<Vec2>& points, Scalar inlier_threshold, int iters,
                      Rng& rng);

CanonicalFrame canonical_frame(const PointCloud& cloud, const std::vector<Camera>& cameras,
                               Rng& rng);

// Plain-text round trip of the frame record.
std::string format_frame(const CanonicalFrame& frame);
CanonicalFrame parse_frame(const std::string& text);

}  // namespace symsurf

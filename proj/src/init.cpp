#include "symsurf/init.hpp"

#include <Eigen/Eigenvalues>

#include <algorithm>
#include <cstdint>
#include <numeric>
#include <sstream>
#include <unordered_map>

namespace symsurf {

namespace {

// Uniform-grid neighbour index with cell size equal to the query radius.
class NeighbourGrid {
  public:
    NeighbourGrid(const std::vector<Vec3>& points, Scalar radius)
        : points_(points), radius_(radius) {
        cells_.reserve(points.size());
        for (std::size_t i = 0; i < points.size(); ++i)
            cells_[key(points[i])].push_back(int(i));
    }

    template <typename Fn>
    void for_neighbours(const Vec3& p, Fn&& fn) const {
        Eigen::Vector3i c = cell(p);
        for (int dz = -1; dz <= 1; ++dz) {
            for (int dy = -1; dy <= 1; ++dy) {
                for (int dx = -1; dx <= 1; ++dx) {
                    auto it = cells_.find(pack(c.x() + dx, c.y() + dy, c.z() + dz));
                    if (it == cells_.end()) continue;
                    for (int idx : it->second) {
                        if ((points_[std::size_t(idx)] - p).norm() <= radius_) fn(idx);
                    }
                }
            }
        }
    }

  private:
    Eigen::Vector3i cell(const Vec3& p) const {
        return Eigen::Vector3i(int(std::floor(p.x() / radius_)),
                               int(std::floor(p.y() / radius_)),
                               int(std::floor(p.z() / radius_)));
    }
    static std::uint64_t pack(int x, int y, int z) {
        auto u = [](int v) { return std::uint64_t(std::uint32_t(v + (1 << 20))); };
        return (u(x) << 42) ^ (u(y) << 21) ^ u(z);
    }
    std::uint64_t key(const Vec3& p) const {
        Eigen::Vector3i c = cell(p);
        return pack(c.x(), c.y(), c.z());
    }

    const std::vector<Vec3>& points_;
    Scalar radius_;
    std::unordered_map<std::uint64_t, std::vector<int>> cells_;
};

struct UnionFind {
    std::vector<int> parent;
    explicit UnionFind(int n) : parent(n) { std::iota(parent.begin(), parent.end(), 0); }
    int find(int a) {
        while (parent[a] != a) a = parent[a] = parent[parent[a]];
        return a;
    }
    void unite(int a, int b) { parent[find(a)] = find(b); }
};

}  // namespace

PointCloud filter_cloud(const PointCloud& cloud, Scalar radius, int min_neighbors) {
    if (cloud.points.empty()) throw Error("init: empty point cloud");
    const int n = int(cloud.points.size());
    NeighbourGrid grid(cloud.points, radius);

    UnionFind uf(n);
    for (int i = 0; i < n; ++i)
        grid.for_neighbours(cloud.points[std::size_t(i)], [&](int j) { uf.unite(i, j); });
    std::unordered_map<int, int> sizes;
    for (int i = 0; i < n; ++i) ++sizes[uf.find(i)];
    int best_root = uf.find(0);
    for (const auto& [root, size] : sizes)
        if (size > sizes[best_root]) best_root = root;

    std::vector<Vec3> keep;
    for (int i = 0; i < n; ++i)
        if (uf.find(i) == best_root) keep.push_back(cloud.points[std::size_t(i)]);

    // Neighbour pruning iterated to a fixpoint (counts exclude the point
    // itself), so filtering is idempotent.
    for (;;) {
        NeighbourGrid g(keep, radius);
        std::vector<Vec3> next;
        for (const Vec3& p : keep) {
            int count = -1;  // the query point always finds itself
            g.for_neighbours(p, [&](int) { ++count; });
            if (count >= min_neighbors) next.push_back(p);
        }
        if (next.size() == keep.size()) break;
        keep.swap(next);
        if (keep.empty()) throw Error("init: cloud degenerates under filtering");
    }
    if (keep.empty()) throw Error("init: cloud degenerates under filtering");
    return PointCloud{std::move(keep)};
}

Vec3 estimate_up(const std::vector<Camera>& cameras) {
    if (cameras.empty()) throw Error("init: need at least one camera");
    Vec3 sum = Vec3::Zero();
    // Camera y points down in image coordinates; world up is -R row 1.
    for (const Camera& cam : cameras) sum -= cam.rotation().row(1).transpose();
    Scalar len = sum.norm();
    if (len < 1e-9) throw Error("init: degenerate camera up directions");
    return sum / len;
}

Line2d ransac_line_2d(const std::vector<Vec2>& points, Scalar inlier_threshold, int iters,
                      Rng& rng) {
    const int n = int(points.size());
    if (n < 2) throw Error("init: need at least two points for a line");
    std::uniform_int_distribution<int> pick(0, n - 1);

    int best_count = -1;
    Vec2 best_dir = Vec2::UnitX(), best_point = Vec2::Zero();
    for (int it = 0; it < iters; ++it) {
        int a = pick(rng), b = pick(rng);
        Vec2 d = points[std::size_t(b)] - points[std::size_t(a)];
        Scalar len = d.norm();
        if (len < 1e-12) continue;
        d /= len;
        Vec2 normal(-d.y(), d.x());
        int count = 0;
        for (const Vec2& p : points)
            if (std::abs(normal.dot(p - points[std::size_t(a)])) <= inlier_threshold) ++count;
        if (count > best_count) {
            best_count = count;
            best_dir = d;
            best_point = points[std::size_t(a)];
        }
    }
    if (best_count < 0) throw Error("init: all points coincident");

    // Least-squares refit: principal direction of the inlier covariance.
    Vec2 normal(-best_dir.y(), best_dir.x());
    std::vector<Vec2> inliers;
    for (const Vec2& p : points)
        if (std::abs(normal.dot(p - best_point)) <= inlier_threshold) inliers.push_back(p);
    Vec2 centroid = Vec2::Zero();
    for (const Vec2& p : inliers) centroid += p;
    centroid /= Scalar(inliers.size());
    Eigen::Matrix2d cov = Eigen::Matrix2d::Zero();
    for (const Vec2& p : inliers) {
        Vec2 d = p - centroid;
        cov += d * d.transpose();
    }
    Eigen::SelfAdjointEigenSolver<Eigen::Matrix2d> eig(cov);
    Vec2 refined = eig.eigenvectors().col(1);  // largest eigenvalue
    if (refined.dot(best_dir) < 0.0) refined = -refined;

    Line2d line;
    line.direction = refined;
    line.point = centroid;
    return line;
}

CanonicalFrame canonical_frame(const PointCloud& cloud, const std::vector<Camera>& cameras,
                               Rng& rng) {
    if (cloud.points.empty()) throw Error("init: empty point cloud");
    Vec3 up = estimate_up(cameras);

    // Orthonormal basis of the horizontal plane for the flattened cloud.
    Vec3 e1 = (std::abs(up.z()) > 0.9 ? Vec3::UnitX() : Vec3::UnitZ()).cross(up).normalized();
    Vec3 e2 = up.cross(e1).normalized();
    std::vector<Vec2> flat;
    flat.reserve(cloud.points.size());
    for (const Vec3& p : cloud.points) flat.emplace_back(e1.dot(p), e2.dot(p));

    Line2d line = ransac_line_2d(flat, 0.05, 1000, rng);
    Vec3 axis_y = (line.direction.x() * e1 + line.direction.y() * e2).normalized();

    Mat3 rot;
    rot.row(2) = up;
    rot.row(1) = axis_y;
    rot.row(0) = axis_y.cross(up).normalized();

    auto fit_box = [&](const Mat3& r, Vec3& lo, Vec3& hi) {
        lo = Vec3::Constant(1e30);
        hi = Vec3::Constant(-1e30);
        for (const Vec3& p : cloud.points) {
            Vec3 q = r * p;
            lo = lo.cwiseMin(q);
            hi = hi.cwiseMax(q);
        }
    };
    Vec3 lo, hi;
    fit_box(rot, lo, hi);
    Vec3 centre_rot = 0.5 * (lo + hi);

    // Sign disambiguation: the mean camera position gets negative canonical x.
    Vec3 cam_mean = Vec3::Zero();
    for (const Camera& cam : cameras) cam_mean += cam.centre();
    cam_mean /= Scalar(cameras.size());
    if ((rot * cam_mean - centre_rot).x() > 0.0) {
        rot.row(0) = -rot.row(0);
        rot.row(1) = -rot.row(1);  // 180 degrees about z keeps the handedness
        fit_box(rot, lo, hi);
        centre_rot = 0.5 * (lo + hi);
    }

    CanonicalFrame frame;
    frame.world_to_canonical.rotation = rot;
    frame.world_to_canonical.translation = -centre_rot;
    frame.world_to_canonical.validate();
    frame.box_min = lo - centre_rot;
    frame.box_max = hi - centre_rot;
    frame.ground_height = frame.box_min.z();
    frame.plane_normal = rot.row(1).transpose();
    Vec3 centre_world = rot.transpose() * centre_rot;
    frame.plane_offset = frame.plane_normal.dot(centre_world);
    return frame;
}

std::string format_frame(const CanonicalFrame& f) {
    std::ostringstream out;
    out.precision(17);
    const Mat3& r = f.world_to_canonical.rotation;
    out << "rotation";
    for (int i = 0; i < 3; ++i)
        for (int j = 0; j < 3; ++j) out << ' ' << r(i, j);
    out << "\ntranslation";
    for (int i = 0; i < 3; ++i) out << ' ' << f.world_to_canonical.translation[i];
    out << "\nbox";
    for (int i = 0; i < 3; ++i) out << ' ' << f.box_min[i];
    for (int i = 0; i < 3; ++i) out << ' ' << f.box_max[i];
    out << "\nground " << f.ground_height;
    out << "\nplane";
    for (int i = 0; i < 3; ++i) out << ' ' << f.plane_normal[i];
    out << ' ' << f.plane_offset << '\n';
    return out.str();
}

CanonicalFrame parse_frame(const std::string& text) {
    std::istringstream in(text);
    CanonicalFrame f;
    std::string tag;
    auto expect = [&](const char* name) {
        if (!(in >> tag) || tag != name) throw Error("init: malformed frame record");
    };
    expect("rotation");
    Mat3& r = f.world_to_canonical.rotation;
    for (int i = 0; i < 3; ++i)
        for (int j = 0; j < 3; ++j) in >> r(i, j);
    expect("translation");
    for (int i = 0; i < 3; ++i) in >> f.world_to_canonical.translation[i];
    expect("box");
    for (int i = 0; i < 3; ++i) in >> f.box_min[i];
    for (int i = 0; i < 3; ++i) in >> f.box_max[i];
    expect("ground");
    in >> f.ground_height;
    expect("plane");
    for (int i = 0; i < 3; ++i) in >> f.plane_normal[i];
    in >> f.plane_offset;
    if (!in) throw Error("init: malformed frame record");
    f.world_to_canonical.validate();
    return f;
}

}  // namespace symsurf

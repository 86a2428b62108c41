#pragma once

#include <memory>
#include <vector>

#include "symsurf/camera.hpp"
#include "symsurf/common.hpp"
#include "symsurf/image.hpp"
#include "symsurf/sdf.hpp"

namespace symsurf {

Camera look_at(const Vec3& centre, const Vec3& target, int width, int height, Scalar focal,
               const Vec3& world_up = Vec3::UnitZ());

// Look-at cameras on a circle about the canonical up axis, optionally with
// azimuth jitter. Deterministic per rng state.
std::vector<Camera> generate_orbit(int n_frames, Scalar radius, Scalar elevation,
                                   Scalar jitter_deg, Rng& rng, int image_size = 64,
                                   Scalar focal = 80.0);

struct Split {
    enum class Kind { Random, Structured };
    Kind kind = Kind::Structured;
    Scalar sector_center_deg = 90.0;  // centred on the +y side
    Scalar sector_width_deg = 130.0;
};

struct SplitResult {
    std::vector<int> train;
    std::vector<int> test;
};

// Structured: every camera whose azimuth falls in the half-open sector is
// withheld and n_test evenly-indexed frames of the withheld set become the
// test frames. Random: uniform holdout of n_test frames.
SplitResult make_split(const std::vector<Camera>& cameras, const Split& split, int n_test,
                       Rng& rng);

// Car proxy: rounded-box body (long axis y) with four wheel spheres, an
// optional asymmetric bump on the -y end and an optional albedo decal.
// Front-back reflection symmetry about the XZ plane unless the bump/decal
// break it. Everything fits inside the unit sphere.
struct SceneOptions {
    bool bump = false;
    bool decal = false;
    bool symmetric_lighting = false;  // light direction inside the symmetry plane
    bool ground = true;
};

class SyntheticScene {
  public:
    explicit SyntheticScene(const SceneOptions& options = {});

    const SceneOptions& options() const { return options_; }
    const Shape& object() const { return *object_; }
    const GroundPlane& ground() const { return ground_; }

    // Joint field (object plus ground when enabled).
    Scalar distance(const Vec3& x) const;
    Vec3 normal(const Vec3& x) const;

    Vec3 albedo(const Vec3& x) const;
    Scalar reflectivity(const Vec3& x) const;
    Scalar diffuse_shading(const Vec3& n) const;       // gamma^d in [0,2]
    Vec3 specular(const Vec3& n, const Vec3& d) const; // c^s in [0,1]^3
    Vec3 shade(const Vec3& x, const Vec3& n, const Vec3& d) const;
    Vec3 background(const Vec3& d) const;

    Vec3 light_direction() const { return light_dir_; }
    Vec3 bump_apex() const;

  private:
    SceneOptions options_;
    std::shared_ptr<UnionShape> object_;
    std::shared_ptr<BoxShape> body_;
    std::shared_ptr<SphereShape> bump_;
    GroundPlane ground_;
    Vec3 light_dir_ = Vec3::Zero();
};

struct OracleRender {
    Image rgb;    // 3-channel
    Image depth;  // 1-channel, 0 where the mask is empty
    Image mask;   // 1-channel binary
};

// Independent sphere-tracing renderer (step limit 256, hit threshold 1e-5),
// restricted to the unit-sphere foreground interval.
OracleRender oracle_render(const SyntheticScene& scene, const Camera& camera);

// Surface samples of the object (not the ground), produced by sphere tracing
// random rays; stands in for an SfM point cloud.
std::vector<Vec3> sample_surface(const SyntheticScene& scene, int n, Rng& rng);

}  // namespace symsurf

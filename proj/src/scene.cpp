#include "symsurf/scene.hpp"

#include <algorithm>
#include <numeric>

#include "symsurf/render.hpp"

namespace symsurf {

Camera look_at(const Vec3& centre, const Vec3& target, int width, int height, Scalar focal,
               const Vec3& world_up) {
    Vec3 forward = (target - centre).normalized();
    Vec3 right = forward.cross(world_up);
    if (right.norm() < 1e-9) right = forward.cross(Vec3::UnitX());
    right.normalize();
    Vec3 down = forward.cross(right).normalized();
    Camera cam;
    cam.width = width;
    cam.height = height;
    cam.intrinsics << focal, 0, width / 2.0, 0, focal, height / 2.0, 0, 0, 1;
    Mat3 r;
    r.row(0) = right;
    r.row(1) = down;
    r.row(2) = forward;
    cam.world_to_camera.setIdentity();
    cam.world_to_camera.topLeftCorner<3, 3>() = r;
    cam.world_to_camera.topRightCorner<3, 1>() = -r * centre;
    cam.validate();
    return cam;
}

std::vector<Camera> generate_orbit(int n_frames, Scalar radius, Scalar elevation,
                                   Scalar jitter_deg, Rng& rng, int image_size, Scalar focal) {
    if (n_frames < 1) throw Error("scene: need at least one frame");
    std::uniform_real_distribution<Scalar> jitter(-jitter_deg, jitter_deg);
    std::vector<Camera> cams;
    cams.reserve(std::size_t(n_frames));
    for (int i = 0; i < n_frames; ++i) {
        Scalar azimuth = 360.0 * i / n_frames;
        if (jitter_deg > 0.0) azimuth += jitter(rng);
        Scalar a = azimuth * kPi / 180.0;
        Vec3 centre(radius * std::cos(a), radius * std::sin(a), elevation);
        cams.push_back(look_at(centre, Vec3::Zero(), image_size, image_size, focal));
    }
    return cams;
}

SplitResult make_split(const std::vector<Camera>& cameras, const Split& split, int n_test,
                       Rng& rng) {
    const int n = int(cameras.size());
    if (n < 1) throw Error("scene: no cameras to split");
    SplitResult result;
    if (split.kind == Split::Kind::Random) {
        std::vector<int> ids(std::size_t(n), 0);
        std::iota(ids.begin(), ids.end(), 0);
        std::shuffle(ids.begin(), ids.end(), rng);
        n_test = std::min(n_test, n);
        result.test.assign(ids.begin(), ids.begin() + n_test);
        result.train.assign(ids.begin() + n_test, ids.end());
        std::sort(result.test.begin(), result.test.end());
        std::sort(result.train.begin(), result.train.end());
        return result;
    }

    if (split.sector_width_deg <= 0.0 || split.sector_width_deg >= 360.0)
        throw Error("scene: sector width must lie in (0, 360)");
    auto wrap = [](Scalar deg) {
        deg = std::fmod(deg, 360.0);
        return deg < 0.0 ? deg + 360.0 : deg;
    };
    std::vector<int> withheld;
    for (int i = 0; i < n; ++i) {
        Vec3 c = cameras[std::size_t(i)].centre();
        Scalar azimuth = wrap(std::atan2(c.y(), c.x()) * 180.0 / kPi);
        // Half-open sector [center - w/2, center + w/2).
        Scalar offset = wrap(azimuth - (split.sector_center_deg - 0.5 * split.sector_width_deg));
        if (offset < split.sector_width_deg) {
            withheld.push_back(i);
        } else {
            result.train.push_back(i);
        }
    }
    const int m = int(withheld.size());
    if (m <= n_test) {
        result.test = withheld;
    } else {
        for (int i = 0; i < n_test; ++i) {
            int idx = n_test == 1 ? 0 : int(std::lround(Scalar(i) * (m - 1) / (n_test - 1)));
            result.test.push_back(withheld[std::size_t(idx)]);
        }
    }
    return result;
}

// ---------------------------------------------------------------------------
// Car-proxy scene

namespace {

constexpr Scalar kBodyRounding = 0.04;
const Vec3 kBodyHalf(0.24, 0.5, 0.16);
const Vec3 kBodyCentre(0.0, 0.0, -0.02);
constexpr Scalar kWheelRadius = 0.12;
constexpr Scalar kWheelX = 0.26;
constexpr Scalar kWheelY = 0.3;
constexpr Scalar kWheelZ = -0.22;
const Vec3 kBumpCentre(0.0, -0.58, 0.0);
constexpr Scalar kBumpRadius = 0.1;
const Vec3 kDecalCentre(0.2, -0.35, 0.05);
constexpr Scalar kDecalRadius = 0.12;

}  // namespace

SyntheticScene::SyntheticScene(const SceneOptions& options) : options_(options) {
    object_ = std::make_shared<UnionShape>();
    body_ = std::make_shared<BoxShape>(kBodyCentre, kBodyHalf, kBodyRounding);
    object_->add(body_);
    for (Scalar sx : {-1.0, 1.0}) {
        for (Scalar sy : {-1.0, 1.0}) {
            object_->add(std::make_shared<SphereShape>(
                Vec3(sx * kWheelX, sy * kWheelY, kWheelZ), kWheelRadius));
        }
    }
    if (options.bump) {
        bump_ = std::make_shared<SphereShape>(kBumpCentre, kBumpRadius);
        object_->add(bump_);
    }
    ground_.height = kWheelZ - kWheelRadius;  // wheels rest on the ground
    ground_.up = Vec3::UnitZ();
    light_dir_ = options.symmetric_lighting ? Vec3(0.45, 0.0, 0.85).normalized()
                                            : Vec3(0.4, -0.35, 0.8).normalized();
}

Scalar SyntheticScene::distance(const Vec3& x) const {
    Scalar d = object_->distance(x);
    if (options_.ground) d = std::min(d, ground_distance(ground_, x));
    return d;
}

Vec3 SyntheticScene::normal(const Vec3& x) const {
    if (options_.ground && ground_distance(ground_, x) < object_->distance(x))
        return ground_.up;
    return object_->gradient(x);
}

Vec3 SyntheticScene::albedo(const Vec3& x) const {
    if (options_.ground && ground_distance(ground_, x) < object_->distance(x))
        return Vec3(0.42, 0.40, 0.36);
    // Wheels are the dark parts.
    for (Scalar sx : {-1.0, 1.0}) {
        for (Scalar sy : {-1.0, 1.0}) {
            Vec3 c(sx * kWheelX, sy * kWheelY, kWheelZ);
            if ((x - c).norm() - kWheelRadius < body_->distance(x)) return Vec3(0.1, 0.1, 0.12);
        }
    }
    if (options_.decal && (x - kDecalCentre).norm() < kDecalRadius) return Vec3(0.85, 0.15, 0.1);
    return Vec3(0.2, 0.35, 0.75);  // body paint
}

Scalar SyntheticScene::reflectivity(const Vec3& x) const {
    if (options_.ground && ground_distance(ground_, x) < object_->distance(x)) return 0.0;
    for (Scalar sx : {-1.0, 1.0}) {
        for (Scalar sy : {-1.0, 1.0}) {
            Vec3 c(sx * kWheelX, sy * kWheelY, kWheelZ);
            if ((x - c).norm() - kWheelRadius < body_->distance(x)) return 0.05;
        }
    }
    return 0.4;
}

Scalar SyntheticScene::diffuse_shading(const Vec3& n) const {
    return 0.3 + 0.9 * std::max(0.0, n.dot(light_dir_));
}

Vec3 SyntheticScene::specular(const Vec3& n, const Vec3& d) const {
    // Phong lobe about the reflected light direction, viewed along -d.
    Vec3 r = 2.0 * n.dot(light_dir_) * n - light_dir_;
    Scalar lobe = std::pow(std::max(0.0, r.dot(-d)), 16.0);
    return lobe * Vec3(1.0, 0.95, 0.9);
}

Vec3 SyntheticScene::shade(const Vec3& x, const Vec3& n, const Vec3& d) const {
    Vec3 c = diffuse_shading(n) * albedo(x) + reflectivity(x) * specular(n, d);
    return c.cwiseMax(0.0).cwiseMin(1.0);
}

Vec3 SyntheticScene::background(const Vec3& d) const {
    Scalar t = 0.5 * (d.z() + 1.0);
    Vec3 c = Vec3(0.30, 0.34, 0.42) + t * Vec3(0.25, 0.22, 0.18);
    return c.cwiseMax(0.0).cwiseMin(1.0);
}

Vec3 SyntheticScene::bump_apex() const {
    if (!bump_) throw Error("scene: bump disabled");
    return kBumpCentre + Vec3(0.0, -kBumpRadius, 0.0);
}

OracleRender oracle_render(const SyntheticScene& scene, const Camera& camera) {
    OracleRender out;
    out.rgb = Image(camera.width, camera.height, 3);
    out.depth = Image(camera.width, camera.height, 1);
    out.mask = Image(camera.width, camera.height, 1);

    for (int y = 0; y < camera.height; ++y) {
        for (int x = 0; x < camera.width; ++x) {
            Ray ray = pixel_ray(camera, Vec2(x + 0.5, y + 0.5));
            Vec3 colour = scene.background(ray.direction);
            if (ray.hits_foreground()) {
                Scalar t = ray.near;
                for (int step = 0; step < 256 && t <= ray.far; ++step) {
                    Vec3 p = ray.origin + t * ray.direction;
                    Scalar d = scene.distance(p);
                    if (std::abs(d) < 1e-5) {
                        Vec3 n = scene.normal(p);
                        colour = scene.shade(p, n, ray.direction);
                        out.depth.at(x, y) = t;
                        out.mask.at(x, y) = 1.0;
                        break;
                    }
                    t += d;
                }
            }
            for (int c = 0; c < 3; ++c) out.rgb.at(x, y, c) = colour[c];
        }
    }
    return out;
}

std::vector<Vec3> sample_surface(const SyntheticScene& scene, int n, Rng& rng) {
    std::normal_distribution<Scalar> g;
    std::uniform_real_distribution<Scalar> u(-0.2, 0.2);
    std::vector<Vec3> points;
    points.reserve(std::size_t(n));
    int guard = 0;
    while (int(points.size()) < n && ++guard < 200 * n) {
        Vec3 origin(g(rng), g(rng), g(rng));
        origin = 1.5 * origin.normalized();
        Vec3 target(u(rng), u(rng), u(rng));
        Vec3 dir = (target - origin).normalized();
        Scalar t = 0.0;
        for (int step = 0; step < 256 && t < 3.0; ++step) {
            Vec3 p = origin + t * dir;
            Scalar d = scene.object().distance(p);
            if (std::abs(d) < 1e-5) {
                points.push_back(p);
                break;
            }
            t += d;
        }
    }
    if (int(points.size()) < n) throw Error("scene: surface sampling starved");
    return points;
}

}  // namespace symsurf

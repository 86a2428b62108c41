#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "symsurf/render.hpp"
#include "symsurf/scene.hpp"

using namespace symsurf;

namespace {

// Shape adapter over the full scene field for the quadrature renderer.
class SceneShape : public Shape {
  public:
    explicit SceneShape(const SyntheticScene& scene) : scene_(scene) {}
    Scalar distance(const Vec3& x) const override { return scene_.distance(x); }
    Vec3 gradient(const Vec3& x) const override { return scene_.normal(x); }

  private:
    const SyntheticScene& scene_;
};

}  // namespace

TEST_CASE("orbit generation") {
    Rng rng(3);
    std::vector<Camera> cams = generate_orbit(4, 2.5, 1.0, 0.0, rng);
    REQUIRE(cams.size() == 4);
    CHECK((cams[0].centre() - Vec3(2.5, 0, 1)).norm() < 1e-9);
    CHECK((cams[1].centre() - Vec3(0, 2.5, 1)).norm() < 1e-9);
    CHECK((cams[2].centre() - Vec3(-2.5, 0, 1)).norm() < 1e-9);
    CHECK((cams[3].centre() - Vec3(0, -2.5, 1)).norm() < 1e-9);

    for (const Camera& cam : cams) {
        // Optical axis passes through the origin.
        Vec3 axis = cam.optical_axis();
        Vec3 to_target = -cam.centre();
        CHECK(axis.cross(to_target).norm() < 1e-9);
    }

    Rng a(7), b(7);
    std::vector<Camera> ja = generate_orbit(12, 2.5, 1.0, 5.0, a);
    std::vector<Camera> jb = generate_orbit(12, 2.5, 1.0, 5.0, b);
    for (std::size_t i = 0; i < ja.size(); ++i)
        CHECK((ja[i].centre() - jb[i].centre()).norm() == 0.0);
}

TEST_CASE("split protocols") {
    Rng rng(5);
    std::vector<Camera> cams = generate_orbit(360, 2.5, 1.0, 0.0, rng);

    Split structured;
    SplitResult s = make_split(cams, structured, 8, rng);
    CHECK(s.train.size() == 230);
    CHECK(s.test.size() == 8);
    for (int id : s.test) {
        Vec3 c = cams[std::size_t(id)].centre();
        Scalar azimuth = std::atan2(c.y(), c.x()) * 180.0 / kPi;
        CHECK(azimuth >= 25.0 - 1e-9);
        CHECK(azimuth < 155.0 + 1e-9);
    }

    Split zero;
    zero.sector_width_deg = 0.0;
    CHECK_THROWS_AS(make_split(cams, zero, 8, rng), Error);

    Split random_split;
    random_split.kind = Split::Kind::Random;
    Rng ra(11), rb(11);
    SplitResult r1 = make_split(cams, random_split, 8, ra);
    SplitResult r2 = make_split(cams, random_split, 8, rb);
    CHECK(r1.test == r2.test);
    CHECK(r1.train.size() + r1.test.size() == cams.size());
    for (int id : r1.test)
        CHECK(std::find(r1.train.begin(), r1.train.end(), id) == r1.train.end());
}

TEST_CASE("oracle depth matches the closed-form sphere intersection") {
    SyntheticScene scene;
    // Camera aimed straight at a wheel centre along +x: the first hit is the
    // wheel sphere, whose intersection has a closed form.
    Vec3 wheel(0.26, 0.3, -0.22);
    Vec3 eye = wheel + Vec3(2.0, 0.0, 0.0);
    Camera cam = look_at(eye, wheel, 32, 32, 40.0);
    OracleRender r = oracle_render(scene, cam);
    // Closed-form intersection of the actual centre-pixel ray with the wheel.
    Ray centre = pixel_ray(cam, Vec2(16.5, 16.5));
    Vec3 oc = centre.origin - wheel;
    Scalar b = oc.dot(centre.direction);
    Scalar disc = b * b - (oc.squaredNorm() - 0.12 * 0.12);
    REQUIRE(disc > 0.0);
    Scalar expected = -b - std::sqrt(disc);
    CHECK(r.mask.at(16, 16) == 1.0);
    CHECK(std::abs(r.depth.at(16, 16) - expected) < 1e-4);

    // Corner pixels shoot past the unit sphere: background colour, empty mask.
    CHECK(r.mask.at(0, 0) == 0.0);
    Ray corner = pixel_ray(cam, Vec2(0.5, 0.5));
    Vec3 bg = scene.background(corner.direction);
    for (int c = 0; c < 3; ++c) CHECK(r.rgb.at(0, 0, c) == doctest::Approx(bg[c]));
}

TEST_CASE("oracle agrees with the quadrature renderer") {
    SyntheticScene scene;
    SceneShape shape(scene);
    Camera cam = look_at(Vec3(1.8, -1.6, 1.1), Vec3::Zero(), 24, 24, 30.0);
    OracleRender oracle = oracle_render(scene, cam);

    const Scalar tau = 320.0;
    Scalar diff_sum = 0.0;
    int count = 0;
    for (int y = 0; y < cam.height; ++y) {
        for (int x = 0; x < cam.width; ++x) {
            Ray ray = pixel_ray(cam, Vec2(x + 0.5, y + 0.5));
            Vec3 colour = scene.background(ray.direction);
            if (ray.hits_foreground()) {
                const int n = 512;
                VecX ts(n);
                for (int i = 0; i < n; ++i)
                    ts[i] = ray.near + (ray.far - ray.near) * (i + 0.5) / n;
                SectionEval sec = section_deltas(shape, ray, ts);
                VecX alphas(sec.mid_ts.size());
                for (Eigen::Index i = 0; i < alphas.size(); ++i)
                    alphas[i] = alpha_from_deltas(sec.delta_lo[i], sec.delta_hi[i], tau);
                VecX w = accumulate(alphas);
                MatX colours(sec.mid_ts.size(), 3);
                for (Eigen::Index i = 0; i < sec.mid_ts.size(); ++i) {
                    Vec3 p = ray.origin + sec.mid_ts[i] * ray.direction;
                    colours.row(i) = scene.shade(p, scene.normal(p), ray.direction);
                }
                colour = render_pixel(w, colours, scene.background(ray.direction));
            }
            for (int c = 0; c < 3; ++c) {
                diff_sum += std::abs(colour[c] - oracle.rgb.at(x, y, c));
                ++count;
            }
        }
    }
    CHECK(diff_sum / count < 0.01);
}

TEST_CASE("mirrored cameras give mirror images of the symmetric scene") {
    SceneOptions opts;
    opts.symmetric_lighting = true;
    SyntheticScene scene(opts);

    for (Scalar azimuth : {35.0, 140.0, 250.0}) {
        Scalar a = azimuth * kPi / 180.0;
        Vec3 eye(2.4 * std::cos(a), 2.4 * std::sin(a), 1.0);
        Vec3 mirrored_eye(eye.x(), -eye.y(), eye.z());
        Camera cam = look_at(eye, Vec3::Zero(), 32, 32, 40.0);
        Camera mirror_cam = look_at(mirrored_eye, Vec3::Zero(), 32, 32, 40.0);

        OracleRender r = oracle_render(scene, cam);
        OracleRender m = oracle_render(scene, mirror_cam);
        for (int y = 0; y < 32; ++y) {
            for (int x = 0; x < 32; ++x) {
                int fx = 31 - x;
                for (int c = 0; c < 3; ++c)
                    CHECK(std::abs(r.rgb.at(x, y, c) - m.rgb.at(fx, y, c)) < 1e-12);
                CHECK(std::abs(r.depth.at(x, y) - m.depth.at(fx, y)) < 1e-9);
                CHECK(r.mask.at(x, y) == m.mask.at(fx, y));
            }
        }
    }
}

TEST_CASE("asymmetric bump geometry") {
    SceneOptions opts;
    opts.bump = true;
    SyntheticScene scene(opts);
    Vec3 apex = scene.bump_apex();
    CHECK(std::abs(scene.object().distance(apex)) < 1e-9);

    Vec3 mirrored(apex.x(), -apex.y(), apex.z());
    CHECK(scene.object().distance(mirrored) > 0.1);

    // Without the bump the apex lies in free space.
    SyntheticScene plain;
    CHECK(plain.object().distance(apex) > 0.05);
}

TEST_CASE("surface sampling stays on the object") {
    SyntheticScene scene;
    Rng rng(13);
    std::vector<Vec3> cloud = sample_surface(scene, 2000, rng);
    REQUIRE(int(cloud.size()) == 2000);
    for (const Vec3& p : cloud) {
        CHECK(std::abs(scene.object().distance(p)) < 1e-4);
        CHECK(p.norm() < 1.0);  // the object fits inside the unit sphere
    }
}

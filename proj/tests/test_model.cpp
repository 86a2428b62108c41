#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "symsurf/model.hpp"
#include "symsurf/scene.hpp"

using namespace symsurf;

namespace {

ModelConfig small_config() {
    ModelConfig cfg;
    cfg.sdf.depth = 2;
    cfg.sdf.width = 16;
    cfg.sdf.skip_layer = -1;
    cfg.sdf.feature_dim = 8;
    cfg.sdf.num_freqs = 2;
    cfg.appearance.feature_dim = 8;
    cfg.appearance.material_width = 8;
    cfg.appearance.material_hidden = 2;
    cfg.appearance.diffuse_width = 8;
    cfg.appearance.diffuse_hidden = 1;
    cfg.appearance.specular_width = 8;
    cfg.appearance.specular_hidden = 2;
    cfg.appearance.dir_freqs = 2;
    cfg.background.width = 8;
    cfg.background.depth = 1;
    cfg.background.num_freqs = 2;
    return cfg;
}

SymmetrySet test_symmetries() {
    RigidFrame frame;
    frame.rotation = Eigen::AngleAxisd(0.3, Vec3::UnitZ()).toRotationMatrix();
    frame.translation = Vec3(0.05, -0.02, 0.03);
    SymmetrySet set;
    set.specs.push_back(SymmetrySpec::planar_reflection(Vec3::UnitY(), 0.0, frame));
    return set;
}

Model make_model() {
    GroundPlane ground;
    ground.height = -0.5;
    Model model(small_config(), test_symmetries(), ground);
    Rng rng(77);
    model.init(rng, EllipsoidInit{Vec3(0.6, 0.8, 0.5)});
    // Generic perturbation so the configuration sits away from special points.
    std::normal_distribution<Scalar> g;
    Rng noise(5);
    for (Eigen::Index i = 0; i < model.store().size(); ++i)
        model.store().values()[i] += 0.01 * g(noise);
    // Frame increments are evaluated at zero (the training loop folds them
    // after every step); gradients are exact only there.
    const ParamSlice& sym = model.store().slice("symmetry");
    model.store().values().segment(sym.offset, sym.size).setZero();
    return model;
}

std::vector<Ray> test_rays() {
    Camera cam = look_at(Vec3(0.0, 2.5, 0.4), Vec3(0.0, 0.0, -0.2), 8, 8, 10.0);
    std::vector<Ray> rays;
    rays.push_back(pixel_ray(cam, Vec2(4.5, 4.5)));   // through the object region
    rays.push_back(pixel_ray(cam, Vec2(4.5, 6.5)));   // dips below the ground plane
    for (const Ray& r : rays) REQUIRE(r.hits_foreground());
    return rays;
}

Model::BatchOptions fd_options() {
    Model::BatchOptions opts;
    opts.sampling.n_coarse = 6;
    opts.sampling.n_fine = 0;  // keeps sample positions independent of parameters
    opts.weights.symmetricity = 0.5;
    opts.weights.diffuse = 0.01;
    opts.weights.lighting = 0.01;
    opts.weights.eikonal = 0.1;
    return opts;
}

Scalar eval_total(const Model& model, const VecX& params, const std::vector<Ray>& rays,
                  const MatX& targets, const Model::BatchOptions& opts, VecX* grads) {
    Rng rng(123);  // identical sampling draws on every call
    return model.evaluate_batch(params, rays, targets, rng, opts, grads).report.total;
}

}  // namespace

TEST_CASE("construction and parameter layout") {
    Model model = make_model();
    const ParameterStore& store = model.store();
    Eigen::Index expect = 0;
    for (const ParamSlice& s : store.slices()) {
        CHECK(s.offset == expect);
        expect += s.size;
    }
    CHECK(expect == store.size());
    CHECK(model.tau(store.values()) ==
          doctest::Approx(std::exp(store.values()[store.slice("tau").offset]))
              .epsilon(1e-9));
}

TEST_CASE("tau initialisation and positivity") {
    GroundPlane ground;
    Model model(small_config(), test_symmetries(), ground);
    Rng rng(3);
    model.init(rng, EllipsoidInit{});
    CHECK(model.tau(model.store().values()) == doctest::Approx(20.0).epsilon(1e-12));
}

TEST_CASE("batch evaluation is deterministic") {
    Model model = make_model();
    std::vector<Ray> rays = test_rays();
    MatX targets(2, 3);
    targets << 0.31, 0.62, 0.18, 0.74, 0.22, 0.55;
    Model::BatchOptions opts = fd_options();

    VecX g1 = VecX::Zero(model.store().size());
    VecX g2 = VecX::Zero(model.store().size());
    Scalar t1 = eval_total(model, model.store().values(), rays, targets, opts, &g1);
    Scalar t2 = eval_total(model, model.store().values(), rays, targets, opts, &g2);
    CHECK(t1 == t2);
    CHECK((g1 - g2).cwiseAbs().maxCoeff() == 0.0);
    CHECK(std::isfinite(t1));
}

TEST_CASE("finite differences validate every trainable path") {
    Model model = make_model();
    std::vector<Ray> rays = test_rays();
    MatX targets(2, 3);
    targets << 0.31, 0.62, 0.18, 0.74, 0.22, 0.55;
    Model::BatchOptions opts = fd_options();

    VecX params = model.store().values();
    VecX grads = VecX::Zero(params.size());
    eval_total(model, params, rays, targets, opts, &grads);

    auto check_index = [&](Eigen::Index idx, const char* label) {
        const Scalar h = 1e-6;
        VecX p = params;
        p[idx] = params[idx] + h;
        Scalar up = eval_total(model, p, rays, targets, opts, nullptr);
        p[idx] = params[idx] - h;
        Scalar down = eval_total(model, p, rays, targets, opts, nullptr);
        Scalar fd = (up - down) / (2.0 * h);
        Scalar err = std::abs(fd - grads[idx]);
        Scalar scale = std::max({std::abs(fd), std::abs(grads[idx]), Scalar(1e-4)});
        INFO(label << " index " << idx << " fd " << fd << " analytic " << grads[idx]);
        CHECK(err / scale < 1e-4);
    };

    const ParameterStore& store = model.store();
    for (const ParamSlice& s : store.slices()) {
        int probes = s.name == "symmetry" ? int(s.size) : std::min<int>(8, int(s.size));
        for (int i = 0; i < probes; ++i) {
            Eigen::Index idx = s.offset + (s.size * i) / probes;
            check_index(idx, s.name.c_str());
        }
    }
}

TEST_CASE("symmetry gradients vanish without the transformed path") {
    Model model = make_model();
    std::vector<Ray> rays = test_rays();
    MatX targets = MatX::Constant(2, 3, 0.4);
    Model::BatchOptions opts = fd_options();
    opts.transformed = false;
    opts.lighting_term = false;

    VecX grads = VecX::Zero(model.store().size());
    eval_total(model, model.store().values(), rays, targets, opts, &grads);
    const ParamSlice& sym = model.store().slice("symmetry");
    CHECK(grads.segment(sym.offset, sym.size).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("ablation switches remove exactly their term") {
    Model model = make_model();
    std::vector<Ray> rays = test_rays();
    MatX targets(2, 3);
    targets << 0.2, 0.5, 0.8, 0.6, 0.3, 0.1;
    Model::BatchOptions base = fd_options();

    Rng r0(9);
    Model::BatchResult full =
        model.evaluate_batch(model.store().values(), rays, targets, r0, base, nullptr);

    auto check_variant = [&](auto mutate, auto changed_term) {
        Model::BatchOptions opts = base;
        mutate(opts);
        Rng rng(9);
        Model::BatchResult res =
            model.evaluate_batch(model.store().values(), rays, targets, rng, opts, nullptr);
        Scalar removed = changed_term(full.report.weighted);
        CHECK(changed_term(res.report.weighted) == 0.0);
        CHECK(std::abs(full.report.total - res.report.total - removed) < 1e-12);
    };

    check_variant([](Model::BatchOptions& o) { o.ablation.colour01 = false; },
                  [](const LossTerms& t) { return t.colour[0][1]; });
    check_variant([](Model::BatchOptions& o) { o.ablation.colour10 = false; },
                  [](const LossTerms& t) { return t.colour[1][0]; });
    check_variant([](Model::BatchOptions& o) { o.ablation.colour11 = false; },
                  [](const LossTerms& t) { return t.colour[1][1]; });
    check_variant(
        [](Model::BatchOptions& o) { o.ablation.diffuse = false; },
        [](const LossTerms& t) {
            return t.diffuse[0][0] + t.diffuse[0][1] + t.diffuse[1][0] + t.diffuse[1][1];
        });
}

TEST_CASE("frame increments fold into the frame") {
    Model model = make_model();
    VecX& values = model.store().values();
    const ParamSlice& sym = model.store().slice("symmetry");
    values.segment<6>(sym.offset) << 0.02, -0.01, 0.03, 0.004, -0.002, 0.001;

    SymmetrySpec before = model.effective_spec(values, 0);
    model.fold_symmetry_increments();
    CHECK(values.segment(sym.offset, sym.size).cwiseAbs().maxCoeff() == 0.0);
    SymmetrySpec after = model.effective_spec(values, 0);
    CHECK((before.frame.rotation - after.frame.rotation).norm() < 1e-12);
    CHECK((before.frame.translation - after.frame.translation).norm() < 1e-12);
    after.frame.validate();
}

TEST_CASE("image render produces bounded outputs") {
    Model model = make_model();
    Camera cam = look_at(Vec3(0.0, 2.2, 0.6), Vec3::Zero(), 12, 12, 14.0);
    Rng rng(31);
    SamplingConfig sampling{8, 8};
    Model::ImageRender render =
        model.render_image(model.store().values(), cam, rng, sampling);
    for (Scalar v : render.rgb.data) {
        CHECK(v >= 0.0);
        CHECK(v <= 1.0);
    }
    for (Scalar v : render.mask.data) {
        CHECK(v >= 0.0);
        CHECK(v <= 1.0);
    }
    for (Scalar v : render.depth.data) CHECK(std::isfinite(v));
}

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "symsurf/losses.hpp"
#include "symsurf/sdf.hpp"

using namespace symsurf;

TEST_CASE("colour loss formula") {
    CHECK(colour_loss(Vec3(0.3, 0.4, 0.5), Vec3(0.3, 0.4, 0.5)) == doctest::Approx(0.0));
    CHECK(colour_loss(Vec3::Ones(), Vec3::Zero()) == doctest::Approx(1.0));
    CHECK(colour_loss(Vec3(0.5, 0, 0), Vec3::Zero()) == doctest::Approx(1.0 / 6.0));
}

TEST_CASE("diffuse render loss") {
    Rng rng(3);
    std::uniform_real_distribution<Scalar> u(0.0, 1.0);
    VecX w(4), gd(4);
    MatX ca(4, 3);
    for (int i = 0; i < 4; ++i) {
        w[i] = 0.2 * u(rng);
        gd[i] = u(rng);
        for (int c = 0; c < 3; ++c) ca(i, c) = u(rng);
    }
    Vec3 bg(0.2, 0.3, 0.4);

    // With zero reflectivity the full render equals the specular-free render,
    // so the diffuse loss equals the colour loss of the full image.
    Vec3 full = Vec3::Zero();
    for (int i = 0; i < 4; ++i) full += w[i] * gd[i] * Vec3(ca.row(i));
    full += (1.0 - w.sum()) * bg;
    Vec3 target(0.5, 0.5, 0.5);
    CHECK(diffuse_render_loss(w, gd, ca, bg, target) ==
          doctest::Approx(colour_loss(full.cwiseMax(0.0).cwiseMin(1.0), target)));

    // A purely specular target cannot be explained without the specular term.
    VecX opaque(1), zero_gd(1);
    opaque << 1.0;
    zero_gd << 0.0;
    MatX white = MatX::Ones(1, 3);
    CHECK(diffuse_render_loss(opaque, zero_gd, white, Vec3::Zero(), Vec3(0.8, 0.8, 0.8)) >
          0.5);

    // Empty ray over a matching background is already explained.
    VecX none = VecX::Zero(4);
    CHECK(diffuse_render_loss(none, gd, ca, bg, bg) == doctest::Approx(0.0));
}

TEST_CASE("eikonal closed forms") {
    PlaneShape plane(0.3, Vec3(0, 1, 0));
    Rng rng(7);
    std::uniform_real_distribution<Scalar> u(-2.0, 2.0);
    MatX grads(64, 3);
    for (int i = 0; i < 64; ++i)
        grads.row(i) = plane.gradient(Vec3(u(rng), u(rng), u(rng)));
    CHECK(eikonal_loss(grads) < 1e-10);
    CHECK(eikonal_loss(2.0 * grads) == doctest::Approx(1.0).epsilon(1e-9));
}

TEST_CASE("eikonal regularization drives a random field toward unit gradients") {
    NeuralSdfConfig cfg;
    cfg.depth = 3;
    cfg.width = 32;
    cfg.skip_layer = -1;
    cfg.feature_dim = 4;
    cfg.num_freqs = 4;
    NeuralSdf sdf(cfg, 0);
    Rng rng(11);
    std::normal_distribution<Scalar> g;
    VecX params(sdf.parameter_count());
    for (Eigen::Index i = 0; i < params.size(); ++i) params[i] = 0.3 * g(rng);

    AdamState state;
    state.m = VecX::Zero(params.size());
    state.v = VecX::Zero(params.size());
    AdamHyper hyper;
    std::uniform_real_distribution<Scalar> u(-1.0, 1.0);
    Scalar first = 0.0, last = 0.0;
    const Scalar lr = 1e-3;
    for (int iter = 0; iter < 500; ++iter) {
        MatX x(64, 3);
        for (int i = 0; i < 64; ++i)
            for (int c = 0; c < 3; ++c) x(i, c) = u(rng);
        NeuralSdfBatch b = sdf.forward(params, x);
        Scalar loss = eikonal_loss(b.normal);
        if (iter < 10) first += loss / 10.0;
        if (iter >= 490) last += loss / 10.0;

        MatX g_normal(64, 3);
        for (int i = 0; i < 64; ++i) {
            Scalar norm = b.normal.row(i).norm();
            g_normal.row(i) = 2.0 * (norm - 1.0) / (64.0 * std::max(norm, 1e-12)) *
                              b.normal.row(i);
        }
        VecX grads = VecX::Zero(params.size());
        sdf.backward(params, b, VecX(), g_normal, MatX(), grads);

        // Plain Adam over the flat vector (no parameter groups needed here).
        for (Eigen::Index i = 0; i < params.size(); ++i) {
            state.m[i] = hyper.beta1 * state.m[i] + (1 - hyper.beta1) * grads[i];
            state.v[i] = hyper.beta2 * state.v[i] + (1 - hyper.beta2) * grads[i] * grads[i];
            Scalar mh = state.m[i] / (1 - std::pow(hyper.beta1, iter + 1));
            Scalar vh = state.v[i] / (1 - std::pow(hyper.beta2, iter + 1));
            params[i] -= lr * mh / (std::sqrt(vh) + hyper.eps);
        }
    }
    CHECK(last < 0.5 * first);
}

namespace {

LossTerms random_terms(Rng& rng) {
    std::uniform_real_distribution<Scalar> u(0.0, 1.0);
    LossTerms t;
    for (int j = 0; j < 2; ++j) {
        for (int k = 0; k < 2; ++k) {
            t.colour[j][k] = u(rng);
            t.diffuse[j][k] = u(rng);
            t.lighting[j][k] = u(rng);
        }
        t.eikonal[j] = u(rng);
    }
    return t;
}

Scalar reference_total(const LossTerms& t, const LossWeights& w) {
    Scalar total = 0.0;
    for (int j = 0; j < 2; ++j) {
        Scalar f = 1.0 + (w.symmetricity - 1.0) * j;
        for (int k = 0; k < 2; ++k) {
            total += f * (t.colour[j][k] + w.diffuse * t.diffuse[j][k] +
                          w.lighting * t.lighting[j][k] + w.eikonal * t.eikonal[j]);
        }
    }
    return total;
}

}  // namespace

TEST_CASE("total loss combination") {
    CHECK(LossWeights{}.symmetricity == doctest::Approx(0.1));
    CHECK(LossWeights{}.diffuse == doctest::Approx(0.01));
    CHECK(LossWeights{}.lighting == doctest::Approx(0.001));
    CHECK(LossWeights{}.eikonal == doctest::Approx(0.1));

    Rng rng(13);
    for (int trial = 0; trial < 200; ++trial) {
        LossTerms t = random_terms(rng);
        LossWeights w;
        std::uniform_real_distribution<Scalar> u(0.0, 1.0);
        w.symmetricity = u(rng);
        CHECK(total_loss(t, w).total == doctest::Approx(reference_total(t, w)).epsilon(1e-12));

        LossWeights all = w;
        all.symmetricity = 1.0;
        Scalar plain = 0.0;
        for (int j = 0; j < 2; ++j)
            for (int k = 0; k < 2; ++k)
                plain += t.colour[j][k] + all.diffuse * t.diffuse[j][k] +
                         all.lighting * t.lighting[j][k] + all.eikonal * t.eikonal[j];
        CHECK(total_loss(t, all).total == doctest::Approx(plain).epsilon(1e-12));

        LossWeights off = w;
        off.symmetricity = 0.0;
        LossReport r0 = total_loss(t, off);
        CHECK(r0.weighted.colour[1][0] == 0.0);
        CHECK(r0.weighted.colour[1][1] == 0.0);
        CHECK(r0.weighted.eikonal[1] == 0.0);

        // Monotone in the symmetricity factor.
        LossWeights lo = w, hi = w;
        lo.symmetricity = 0.2;
        hi.symmetricity = 0.8;
        CHECK(total_loss(t, hi).total >= total_loss(t, lo).total - 1e-12);
    }
}

TEST_CASE("ablation switches remove exactly their terms") {
    Rng rng(17);
    LossTerms t = random_terms(rng);
    LossWeights w;
    LossReport base = total_loss(t, w);

    AblationSwitches no01;
    no01.colour01 = false;
    LossReport r = total_loss(t, w, no01);
    CHECK(r.weighted.colour[0][1] == 0.0);
    CHECK(r.weighted.colour[0][0] == doctest::Approx(base.weighted.colour[0][0]));
    CHECK(r.weighted.colour[1][0] == doctest::Approx(base.weighted.colour[1][0]));
    CHECK(base.total - r.total == doctest::Approx(base.weighted.colour[0][1]));

    AblationSwitches no_col;
    no_col.colour01 = no_col.colour10 = no_col.colour11 = false;
    LossReport rc = total_loss(t, w, no_col);
    CHECK(rc.weighted.colour[0][0] == doctest::Approx(base.weighted.colour[0][0]));
    CHECK(rc.weighted.colour[0][1] == 0.0);
    CHECK(rc.weighted.colour[1][0] == 0.0);
    CHECK(rc.weighted.colour[1][1] == 0.0);
    // Regularizers survive the -L^col variant.
    CHECK(rc.weighted.diffuse[1][1] == doctest::Approx(base.weighted.diffuse[1][1]));
    CHECK(rc.weighted.eikonal[1] == doctest::Approx(base.weighted.eikonal[1]));

    AblationSwitches no_diffuse;
    no_diffuse.diffuse = false;
    LossReport rd = total_loss(t, w, no_diffuse);
    for (int j = 0; j < 2; ++j)
        for (int k = 0; k < 2; ++k) CHECK(rd.weighted.diffuse[j][k] == 0.0);
    CHECK(rd.weighted.colour[1][1] == doctest::Approx(base.weighted.colour[1][1]));

    AblationSwitches no_light;
    no_light.lighting = false;
    LossReport rl = total_loss(t, w, no_light);
    for (int j = 0; j < 2; ++j)
        for (int k = 0; k < 2; ++k) CHECK(rl.weighted.lighting[j][k] == 0.0);
}

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "symsurf/nn.hpp"

using namespace symsurf;

namespace {

MlpConfig random_config(Rng& rng) {
    std::uniform_int_distribution<int> dim(1, 6), depth(1, 3), coin(0, 1);
    MlpConfig cfg;
    cfg.input_dim = dim(rng);
    int d = depth(rng);
    for (int i = 0; i < d; ++i) cfg.hidden.push_back(dim(rng));
    cfg.output_dim = dim(rng);
    if (d >= 2 && coin(rng)) cfg.skip_layer = 1 + int(rng() % d);
    cfg.activation = coin(rng) ? Activation::Softplus100 : Activation::Relu;
    return cfg;
}

VecX random_params(const Mlp& mlp, Rng& rng) {
    std::normal_distribution<Scalar> g(0.0, 0.7);
    VecX p(mlp.parameter_count());
    for (Eigen::Index i = 0; i < p.size(); ++i) p[i] = g(rng);
    return p;
}

// Relative error against central finite differences.
bool grad_matches(Scalar analytic, Scalar numeric, Scalar rel_tol = 1e-4) {
    Scalar scale = std::max({std::abs(analytic), std::abs(numeric), Scalar(1e-6)});
    return std::abs(analytic - numeric) / scale < rel_tol;
}

}  // namespace

TEST_CASE("positional encoding point examples") {
    PositionalEncoding enc{1, false};
    VecX x(1);
    x << 0.0;
    VecX e = positional_encode(x, enc);
    CHECK(e.size() == 2);
    CHECK(e[0] == doctest::Approx(0.0));
    CHECK(e[1] == doctest::Approx(1.0));

    x << 0.5;
    e = positional_encode(x, enc);
    CHECK(e[0] == doctest::Approx(1.0));
    CHECK(e[1] == doctest::Approx(0.0).epsilon(1e-12));

    // Independent high-precision oracle for the 2D, L=2 case.
    PositionalEncoding enc2{2, false};
    VecX x2(2);
    x2 << 0.25, 0.0;
    VecX e2 = positional_encode(x2, enc2);
    REQUIRE(e2.size() == 8);
    VecX expect(8);
    expect << std::sin(kPi * 0.25), std::sin(0.0), std::cos(kPi * 0.25), std::cos(0.0),
        std::sin(2.0 * kPi * 0.25), std::sin(0.0), std::cos(2.0 * kPi * 0.25), std::cos(0.0);
    CHECK((e2 - expect).cwiseAbs().maxCoeff() < 1e-15);
}

TEST_CASE("positional encoding dimension invariant") {
    PositionalEncoding enc{6, true};
    CHECK(enc.output_dim(3) == 3 * 13);
    MatX x = MatX::Random(5, 3);
    CHECK(positional_encode(x, enc).cols() == 39);
}

TEST_CASE("mlp forward basics") {
    MlpConfig cfg;
    cfg.input_dim = 1;
    cfg.output_dim = 1;
    cfg.activation = Activation::None;
    Mlp mlp(cfg, 0);
    VecX p = VecX::Zero(mlp.parameter_count());
    MatX x(1, 1);
    x << 3.0;
    CHECK(mlp.forward(p, x)(0, 0) == 0.0);

    p << 2.0, 1.0;  // w = 2, b = 1
    CHECK(mlp.forward(p, x)(0, 0) == doctest::Approx(7.0));
}

TEST_CASE("mlp forward vs independent matrix oracle") {
    Rng rng(5);
    MlpConfig cfg;
    cfg.input_dim = 3;
    cfg.hidden = {4, 4};
    cfg.output_dim = 2;
    cfg.activation = Activation::Softplus100;
    Mlp mlp(cfg, 0);
    VecX p = random_params(mlp, rng);
    MatX x = MatX::Random(6, 3);
    MatX y = mlp.forward(p, x);

    // Straightforward re-implementation with explicit loops.
    for (int r = 0; r < x.rows(); ++r) {
        VecX a = x.row(r);
        for (int l = 0; l < 3; ++l) {
            VecX z = mlp.weight(p, l) * a + mlp.bias(p, l);
            if (l < 2) {
                for (Eigen::Index i = 0; i < z.size(); ++i) z[i] = softplus100(z[i]);
            }
            a = z;
        }
        CHECK((y.row(r).transpose() - a).cwiseAbs().maxCoeff() < 1e-12);
    }
}

TEST_CASE("mlp backward linear layer identities") {
    MlpConfig cfg;
    cfg.input_dim = 1;
    cfg.output_dim = 1;
    cfg.activation = Activation::None;
    Mlp mlp(cfg, 0);
    VecX p(2);
    p << 3.0, 0.0;  // y = 3x
    MatX x(1, 1);
    x << 5.0;
    MlpCache cache;
    mlp.forward(p, x, &cache);
    VecX grads = VecX::Zero(2);
    MatX dy(1, 1), dx;
    dy << 1.0;
    mlp.backward(p, cache, dy, grads, &dx);
    CHECK(grads[0] == doctest::Approx(5.0));  // d y / d w = x
    CHECK(dx(0, 0) == doctest::Approx(3.0));  // d y / d x = w

    grads.setZero();
    dy << 0.0;
    mlp.backward(p, cache, dy, grads, &dx);
    CHECK(grads.norm() == 0.0);
}

TEST_CASE("mlp gradients match central finite differences") {
    Rng rng(17);
    const Scalar h = 1e-5;
    for (int trial = 0; trial < 50; ++trial) {
        MlpConfig cfg = random_config(rng);
        Mlp mlp(cfg, 0);
        VecX p = random_params(mlp, rng);
        MatX x = MatX::Random(3, cfg.input_dim);
        MatX w = MatX::Random(3, cfg.output_dim);  // random linear functional

        MlpCache cache;
        mlp.forward(p, x, &cache);
        VecX grads = VecX::Zero(p.size());
        MatX dx;
        mlp.backward(p, cache, w, grads, &dx);

        for (int probe = 0; probe < 8; ++probe) {
            Eigen::Index i = Eigen::Index(rng() % p.size());
            VecX pp = p, pm = p;
            pp[i] += h;
            pm[i] -= h;
            Scalar fd = (mlp.forward(pp, x).cwiseProduct(w).sum() -
                         mlp.forward(pm, x).cwiseProduct(w).sum()) /
                        (2.0 * h);
            CHECK(grad_matches(grads[i], fd));
        }
        for (int probe = 0; probe < 4; ++probe) {
            int r = int(rng() % 3);
            int c = int(rng() % cfg.input_dim);
            MatX xp = x, xm = x;
            xp(r, c) += h;
            xm(r, c) -= h;
            Scalar fd = (mlp.forward(p, xp).cwiseProduct(w).sum() -
                         mlp.forward(p, xm).cwiseProduct(w).sum()) /
                        (2.0 * h);
            CHECK(grad_matches(dx(r, c), fd));
        }
    }
}

TEST_CASE("jacobian pass tangents and second-order backward") {
    Rng rng(19);
    const Scalar h = 1e-5;
    MlpConfig cfg;
    cfg.input_dim = 3;
    cfg.hidden = {8, 8};
    cfg.skip_layer = 1;
    cfg.output_dim = 2;
    cfg.activation = Activation::Softplus100;
    Mlp mlp(cfg, 0);
    VecX p = random_params(mlp, rng);
    MatX x = MatX::Random(4, 3);

    std::array<MatX, 3> seeds;
    for (int k = 0; k < 3; ++k) {
        seeds[k] = MatX::Zero(4, 3);
        seeds[k].col(k).setOnes();
    }
    std::array<MatX, 3> tan;
    MlpJacCache cache;
    MatX y = mlp.forward_jac(p, x, seeds, tan, cache);

    // Tangents are the input-jacobian columns; check against finite differences.
    for (int k = 0; k < 3; ++k) {
        MatX xp = x, xm = x;
        xp.col(k).array() += h;
        xm.col(k).array() -= h;
        MatX fd = (mlp.forward(p, xp) - mlp.forward(p, xm)) / (2.0 * h);
        CHECK((tan[k] - fd).cwiseAbs().maxCoeff() < 1e-6);
    }

    // Scalar loss using both the output and its jacobian:
    // L = sum(y) + sum over k of sum(tan_k^2).
    auto loss = [&](const VecX& params, const MatX& input) {
        std::array<MatX, 3> t;
        MlpJacCache c;
        MatX out = mlp.forward_jac(params, input, seeds, t, c);
        Scalar v = out.sum();
        for (int k = 0; k < 3; ++k) v += t[k].squaredNorm();
        return v;
    };

    MatX dy = MatX::Ones(4, 2);
    std::array<MatX, 3> dtan;
    for (int k = 0; k < 3; ++k) dtan[k] = 2.0 * tan[k];
    VecX grads = VecX::Zero(p.size());
    MatX dx;
    std::array<MatX, 3> dseeds;
    mlp.backward_jac(p, cache, dy, dtan, grads, &dx, &dseeds);

    for (int probe = 0; probe < 30; ++probe) {
        Eigen::Index i = Eigen::Index(rng() % p.size());
        VecX pp = p, pm = p;
        pp[i] += h;
        pm[i] -= h;
        Scalar fd = (loss(pp, x) - loss(pm, x)) / (2.0 * h);
        CHECK(grad_matches(grads[i], fd));
    }
    for (int r = 0; r < 4; ++r) {
        for (int c = 0; c < 3; ++c) {
            MatX xp = x, xm = x;
            xp(r, c) += h;
            xm(r, c) -= h;
            // seeds stay fixed here, so this checks dx only
            Scalar fd = (loss(p, xp) - loss(p, xm)) / (2.0 * h);
            CHECK(grad_matches(dx(r, c), fd, 1e-3));
        }
    }
}

TEST_CASE("parameter store slices") {
    ParameterStore store;
    store.add("a", "g1", 3);
    store.add("b", "g2", 2);
    CHECK(store.size() == 5);
    CHECK(store.slice("b").offset == 3);
    CHECK(store.group_of(4) == "g2");
    CHECK_THROWS_AS(store.add("a", "g1", 1), Error);
    CHECK_THROWS_AS(store.slice("zzz"), Error);
}

TEST_CASE("adam basics") {
    ParameterStore store;
    store.add("w", "main", 1);
    store.view("w")[0] = 1.0;
    AdamState state;
    auto lr_of = [](const std::string&) { return 0.1; };

    VecX zero = VecX::Zero(1);
    adam_step(store, zero, state, 0, lr_of);
    CHECK(store.view("w")[0] == doctest::Approx(1.0));

    // First step with constant gradient moves by ~lr against the sign.
    store.view("w")[0] = 1.0;
    state = AdamState{};
    VecX g(1);
    g << 0.5;
    adam_step(store, g, state, 0, lr_of);
    CHECK(store.view("w")[0] == doctest::Approx(1.0 - 0.1).epsilon(1e-4));

    VecX bad(1);
    bad << std::nan("");
    CHECK_THROWS_AS(adam_step(store, bad, state, 1, lr_of), Error);
}

TEST_CASE("adam minimizes a quadratic") {
    // Scalar simulation oracle: f(w) = w^2, df/dw = 2w, from w = 1.
    ParameterStore store;
    store.add("w", "main", 1);
    store.view("w")[0] = 1.0;
    AdamState state;
    auto lr_of = [](const std::string&) { return 0.1; };
    for (int i = 0; i < 100; ++i) {
        VecX g(1);
        g << 2.0 * store.view("w")[0];
        adam_step(store, g, state, i, lr_of);
    }
    CHECK(std::abs(store.view("w")[0]) < 0.2);
}

TEST_CASE("adam trajectories are deterministic") {
    auto run = [] {
        Rng rng(99);
        MlpConfig cfg;
        cfg.input_dim = 2;
        cfg.hidden = {4};
        cfg.output_dim = 1;
        Mlp mlp(cfg, 0);
        ParameterStore store;
        store.add("net", "main", mlp.parameter_count());
        VecX p0(mlp.parameter_count());
        std::normal_distribution<Scalar> g;
        for (Eigen::Index i = 0; i < p0.size(); ++i) p0[i] = g(rng);
        store.values() = p0;
        AdamState state;
        MatX x(4, 2);
        for (Eigen::Index i = 0; i < x.size(); ++i) x.data()[i] = g(rng);
        for (int i = 0; i < 100; ++i) {
            MlpCache cache;
            MatX y = mlp.forward(store.values(), x, &cache);
            VecX grads = VecX::Zero(store.size());
            mlp.backward(store.values(), cache, y, grads);
            adam_step(store, grads, state, i, [](const std::string&) { return 1e-3; });
        }
        return VecX(store.values());
    };
    VecX a = run(), b = run();
    CHECK((a - b).cwiseAbs().maxCoeff() == 0.0);  // bit-identical
}

TEST_CASE("learning rate schedule") {
    ScheduleConfig sched;
    sched.base_lr = 5e-4;
    sched.total_iters = 10000;
    sched.warmup_iters = 2500;
    sched.final_fraction = 0.05;
    sched.ramped_groups = {"sdf"};

    CHECK(lr_at(sched, "sdf", 0) == 0.0);
    CHECK(lr_at(sched, "sdf", 2500) == doctest::Approx(sched.base_lr));
    CHECK(lr_at(sched, "sdf", 10000) == doctest::Approx(0.05 * sched.base_lr));
    CHECK(lr_at(sched, "background", 0) == doctest::Approx(sched.base_lr));
    CHECK(lr_at(sched, "background", 9999) == doctest::Approx(sched.base_lr));

    // Continuity at the warmup boundary and monotone decay after it.
    Scalar before = lr_at(sched, "sdf", 2499);
    Scalar at = lr_at(sched, "sdf", 2500);
    CHECK(std::abs(at - before) < 1e-3 * sched.base_lr);
    Scalar prev = at;
    for (int i = 2501; i <= 10000; i += 7) {
        Scalar v = lr_at(sched, "sdf", i);
        CHECK(v <= prev + 1e-15);
        prev = v;
    }
}

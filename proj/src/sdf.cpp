#include "symsurf/sdf.hpp"

#include <cmath>

namespace symsurf {

// ---------------------------------------------------------------------------
// Analytic shapes

Scalar SphereShape::distance(const Vec3& x) const { return (x - centre_).norm() - radius_; }

Vec3 SphereShape::gradient(const Vec3& x) const {
    Vec3 d = x - centre_;
    Scalar n = d.norm();
    if (n < 1e-12) return Vec3::UnitZ();  // singular at the centre
    return d / n;
}

Scalar BoxShape::distance(const Vec3& x) const {
    Vec3 q = (x - centre_).cwiseAbs() - half_;
    Scalar outside = q.cwiseMax(0.0).norm();
    Scalar inside = std::min(q.maxCoeff(), 0.0);
    return outside + inside - rounding_;
}

Vec3 BoxShape::gradient(const Vec3& x) const {
    Vec3 d = x - centre_;
    Vec3 q = d.cwiseAbs() - half_;
    if ((q.array() > 0.0).any()) {
        Vec3 g = q.cwiseMax(0.0);
        Scalar n = g.norm();
        if (n < 1e-12) return Vec3::UnitZ();
        g /= n;
        for (int i = 0; i < 3; ++i) g[i] *= d[i] >= 0.0 ? 1.0 : -1.0;
        return g;
    }
    int axis;
    q.maxCoeff(&axis);
    Vec3 g = Vec3::Zero();
    g[axis] = d[axis] >= 0.0 ? 1.0 : -1.0;
    return g;
}

Scalar PlaneShape::distance(const Vec3& x) const { return up_.dot(x) - height_; }

Vec3 PlaneShape::gradient(const Vec3&) const { return up_; }

const Shape* UnionShape::winner(const Vec3& x) const {
    const Shape* best = nullptr;
    Scalar best_d = 0.0;
    for (const auto& p : parts_) {
        Scalar d = p->distance(x);
        if (!best || d < best_d) {  // strict: first operand wins ties
            best = p.get();
            best_d = d;
        }
    }
    if (!best) throw Error("sdf: empty union");
    return best;
}

Scalar UnionShape::distance(const Vec3& x) const { return winner(x)->distance(x); }

Vec3 UnionShape::gradient(const Vec3& x) const { return winner(x)->gradient(x); }

SdfEval eval_analytic(const Shape& shape, const Vec3& x) {
    SdfEval e;
    e.delta = shape.distance(x);
    e.normal = shape.gradient(x);
    return e;
}

// ---------------------------------------------------------------------------
// Neural SDF

namespace {

MlpConfig trunk_config(const NeuralSdfConfig& c, const PositionalEncoding& enc) {
    MlpConfig cfg;
    cfg.input_dim = enc.output_dim(3);
    cfg.hidden.assign(c.depth, c.width);
    cfg.output_dim = 1 + c.feature_dim;
    cfg.skip_layer = c.skip_layer;
    cfg.activation = Activation::Softplus100;
    return cfg;
}

}  // namespace

NeuralSdf::NeuralSdf(const NeuralSdfConfig& config, Eigen::Index offset)
    : config_(config), enc_{config.num_freqs, true},
      trunk_(trunk_config(config, enc_), offset) {}

NeuralSdfBatch NeuralSdf::forward(const VecX& params, const MatX& x) const {
    NeuralSdfBatch b;
    b.points = x;
    b.scaled = x.array().rowwise() * config_.input_scale.transpose().array();
    b.encoded = positional_encode_jac(b.scaled, enc_);
    std::array<MatX, 3> seeds;
    for (int k = 0; k < 3; ++k) seeds[k] = config_.input_scale[k] * b.encoded.jac[k];
    MatX y = trunk_.forward_jac(params, b.encoded.values, seeds, b.tangents, b.cache);
    b.delta = y.col(0);
    b.normal.resize(x.rows(), 3);
    for (int k = 0; k < 3; ++k) b.normal.col(k) = b.tangents[k].col(0);
    b.feature = y.rightCols(config_.feature_dim);
    return b;
}

void NeuralSdf::backward(const VecX& params, const NeuralSdfBatch& batch, const VecX& g_delta,
                         const MatX& g_normal, const MatX& g_feature, VecX& grads,
                         MatX* g_points) const {
    const Eigen::Index n = batch.points.rows();
    const int out = 1 + config_.feature_dim;
    MatX dy = MatX::Zero(n, out);
    if (g_delta.size()) dy.col(0) = g_delta;
    if (g_feature.size()) dy.rightCols(config_.feature_dim) = g_feature;
    std::array<MatX, 3> dtan;
    if (g_normal.size()) {
        for (int k = 0; k < 3; ++k) {
            dtan[k] = MatX::Zero(n, out);
            dtan[k].col(0) = g_normal.col(k);
        }
    }
    MatX g_enc;
    std::array<MatX, 3> g_seeds;
    trunk_.backward_jac(params, batch.cache, dy, dtan, grads, g_points ? &g_enc : nullptr,
                        g_points ? &g_seeds : nullptr);
    if (g_points) {
        // Chain through the encoding and the per-axis input scaling.
        std::array<MatX, 3> g_jac;
        for (int k = 0; k < 3; ++k) g_jac[k] = config_.input_scale[k] * g_seeds[k];
        MatX g_scaled = MatX::Zero(n, 3);
        positional_encode_backward(batch.scaled, enc_, g_enc, &g_jac, g_scaled);
        *g_points = g_scaled.array().rowwise() * config_.input_scale.transpose().array();
    }
}

SdfEval NeuralSdf::eval(const VecX& params, const Vec3& x) const {
    NeuralSdfBatch b = forward(params, MatX(x.transpose()));
    SdfEval e;
    e.delta = b.delta[0];
    e.normal = b.normal.row(0);
    e.feature = b.feature.row(0);
    return e;
}

void geometric_init(NeuralSdf& sdf, VecX& params, const EllipsoidInit& ellipsoid, Rng& rng) {
    const Vec3& a = ellipsoid.semi_axes;
    if ((a.array() <= 0.0).any()) throw Error("sdf: semi-axes must be positive");
    const Scalar radius = a.mean();
    sdf.set_input_scale(radius * a.cwiseInverse());

    const Mlp& trunk = sdf.trunk();
    const MlpConfig& cfg = trunk.config();
    std::normal_distribution<Scalar> g;
    for (int l = 0; l < cfg.depth(); ++l) {
        auto w = trunk.weight(params, l);
        Scalar std_dev = std::sqrt(2.0) / std::sqrt(Scalar(cfg.layer_out(l)));
        for (Eigen::Index i = 0; i < w.size(); ++i) w.data()[i] = std_dev * g(rng);
        trunk.bias(params, l).setZero();

        if (l == 0) {
            // Only the raw-coordinate channels carry the spherical prior.
            w.rightCols(cfg.input_dim - 3).setZero();
        } else if (l == cfg.skip_layer) {
            w.rightCols(cfg.input_dim).setZero();
        }
        if (l == cfg.depth() - 1) {
            Scalar mean = std::sqrt(kPi) / std::sqrt(Scalar(cfg.layer_in(l)));
            for (Eigen::Index c = 0; c < w.cols(); ++c) w(0, c) = mean + 1e-4 * g(rng);
            for (Eigen::Index r = 1; r < w.rows(); ++r) {
                for (Eigen::Index c = 0; c < w.cols(); ++c) w(r, c) = 1e-3 * g(rng);
            }
            trunk.bias(params, l)[0] = -radius;
        }
    }

    // The spherical weight prior alone is coarse at small widths. Calibrate
    // the distance output row by ridge regression of the last hidden features
    // against the squashed-sphere distance over probes in twice the box.
    const int probes = 2048;
    MatX x(probes, 3);
    std::uniform_real_distribution<Scalar> u(-2.0, 2.0);
    std::uniform_real_distribution<Scalar> u01(0.0, 1.0);
    std::normal_distribution<Scalar> gauss;
    for (int i = 0; i < probes; ++i) {
        if (i % 2 == 0) {
            for (int k = 0; k < 3; ++k) x(i, k) = a[k] * u(rng);
        } else {
            // Radius-uniform probes so the fit also covers the interior.
            Vec3 dir(gauss(rng), gauss(rng), gauss(rng));
            dir.normalize();
            x.row(i) = (2.0 * u01(rng)) * a.cwiseProduct(dir).transpose();
        }
    }
    NeuralSdfBatch batch = sdf.forward(params, x);
    const MatX& features = batch.cache.primal.inputs.back();
    const Eigen::Index in = features.cols();
    MatX design(probes, in + 1);
    design.leftCols(in) = features;
    design.col(in).setOnes();
    VecX target(probes);
    for (int i = 0; i < probes; ++i) {
        target[i] = (x.row(i).transpose().cwiseProduct(sdf.config().input_scale)).norm() - radius;
    }
    MatX gram = design.transpose() * design;
    gram.diagonal().array() += 1e-6 * Scalar(probes);
    VecX coef = gram.ldlt().solve(design.transpose() * target);
    const int last = cfg.depth() - 1;
    trunk.weight(params, last).row(0) = coef.head(in).transpose();
    trunk.bias(params, last)[0] = coef[in];
}

// ---------------------------------------------------------------------------
// Joint field

SdfEval eval_joint(const SdfEval& object_eval, const GroundPlane& ground, const Vec3& x,
                   const VecX& ground_feature) {
    Scalar gd = ground_distance(ground, x);
    if (object_eval.delta <= gd) return object_eval;  // object wins ties
    SdfEval e;
    e.delta = gd;
    e.normal = ground.up;
    e.feature = ground_feature;
    return e;
}

}  // namespace symsurf

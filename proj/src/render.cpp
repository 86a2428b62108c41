#include "symsurf/render.hpp"

#include <algorithm>
#include <cmath>

namespace symsurf {

Ray pixel_ray(const Camera& camera, const Vec2& pixel) {
    Ray ray;
    Vec3 cam_dir = camera.intrinsics.inverse() * Vec3(pixel.x(), pixel.y(), 1.0);
    ray.direction = (camera.rotation().transpose() * cam_dir).normalized();
    ray.origin = camera.centre();

    // |o + t d| = 1 with unit d.
    Scalar b = ray.origin.dot(ray.direction);
    Scalar c = ray.origin.squaredNorm() - 1.0;
    Scalar disc = b * b - c;
    if (disc > 0.0) {
        Scalar root = std::sqrt(disc);
        Scalar t0 = -b - root;
        Scalar t1 = -b + root;
        if (t1 > 0.0) {
            ray.near = std::max(t0, 0.0);
            ray.far = t1;
        }
    }
    return ray;
}

VecX coarse_samples(const Ray& ray, int n, Rng& rng) {
    if (n < 1) throw Error("render: need at least one sample");
    if (!ray.hits_foreground()) throw Error("render: background-only ray has no samples");
    std::uniform_real_distribution<Scalar> u(0.0, 1.0);
    VecX ts(n);
    Scalar span = ray.far - ray.near;
    for (int i = 0; i < n; ++i) ts[i] = ray.near + span * (i + u(rng)) / n;
    return ts;
}

VecX importance_samples(const VecX& ts, const VecX& weights, int n, Rng& rng) {
    const Eigen::Index bins = ts.size() - 1;
    if (bins < 1 || weights.size() != bins) throw Error("render: bad importance inputs");
    VecX cdf(bins + 1);
    cdf[0] = 0.0;
    for (Eigen::Index i = 0; i < bins; ++i) cdf[i + 1] = cdf[i] + std::max(weights[i], 0.0);
    Scalar total = cdf[bins];
    std::uniform_real_distribution<Scalar> u(0.0, 1.0);
    VecX out(n);
    if (total <= 0.0) {
        for (int j = 0; j < n; ++j)
            out[j] = ts[0] + (ts[bins] - ts[0]) * (j + u(rng)) / n;
        return out;
    }
    for (int j = 0; j < n; ++j) {
        Scalar target = total * (j + u(rng)) / n;  // stratified inverse CDF
        Eigen::Index i =
            std::upper_bound(cdf.data(), cdf.data() + bins, target) - cdf.data();
        i = std::min(i - 1 < 0 ? Eigen::Index(0) : i - 1, bins - 1);
        Scalar bin_mass = cdf[i + 1] - cdf[i];
        Scalar frac = bin_mass > 0.0 ? (target - cdf[i]) / bin_mass : 0.5;
        out[j] = ts[i] + frac * (ts[i + 1] - ts[i]);
    }
    std::sort(out.data(), out.data() + n);
    return out;
}

VecX merge_samples(const VecX& a, const VecX& b) {
    std::vector<Scalar> merged(a.data(), a.data() + a.size());
    merged.insert(merged.end(), b.data(), b.data() + b.size());
    std::sort(merged.begin(), merged.end());
    std::vector<Scalar> unique;
    unique.reserve(merged.size());
    for (Scalar t : merged) {
        if (unique.empty() || t - unique.back() > 1e-12) unique.push_back(t);
    }
    return Eigen::Map<VecX>(unique.data(), Eigen::Index(unique.size()));
}

SectionEval section_deltas(const Shape& shape, const Ray& ray, const VecX& ts) {
    const Eigen::Index n = ts.size() - 1;
    if (n < 1) throw Error("render: need at least two samples for sections");
    SectionEval s;
    s.mid_ts.resize(n);
    s.mid_delta.resize(n);
    s.mid_normal.resize(n, 3);
    s.delta_lo.resize(n);
    s.delta_hi.resize(n);
    for (Eigen::Index i = 0; i < n; ++i) {
        Scalar m = 0.5 * (ts[i] + ts[i + 1]);
        Scalar half = 0.5 * (ts[i + 1] - ts[i]);
        Vec3 x = ray.origin + m * ray.direction;
        Scalar d = shape.distance(x);
        Vec3 g = shape.gradient(x);
        Scalar slope = g.dot(ray.direction);
        s.mid_ts[i] = m;
        s.mid_delta[i] = d;
        s.mid_normal.row(i) = g;
        s.delta_lo[i] = d - half * slope;
        s.delta_hi[i] = d + half * slope;
    }
    return s;
}

Scalar alpha_from_deltas(Scalar delta_lo, Scalar delta_hi, Scalar tau) {
    if (tau <= 0.0) throw Error("render: tau must be positive");
    // log sigma(x) = -softplus(-x); ratio = sigma(tau d1) / sigma(tau d0).
    auto log_sigmoid = [](Scalar x) {
        return x > 0.0 ? -std::log1p(std::exp(-x)) : x - std::log1p(std::exp(x));
    };
    Scalar log_ratio = log_sigmoid(tau * delta_hi) - log_sigmoid(tau * delta_lo);
    if (log_ratio >= 0.0) return 0.0;
    // 1 - ratio; clamp below 1 so the [0, 1) contract survives saturation.
    return std::min(-std::expm1(log_ratio), std::nextafter(1.0, 0.0));
}

VecX accumulate(const VecX& alphas) {
    VecX w(alphas.size());
    Scalar transmittance = 1.0;
    for (Eigen::Index i = 0; i < alphas.size(); ++i) {
        w[i] = alphas[i] * transmittance;
        transmittance *= 1.0 - alphas[i];
    }
    return w;
}

Vec3 render_pixel(const VecX& weights, const MatX& colours, const Vec3& background) {
    if (colours.rows() != weights.size() || colours.cols() != 3)
        throw Error("render: colour/weight mismatch");
    Vec3 c = colours.transpose() * weights;
    return c + (1.0 - weights.sum()) * background;
}

bool render_depth(const VecX& weights, const VecX& ts, Scalar& depth) {
    if (ts.size() != weights.size()) throw Error("render: depth length mismatch");
    Scalar mask = weights.sum();
    depth = weights.dot(ts) / std::max(mask, 1e-6);
    return mask > 1e-6;
}

TransformedSamples transformed_path(const Ray& ray, const VecX& mid_ts, const AffineMap& map) {
    TransformedSamples out;
    const Eigen::Index n = mid_ts.size();
    out.points.resize(n, 3);
    out.inside.resize(std::size_t(n));
    out.direction = map.direction(ray.direction, true);
    for (Eigen::Index i = 0; i < n; ++i) {
        Vec3 x = ray.origin + mid_ts[i] * ray.direction;
        Vec3 y = map.point(x);
        out.points.row(i) = y;
        out.inside[std::size_t(i)] = y.norm() <= 1.0;
    }
    return out;
}

// ---------------------------------------------------------------------------
// Background model

namespace {

MlpConfig background_mlp_config(const BackgroundConfig& c, const PositionalEncoding& enc) {
    MlpConfig cfg;
    cfg.input_dim = enc.output_dim(3);
    cfg.hidden.assign(c.depth, c.width);
    cfg.output_dim = 3;
    cfg.activation = Activation::Softplus100;
    cfg.squash = OutputSquash::Sigmoid;
    return cfg;
}

}  // namespace

BackgroundModel::BackgroundModel(const BackgroundConfig& config, Eigen::Index offset)
    : config_(config), enc_{config.num_freqs, true},
      mlp_(background_mlp_config(config, enc_), offset) {}

MatX BackgroundModel::forward(const VecX& params, const MatX& directions,
                              MlpCache* cache) const {
    return mlp_.forward(params, positional_encode(directions, enc_), cache);
}

void BackgroundModel::backward(const VecX& params, const MlpCache& cache, const MatX& g_rgb,
                               VecX& grads) const {
    mlp_.backward(params, cache, g_rgb, grads, nullptr);
}

}  // namespace symsurf

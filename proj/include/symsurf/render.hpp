#pragma once

#include <array>

#include "symsurf/camera.hpp"
#include "symsurf/common.hpp"
#include "symsurf/nn.hpp"
#include "symsurf/sdf.hpp"
#include "symsurf/symmetry.hpp"

namespace symsurf {

struct Ray {
    Vec3 origin = Vec3::Zero();
    Vec3 direction = Vec3::UnitZ();
    Scalar near = 0.0;
    Scalar far = 0.0;

    // False when the ray misses the unit sphere: the pixel is background-only.
    bool hits_foreground() const { return far > near; }
};

// Casts a ray through a continuous image position (pixel centres at i + 0.5).
// The foreground interval is the analytic intersection with the unit sphere.
Ray pixel_ray(const Camera& camera, const Vec2& pixel);

// Stratified uniform samples over [near, far]; strictly increasing.
VecX coarse_samples(const Ray& ray, int n, Rng& rng);

// Inverse-CDF draws from the piecewise-constant density proportional to the
// coarse section weights (bins [ts_i, ts_{i+1}]). Zero total weight falls back
// to the uniform density.
VecX importance_samples(const VecX& ts, const VecX& weights, int n, Rng& rng);

// Sorted merge of two increasing sample lists, deduplicated at 1e-12.
VecX merge_samples(const VecX& a, const VecX& b);

// Midpoint SDF evaluations with gradient-adjusted endpoint estimates
// delta(t_i) = delta(m_i) -/+ half-width * (grad . d) per section.
struct SectionEval {
    VecX mid_ts;     // section midpoints m_i
    VecX mid_delta;  // delta(m_i)
    MatX mid_normal;
    VecX delta_lo;   // estimate at t_i
    VecX delta_hi;   // estimate at t_{i+1}
};
SectionEval section_deltas(const Shape& shape, const Ray& ray, const VecX& ts);

// Discrete opacity alpha = max{0, (sigma(tau d0) - sigma(tau d1)) / sigma(tau d0)},
// computed in log space so extreme tau * delta products stay finite.
Scalar alpha_from_deltas(Scalar delta_lo, Scalar delta_hi, Scalar tau);

// w_i = alpha_i * prod_{j<i} (1 - alpha_j).
VecX accumulate(const VecX& alphas);

// c_hat = sum w_i c_i + (1 - sum w_i) * background.
Vec3 render_pixel(const VecX& weights, const MatX& colours, const Vec3& background);

// Expected depth along the ray; invalid (returns false) when the mask is
// below the epsilon floor.
bool render_depth(const VecX& weights, const VecX& ts, Scalar& depth);
inline Scalar render_mask(const VecX& weights) { return weights.sum(); }

// Symmetry-mapped sample positions and direction for the transformed path.
// Samples mapped outside the unit sphere are flagged and must receive zero
// weight in the transformed accumulation.
struct TransformedSamples {
    MatX points;  // N x 3
    Vec3 direction = Vec3::UnitZ();
    std::vector<bool> inside;
};
TransformedSamples transformed_path(const Ray& ray, const VecX& mid_ts, const AffineMap& map);

// Direction-conditioned background colour network (positional encoding on d,
// sigmoid-squashed RGB).
struct BackgroundConfig {
    int num_freqs = 4;
    int width = 32;
    int depth = 2;
};

class BackgroundModel {
  public:
    BackgroundModel() = default;
    BackgroundModel(const BackgroundConfig& config, Eigen::Index offset);

    Eigen::Index parameter_count() const { return mlp_.parameter_count(); }

    MatX forward(const VecX& params, const MatX& directions, MlpCache* cache = nullptr) const;
    // Adjoint wrt params only; directions are treated as constants.
    void backward(const VecX& params, const MlpCache& cache, const MatX& g_rgb,
                  VecX& grads) const;

    const Mlp& mlp() const { return mlp_; }

  private:
    BackgroundConfig config_;
    PositionalEncoding enc_;
    Mlp mlp_;
};

}  // namespace symsurf

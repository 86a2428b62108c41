#pragma once

#include "symsurf/common.hpp"

namespace symsurf {

struct LossWeights {
    Scalar symmetricity = 0.1;  // discount on all transformed-path (j=1) terms
    Scalar diffuse = 0.01;
    Scalar lighting = 0.001;
    Scalar eikonal = 0.1;

    void validate() const {
        if (symmetricity < 0.0 || symmetricity > 1.0)
            throw Error("losses: symmetricity must lie in [0,1]");
        if (diffuse < 0.0 || lighting < 0.0 || eikonal < 0.0)
            throw Error("losses: weights must be non-negative");
    }
};

// Per-term enable flags for the ablation study.
struct AblationSwitches {
    bool colour01 = true;
    bool colour10 = true;
    bool colour11 = true;
    bool diffuse = true;
    bool lighting = true;

    bool colour_enabled(int j, int k) const {
        if (j == 0 && k == 1) return colour01;
        if (j == 1 && k == 0) return colour10;
        if (j == 1 && k == 1) return colour11;
        return true;  // the source path is never ablated
    }
};

// (1/3) * sum of per-channel absolute errors.
Scalar colour_loss(const Vec3& predicted, const Vec3& target);

// Specular-free render compared against the ground-truth pixel: compose
// sum_i w_i gamma^d_i c^a_i plus background transmittance, clamp, Eq. 7 form.
Scalar diffuse_render_loss(const VecX& weights, const VecX& diffuse, const MatX& albedo,
                           const Vec3& background, const Vec3& target);

// (1/n) * sum (|grad_i| - 1)^2 over rows of `gradients`.
Scalar eikonal_loss(const MatX& gradients);

// Scalar term values per path; colour/diffuse/lighting indexed [j][k],
// eikonal by j only.
struct LossTerms {
    Scalar colour[2][2] = {{0, 0}, {0, 0}};
    Scalar diffuse[2][2] = {{0, 0}, {0, 0}};
    Scalar lighting[2][2] = {{0, 0}, {0, 0}};
    Scalar eikonal[2] = {0, 0};
};

struct LossReport {
    LossTerms weighted;  // after loss weights, path factor, and ablation
    Scalar total = 0.0;
};

// Full objective: sum over (j,k) of (1 + (lambda-1) j) applied to the bracket
// (colour + diffuse + lighting + eikonal terms with their weights). Disabled
// terms contribute exactly zero.
LossReport total_loss(const LossTerms& terms, const LossWeights& weights,
                      const AblationSwitches& ablation = {});

}  // namespace symsurf

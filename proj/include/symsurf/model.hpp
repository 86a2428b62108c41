#pragma once

#include <vector>

#include "symsurf/appearance.hpp"
#include "symsurf/camera.hpp"
#include "symsurf/image.hpp"
#include "symsurf/losses.hpp"
#include "symsurf/nn.hpp"
#include "symsurf/render.hpp"
#include "symsurf/sdf.hpp"
#include "symsurf/symmetry.hpp"

namespace symsurf {

struct SamplingConfig {
    int n_coarse = 64;
    int n_fine = 64;
};

struct ModelConfig {
    NeuralSdfConfig sdf;
    AppearanceConfig appearance;
    BackgroundConfig background;
    Scalar tau_init = 20.0;
    bool ground = true;
};

// The full trainable scene model: neural SDF (plus fixed ground plane with a
// learned constant feature), Phong-factorized appearance heads, background
// network, learned opacity sharpness tau (stored as log tau), and per-symmetry
// rigid-frame increments.
//
// Frame increments are local coordinates: the stored 6-vector (axis-angle,
// translation) parametrizes a correction composed onto the current frame.
// Gradients are exact at the zero increment; the training loop folds the
// increment into the frame after every optimizer step, so evaluation always
// happens at zero.
class Model {
  public:
    Model(const ModelConfig& config, const SymmetrySet& symmetries, const GroundPlane& ground);

    const ModelConfig& config() const { return config_; }
    ParameterStore& store() { return store_; }
    const ParameterStore& store() const { return store_; }
    const NeuralSdf& sdf() const { return sdf_; }
    const SymmetrySet& symmetries() const { return symmetries_; }
    void set_symmetries(const SymmetrySet& s);
    const GroundPlane& ground() const { return ground_; }

    // Random head/background init plus geometric SDF initialization.
    void init(Rng& rng, const EllipsoidInit& ellipsoid);

    Scalar tau(const VecX& params) const;
    // Frame of spec `index` with the stored increment composed on.
    SymmetrySpec effective_spec(const VecX& params, int index) const;
    // Composes every stored increment into its frame and zeroes the slices.
    void fold_symmetry_increments();

    struct BatchOptions {
        SamplingConfig sampling;
        LossWeights weights;
        AblationSwitches ablation;
        bool transformed = true;      // false drops the whole j=1 path (lambda-lambda = 0 runs)
        bool lighting_term = true;    // false skips the lighting-loss computation entirely
        bool with_grads = true;
        int symmetry_index = 0;       // which spec drives the transformed path
    };

    struct BatchResult {
        LossReport report;   // batch means through Eq. 9 weighting
        LossTerms raw;       // unweighted batch means (introspection)
        MatX colour00;       // per-ray source render, R x 3
        VecX mask0;          // per-ray source mask
        VecX depth0;         // per-ray source depth (0 when invalid)
    };

    // Evaluates a ray batch end to end; when with_grads, accumulates the
    // gradient of report.total into `grads` (sized like the store).
    BatchResult evaluate_batch(const VecX& params, const std::vector<Ray>& rays,
                               const MatX& targets, Rng& rng, const BatchOptions& options,
                               VecX* grads) const;

    struct ImageRender {
        Image rgb;
        Image depth;
        Image mask;
    };

    // Source-path render of a full camera view (no gradients).
    ImageRender render_image(const VecX& params, const Camera& camera, Rng& rng,
                             const SamplingConfig& sampling) const;

    // Signed distance of the joint field (object min ground) at x.
    Scalar field_distance(const VecX& params, const Vec3& x) const;
    // Object-only neural distance (used for mesh extraction).
    Scalar object_distance(const VecX& params, const Vec3& x) const;

  private:
    ModelConfig config_;
    SymmetrySet symmetries_;
    GroundPlane ground_;
    ParameterStore store_;
    NeuralSdf sdf_;
    AppearanceModel appearance_;
    BackgroundModel background_;
    Eigen::Index tau_offset_ = 0;
    Eigen::Index ground_feature_offset_ = 0;
    Eigen::Index symmetry_offset_ = 0;  // 6 scalars per spec
};

}  // namespace symsurf

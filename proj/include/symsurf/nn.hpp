#pragma once

#include <array>
#include <functional>
#include <set>
#include <string>
#include <vector>

#include "symsurf/common.hpp"

namespace symsurf {

// ---------------------------------------------------------------------------
// Positional encoding

struct PositionalEncoding {
    int num_freqs = 0;
    bool include_input = true;

    int output_dim(int input_dim) const {
        return input_dim * (2 * num_freqs + (include_input ? 1 : 0));
    }
};

// Row-wise encoding of a batch: [x | sin(2^k pi x), cos(2^k pi x)]_k.
MatX positional_encode(const MatX& x, const PositionalEncoding& enc);
VecX positional_encode(const VecX& x, const PositionalEncoding& enc);

// Encoding together with its per-input-component Jacobian seeds,
// d_e[k](i, :) = dE(i, :)/dx_k. Input dimension fixed at 3.
struct Encoded3 {
    MatX values;                 // N x D
    std::array<MatX, 3> jac;     // each N x D
};
Encoded3 positional_encode_jac(const MatX& x, const PositionalEncoding& enc);

// Reverse pass through the encoding: g_values is the adjoint of E and
// g_jac[k] the adjoint of dE/dx_k (may be empty). Accumulates into gx (N x 3).
void positional_encode_backward(const MatX& x, const PositionalEncoding& enc,
                                const MatX& g_values, const std::array<MatX, 3>* g_jac,
                                MatX& gx);

// ---------------------------------------------------------------------------
// Parameter storage

struct ParamSlice {
    std::string name;
    std::string group;
    Eigen::Index offset = 0;
    Eigen::Index size = 0;
};

class ParameterStore {
  public:
    Eigen::Index add(const std::string& name, const std::string& group, Eigen::Index size);

    Eigen::Index size() const { return values_.size(); }
    VecX& values() { return values_; }
    const VecX& values() const { return values_; }

    const std::vector<ParamSlice>& slices() const { return slices_; }
    const ParamSlice& slice(const std::string& name) const;
    Eigen::VectorBlock<VecX> view(const std::string& name);

    // Group tag for every scalar, aligned with values().
    const std::string& group_of(Eigen::Index i) const;

  private:
    VecX values_{0};
    std::vector<ParamSlice> slices_;
};

// ---------------------------------------------------------------------------
// MLP

enum class Activation { Softplus100, Relu, None };
enum class OutputSquash { None, Sigmoid, TwoSigmoid };

struct MlpConfig {
    int input_dim = 0;
    std::vector<int> hidden;
    int output_dim = 0;
    int skip_layer = -1;  // hidden layer whose input is [prev activation, raw input]
    Activation activation = Activation::Softplus100;
    OutputSquash squash = OutputSquash::None;

    int depth() const { return int(hidden.size()) + 1; }
    Eigen::Index parameter_count() const;
    int layer_in(int l) const;
    int layer_out(int l) const;
};

struct MlpCache {
    std::vector<MatX> inputs;   // per layer input A_l
    std::vector<MatX> pre;      // per layer pre-activation Z_l
    MatX output;                // post-squash
};

// Caches for the joint primal+tangent pass (3 input tangent directions).
struct MlpJacCache {
    MlpCache primal;
    std::vector<std::array<MatX, 3>> tangent_in;  // per layer TA_l
    std::vector<std::array<MatX, 3>> lin_tangent; // per layer U_l = TA_l * W^T
};

// A multilayer perceptron over a flat parameter slice. Layout per layer:
// W (out x in, column-major) then b.
class Mlp {
  public:
    Mlp() = default;
    Mlp(MlpConfig config, Eigen::Index offset);

    const MlpConfig& config() const { return config_; }
    Eigen::Index offset() const { return offset_; }
    Eigen::Index parameter_count() const { return config_.parameter_count(); }

    MatX forward(const VecX& params, const MatX& x, MlpCache* cache = nullptr) const;

    // dY is the adjoint of the (post-squash) output. Accumulates parameter
    // gradients into grads; optionally returns the input adjoint.
    void backward(const VecX& params, const MlpCache& cache, const MatX& dy,
                  VecX& grads, MatX* dx = nullptr) const;

    // Primal plus forward tangents. seeds[k] holds the input tangent in
    // direction k (N x input_dim). Outputs tangents of the raw (pre-squash)
    // output. Only valid for squash None.
    MatX forward_jac(const VecX& params, const MatX& x, const std::array<MatX, 3>& seeds,
                     std::array<MatX, 3>& out_tangents, MlpJacCache& cache) const;

    // Reverse pass through the primal+tangent computation. dy is the output
    // adjoint; dtan[k] the adjoint of the k-th output tangent (may have zero
    // size if unused). Produces input adjoint dx and seed adjoints dseeds.
    void backward_jac(const VecX& params, const MlpJacCache& cache, const MatX& dy,
                      const std::array<MatX, 3>& dtan, VecX& grads, MatX* dx,
                      std::array<MatX, 3>* dseeds) const;

    Eigen::Map<const MatX> weight(const VecX& params, int layer) const;
    Eigen::Map<const VecX> bias(const VecX& params, int layer) const;
    Eigen::Map<MatX> weight(VecX& params, int layer) const;
    Eigen::Map<VecX> bias(VecX& params, int layer) const;

  private:
    Eigen::Index layer_offset(int l) const;

    MlpConfig config_;
    Eigen::Index offset_ = 0;
};

// Standard fan-in random initialization (He for ReLU, Xavier-ish otherwise).
void init_mlp(const Mlp& mlp, VecX& params, Rng& rng);

// ---------------------------------------------------------------------------
// Optimizer and schedule

struct AdamHyper {
    Scalar beta1 = 0.9;
    Scalar beta2 = 0.999;
    Scalar eps = 1e-8;
};

struct AdamState {
    VecX m;
    VecX v;
};

// One bias-corrected Adam update; `iter` is zero-based. `lr_of` maps the
// group tag of each slice to its learning rate. Throws on NaN gradients.
void adam_step(ParameterStore& store, const VecX& grads, AdamState& state, int iter,
               const std::function<Scalar(const std::string&)>& lr_of,
               const AdamHyper& hyper = {});

struct ScheduleConfig {
    Scalar base_lr = 5e-4;
    int total_iters = 1;
    int warmup_iters = 0;
    Scalar final_fraction = 0.05;
    std::set<std::string> ramped_groups;
};

// Warm-up ramp then cosine annealing for ramped groups; constant otherwise.
Scalar lr_at(const ScheduleConfig& sched, const std::string& group, int iter);

// ---------------------------------------------------------------------------
// Activation helpers (exposed for tests)

Scalar softplus100(Scalar z);
Scalar softplus100_d(Scalar z);
Scalar softplus100_dd(Scalar z);

}  // namespace symsurf

#pragma once

#include <array>

#include "symsurf/common.hpp"
#include "symsurf/nn.hpp"

namespace symsurf {

// Per-sample head outputs. `j` (material) and `k` (lighting) index the source
// (0) and transformed (1) evaluation paths.
struct MaterialOut {
    Vec3 albedo = Vec3::Zero();     // c^a in [0,1]^3
    Scalar reflect = 0.0;           // gamma^r in [0,1]
};

struct LightingOut {
    Scalar diffuse = 0.0;           // gamma^d in [0,2]
    Vec3 specular = Vec3::Zero();   // c^s in [0,1]^3
};

struct PathColours {
    // c_{jk} laid out at index 2*j + k.
    std::array<Vec3, 4> c;
};

// c = clamp(gamma^d * c^a + gamma^r * c^s, 0, 1) per channel.
Vec3 phong_compose(Scalar diffuse, const Vec3& albedo, Scalar reflect, const Vec3& specular);

// c_{jk} = gamma^d_k * c^a_j + gamma^r_j * c^s_k, clamped.
PathColours hybrid_colours(const MaterialOut& m0, const MaterialOut& m1,
                           const LightingOut& l0, const LightingOut& l1);

struct AppearanceConfig {
    int feature_dim = 256;
    int material_width = 256;
    int material_hidden = 4;
    int diffuse_width = 256;
    int diffuse_hidden = 2;
    int specular_width = 256;
    int specular_hidden = 4;
    int dir_freqs = 4;  // positional encoding on normals and view directions
};

// Batched head evaluations with reverse-pass caches. Normals are normalized
// before encoding; their adjoint chains back through the normalization.
struct MaterialEval {
    MatX albedo;   // N x 3
    VecX reflect;  // N
    MlpCache cache;
};

struct DiffuseEval {
    VecX diffuse;  // N, in [0,2]
    MlpCache cache;
    MatX raw_normal;
    MatX unit_normal;
};

struct SpecularEval {
    MatX specular;  // N x 3
    MlpCache cache;
    MatX raw_normal;
    MatX unit_normal;
    MatX direction;
};

class AppearanceModel {
  public:
    AppearanceModel() = default;
    AppearanceModel(const AppearanceConfig& config, Eigen::Index offset);

    const AppearanceConfig& config() const { return config_; }
    Eigen::Index parameter_count() const;

    // Contiguous layout: material | diffuse k=0 | diffuse k=1 | specular k=0
    // | specular k=1. Offsets/sizes exposed so parameter groups can be tagged.
    Eigen::Index material_offset() const { return material_.offset(); }
    Eigen::Index material_size() const { return material_.parameter_count(); }
    Eigen::Index diffuse_offset() const { return diffuse_[0].offset(); }
    Eigen::Index diffuse_size() const { return 2 * diffuse_[0].parameter_count(); }
    Eigen::Index specular_offset() const { return specular_[0].offset(); }
    Eigen::Index specular_size() const { return 2 * specular_[0].parameter_count(); }

    MaterialEval material_forward(const VecX& params, const MatX& x, const MatX& feature) const;
    void material_backward(const VecX& params, const MaterialEval& eval, const MatX& g_albedo,
                           const VecX& g_reflect, VecX& grads, MatX* g_x = nullptr,
                           MatX* g_feature = nullptr) const;

    DiffuseEval diffuse_forward(const VecX& params, int k, const MatX& x, const MatX& normal,
                                const MatX& feature) const;
    void diffuse_backward(const VecX& params, int k, const DiffuseEval& eval,
                          const VecX& g_diffuse, VecX& grads, MatX* g_x = nullptr,
                          MatX* g_normal = nullptr, MatX* g_feature = nullptr) const;

    SpecularEval specular_forward(const VecX& params, int k, const MatX& x, const MatX& normal,
                                  const MatX& direction, const MatX& feature) const;
    void specular_backward(const VecX& params, int k, const SpecularEval& eval,
                           const MatX& g_specular, VecX& grads, MatX* g_x = nullptr,
                           MatX* g_normal = nullptr, MatX* g_direction = nullptr,
                           MatX* g_feature = nullptr) const;

    void init(VecX& params, Rng& rng) const;

  private:
    AppearanceConfig config_;
    PositionalEncoding dir_enc_;
    Mlp material_;
    std::array<Mlp, 2> diffuse_;
    std::array<Mlp, 2> specular_;
};

}  // namespace symsurf

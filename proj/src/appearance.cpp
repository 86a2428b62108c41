#include "symsurf/appearance.hpp"

namespace symsurf {

Vec3 phong_compose(Scalar diffuse, const Vec3& albedo, Scalar reflect, const Vec3& specular) {
    Vec3 c = diffuse * albedo + reflect * specular;
    return c.cwiseMax(0.0).cwiseMin(1.0);
}

PathColours hybrid_colours(const MaterialOut& m0, const MaterialOut& m1,
                           const LightingOut& l0, const LightingOut& l1) {
    const MaterialOut* m[2] = {&m0, &m1};
    const LightingOut* l[2] = {&l0, &l1};
    PathColours out;
    for (int j = 0; j < 2; ++j) {
        for (int k = 0; k < 2; ++k) {
            out.c[2 * j + k] =
                phong_compose(l[k]->diffuse, m[j]->albedo, m[j]->reflect, l[k]->specular);
        }
    }
    return out;
}

namespace {

MlpConfig head_config(int input_dim, int hidden, int width, int output_dim,
                      OutputSquash squash) {
    MlpConfig cfg;
    cfg.input_dim = input_dim;
    cfg.hidden.assign(hidden, width);
    cfg.output_dim = output_dim;
    cfg.activation = Activation::Relu;
    cfg.squash = squash;
    return cfg;
}

MatX normalize_rows(const MatX& n) {
    MatX unit = n;
    for (Eigen::Index i = 0; i < n.rows(); ++i) {
        Scalar len = unit.row(i).norm();
        if (len > 1e-12) unit.row(i) /= len;
    }
    return unit;
}

// Adjoint of row normalization: g_raw = (g - (g . n_hat) n_hat) / |n_raw|.
void normalize_rows_backward(const MatX& raw, const MatX& unit, const MatX& g_unit,
                             MatX& g_raw) {
    for (Eigen::Index i = 0; i < raw.rows(); ++i) {
        Scalar len = raw.row(i).norm();
        if (len <= 1e-12) continue;
        Scalar dot = g_unit.row(i).dot(unit.row(i));
        g_raw.row(i) += (g_unit.row(i) - dot * unit.row(i)) / len;
    }
}

}  // namespace

AppearanceModel::AppearanceModel(const AppearanceConfig& config, Eigen::Index offset)
    : config_(config), dir_enc_{config.dir_freqs, true} {
    const int f = config.feature_dim;
    const int enc = dir_enc_.output_dim(3);
    Eigen::Index at = offset;
    material_ = Mlp(head_config(3 + f, config.material_hidden, config.material_width, 4,
                                OutputSquash::Sigmoid),
                    at);
    at += material_.parameter_count();
    for (int k = 0; k < 2; ++k) {
        diffuse_[k] = Mlp(head_config(3 + enc + f, config.diffuse_hidden, config.diffuse_width,
                                      1, OutputSquash::TwoSigmoid),
                          at);
        at += diffuse_[k].parameter_count();
    }
    for (int k = 0; k < 2; ++k) {
        specular_[k] = Mlp(head_config(3 + 2 * enc + f, config.specular_hidden,
                                       config.specular_width, 3, OutputSquash::Sigmoid),
                           at);
        at += specular_[k].parameter_count();
    }
}

Eigen::Index AppearanceModel::parameter_count() const {
    return material_.parameter_count() + 2 * diffuse_[0].parameter_count() +
           2 * specular_[0].parameter_count();
}

MaterialEval AppearanceModel::material_forward(const VecX& params, const MatX& x,
                                               const MatX& feature) const {
    MatX in(x.rows(), 3 + config_.feature_dim);
    in << x, feature;
    MaterialEval eval;
    MatX out = material_.forward(params, in, &eval.cache);
    eval.albedo = out.leftCols(3);
    eval.reflect = out.col(3);
    return eval;
}

void AppearanceModel::material_backward(const VecX& params, const MaterialEval& eval,
                                        const MatX& g_albedo, const VecX& g_reflect,
                                        VecX& grads, MatX* g_x, MatX* g_feature) const {
    const Eigen::Index n = eval.albedo.rows();
    MatX dy = MatX::Zero(n, 4);
    if (g_albedo.size()) dy.leftCols(3) = g_albedo;
    if (g_reflect.size()) dy.col(3) = g_reflect;
    MatX din;
    const bool need_in = g_x || g_feature;
    material_.backward(params, eval.cache, dy, grads, need_in ? &din : nullptr);
    if (g_x) *g_x += din.leftCols(3);
    if (g_feature) *g_feature += din.rightCols(config_.feature_dim);
}

DiffuseEval AppearanceModel::diffuse_forward(const VecX& params, int k, const MatX& x,
                                             const MatX& normal, const MatX& feature) const {
    DiffuseEval eval;
    eval.raw_normal = normal;
    eval.unit_normal = normalize_rows(normal);
    MatX in(x.rows(), 3 + dir_enc_.output_dim(3) + config_.feature_dim);
    in << x, positional_encode(eval.unit_normal, dir_enc_), feature;
    eval.diffuse = diffuse_[k].forward(params, in, &eval.cache).col(0);
    return eval;
}

void AppearanceModel::diffuse_backward(const VecX& params, int k, const DiffuseEval& eval,
                                       const VecX& g_diffuse, VecX& grads, MatX* g_x,
                                       MatX* g_normal, MatX* g_feature) const {
    MatX dy = g_diffuse;
    MatX din;
    const bool need_in = g_x || g_normal || g_feature;
    diffuse_[k].backward(params, eval.cache, dy, grads, need_in ? &din : nullptr);
    if (!need_in) return;
    const int enc = dir_enc_.output_dim(3);
    if (g_x) *g_x += din.leftCols(3);
    if (g_feature) *g_feature += din.rightCols(config_.feature_dim);
    if (g_normal) {
        MatX g_unit = MatX::Zero(din.rows(), 3);
        positional_encode_backward(eval.unit_normal, dir_enc_, din.middleCols(3, enc), nullptr,
                                   g_unit);
        normalize_rows_backward(eval.raw_normal, eval.unit_normal, g_unit, *g_normal);
    }
}

SpecularEval AppearanceModel::specular_forward(const VecX& params, int k, const MatX& x,
                                               const MatX& normal, const MatX& direction,
                                               const MatX& feature) const {
    SpecularEval eval;
    eval.raw_normal = normal;
    eval.unit_normal = normalize_rows(normal);
    eval.direction = direction;
    const int enc = dir_enc_.output_dim(3);
    MatX in(x.rows(), 3 + 2 * enc + config_.feature_dim);
    in << x, positional_encode(eval.unit_normal, dir_enc_),
        positional_encode(direction, dir_enc_), feature;
    eval.specular = specular_[k].forward(params, in, &eval.cache);
    return eval;
}

void AppearanceModel::specular_backward(const VecX& params, int k, const SpecularEval& eval,
                                        const MatX& g_specular, VecX& grads, MatX* g_x,
                                        MatX* g_normal, MatX* g_direction,
                                        MatX* g_feature) const {
    MatX din;
    const bool need_in = g_x || g_normal || g_direction || g_feature;
    specular_[k].backward(params, eval.cache, g_specular, grads, need_in ? &din : nullptr);
    if (!need_in) return;
    const int enc = dir_enc_.output_dim(3);
    if (g_x) *g_x += din.leftCols(3);
    if (g_feature) *g_feature += din.rightCols(config_.feature_dim);
    if (g_normal) {
        MatX g_unit = MatX::Zero(din.rows(), 3);
        positional_encode_backward(eval.unit_normal, dir_enc_, din.middleCols(3, enc), nullptr,
                                   g_unit);
        normalize_rows_backward(eval.raw_normal, eval.unit_normal, g_unit, *g_normal);
    }
    if (g_direction) {
        positional_encode_backward(eval.direction, dir_enc_, din.middleCols(3 + enc, enc),
                                   nullptr, *g_direction);
    }
}

void AppearanceModel::init(VecX& params, Rng& rng) const {
    init_mlp(material_, params, rng);
    for (int k = 0; k < 2; ++k) init_mlp(diffuse_[k], params, rng);
    for (int k = 0; k < 2; ++k) init_mlp(specular_[k], params, rng);
}

}  // namespace symsurf

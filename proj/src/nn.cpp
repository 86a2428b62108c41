#include "symsurf/nn.hpp"

#include <cmath>

namespace symsurf {

// ---------------------------------------------------------------------------
// Positional encoding

namespace {

// Column layout: [x (if included) | freq 0: sin(d), cos(d) | freq 1: ... ].
inline Scalar freq_of(int k) { return std::ldexp(kPi, k); }

}  // namespace

MatX positional_encode(const MatX& x, const PositionalEncoding& enc) {
    const Eigen::Index n = x.rows(), d = x.cols();
    MatX out(n, enc.output_dim(int(d)));
    Eigen::Index col = 0;
    if (enc.include_input) {
        out.leftCols(d) = x;
        col = d;
    }
    for (int k = 0; k < enc.num_freqs; ++k) {
        const Scalar a = freq_of(k);
        out.middleCols(col, d) = (a * x.array()).sin();
        out.middleCols(col + d, d) = (a * x.array()).cos();
        col += 2 * d;
    }
    return out;
}

VecX positional_encode(const VecX& x, const PositionalEncoding& enc) {
    return positional_encode(MatX(x.transpose()), enc).row(0);
}

Encoded3 positional_encode_jac(const MatX& x, const PositionalEncoding& enc) {
    const Eigen::Index n = x.rows();
    const Eigen::Index d = 3;
    Encoded3 e;
    e.values = positional_encode(x, enc);
    for (int j = 0; j < 3; ++j) e.jac[j] = MatX::Zero(n, e.values.cols());
    Eigen::Index col = 0;
    if (enc.include_input) {
        for (int c = 0; c < d; ++c) e.jac[c].col(c).setOnes();
        col = d;
    }
    for (int k = 0; k < enc.num_freqs; ++k) {
        const Scalar a = freq_of(k);
        for (int c = 0; c < d; ++c) {
            e.jac[c].col(col + c) = a * (a * x.col(c).array()).cos();
            e.jac[c].col(col + d + c) = -a * (a * x.col(c).array()).sin();
        }
        col += 2 * d;
    }
    return e;
}

void positional_encode_backward(const MatX& x, const PositionalEncoding& enc,
                                const MatX& g_values, const std::array<MatX, 3>* g_jac,
                                MatX& gx) {
    const Eigen::Index d = 3;
    Eigen::Index col = 0;
    if (enc.include_input) {
        for (int c = 0; c < d; ++c) gx.col(c) += g_values.col(c);
        col = d;
    }
    for (int k = 0; k < enc.num_freqs; ++k) {
        const Scalar a = freq_of(k);
        for (int c = 0; c < d; ++c) {
            auto s = (a * x.col(c).array()).sin();
            auto cc = (a * x.col(c).array()).cos();
            gx.col(c).array() += a * (g_values.col(col + c).array() * cc -
                                      g_values.col(col + d + c).array() * s);
            if (g_jac) {
                // Second derivative of the encoding, diagonal in components.
                gx.col(c).array() -=
                    a * a * ((*g_jac)[c].col(col + c).array() * s +
                             (*g_jac)[c].col(col + d + c).array() * cc);
            }
        }
        col += 2 * d;
    }
}

// ---------------------------------------------------------------------------
// ParameterStore

Eigen::Index ParameterStore::add(const std::string& name, const std::string& group,
                                 Eigen::Index size) {
    for (const auto& s : slices_) {
        if (s.name == name) throw Error("parameter slice '" + name + "' already exists");
    }
    Eigen::Index offset = values_.size();
    values_.conservativeResize(offset + size);
    values_.tail(size).setZero();
    slices_.push_back({name, group, offset, size});
    return offset;
}

const ParamSlice& ParameterStore::slice(const std::string& name) const {
    for (const auto& s : slices_) {
        if (s.name == name) return s;
    }
    throw Error("unknown parameter slice '" + name + "'");
}

Eigen::VectorBlock<VecX> ParameterStore::view(const std::string& name) {
    const ParamSlice& s = slice(name);
    return values_.segment(s.offset, s.size);
}

const std::string& ParameterStore::group_of(Eigen::Index i) const {
    for (const auto& s : slices_) {
        if (i >= s.offset && i < s.offset + s.size) return s.group;
    }
    throw Error("parameter index out of range");
}

// ---------------------------------------------------------------------------
// Activations

Scalar softplus100(Scalar z) {
    const Scalar b = 100.0;
    if (z * b > 30.0) return z;
    return std::log1p(std::exp(b * z)) / b;
}

Scalar softplus100_d(Scalar z) { return 1.0 / (1.0 + std::exp(-100.0 * z)); }

Scalar softplus100_dd(Scalar z) {
    Scalar s = softplus100_d(z);
    return 100.0 * s * (1.0 - s);
}

namespace {

void apply_activation(Activation act, const MatX& z, MatX& out) {
    switch (act) {
        case Activation::Softplus100:
            out = z.unaryExpr([](Scalar v) { return softplus100(v); });
            break;
        case Activation::Relu:
            out = z.cwiseMax(0.0);
            break;
        case Activation::None:
            out = z;
            break;
    }
}

MatX activation_d(Activation act, const MatX& z) {
    switch (act) {
        case Activation::Softplus100:
            return z.unaryExpr([](Scalar v) { return softplus100_d(v); });
        case Activation::Relu:
            return (z.array() > 0.0).cast<Scalar>();
        case Activation::None:
            return MatX::Ones(z.rows(), z.cols());
    }
    return {};
}

MatX activation_dd(Activation act, const MatX& z) {
    if (act == Activation::Softplus100) {
        return z.unaryExpr([](Scalar v) { return softplus100_dd(v); });
    }
    return MatX::Zero(z.rows(), z.cols());
}

}  // namespace

// ---------------------------------------------------------------------------
// Mlp

int MlpConfig::layer_in(int l) const {
    if (l == 0) return input_dim;
    int prev = hidden[l - 1];
    return l == skip_layer ? prev + input_dim : prev;
}

int MlpConfig::layer_out(int l) const {
    return l == int(hidden.size()) ? output_dim : hidden[l];
}

Eigen::Index MlpConfig::parameter_count() const {
    Eigen::Index n = 0;
    for (int l = 0; l <= int(hidden.size()); ++l) {
        n += Eigen::Index(layer_out(l)) * layer_in(l) + layer_out(l);
    }
    return n;
}

Mlp::Mlp(MlpConfig config, Eigen::Index offset) : config_(std::move(config)), offset_(offset) {
    if (config_.skip_layer == 0 || config_.skip_layer > int(config_.hidden.size())) {
        if (config_.skip_layer != -1) throw Error("mlp: bad skip layer index");
    }
}

Eigen::Index Mlp::layer_offset(int l) const {
    Eigen::Index o = offset_;
    for (int i = 0; i < l; ++i) {
        o += Eigen::Index(config_.layer_out(i)) * config_.layer_in(i) + config_.layer_out(i);
    }
    return o;
}

Eigen::Map<const MatX> Mlp::weight(const VecX& params, int l) const {
    return {params.data() + layer_offset(l), config_.layer_out(l), config_.layer_in(l)};
}

Eigen::Map<const VecX> Mlp::bias(const VecX& params, int l) const {
    Eigen::Index o = layer_offset(l) + Eigen::Index(config_.layer_out(l)) * config_.layer_in(l);
    return {params.data() + o, config_.layer_out(l)};
}

Eigen::Map<MatX> Mlp::weight(VecX& params, int l) const {
    return {params.data() + layer_offset(l), config_.layer_out(l), config_.layer_in(l)};
}

Eigen::Map<VecX> Mlp::bias(VecX& params, int l) const {
    Eigen::Index o = layer_offset(l) + Eigen::Index(config_.layer_out(l)) * config_.layer_in(l);
    return {params.data() + o, config_.layer_out(l)};
}

MatX Mlp::forward(const VecX& params, const MatX& x, MlpCache* cache) const {
    if (x.cols() != config_.input_dim) throw Error("mlp: input dimension mismatch");
    const int depth = config_.depth();
    if (cache) {
        cache->inputs.assign(depth, {});
        cache->pre.assign(depth, {});
    }
    MatX a = x;
    for (int l = 0; l < depth; ++l) {
        MatX in;
        if (l == config_.skip_layer) {
            in.resize(a.rows(), a.cols() + x.cols());
            in << a, x;
        } else {
            in = std::move(a);
        }
        MatX z = (in * weight(params, l).transpose()).rowwise() + bias(params, l).transpose();
        if (cache) {
            cache->inputs[l] = std::move(in);
            cache->pre[l] = z;
        }
        if (l + 1 < depth) {
            apply_activation(config_.activation, z, a);
        } else {
            a = std::move(z);
        }
    }
    switch (config_.squash) {
        case OutputSquash::Sigmoid:
            a = a.unaryExpr([](Scalar v) { return 1.0 / (1.0 + std::exp(-v)); });
            break;
        case OutputSquash::TwoSigmoid:
            a = a.unaryExpr([](Scalar v) { return 2.0 / (1.0 + std::exp(-v)); });
            break;
        case OutputSquash::None:
            break;
    }
    if (cache) cache->output = a;
    return a;
}

void Mlp::backward(const VecX& params, const MlpCache& cache, const MatX& dy, VecX& grads,
                   MatX* dx) const {
    const int depth = config_.depth();
    if (int(cache.inputs.size()) != depth) throw Error("mlp: stale cache");
    MatX g = dy;
    switch (config_.squash) {
        case OutputSquash::Sigmoid:
            g.array() *= cache.output.array() * (1.0 - cache.output.array());
            break;
        case OutputSquash::TwoSigmoid:
            g.array() *= cache.output.array() * (1.0 - 0.5 * cache.output.array());
            break;
        case OutputSquash::None:
            break;
    }
    MatX dx_raw;
    if (dx) dx_raw = MatX::Zero(dy.rows(), config_.input_dim);
    const bool need_dx = dx != nullptr || config_.skip_layer > 0;
    for (int l = depth - 1; l >= 0; --l) {
        MatX gz;
        if (l + 1 < depth) {
            gz = g.cwiseProduct(activation_d(config_.activation, cache.pre[l]));
        } else {
            gz = std::move(g);
        }
        weight(grads, l).noalias() += gz.transpose() * cache.inputs[l];
        bias(grads, l) += gz.colwise().sum();
        if (l == 0) {
            if (dx) dx_raw += gz * weight(params, l);
            break;
        }
        if (!need_dx && l == 1 && config_.skip_layer != 1) {
            // input adjoint not requested; still need g for layer 0 params
        }
        MatX gin = gz * weight(params, l);
        if (l == config_.skip_layer) {
            int prev = config_.hidden[l - 1];
            g = gin.leftCols(prev);
            if (dx) dx_raw += gin.rightCols(config_.input_dim);
        } else {
            g = std::move(gin);
        }
    }
    if (dx) *dx = std::move(dx_raw);
}

MatX Mlp::forward_jac(const VecX& params, const MatX& x, const std::array<MatX, 3>& seeds,
                      std::array<MatX, 3>& out_tangents, MlpJacCache& cache) const {
    if (config_.squash != OutputSquash::None) throw Error("mlp: jac pass requires raw output");
    const int depth = config_.depth();
    cache.primal.inputs.assign(depth, {});
    cache.primal.pre.assign(depth, {});
    cache.tangent_in.assign(depth, {});
    cache.lin_tangent.assign(depth, {});

    MatX a = x;
    std::array<MatX, 3> t = seeds;
    for (int l = 0; l < depth; ++l) {
        MatX in;
        std::array<MatX, 3> tin;
        if (l == config_.skip_layer) {
            in.resize(a.rows(), a.cols() + x.cols());
            in << a, x;
            for (int k = 0; k < 3; ++k) {
                tin[k].resize(a.rows(), a.cols() + x.cols());
                tin[k] << t[k], seeds[k];
            }
        } else {
            in = std::move(a);
            tin = std::move(t);
        }
        auto w = weight(params, l);
        MatX z = (in * w.transpose()).rowwise() + bias(params, l).transpose();
        std::array<MatX, 3> u;
        for (int k = 0; k < 3; ++k) u[k].noalias() = tin[k] * w.transpose();

        cache.primal.inputs[l] = std::move(in);
        cache.primal.pre[l] = z;
        cache.tangent_in[l] = std::move(tin);

        if (l + 1 < depth) {
            MatX d1 = activation_d(config_.activation, z);
            apply_activation(config_.activation, z, a);
            t = u;
            for (int k = 0; k < 3; ++k) t[k].array() *= d1.array();
        } else {
            a = std::move(z);
            t = u;
        }
        cache.lin_tangent[l] = std::move(u);
    }
    out_tangents = std::move(t);
    cache.primal.output = a;
    return a;
}

void Mlp::backward_jac(const VecX& params, const MlpJacCache& cache, const MatX& dy,
                       const std::array<MatX, 3>& dtan, VecX& grads, MatX* dx,
                       std::array<MatX, 3>* dseeds) const {
    const int depth = config_.depth();
    if (int(cache.primal.inputs.size()) != depth) throw Error("mlp: stale cache");
    const Eigen::Index n = dy.rows();

    MatX gb = dy;
    std::array<MatX, 3> gt;
    for (int k = 0; k < 3; ++k) {
        gt[k] = dtan[k].size() ? dtan[k]
                               : MatX::Zero(n, config_.output_dim);
    }
    MatX dx_raw = MatX::Zero(n, config_.input_dim);
    std::array<MatX, 3> dseeds_raw;
    for (int k = 0; k < 3; ++k) dseeds_raw[k] = MatX::Zero(n, config_.input_dim);

    for (int l = depth - 1; l >= 0; --l) {
        const MatX& z = cache.primal.pre[l];
        MatX gz;
        std::array<MatX, 3> gu;
        if (l + 1 < depth) {
            MatX d1 = activation_d(config_.activation, z);
            MatX d2 = activation_dd(config_.activation, z);
            gz = gb.cwiseProduct(d1);
            for (int k = 0; k < 3; ++k) {
                // Tangent-out was d1 .* U; its z-dependence contributes via d2.
                gz.array() += gt[k].array() * cache.lin_tangent[l][k].array() * d2.array();
                gu[k] = gt[k].cwiseProduct(d1);
            }
        } else {
            gz = std::move(gb);
            gu = std::move(gt);
        }

        auto wg = weight(grads, l);
        wg.noalias() += gz.transpose() * cache.primal.inputs[l];
        for (int k = 0; k < 3; ++k) {
            wg.noalias() += gu[k].transpose() * cache.tangent_in[l][k];
        }
        bias(grads, l) += gz.colwise().sum();

        auto w = weight(params, l);
        MatX gin = gz * w;
        std::array<MatX, 3> gtin;
        for (int k = 0; k < 3; ++k) gtin[k].noalias() = gu[k] * w;

        if (l == 0) {
            dx_raw += gin;
            for (int k = 0; k < 3; ++k) dseeds_raw[k] += gtin[k];
        } else if (l == config_.skip_layer) {
            int prev = config_.hidden[l - 1];
            gb = gin.leftCols(prev);
            dx_raw += gin.rightCols(config_.input_dim);
            for (int k = 0; k < 3; ++k) {
                gt[k] = gtin[k].leftCols(prev);
                dseeds_raw[k] += gtin[k].rightCols(config_.input_dim);
            }
        } else {
            gb = std::move(gin);
            gt = std::move(gtin);
        }
    }
    if (dx) *dx = std::move(dx_raw);
    if (dseeds) *dseeds = std::move(dseeds_raw);
}

void init_mlp(const Mlp& mlp, VecX& params, Rng& rng) {
    std::normal_distribution<Scalar> g;
    const MlpConfig& cfg = mlp.config();
    for (int l = 0; l < cfg.depth(); ++l) {
        Scalar fan_in = Scalar(cfg.layer_in(l));
        Scalar std_dev = cfg.activation == Activation::Relu ? std::sqrt(2.0 / fan_in)
                                                           : std::sqrt(1.0 / fan_in);
        auto w = mlp.weight(params, l);
        for (Eigen::Index i = 0; i < w.size(); ++i) w.data()[i] = std_dev * g(rng);
        mlp.bias(params, l).setZero();
    }
}

// ---------------------------------------------------------------------------
// Adam and schedule

void adam_step(ParameterStore& store, const VecX& grads, AdamState& state, int iter,
               const std::function<Scalar(const std::string&)>& lr_of,
               const AdamHyper& hyper) {
    if (grads.size() != store.size()) throw Error("adam: gradient size mismatch");
    if (grads.hasNaN()) throw Error("adam: NaN gradient at iteration " + std::to_string(iter));
    if (state.m.size() != store.size()) {
        state.m = VecX::Zero(store.size());
        state.v = VecX::Zero(store.size());
    }
    const Scalar t = Scalar(iter + 1);
    const Scalar bc1 = 1.0 - std::pow(hyper.beta1, t);
    const Scalar bc2 = 1.0 - std::pow(hyper.beta2, t);
    for (const auto& s : store.slices()) {
        const Scalar lr = lr_of(s.group);
        auto g = grads.segment(s.offset, s.size);
        auto m = state.m.segment(s.offset, s.size);
        auto v = state.v.segment(s.offset, s.size);
        auto p = store.values().segment(s.offset, s.size);
        m = hyper.beta1 * m + (1.0 - hyper.beta1) * g;
        v = hyper.beta2 * v + (1.0 - hyper.beta2) * g.cwiseProduct(g);
        p.array() -=
            lr * (m.array() / bc1) / ((v.array() / bc2).sqrt() + hyper.eps);
    }
}

Scalar lr_at(const ScheduleConfig& sched, const std::string& group, int iter) {
    if (!sched.ramped_groups.count(group)) return sched.base_lr;
    if (iter < sched.warmup_iters) {
        return sched.base_lr * Scalar(iter) / Scalar(sched.warmup_iters);
    }
    Scalar span = Scalar(sched.total_iters - sched.warmup_iters);
    Scalar u = span > 0.0 ? Scalar(iter - sched.warmup_iters) / span : 1.0;
    Scalar lo = sched.final_fraction * sched.base_lr;
    return lo + (sched.base_lr - lo) * 0.5 * (1.0 + std::cos(kPi * u));
}

}  // namespace symsurf

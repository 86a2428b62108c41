#include "symsurf/model.hpp"

#include <cmath>

namespace symsurf {

namespace {

// sigma(-x), numerically stable for large |x|.
Scalar sigmoid_neg(Scalar x) {
    return x > 0.0 ? std::exp(-x) / (1.0 + std::exp(-x)) : 1.0 / (1.0 + std::exp(x));
}

struct AlphaGrad {
    Scalar d_lo = 0.0;
    Scalar d_hi = 0.0;
    Scalar d_tau = 0.0;
};

// Matches alpha_from_deltas; additionally reports the exact derivatives
// (zero in the max-clamp region).
Scalar alpha_with_grad(Scalar delta_lo, Scalar delta_hi, Scalar tau, AlphaGrad& g) {
    auto log_sigmoid = [](Scalar x) {
        return x > 0.0 ? -std::log1p(std::exp(-x)) : x - std::log1p(std::exp(x));
    };
    Scalar a = tau * delta_lo;
    Scalar b = tau * delta_hi;
    Scalar log_ratio = log_sigmoid(b) - log_sigmoid(a);
    if (log_ratio >= 0.0) {
        g = {};
        return 0.0;
    }
    Scalar ratio = std::exp(log_ratio);
    Scalar sa = sigmoid_neg(a);
    Scalar sb = sigmoid_neg(b);
    g.d_lo = ratio * tau * sa;
    g.d_hi = -ratio * tau * sb;
    g.d_tau = -ratio * (delta_hi * sb - delta_lo * sa);
    return std::min(-std::expm1(log_ratio), std::nextafter(1.0, 0.0));
}

// Adjoint of w = accumulate(alpha): g_alpha_i = T_i g_w_i - suffix_i/(1-alpha_i).
void accumulate_backward(const VecX& alphas, const VecX& weights, const VecX& g_w,
                         VecX& g_alpha) {
    const Eigen::Index n = alphas.size();
    g_alpha.resize(n);
    Scalar suffix = 0.0;
    // Transmittances T_i rebuilt forward; traverse backward for the suffix sum.
    VecX trans(n);
    Scalar t = 1.0;
    for (Eigen::Index i = 0; i < n; ++i) {
        trans[i] = t;
        t *= 1.0 - alphas[i];
    }
    for (Eigen::Index i = n - 1; i >= 0; --i) {
        g_alpha[i] = trans[i] * g_w[i] - suffix / (1.0 - alphas[i]);
        suffix += g_w[i] * weights[i];
    }
}

Vec3 sign3(const Vec3& v) {
    return Vec3(v.x() > 0.0 ? 1.0 : (v.x() < 0.0 ? -1.0 : 0.0),
                v.y() > 0.0 ? 1.0 : (v.y() < 0.0 ? -1.0 : 0.0),
                v.z() > 0.0 ? 1.0 : (v.z() < 0.0 ? -1.0 : 0.0));
}

// Clamp mask: 1 where the raw value is strictly inside (0,1).
Vec3 clamp_mask(const Vec3& raw) {
    return Vec3(raw.x() > 0.0 && raw.x() < 1.0 ? 1.0 : 0.0,
                raw.y() > 0.0 && raw.y() < 1.0 ? 1.0 : 0.0,
                raw.z() > 0.0 && raw.z() < 1.0 ? 1.0 : 0.0);
}

// Canonical variant map with its randomness drawn here so the same draw can
// be replayed by the backward pass.
AffineMap draw_canonical(const SymmetrySpec& spec, Rng& rng) {
    int k = 1;
    Scalar alpha = 0.0, beta = 0.0;
    if (spec.kind == SymmetryKind::Rotation && spec.n_fold > 1) {
        std::uniform_int_distribution<int> pick(1, spec.n_fold);
        k = pick(rng);
    } else if (spec.kind == SymmetryKind::Spherical) {
        std::uniform_real_distribution<Scalar> angle(0.0, 2.0 * kPi);
        alpha = angle(rng);
        beta = angle(rng);
    }
    return canonical_map(spec, k, alpha, beta);
}

struct RaySections {
    Ray ray;
    bool foreground = false;
    VecX ts;    // boundaries
    VecX mid;   // section midpoints (size n)
    VecX half;  // section half-widths
    Eigen::Index off = 0;
    Eigen::Index n = 0;
    // Per-ray symmetry draw (canonical affine) and mapped direction.
    Mat3 canon_linear = Mat3::Identity();
    Vec3 canon_offset = Vec3::Zero();
    Vec3 dir1 = Vec3::UnitZ();
    Scalar dir1_raw_norm = 1.0;
};

struct PathState {
    MatX points;   // N x 3
    MatX dirs;     // N x 3 (per-row ray direction)
    NeuralSdfBatch sdf;
    VecX delta;    // joint field values
    MatX normal;   // joint gradients
    MatX feature;  // joint features
    std::vector<char> object;  // joint branch flag per row
    std::vector<char> active;  // transformed rows outside the sphere are inactive
    VecX alpha;
    VecX weight;
};

}  // namespace

Model::Model(const ModelConfig& config, const SymmetrySet& symmetries,
             const GroundPlane& ground)
    : config_(config), symmetries_(symmetries), ground_(ground) {
    if (symmetries_.specs.empty()) throw Error("model: symmetry set must be nonempty");
    if (config_.appearance.feature_dim != config_.sdf.feature_dim)
        throw Error("model: appearance feature dim must match the SDF feature dim");

    sdf_ = NeuralSdf(config_.sdf, store_.size());
    store_.add("sdf_trunk", "sdf", sdf_.parameter_count());

    appearance_ = AppearanceModel(config_.appearance, store_.size());
    store_.add("material", "material", appearance_.material_size());
    store_.add("diffuse", "diffuse", appearance_.diffuse_size());
    store_.add("specular", "specular", appearance_.specular_size());

    background_ = BackgroundModel(config_.background, store_.size());
    store_.add("background", "background", background_.parameter_count());

    tau_offset_ = store_.add("tau", "tau", 1);
    ground_feature_offset_ =
        store_.add("ground_feature", "material", config_.sdf.feature_dim);
    symmetry_offset_ =
        store_.add("symmetry", "symmetry", 6 * Eigen::Index(symmetries_.specs.size()));

    store_.values()[tau_offset_] = std::log(config_.tau_init);
}

void Model::set_symmetries(const SymmetrySet& s) {
    if (s.specs.size() != symmetries_.specs.size())
        throw Error("model: symmetry count is fixed at construction");
    symmetries_ = s;
}

void Model::init(Rng& rng, const EllipsoidInit& ellipsoid) {
    geometric_init(sdf_, store_.values(), ellipsoid, rng);
    appearance_.init(store_.values(), rng);
    init_mlp(background_.mlp(), store_.values(), rng);
    store_.values()[tau_offset_] = std::log(config_.tau_init);
    store_.values().segment(ground_feature_offset_, config_.sdf.feature_dim).setZero();
    store_.values().segment(symmetry_offset_, 6 * Eigen::Index(symmetries_.specs.size()))
        .setZero();
}

Scalar Model::tau(const VecX& params) const { return std::exp(params[tau_offset_]); }

SymmetrySpec Model::effective_spec(const VecX& params, int index) const {
    if (index < 0 || index >= int(symmetries_.specs.size()))
        throw Error("model: symmetry index out of range");
    SymmetrySpec spec = symmetries_.specs[std::size_t(index)];
    Vec3 omega = params.segment<3>(symmetry_offset_ + 6 * index);
    Vec3 dt = params.segment<3>(symmetry_offset_ + 6 * index + 3);
    apply_frame_increment(spec.frame, omega, dt);
    return spec;
}

void Model::fold_symmetry_increments() {
    for (std::size_t i = 0; i < symmetries_.specs.size(); ++i) {
        Eigen::Index off = symmetry_offset_ + 6 * Eigen::Index(i);
        Vec3 omega = store_.values().segment<3>(off);
        Vec3 dt = store_.values().segment<3>(off + 3);
        apply_frame_increment(symmetries_.specs[i].frame, omega, dt);
        store_.values().segment<6>(off).setZero();
    }
}

Scalar Model::object_distance(const VecX& params, const Vec3& x) const {
    return sdf_.eval(params, x).delta;
}

Scalar Model::field_distance(const VecX& params, const Vec3& x) const {
    Scalar d = object_distance(params, x);
    return config_.ground ? std::min(d, ground_distance(ground_, x)) : d;
}

Model::BatchResult Model::evaluate_batch(const VecX& params, const std::vector<Ray>& rays,
                                         const MatX& targets, Rng& rng,
                                         const BatchOptions& options, VecX* grads) const {
    const int R = int(rays.size());
    if (R < 1) throw Error("model: empty ray batch");
    if (targets.rows() != R || targets.cols() != 3)
        throw Error("model: target size mismatch");
    const bool want_grads = options.with_grads && grads != nullptr;
    if (want_grads && grads->size() != store_.size())
        throw Error("model: gradient buffer mis-sized");
    options.weights.validate();

    const Scalar tau_value = tau(params);
    const int feature_dim = config_.sdf.feature_dim;
    const bool transformed = options.transformed;
    const bool lighting_on = transformed && options.lighting_term &&
                             options.ablation.lighting && options.weights.lighting > 0.0;

    SymmetrySpec spec;
    Mat3 frame_r = Mat3::Identity();
    Vec3 frame_t = Vec3::Zero();
    if (transformed) {
        spec = effective_spec(params, options.symmetry_index);
        frame_r = spec.frame.rotation;
        frame_t = spec.frame.translation;
    }

    // ------------------------------------------------------------------
    // Sampling pass (treated as constant for gradients): coarse stratified
    // samples, one importance round against the coarse weights.
    std::vector<RaySections> secs{std::size_t(R)};
    Eigen::Index total = 0;
    {
        // Coarse evaluation batched across rays.
        std::vector<VecX> coarse_ts{std::size_t(R)};
        Eigen::Index coarse_total = 0;
        std::vector<Eigen::Index> coarse_off(std::size_t(R), 0);
        for (int r = 0; r < R; ++r) {
            secs[std::size_t(r)].ray = rays[std::size_t(r)];
            secs[std::size_t(r)].foreground = rays[std::size_t(r)].hits_foreground();
            if (!secs[std::size_t(r)].foreground) continue;
            coarse_ts[std::size_t(r)] =
                coarse_samples(rays[std::size_t(r)], options.sampling.n_coarse + 1, rng);
            coarse_off[std::size_t(r)] = coarse_total;
            coarse_total += coarse_ts[std::size_t(r)].size() - 1;
        }
        MatX coarse_points(coarse_total, 3);
        for (int r = 0; r < R; ++r) {
            if (!secs[std::size_t(r)].foreground) continue;
            const VecX& ts = coarse_ts[std::size_t(r)];
            for (Eigen::Index i = 0; i + 1 < ts.size(); ++i) {
                Scalar m = 0.5 * (ts[i] + ts[i + 1]);
                coarse_points.row(coarse_off[std::size_t(r)] + i) =
                    rays[std::size_t(r)].origin + m * rays[std::size_t(r)].direction;
            }
        }
        NeuralSdfBatch coarse = coarse_total > 0
                                    ? sdf_.forward(params, coarse_points)
                                    : NeuralSdfBatch{};
        for (int r = 0; r < R; ++r) {
            RaySections& s = secs[std::size_t(r)];
            if (!s.foreground) continue;
            const VecX& ts = coarse_ts[std::size_t(r)];
            const Eigen::Index n = ts.size() - 1;
            VecX alphas(n);
            for (Eigen::Index i = 0; i < n; ++i) {
                Eigen::Index row = coarse_off[std::size_t(r)] + i;
                Vec3 x = coarse_points.row(row);
                Scalar d = coarse.delta[row];
                Vec3 nrm = coarse.normal.row(row);
                if (config_.ground && ground_distance(ground_, x) < d) {
                    d = ground_distance(ground_, x);
                    nrm = ground_.up;
                }
                Scalar half = 0.5 * (ts[i + 1] - ts[i]);
                Scalar slope = nrm.dot(s.ray.direction);
                alphas[i] =
                    alpha_from_deltas(d - half * slope, d + half * slope, tau_value);
            }
            VecX w = accumulate(alphas);
            VecX fine = importance_samples(ts, w, options.sampling.n_fine, rng);
            s.ts = merge_samples(ts, fine);
            s.n = s.ts.size() - 1;
            s.mid.resize(s.n);
            s.half.resize(s.n);
            for (Eigen::Index i = 0; i < s.n; ++i) {
                s.mid[i] = 0.5 * (s.ts[i] + s.ts[i + 1]);
                s.half[i] = 0.5 * (s.ts[i + 1] - s.ts[i]);
            }
            s.off = total;
            total += s.n;
        }
    }

    // Per-ray symmetry draws (shared across a ray's samples).
    if (transformed) {
        for (int r = 0; r < R; ++r) {
            RaySections& s = secs[std::size_t(r)];
            AffineMap canon = draw_canonical(spec, rng);
            s.canon_linear = canon.linear;
            s.canon_offset = canon.translation;
            Vec3 raw = frame_r.transpose() * (canon.linear * (frame_r * s.ray.direction));
            s.dir1_raw_norm = raw.norm();
            if (s.dir1_raw_norm < 1e-12) throw Error("model: degenerate mapped direction");
            s.dir1 = raw / s.dir1_raw_norm;
        }
    }

    // ------------------------------------------------------------------
    // Differentiable forward: source path (and transformed path).
    const VecX ground_feature = params.segment(ground_feature_offset_, feature_dim);

    auto eval_path = [&](int j) {
        PathState p;
        p.points.resize(total, 3);
        p.dirs.resize(total, 3);
        p.active.assign(std::size_t(total), 1);
        for (int r = 0; r < R; ++r) {
            const RaySections& s = secs[std::size_t(r)];
            for (Eigen::Index i = 0; i < s.n; ++i) {
                Vec3 x = s.ray.origin + s.mid[i] * s.ray.direction;
                if (j == 0) {
                    p.points.row(s.off + i) = x;
                    p.dirs.row(s.off + i) = s.ray.direction;
                } else {
                    Vec3 u = frame_r * x + frame_t;
                    Vec3 y = frame_r.transpose() *
                             (s.canon_linear * u + s.canon_offset - frame_t);
                    p.points.row(s.off + i) = y;
                    p.dirs.row(s.off + i) = s.dir1;
                    if (y.norm() > 1.0) p.active[std::size_t(s.off + i)] = 0;
                }
            }
        }
        p.sdf = total > 0 ? sdf_.forward(params, p.points) : NeuralSdfBatch{};
        p.delta = p.sdf.delta;
        p.normal = p.sdf.normal;
        p.feature = p.sdf.feature;
        p.object.assign(std::size_t(total), 1);
        if (config_.ground) {
            for (Eigen::Index i = 0; i < total; ++i) {
                Vec3 x = p.points.row(i);
                Scalar gd = ground_distance(ground_, x);
                if (gd < p.delta[i]) {
                    p.delta[i] = gd;
                    p.normal.row(i) = ground_.up;
                    p.feature.row(i) = ground_feature;
                    p.object[std::size_t(i)] = 0;
                }
            }
        }
        p.alpha.setZero(total);
        p.weight.setZero(total);
        for (int r = 0; r < R; ++r) {
            const RaySections& s = secs[std::size_t(r)];
            if (s.n == 0) continue;
            VecX a(s.n);
            for (Eigen::Index i = 0; i < s.n; ++i) {
                Eigen::Index row = s.off + i;
                if (!p.active[std::size_t(row)]) {
                    a[i] = 0.0;
                    continue;
                }
                Scalar slope = p.normal.row(row).dot(p.dirs.row(row));
                a[i] = alpha_from_deltas(p.delta[row] - s.half[i] * slope,
                                         p.delta[row] + s.half[i] * slope, tau_value);
            }
            VecX w = accumulate(a);
            p.alpha.segment(s.off, s.n) = a;
            p.weight.segment(s.off, s.n) = w;
        }
        return p;
    };

    std::vector<PathState> paths;
    paths.push_back(eval_path(0));
    if (transformed) paths.push_back(eval_path(1));

    // Appearance heads. Heads indexed by k take the path-k geometry inputs.
    std::vector<MaterialEval> material(paths.size());
    std::vector<DiffuseEval> diffuse(paths.size());
    std::vector<SpecularEval> specular(paths.size());
    for (std::size_t k = 0; total > 0 && k < paths.size(); ++k) {
        material[k] = appearance_.material_forward(params, paths[k].points, paths[k].feature);
        diffuse[k] = appearance_.diffuse_forward(params, int(k), paths[k].points,
                                                 paths[k].normal, paths[k].feature);
        specular[k] =
            appearance_.specular_forward(params, int(k), paths[k].points, paths[k].normal,
                                         paths[k].dirs, paths[k].feature);
    }
    // Lighting loss: source lighting heads (k = 0) on transformed inputs.
    DiffuseEval light_diffuse;
    SpecularEval light_specular;
    if (lighting_on && total > 0) {
        light_diffuse = appearance_.diffuse_forward(params, 0, paths[1].points,
                                                    paths[1].normal, paths[1].feature);
        light_specular =
            appearance_.specular_forward(params, 0, paths[1].points, paths[1].normal,
                                         paths[1].dirs, paths[1].feature);
    }

    // Background colours per ray.
    MatX ray_dirs(R, 3);
    for (int r = 0; r < R; ++r) ray_dirs.row(r) = rays[std::size_t(r)].direction;
    MlpCache bg_cache;
    MatX bg = background_.forward(params, ray_dirs, &bg_cache);

    const int n_paths = int(paths.size());

    // ------------------------------------------------------------------
    // Losses.
    LossTerms raw;
    Eigen::Index eik_count[2] = {0, 0};
    Scalar eik_sum[2] = {0.0, 0.0};
    for (int j = 0; j < n_paths; ++j) {
        for (Eigen::Index i = 0; i < total; ++i) {
            if (!paths[std::size_t(j)].active[std::size_t(i)]) continue;
            Scalar nn = paths[std::size_t(j)].sdf.normal.row(i).norm();
            eik_sum[j] += (nn - 1.0) * (nn - 1.0);
            ++eik_count[j];
        }
        raw.eikonal[j] = eik_count[j] > 0 ? eik_sum[j] / Scalar(eik_count[j]) : 0.0;
    }

    BatchResult result;
    result.colour00.resize(R, 3);
    result.mask0.setZero(R);
    result.depth0.setZero(R);

    auto compose_row = [](Scalar gd, const Vec3& alb, Scalar refl, const Vec3& spc,
                          Vec3* raw_out = nullptr) {
        Vec3 c = gd * alb + refl * spc;
        if (raw_out) *raw_out = c;
        return clamp01(c);
    };

    Scalar lighting_mean = 0.0;
    for (int r = 0; r < R; ++r) {
        const RaySections& s = secs[std::size_t(r)];
        const Vec3 target = targets.row(r);
        const Vec3 bg_r = bg.row(r);
        for (int j = 0; j < n_paths; ++j) {
            const PathState& pj = paths[std::size_t(j)];
            Scalar sumw = s.n > 0 ? pj.weight.segment(s.off, s.n).sum() : 0.0;
            for (int k = 0; k < n_paths; ++k) {
                Vec3 chat = (1.0 - sumw) * bg_r;
                Vec3 dhat = (1.0 - sumw) * bg_r;
                for (Eigen::Index i = 0; i < s.n; ++i) {
                    Eigen::Index row = s.off + i;
                    Scalar w = pj.weight[row];
                    Vec3 alb = material[std::size_t(j)].albedo.row(row);
                    Vec3 spc = specular[std::size_t(k)].specular.row(row);
                    Scalar gd = diffuse[std::size_t(k)].diffuse[row];
                    Scalar refl = material[std::size_t(j)].reflect[row];
                    chat += w * compose_row(gd, alb, refl, spc);
                    dhat += w * gd * alb;
                }
                raw.colour[j][k] += colour_loss(chat, target) / R;
                raw.diffuse[j][k] +=
                    colour_loss(clamp01(dhat), target) / R;
                if (j == 0 && k == 0) {
                    result.colour00.row(r) = chat;
                    result.mask0[r] = sumw;
                    if (s.n > 0) {
                        Scalar depth = 0.0;
                        if (render_depth(pj.weight.segment(s.off, s.n), s.mid, depth))
                            result.depth0[r] = depth;
                    }
                }
            }
        }
        if (lighting_on) {
            const PathState& p0 = paths[0];
            Scalar sumw = s.n > 0 ? p0.weight.segment(s.off, s.n).sum() : 0.0;
            Vec3 chat = (1.0 - sumw) * bg_r;
            for (Eigen::Index i = 0; i < s.n; ++i) {
                Eigen::Index row = s.off + i;
                chat += p0.weight[row] *
                        compose_row(light_diffuse.diffuse[row],
                                    material[0].albedo.row(row), material[0].reflect[row],
                                    light_specular.specular.row(row));
            }
            lighting_mean += colour_loss(chat, target) / R;
        }
    }
    if (lighting_on) {
        for (int j = 0; j < 2; ++j)
            for (int k = 0; k < 2; ++k) raw.lighting[j][k] = lighting_mean;
    }

    result.raw = raw;
    result.report = total_loss(raw, options.weights, options.ablation);

    if (!want_grads) return result;

    // ------------------------------------------------------------------
    // Backward. Coefficients multiplying each raw mean term in the total.
    auto path_factor = [&](int j) {
        return j == 0 ? 1.0 : options.weights.symmetricity;
    };
    Scalar colour_coeff[2][2];
    Scalar diffuse_coeff[2][2];
    for (int j = 0; j < 2; ++j) {
        for (int k = 0; k < 2; ++k) {
            colour_coeff[j][k] =
                options.ablation.colour_enabled(j, k) ? path_factor(j) : 0.0;
            diffuse_coeff[j][k] =
                options.ablation.diffuse ? path_factor(j) * options.weights.diffuse : 0.0;
        }
    }
    Scalar lighting_coeff =
        lighting_on ? options.weights.lighting * (2.0 + 2.0 * options.weights.symmetricity)
                    : 0.0;
    Scalar eikonal_coeff[2] = {2.0 * options.weights.eikonal,
                               2.0 * options.weights.symmetricity * options.weights.eikonal};

    // Per-row adjoint buffers.
    std::vector<MatX> g_albedo(paths.size(), MatX::Zero(total, 3));
    std::vector<VecX> g_reflect(paths.size(), VecX::Zero(total));
    std::vector<VecX> g_diffuse(paths.size(), VecX::Zero(total));
    std::vector<MatX> g_specular(paths.size(), MatX::Zero(total, 3));
    std::vector<VecX> g_weight(paths.size(), VecX::Zero(total));
    VecX g_light_diffuse = VecX::Zero(lighting_on ? total : 0);
    MatX g_light_specular = MatX::Zero(lighting_on ? total : 0, 3);
    MatX g_bg = MatX::Zero(R, 3);
    Scalar g_tau = 0.0;

    for (int r = 0; r < R; ++r) {
        const RaySections& s = secs[std::size_t(r)];
        const Vec3 target = targets.row(r);
        const Vec3 bg_r = bg.row(r);
        for (int j = 0; j < n_paths; ++j) {
            const PathState& pj = paths[std::size_t(j)];
            Scalar sumw = s.n > 0 ? pj.weight.segment(s.off, s.n).sum() : 0.0;
            for (int k = 0; k < n_paths; ++k) {
                Scalar cc = colour_coeff[j][k] / R;
                Scalar dc = diffuse_coeff[j][k] / R;
                if (cc == 0.0 && dc == 0.0) continue;
                // Recompute the two renders for their sign adjoints.
                Vec3 chat = (1.0 - sumw) * bg_r;
                Vec3 dhat_raw = (1.0 - sumw) * bg_r;
                for (Eigen::Index i = 0; i < s.n; ++i) {
                    Eigen::Index row = s.off + i;
                    Scalar w = pj.weight[row];
                    Vec3 alb = material[std::size_t(j)].albedo.row(row);
                    Scalar gd = diffuse[std::size_t(k)].diffuse[row];
                    chat += w * compose_row(gd, alb,
                                            material[std::size_t(j)].reflect[row],
                                            specular[std::size_t(k)].specular.row(row));
                    dhat_raw += w * gd * alb;
                }
                Vec3 g_chat = cc * sign3(chat - target) / 3.0;
                Vec3 g_dhat =
                    (dc * sign3(clamp01(dhat_raw) - target) / 3.0).cwiseProduct(
                        clamp_mask(dhat_raw));
                for (Eigen::Index i = 0; i < s.n; ++i) {
                    Eigen::Index row = s.off + i;
                    Scalar w = pj.weight[row];
                    Vec3 alb = material[std::size_t(j)].albedo.row(row);
                    Vec3 spc = specular[std::size_t(k)].specular.row(row);
                    Scalar gd = diffuse[std::size_t(k)].diffuse[row];
                    Scalar refl = material[std::size_t(j)].reflect[row];
                    Vec3 craw;
                    Vec3 c = compose_row(gd, alb, refl, spc, &craw);
                    // Colour render chain.
                    Vec3 g_c = w * g_chat;
                    g_weight[std::size_t(j)][row] += g_chat.dot(c - bg_r);
                    Vec3 g_craw = g_c.cwiseProduct(clamp_mask(craw));
                    g_diffuse[std::size_t(k)][row] += g_craw.dot(alb);
                    g_albedo[std::size_t(j)].row(row) += (gd * g_craw).transpose();
                    g_reflect[std::size_t(j)][row] += g_craw.dot(spc);
                    g_specular[std::size_t(k)].row(row) += (refl * g_craw).transpose();
                    // Diffuse render chain.
                    g_weight[std::size_t(j)][row] += g_dhat.dot(gd * alb - bg_r);
                    g_diffuse[std::size_t(k)][row] += w * g_dhat.dot(alb);
                    g_albedo[std::size_t(j)].row(row) += (w * gd * g_dhat).transpose();
                }
                g_bg.row(r) += ((1.0 - sumw) * (g_chat + g_dhat)).transpose();
            }
        }
        if (lighting_on && lighting_coeff > 0.0) {
            const PathState& p0 = paths[0];
            Scalar sumw = s.n > 0 ? p0.weight.segment(s.off, s.n).sum() : 0.0;
            Vec3 chat = (1.0 - sumw) * bg_r;
            for (Eigen::Index i = 0; i < s.n; ++i) {
                Eigen::Index row = s.off + i;
                chat += p0.weight[row] *
                        compose_row(light_diffuse.diffuse[row],
                                    material[0].albedo.row(row), material[0].reflect[row],
                                    light_specular.specular.row(row));
            }
            Vec3 g_chat = (lighting_coeff / R) * sign3(chat - target) / 3.0;
            for (Eigen::Index i = 0; i < s.n; ++i) {
                Eigen::Index row = s.off + i;
                Scalar w = p0.weight[row];
                Vec3 alb = material[0].albedo.row(row);
                Vec3 spc = light_specular.specular.row(row);
                Scalar gd = light_diffuse.diffuse[row];
                Scalar refl = material[0].reflect[row];
                Vec3 craw;
                Vec3 c = compose_row(gd, alb, refl, spc, &craw);
                Vec3 g_c = w * g_chat;
                g_weight[0][row] += g_chat.dot(c - bg_r);
                Vec3 g_craw = g_c.cwiseProduct(clamp_mask(craw));
                g_light_diffuse[row] += g_craw.dot(alb);
                g_albedo[0].row(row) += (gd * g_craw).transpose();
                g_reflect[0][row] += g_craw.dot(spc);
                g_light_specular.row(row) += (refl * g_craw).transpose();
            }
            g_bg.row(r) += ((1.0 - sumw) * g_chat).transpose();
        }
    }

    // Neural-field adjoint buffers (per path).
    std::vector<VecX> g_delta(paths.size(), VecX::Zero(total));
    std::vector<MatX> g_nrm_neural(paths.size(), MatX::Zero(total, 3));
    std::vector<MatX> g_feat_neural(paths.size(), MatX::Zero(total, feature_dim));
    VecX g_ground_feature = VecX::Zero(feature_dim);
    // g_points is assigned (not accumulated) by the SDF backward; extra
    // point-adjoint contributions are collected separately and added after.
    std::vector<MatX> g_points(paths.size(), MatX::Zero(total, 3));
    MatX g_points_extra = MatX::Zero(total, 3);
    std::vector<Vec3> g_dir1(std::size_t(R), Vec3::Zero());

    // Eikonal adjoints go straight to the neural gradients.
    for (int j = 0; j < n_paths; ++j) {
        if (eik_count[j] == 0) continue;
        Scalar coeff = eikonal_coeff[j] / Scalar(eik_count[j]);
        for (Eigen::Index i = 0; i < total; ++i) {
            if (!paths[std::size_t(j)].active[std::size_t(i)]) continue;
            Vec3 n = paths[std::size_t(j)].sdf.normal.row(i);
            Scalar nn = n.norm();
            if (nn > 1e-12)
                g_nrm_neural[std::size_t(j)].row(i) +=
                    (coeff * 2.0 * (nn - 1.0) / nn * n).transpose();
        }
    }

    // Weight adjoints back through opacities to deltas, joint normals, tau,
    // and (for the transformed path) the mapped direction.
    std::vector<MatX> g_nrm_joint(paths.size(), MatX::Zero(total, 3));
    for (int j = 0; j < n_paths; ++j) {
        PathState& p = paths[std::size_t(j)];
        for (int r = 0; r < R; ++r) {
            const RaySections& s = secs[std::size_t(r)];
            if (s.n == 0) continue;
            VecX a = p.alpha.segment(s.off, s.n);
            VecX w = p.weight.segment(s.off, s.n);
            VecX gw = g_weight[std::size_t(j)].segment(s.off, s.n);
            VecX ga;
            accumulate_backward(a, w, gw, ga);
            for (Eigen::Index i = 0; i < s.n; ++i) {
                Eigen::Index row = s.off + i;
                if (!p.active[std::size_t(row)] || ga[i] == 0.0) continue;
                Scalar slope = p.normal.row(row).dot(p.dirs.row(row));
                AlphaGrad agrad;
                alpha_with_grad(p.delta[row] - s.half[i] * slope,
                                p.delta[row] + s.half[i] * slope, tau_value, agrad);
                Scalar g_lo = ga[i] * agrad.d_lo;
                Scalar g_hi = ga[i] * agrad.d_hi;
                g_tau += ga[i] * agrad.d_tau;
                Scalar g_mid = g_lo + g_hi;
                Scalar g_slope = s.half[i] * (g_hi - g_lo);
                if (p.object[std::size_t(row)]) {
                    g_delta[std::size_t(j)][row] += g_mid;
                    g_nrm_joint[std::size_t(j)].row(row) +=
                        (g_slope * Vec3(p.dirs.row(row))).transpose();
                } else if (j == 1) {
                    // Ground-branch delta is the plane distance at the mapped
                    // point, which moves with the frame increment.
                    g_points_extra.row(row) += (g_mid * ground_.up).transpose();
                }
                if (j == 1) {
                    Vec3 nrm = p.normal.row(row);
                    g_dir1[std::size_t(r)] += g_slope * nrm;
                }
            }
        }
    }

    // Head backwards. g_x/g_normal/g_feature land in joint-input buffers.
    std::vector<MatX> g_x_head(paths.size(), MatX::Zero(total, 3));
    std::vector<MatX> g_feat_joint(paths.size(), MatX::Zero(total, feature_dim));
    for (std::size_t k = 0; total > 0 && k < paths.size(); ++k) {
        MatX* gx = k == 1 ? &g_x_head[1] : nullptr;
        appearance_.material_backward(params, material[k], g_albedo[k], g_reflect[k],
                                      *grads, gx, &g_feat_joint[k]);
        appearance_.diffuse_backward(params, int(k), diffuse[k], g_diffuse[k], *grads, gx,
                                     &g_nrm_joint[k], &g_feat_joint[k]);
        MatX g_dir_rows = MatX::Zero(total, 3);
        appearance_.specular_backward(params, int(k), specular[k], g_specular[k], *grads,
                                      gx, &g_nrm_joint[k], k == 1 ? &g_dir_rows : nullptr,
                                      &g_feat_joint[k]);
        if (k == 1) {
            for (int r = 0; r < R; ++r) {
                const RaySections& s = secs[std::size_t(r)];
                for (Eigen::Index i = 0; i < s.n; ++i)
                    g_dir1[std::size_t(r)] += Vec3(g_dir_rows.row(s.off + i));
            }
        }
    }
    if (lighting_on && total > 0) {
        appearance_.diffuse_backward(params, 0, light_diffuse, g_light_diffuse, *grads,
                                     &g_x_head[1], &g_nrm_joint[1], &g_feat_joint[1]);
        MatX g_dir_rows = MatX::Zero(total, 3);
        appearance_.specular_backward(params, 0, light_specular, g_light_specular, *grads,
                                      &g_x_head[1], &g_nrm_joint[1], &g_dir_rows,
                                      &g_feat_joint[1]);
        for (int r = 0; r < R; ++r) {
            const RaySections& s = secs[std::size_t(r)];
            for (Eigen::Index i = 0; i < s.n; ++i)
                g_dir1[std::size_t(r)] += Vec3(g_dir_rows.row(s.off + i));
        }
    }

    // Route joint-input adjoints by branch.
    for (int j = 0; j < n_paths; ++j) {
        for (Eigen::Index i = 0; i < total; ++i) {
            if (paths[std::size_t(j)].object[std::size_t(i)]) {
                g_nrm_neural[std::size_t(j)].row(i) += g_nrm_joint[std::size_t(j)].row(i);
                g_feat_neural[std::size_t(j)].row(i) += g_feat_joint[std::size_t(j)].row(i);
            } else {
                g_ground_feature += g_feat_joint[std::size_t(j)].row(i).transpose();
            }
        }
    }

    // Neural SDF backwards (second-order terms flow through the normals).
    for (int j = 0; j < n_paths; ++j) {
        if (total == 0) break;
        sdf_.backward(params, paths[std::size_t(j)].sdf, g_delta[std::size_t(j)],
                      g_nrm_neural[std::size_t(j)], g_feat_neural[std::size_t(j)], *grads,
                      j == 1 ? &g_points[1] : nullptr);
    }

    // Transformed-point and direction adjoints to the frame increment
    // parameters (valid at the zero increment; see header).
    if (transformed) {
        g_points[1] += g_x_head[1] + g_points_extra;
        Vec3 g_omega = Vec3::Zero();
        Vec3 g_dt = Vec3::Zero();
        const Mat3& Rm = frame_r;
        const Vec3& tm = frame_t;
        for (int r = 0; r < R; ++r) {
            const RaySections& s = secs[std::size_t(r)];
            const Mat3& A = s.canon_linear;
            const Vec3& b = s.canon_offset;
            for (Eigen::Index i = 0; i < s.n; ++i) {
                Eigen::Index row = s.off + i;
                Vec3 gy = g_points[1].row(row);
                if (gy.isZero(0.0)) continue;
                Vec3 x = s.ray.origin + s.mid[i] * s.ray.direction;
                Vec3 u = Rm * x + tm;
                Vec3 v = A * u + b;
                Vec3 rg = Rm * gy;
                g_omega += rg.cross(v - tm) + (Rm * x).cross(A.transpose() * rg);
                g_dt += A.transpose() * rg - rg;
            }
            // Direction chain: unit-normalization, then the linear map.
            Vec3 g_unit = g_dir1[std::size_t(r)];
            if (!g_unit.isZero(0.0)) {
                Vec3 graw =
                    (g_unit - g_unit.dot(s.dir1) * s.dir1) / s.dir1_raw_norm;
                Vec3 rd = Rm * s.ray.direction;
                Vec3 rg = Rm * graw;
                g_omega += rg.cross(A * rd) + rd.cross(A.transpose() * rg);
            }
        }
        Eigen::Index off = symmetry_offset_ + 6 * options.symmetry_index;
        grads->segment<3>(off) += g_omega;
        grads->segment<3>(off + 3) += g_dt;
    }

    background_.backward(params, bg_cache, g_bg, *grads);
    grads->segment(ground_feature_offset_, feature_dim) += g_ground_feature;
    (*grads)[tau_offset_] += tau_value * g_tau;  // chain through tau = exp(log_tau)

    return result;
}

Model::ImageRender Model::render_image(const VecX& params, const Camera& camera, Rng& rng,
                                       const SamplingConfig& sampling) const {
    ImageRender out;
    out.rgb = Image(camera.width, camera.height, 3);
    out.depth = Image(camera.width, camera.height, 1);
    out.mask = Image(camera.width, camera.height, 1);

    BatchOptions options;
    options.sampling = sampling;
    options.transformed = false;
    options.lighting_term = false;
    options.with_grads = false;

    const int chunk = 1024;
    std::vector<Ray> rays;
    std::vector<std::pair<int, int>> pixels;
    auto flush = [&]() {
        if (rays.empty()) return;
        MatX targets = MatX::Zero(int(rays.size()), 3);
        BatchResult res = evaluate_batch(params, rays, targets, rng, options, nullptr);
        for (std::size_t i = 0; i < rays.size(); ++i) {
            auto [x, y] = pixels[i];
            for (int c = 0; c < 3; ++c) out.rgb.at(x, y, c) = clamp01(res.colour00(int(i), c));
            out.depth.at(x, y) = res.depth0[int(i)];
            out.mask.at(x, y) = clamp01(res.mask0[int(i)]);
        }
        rays.clear();
        pixels.clear();
    };
    for (int y = 0; y < camera.height; ++y) {
        for (int x = 0; x < camera.width; ++x) {
            rays.push_back(pixel_ray(camera, Vec2(x + 0.5, y + 0.5)));
            pixels.emplace_back(x, y);
            if (int(rays.size()) == chunk) flush();
        }
    }
    flush();
    return out;
}

}  // namespace symsurf

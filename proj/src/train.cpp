#include "symsurf/train.hpp"

#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

namespace symsurf {

void TrainConfig::validate() const {
    if (iters < 0) throw Error("train: iteration count must be non-negative");
    if (rays_per_batch < 1) throw Error("train: rays_per_batch must be positive");
    if (sampling.n_coarse < 1) throw Error("train: n_coarse must be positive");
    if (sampling.n_fine < 0) throw Error("train: n_fine must be non-negative");
    weights.validate();
}

Checkpoint snapshot(const Model& model, int iter, std::uint64_t seed) {
    Checkpoint ck;
    ck.store = model.store();
    ck.extra["iteration"] = std::to_string(iter);
    ck.extra["seed"] = std::to_string(seed);
    const SymmetrySet& set = model.symmetries();
    ck.extra["symmetry_count"] = std::to_string(set.specs.size());
    for (std::size_t i = 0; i < set.specs.size(); ++i)
        ck.extra["symmetry" + std::to_string(i)] = format_symmetry(set.specs[i]);
    return ck;
}

void restore(Model& model, const Checkpoint& checkpoint) {
    const auto& want = model.store().slices();
    const auto& have = checkpoint.store.slices();
    if (want.size() != have.size() || checkpoint.store.size() != model.store().size())
        throw Error("train: checkpoint layout does not match the model");
    for (std::size_t i = 0; i < want.size(); ++i)
        if (want[i].name != have[i].name || want[i].size != have[i].size)
            throw Error("train: checkpoint slice '" + have[i].name +
                        "' does not match the model");
    model.store().values() = checkpoint.store.values();

    auto it = checkpoint.extra.find("symmetry_count");
    if (it != checkpoint.extra.end()) {
        std::size_t n = std::size_t(std::stoul(it->second));
        SymmetrySet set;
        for (std::size_t i = 0; i < n; ++i)
            set.specs.push_back(
                parse_symmetry(checkpoint.extra.at("symmetry" + std::to_string(i))));
        model.set_symmetries(set);
    }
}

int checkpoint_iteration(const Checkpoint& checkpoint) {
    auto it = checkpoint.extra.find("iteration");
    return it == checkpoint.extra.end() ? 0 : std::stoi(it->second);
}

std::string train_log_csv(const std::vector<TrainLogRow>& log) {
    std::ostringstream out;
    out.precision(10);
    out << "iter,total,colour,eikonal,lr\n";
    for (const TrainLogRow& row : log)
        out << row.iter << ',' << row.total << ',' << row.colour << ',' << row.eikonal
            << ',' << row.lr << '\n';
    return out.str();
}

Camera downscale_camera(const Camera& camera, int factor) {
    if (factor < 1 || camera.width % factor != 0 || camera.height % factor != 0)
        throw Error("train: invalid camera downscale factor");
    Camera out = camera;
    out.width = camera.width / factor;
    out.height = camera.height / factor;
    out.intrinsics.block<2, 3>(0, 0) /= Scalar(factor);
    return out;
}

namespace {

void check_dataset(const Dataset& dataset) {
    if (dataset.split.train.empty()) throw Error("train: empty train split");
    std::size_t n = dataset.cameras.size();
    if (dataset.rgb.size() != n || dataset.mask.size() != n || dataset.depth.size() != n)
        throw Error("train: dataset frame counts do not match the cameras");
    for (int id : dataset.split.train)
        if (id < 0 || std::size_t(id) >= n)
            throw Error("train: train split references a missing frame");
}

void write_outputs(const std::string& out_dir, const TrainResult& result) {
    if (out_dir.empty()) return;
    std::filesystem::create_directories(out_dir);
    write_checkpoint(out_dir + "/checkpoint.bin", result.checkpoint);
    std::ofstream log(out_dir + "/train_log.csv");
    log << train_log_csv(result.log);
}

}  // namespace

TrainResult train(Model& model, const Dataset& dataset, const TrainConfig& config,
                  const std::string& out_dir) {
    config.validate();
    check_dataset(dataset);

    ScheduleConfig sched = config.schedule;
    sched.total_iters = std::max(config.iters, 1);
    if (sched.ramped_groups.empty())
        sched.ramped_groups = {"sdf", "specular", "tau", "symmetry"};

    Model::BatchOptions options;
    options.sampling = config.sampling;
    options.weights = config.weights;
    options.ablation = config.ablation;
    options.transformed = config.weights.symmetricity > 0.0;
    options.lighting_term = options.transformed;
    options.with_grads = true;

    Rng rng(config.seed);
    AdamState adam;
    VecX grads = VecX::Zero(model.store().size());
    std::vector<Ray> rays(std::size_t(config.rays_per_batch));
    MatX targets(config.rays_per_batch, 3);

    TrainResult result;
    Checkpoint last_good = snapshot(model, 0, config.seed);

    std::uniform_int_distribution<std::size_t> pick_frame(0, dataset.split.train.size() - 1);

    for (int iter = 0; iter < config.iters; ++iter) {
        for (int b = 0; b < config.rays_per_batch; ++b) {
            int frame = dataset.split.train[pick_frame(rng)];
            const Camera& cam = dataset.cameras[std::size_t(frame)];
            std::uniform_int_distribution<int> px(0, cam.width - 1);
            std::uniform_int_distribution<int> py(0, cam.height - 1);
            int x = px(rng);
            int y = py(rng);
            rays[std::size_t(b)] = pixel_ray(cam, Vec2(x + 0.5, y + 0.5));
            const Image& img = dataset.rgb[std::size_t(frame)];
            for (int c = 0; c < 3; ++c) targets(b, c) = img.at(x, y, c);
        }

        grads.setZero();
        Model::BatchResult batch =
            model.evaluate_batch(model.store().values(), rays, targets, rng, options, &grads);
        if (!std::isfinite(batch.report.total)) {
            result.aborted = true;
            result.final_iter = iter;
            result.checkpoint = last_good;
            write_outputs(out_dir, result);
            return result;
        }

        adam_step(model.store(), grads, adam, iter,
                  [&](const std::string& group) { return lr_at(sched, group, iter); });
        model.fold_symmetry_increments();

        if (config.log_every > 0 &&
            (iter % config.log_every == 0 || iter + 1 == config.iters)) {
            TrainLogRow row;
            row.iter = iter;
            row.total = batch.report.total;
            const LossTerms& w = batch.report.weighted;
            for (int j = 0; j < 2; ++j)
                for (int k = 0; k < 2; ++k) row.colour += w.colour[j][k];
            row.eikonal = w.eikonal[0] + w.eikonal[1];
            row.lr = lr_at(sched, "sdf", iter);
            result.log.push_back(row);
        }

        if (config.validate_every > 0 && (iter + 1) % config.validate_every == 0 &&
            !out_dir.empty()) {
            int frame = dataset.split.test.empty() ? dataset.split.train.front()
                                                   : dataset.split.test.front();
            Camera cam = downscale_camera(dataset.cameras[std::size_t(frame)], 4);
            Rng val_rng(config.seed ^ (0x9e3779b97f4a7c15ull + std::uint64_t(iter + 1)));
            Model::ImageRender render =
                model.render_image(model.store().values(), cam, val_rng, config.sampling);
            std::filesystem::create_directories(out_dir + "/val");
            char name[64];
            std::snprintf(name, sizeof name, "/val/iter%06d.png", iter + 1);
            write_png(out_dir + name, render.rgb, /*gamma=*/true);
        }

        if (config.checkpoint_every > 0 && (iter + 1) % config.checkpoint_every == 0) {
            last_good = snapshot(model, iter + 1, config.seed);
            if (!out_dir.empty()) {
                std::filesystem::create_directories(out_dir);
                write_checkpoint(out_dir + "/checkpoint.bin", last_good);
            }
        }
    }

    result.final_iter = config.iters;
    result.checkpoint = snapshot(model, config.iters, config.seed);
    write_outputs(out_dir, result);
    return result;
}

MetricsReport evaluate_model(const Model& model, const Dataset& dataset,
                             const SamplingConfig& sampling, std::uint64_t seed) {
    if (dataset.split.test.empty()) throw Error("eval: empty test split");
    std::vector<FrameMetrics> frames;
    for (int id : dataset.split.test) {
        if (id < 0 || std::size_t(id) >= dataset.cameras.size())
            throw Error("eval: test split references a missing frame");
        Rng rng(seed ^ (0xd1b54a32d192ed03ull + std::uint64_t(id)));
        Model::ImageRender render = model.render_image(
            model.store().values(), dataset.cameras[std::size_t(id)], rng, sampling);
        FrameMetrics f;
        f.frame = id;
        f.mse = mse(render.rgb, dataset.rgb[std::size_t(id)]);
        f.psnr = psnr(render.rgb, dataset.rgb[std::size_t(id)]);
        f.depth_mae =
            depth_mae(render.depth, dataset.depth[std::size_t(id)], dataset.mask[std::size_t(id)]);
        f.mask_iou = mask_iou(render.mask, dataset.mask[std::size_t(id)]);
        frames.push_back(f);
    }
    return aggregate_metrics(frames);
}

}  // namespace symsurf

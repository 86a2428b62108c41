#include <CLI11.hpp>

#include <filesystem>
#include <fstream>
#include <iostream>

#include "symsurf/mesh.hpp"
#include "symsurf/scene.hpp"
#include "symsurf/train.hpp"

using namespace symsurf;

namespace {

// ---------------------------------------------------------------------------
// Key-value config helpers (missing keys keep their defaults).

Scalar kv_num(const KeyValueMap& kv, const std::string& key, Scalar fallback) {
    auto it = kv.find(key);
    return it == kv.end() ? fallback : std::stod(it->second);
}

int kv_int(const KeyValueMap& kv, const std::string& key, int fallback) {
    auto it = kv.find(key);
    return it == kv.end() ? fallback : std::stoi(it->second);
}

bool kv_bool(const KeyValueMap& kv, const std::string& key, bool fallback) {
    auto it = kv.find(key);
    if (it == kv.end()) return fallback;
    if (it->second == "true" || it->second == "1") return true;
    if (it->second == "false" || it->second == "0") return false;
    throw Error("config: boolean key '" + key + "' must be true/false");
}

std::string kv_str(const KeyValueMap& kv, const std::string& key,
                   const std::string& fallback) {
    auto it = kv.find(key);
    return it == kv.end() ? fallback : it->second;
}

KeyValueMap load_config(const std::string& path) {
    return path.empty() ? KeyValueMap{} : read_key_values(path);
}

ModelConfig model_config_from(const KeyValueMap& kv) {
    ModelConfig cfg;
    cfg.sdf.depth = kv_int(kv, "sdf_depth", 4);
    cfg.sdf.width = kv_int(kv, "sdf_width", 48);
    cfg.sdf.skip_layer = kv_int(kv, "sdf_skip", 2);
    cfg.sdf.feature_dim = kv_int(kv, "sdf_feature_dim", 16);
    cfg.sdf.num_freqs = kv_int(kv, "sdf_freqs", 4);
    cfg.appearance.feature_dim = cfg.sdf.feature_dim;
    cfg.appearance.material_width = kv_int(kv, "material_width", 24);
    cfg.appearance.material_hidden = kv_int(kv, "material_hidden", 2);
    cfg.appearance.diffuse_width = kv_int(kv, "diffuse_width", 16);
    cfg.appearance.diffuse_hidden = kv_int(kv, "diffuse_hidden", 1);
    cfg.appearance.specular_width = kv_int(kv, "specular_width", 24);
    cfg.appearance.specular_hidden = kv_int(kv, "specular_hidden", 2);
    cfg.appearance.dir_freqs = kv_int(kv, "dir_freqs", 2);
    cfg.background.width = kv_int(kv, "background_width", 16);
    cfg.background.depth = kv_int(kv, "background_depth", 2);
    cfg.background.num_freqs = kv_int(kv, "background_freqs", 3);
    cfg.tau_init = kv_num(kv, "tau_init", 20.0);
    cfg.ground = kv_bool(kv, "ground", true);
    return cfg;
}

TrainConfig train_config_from(const KeyValueMap& kv) {
    TrainConfig cfg;
    cfg.iters = kv_int(kv, "iters", cfg.iters);
    cfg.rays_per_batch = kv_int(kv, "rays_per_batch", cfg.rays_per_batch);
    cfg.sampling.n_coarse = kv_int(kv, "n_coarse", cfg.sampling.n_coarse);
    cfg.sampling.n_fine = kv_int(kv, "n_fine", cfg.sampling.n_fine);
    cfg.weights.symmetricity = kv_num(kv, "symmetricity", cfg.weights.symmetricity);
    cfg.weights.diffuse = kv_num(kv, "diffuse_weight", cfg.weights.diffuse);
    cfg.weights.lighting = kv_num(kv, "lighting_weight", cfg.weights.lighting);
    cfg.weights.eikonal = kv_num(kv, "eikonal_weight", cfg.weights.eikonal);
    cfg.schedule.base_lr = kv_num(kv, "base_lr", cfg.schedule.base_lr);
    cfg.schedule.warmup_iters = kv_int(kv, "warmup_iters", cfg.schedule.warmup_iters);
    cfg.schedule.final_fraction =
        kv_num(kv, "final_fraction", cfg.schedule.final_fraction);
    cfg.seed = std::uint64_t(kv_num(kv, "seed", 0.0));
    cfg.checkpoint_every = kv_int(kv, "checkpoint_every", cfg.checkpoint_every);
    cfg.validate_every = kv_int(kv, "validate_every", cfg.validate_every);
    cfg.log_every = kv_int(kv, "log_every", cfg.log_every);
    return cfg;
}

// Symmetry initialization record written by `init-symmetry`.
struct InitRecord {
    SymmetrySet symmetries;
    Scalar ground_height = -0.34;
    Vec3 semi_axes = Vec3(0.5, 0.7, 0.4);
};

InitRecord read_init_record(const std::string& path) {
    KeyValueMap kv = read_key_values(path);
    InitRecord rec;
    int n = kv_int(kv, "symmetry_count", 0);
    for (int i = 0; i < n; ++i)
        rec.symmetries.specs.push_back(
            parse_symmetry(kv.at("symmetry" + std::to_string(i))));
    rec.ground_height = kv_num(kv, "ground_height", rec.ground_height);
    rec.semi_axes = Vec3(kv_num(kv, "semi_axis_x", rec.semi_axes.x()),
                         kv_num(kv, "semi_axis_y", rec.semi_axes.y()),
                         kv_num(kv, "semi_axis_z", rec.semi_axes.z()));
    return rec;
}

void write_init_record(const std::string& path, const InitRecord& rec) {
    KeyValueMap kv;
    kv["symmetry_count"] = std::to_string(rec.symmetries.specs.size());
    for (std::size_t i = 0; i < rec.symmetries.specs.size(); ++i)
        kv["symmetry" + std::to_string(i)] = format_symmetry(rec.symmetries.specs[i]);
    char buf[256];
    std::snprintf(buf, sizeof buf, "%.17g", rec.ground_height);
    kv["ground_height"] = buf;
    std::snprintf(buf, sizeof buf, "%.17g", rec.semi_axes.x());
    kv["semi_axis_x"] = buf;
    std::snprintf(buf, sizeof buf, "%.17g", rec.semi_axes.y());
    kv["semi_axis_y"] = buf;
    std::snprintf(buf, sizeof buf, "%.17g", rec.semi_axes.z());
    kv["semi_axis_z"] = buf;
    write_key_values(path, kv);
}

InitRecord init_record_for(const KeyValueMap& kv) {
    std::string path = kv_str(kv, "init_file", "");
    if (!path.empty()) return read_init_record(path);
    InitRecord rec;  // default: the proxy scene's front-back mirror plane
    rec.symmetries.specs.push_back(SymmetrySpec::planar_reflection(Vec3::UnitY(), 0.0));
    return rec;
}

struct CommonArgs {
    std::string config;
    std::string dataset;
    std::string checkpoint;
    std::string out;
    std::uint64_t seed = 0;
    bool seed_set = false;
    std::string split = "structured";
    Scalar sector_degrees = 130.0;
    bool sector_set = false;
    Scalar symmetricity = 0.1;
    bool symmetricity_set = false;
    std::vector<std::string> disable_loss;
};

void add_common(CLI::App* cmd, CommonArgs& args) {
    cmd->add_option("--config", args.config, "key-value configuration file");
    cmd->add_option("--dataset", args.dataset, "dataset directory");
    cmd->add_option("--checkpoint", args.checkpoint, "checkpoint file");
    cmd->add_option("--seed", args.seed, "random seed")
        ->each([&](const std::string&) { args.seed_set = true; });
    cmd->add_option("--split", args.split, "split protocol")
        ->check(CLI::IsMember({"random", "structured"}));
    cmd->add_option("--sector-degrees", args.sector_degrees, "withheld sector width")
        ->each([&](const std::string&) { args.sector_set = true; });
    cmd->add_option("--disable-loss", args.disable_loss,
                    "loss term to disable (repeatable)")
        ->check(CLI::IsMember({"colour01", "colour10", "colour11", "diffuse", "lighting"}));
    cmd->add_option("--symmetricity", args.symmetricity, "transformed-path weight")
        ->each([&](const std::string&) { args.symmetricity_set = true; });
    cmd->add_option("--out", args.out, "output path");
}

AblationSwitches ablation_from(const std::vector<std::string>& disabled) {
    AblationSwitches sw;
    for (const std::string& term : disabled) {
        if (term == "colour01") sw.colour01 = false;
        else if (term == "colour10") sw.colour10 = false;
        else if (term == "colour11") sw.colour11 = false;
        else if (term == "diffuse") sw.diffuse = false;
        else if (term == "lighting") sw.lighting = false;
        else throw Error("unknown loss term: " + term);
    }
    return sw;
}

// ---------------------------------------------------------------------------
// Subcommand bodies.

int run_generate_scene(const CommonArgs& args) {
    if (args.out.empty()) throw Error("generate-scene: --out is required");
    KeyValueMap kv = load_config(args.config);
    SceneOptions options;
    options.bump = kv_bool(kv, "bump", false);
    options.decal = kv_bool(kv, "decal", false);
    options.symmetric_lighting = kv_bool(kv, "symmetric_lighting", true);
    options.ground = kv_bool(kv, "scene_ground", true);
    SyntheticScene scene(options);

    int frames = kv_int(kv, "frames", 25);
    int image_size = kv_int(kv, "image_size", 64);
    // Long focal + low elevation keep the object dominant in the frame.
    Scalar focal = kv_num(kv, "focal", Scalar(image_size) * 2.1875);
    Scalar radius = kv_num(kv, "radius", 2.4);
    Scalar elevation = kv_num(kv, "elevation", 0.4);
    Scalar jitter = kv_num(kv, "jitter_degrees", 0.0);
    int n_test = kv_int(kv, "test_frames", 8);
    int cloud_points = kv_int(kv, "cloud_points", 2000);
    std::uint64_t seed = args.seed_set ? args.seed : std::uint64_t(kv_num(kv, "seed", 1.0));

    Rng rng(seed);
    Dataset ds;
    ds.cameras = generate_orbit(frames, radius, elevation, jitter, rng, image_size, focal);
    for (const Camera& cam : ds.cameras) {
        OracleRender r = oracle_render(scene, cam);
        ds.rgb.push_back(r.rgb);
        ds.depth.push_back(r.depth);
        ds.mask.push_back(r.mask);
    }
    Split split;
    split.kind = args.split == "random" ? Split::Kind::Random : Split::Kind::Structured;
    split.sector_width_deg =
        args.sector_set ? args.sector_degrees : kv_num(kv, "sector_degrees", 130.0);
    ds.split = make_split(ds.cameras, split, n_test, rng);
    ds.cloud.points = sample_surface(scene, cloud_points, rng);
    write_dataset(args.out, ds);
    std::cout << "wrote " << frames << " frames (" << ds.split.train.size() << " train, "
              << ds.split.test.size() << " test) to " << args.out << "\n";
    return 0;
}

int run_init_symmetry(const CommonArgs& args) {
    if (args.dataset.empty()) throw Error("init-symmetry: --dataset is required");
    if (args.out.empty()) throw Error("init-symmetry: --out is required");
    Dataset ds = read_dataset(args.dataset);
    if (ds.cloud.points.empty()) throw Error("init-symmetry: dataset has no point cloud");
    Rng rng(args.seed_set ? args.seed : 1);
    PointCloud filtered = filter_cloud(ds.cloud);
    CanonicalFrame frame = canonical_frame(filtered, ds.cameras, rng);

    InitRecord rec;
    rec.symmetries.specs.push_back(
        SymmetrySpec::planar_reflection(frame.plane_normal, frame.plane_offset));
    rec.ground_height = frame.ground_height;
    rec.semi_axes = frame.semi_axes();
    write_init_record(args.out, rec);
    std::cout << "plane normal (" << frame.plane_normal.transpose() << "), offset "
              << frame.plane_offset << ", ground " << frame.ground_height << "\n";
    return 0;
}

Model build_model(const KeyValueMap& kv, const InitRecord& rec) {
    GroundPlane ground;
    ground.height = rec.ground_height;
    return Model(model_config_from(kv), rec.symmetries, ground);
}

int run_train(const CommonArgs& args) {
    if (args.dataset.empty()) throw Error("train: --dataset is required");
    if (args.out.empty()) throw Error("train: --out is required");
    KeyValueMap kv = load_config(args.config);
    Dataset ds = read_dataset(args.dataset);
    InitRecord rec = init_record_for(kv);

    TrainConfig cfg = train_config_from(kv);
    if (args.seed_set) cfg.seed = args.seed;
    if (args.symmetricity_set) cfg.weights.symmetricity = args.symmetricity;
    cfg.ablation = ablation_from(args.disable_loss);

    Model model = build_model(kv, rec);
    Rng init_rng(cfg.seed + 0x5deece66dull);
    model.init(init_rng, EllipsoidInit{rec.semi_axes});
    if (!args.checkpoint.empty()) restore(model, read_checkpoint(args.checkpoint));

    TrainResult result = train(model, ds, cfg, args.out);
    if (result.aborted) {
        std::cerr << "error: non-finite loss at iteration " << result.final_iter
                  << "; kept the last good checkpoint\n";
        return 1;
    }
    std::cout << "trained " << result.final_iter << " iterations; final loss "
              << (result.log.empty() ? 0.0 : result.log.back().total) << "\n";
    return 0;
}

Model load_model(const CommonArgs& args, const KeyValueMap& kv) {
    if (args.checkpoint.empty()) throw Error("--checkpoint is required");
    Checkpoint ck = read_checkpoint(args.checkpoint);
    InitRecord rec = init_record_for(kv);
    Model model = build_model(kv, rec);
    restore(model, ck);
    return model;
}

int run_render(const CommonArgs& args) {
    if (args.dataset.empty()) throw Error("render: --dataset is required");
    if (args.out.empty()) throw Error("render: --out is required");
    KeyValueMap kv = load_config(args.config);
    Dataset ds = read_dataset(args.dataset);
    Model model = load_model(args, kv);
    SamplingConfig sampling{kv_int(kv, "n_coarse", 32), kv_int(kv, "n_fine", 32)};
    std::filesystem::create_directories(args.out);
    std::vector<int> ids = ds.split.test.empty() ? ds.split.train : ds.split.test;
    for (int id : ids) {
        Rng rng((args.seed_set ? args.seed : 0) ^ std::uint64_t(id));
        Model::ImageRender render = model.render_image(
            model.store().values(), ds.cameras[std::size_t(id)], rng, sampling);
        char name[64];
        std::snprintf(name, sizeof name, "/frame%06d.png", id);
        write_png(args.out + name, render.rgb, /*gamma=*/true);
        std::snprintf(name, sizeof name, "/frame%06d_depth.pfm", id);
        write_pfm(args.out + name, render.depth);
        std::snprintf(name, sizeof name, "/frame%06d_mask.png", id);
        write_png(args.out + name, render.mask, /*gamma=*/false);
    }
    std::cout << "rendered " << ids.size() << " frames to " << args.out << "\n";
    return 0;
}

int run_extract_mesh(const CommonArgs& args) {
    if (args.out.empty()) throw Error("extract-mesh: --out is required");
    KeyValueMap kv = load_config(args.config);
    Model model = load_model(args, kv);
    int resolution = kv_int(kv, "mesh_resolution", 128);
    const VecX& params = model.store().values();
    TriMesh mesh = extract_mesh(
        [&](const Vec3& x) { return model.object_distance(params, x); }, resolution,
        Vec3(-1.0, -1.0, -1.0), Vec3(1.0, 1.0, 1.0));
    write_obj(args.out, mesh);
    std::cout << "wrote " << mesh.vertices.size() << " vertices / " << mesh.faces.size()
              << " faces to " << args.out << "\n";
    return 0;
}

int run_eval(const CommonArgs& args) {
    if (args.dataset.empty()) throw Error("eval: --dataset is required");
    KeyValueMap kv = load_config(args.config);
    Dataset ds = read_dataset(args.dataset);
    MetricsReport report;
    if (args.checkpoint.empty()) {
        // Oracle-vs-oracle self check: score the stored frames against themselves.
        std::vector<FrameMetrics> frames;
        for (int id : ds.split.test) {
            FrameMetrics f;
            f.frame = id;
            f.mse = mse(ds.rgb[std::size_t(id)], ds.rgb[std::size_t(id)]);
            f.psnr = psnr(ds.rgb[std::size_t(id)], ds.rgb[std::size_t(id)]);
            f.depth_mae = depth_mae(ds.depth[std::size_t(id)], ds.depth[std::size_t(id)],
                                    ds.mask[std::size_t(id)]);
            f.mask_iou = mask_iou(ds.mask[std::size_t(id)], ds.mask[std::size_t(id)]);
            frames.push_back(f);
        }
        report = aggregate_metrics(frames);
    } else {
        Model model = load_model(args, kv);
        SamplingConfig sampling{kv_int(kv, "n_coarse", 32), kv_int(kv, "n_fine", 32)};
        report = evaluate_model(model, ds, sampling, args.seed_set ? args.seed : 0);
    }
    std::cout << report.table();
    if (!args.out.empty()) {
        std::filesystem::create_directories(args.out);
        std::ofstream csv(args.out + "/metrics.csv");
        csv << report.csv();
    }
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"symmetry-aware neural surface reconstruction"};
    app.require_subcommand(1);

    std::map<std::string, CommonArgs> args;
    std::map<std::string, std::function<int(const CommonArgs&)>> handlers = {
        {"generate-scene", run_generate_scene}, {"init-symmetry", run_init_symmetry},
        {"train", run_train},                   {"render", run_render},
        {"extract-mesh", run_extract_mesh},     {"eval", run_eval},
        {"ablate", run_train},  // train with --disable-loss / --symmetricity switches
    };
    for (auto& [name, handler] : handlers) {
        CLI::App* cmd = app.add_subcommand(
            name, name == "ablate" ? "train an ablation variant" : "");
        add_common(cmd, args[name]);
    }

    CLI11_PARSE(app, argc, argv);

    try {
        for (auto& [name, handler] : handlers)
            if (app.got_subcommand(name)) return handler(args[name]);
        throw Error("no subcommand selected");
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
}

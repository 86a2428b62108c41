#include "symsurf/ioformats.hpp"

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <sstream>

namespace symsurf {

namespace fs = std::filesystem;

namespace {

std::string slurp(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error("io: cannot open " + path);
    std::ostringstream buf;
    buf << in.rdbuf();
    return buf.str();
}

std::ofstream open_text(const std::string& path) {
    std::ofstream out(path);
    if (!out) throw Error("io: cannot open " + path);
    out << std::setprecision(17);
    return out;
}

std::string frame_name(int id) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "frame%06d", id);
    return buf;
}

}  // namespace

// ---------------------------------------------------------------------------
// Key-value config

KeyValueMap parse_key_values(const std::string& text) {
    KeyValueMap kv;
    std::istringstream in(text);
    std::string line;
    while (std::getline(in, line)) {
        std::size_t hash = line.find('#');
        if (hash != std::string::npos) line.erase(hash);
        std::istringstream fields(line);
        std::string key;
        if (!(fields >> key)) continue;
        std::string value, word;
        while (fields >> word) {
            if (!value.empty()) value += ' ';
            value += word;
        }
        kv[key] = value;
    }
    return kv;
}

KeyValueMap read_key_values(const std::string& path) { return parse_key_values(slurp(path)); }

void write_key_values(const std::string& path, const KeyValueMap& kv) {
    std::ofstream out = open_text(path);
    for (const auto& [key, value] : kv) out << key << ' ' << value << '\n';
    if (!out) throw Error("io: write failed for " + path);
}

// ---------------------------------------------------------------------------
// Cameras

void write_cameras(const std::string& path, const std::vector<Camera>& cameras) {
    std::ofstream out = open_text(path);
    if (cameras.empty()) throw Error("io: no cameras to write");
    out << "size " << cameras[0].width << ' ' << cameras[0].height << '\n';
    for (std::size_t i = 0; i < cameras.size(); ++i) {
        const Camera& cam = cameras[i];
        if (cam.width != cameras[0].width || cam.height != cameras[0].height)
            throw Error("io: cameras must share one image size");
        out << i;
        for (int r = 0; r < 3; ++r)
            for (int c = 0; c < 3; ++c) out << ' ' << cam.intrinsics(r, c);
        for (int r = 0; r < 4; ++r)
            for (int c = 0; c < 4; ++c) out << ' ' << cam.world_to_camera(r, c);
        out << '\n';
    }
    if (!out) throw Error("io: write failed for " + path);
}

std::vector<Camera> read_cameras(const std::string& path) {
    std::istringstream in(slurp(path));
    std::string tag;
    int width = 0, height = 0;
    if (!(in >> tag >> width >> height) || tag != "size" || width <= 0 || height <= 0)
        throw Error("io: malformed camera header in " + path);
    std::vector<Camera> cameras;
    long id = 0;
    while (in >> id) {
        if (id != long(cameras.size())) throw Error("io: non-sequential camera ids in " + path);
        Camera cam;
        cam.width = width;
        cam.height = height;
        for (int r = 0; r < 3; ++r)
            for (int c = 0; c < 3; ++c)
                if (!(in >> cam.intrinsics(r, c))) throw Error("io: truncated " + path);
        for (int r = 0; r < 4; ++r)
            for (int c = 0; c < 4; ++c)
                if (!(in >> cam.world_to_camera(r, c))) throw Error("io: truncated " + path);
        cam.validate();
        cameras.push_back(cam);
    }
    if (cameras.empty()) throw Error("io: no camera records in " + path);
    return cameras;
}

// ---------------------------------------------------------------------------
// Splits

void write_split(const std::string& path, const SplitResult& split) {
    std::ofstream out = open_text(path);
    out << "train";
    for (int id : split.train) out << ' ' << id;
    out << "\ntest";
    for (int id : split.test) out << ' ' << id;
    out << '\n';
    if (!out) throw Error("io: write failed for " + path);
}

SplitResult read_split(const std::string& path) {
    std::istringstream in(slurp(path));
    SplitResult split;
    std::string line;
    bool saw_train = false, saw_test = false;
    while (std::getline(in, line)) {
        std::istringstream fields(line);
        std::string tag;
        if (!(fields >> tag)) continue;
        std::vector<int>* target = nullptr;
        if (tag == "train") {
            target = &split.train;
            saw_train = true;
        } else if (tag == "test") {
            target = &split.test;
            saw_test = true;
        } else {
            throw Error("io: unknown split tag '" + tag + "' in " + path);
        }
        int id = 0;
        while (fields >> id) target->push_back(id);
    }
    if (!saw_train || !saw_test) throw Error("io: split file needs train and test lines");
    return split;
}

// ---------------------------------------------------------------------------
// Point clouds (ASCII PLY)

void write_ply(const std::string& path, const PointCloud& cloud) {
    std::ofstream out = open_text(path);
    out << "ply\nformat ascii 1.0\nelement vertex " << cloud.points.size()
        << "\nproperty double x\nproperty double y\nproperty double z\nend_header\n";
    for (const Vec3& p : cloud.points) out << p.x() << ' ' << p.y() << ' ' << p.z() << '\n';
    if (!out) throw Error("io: write failed for " + path);
}

PointCloud read_ply(const std::string& path) {
    std::istringstream in(slurp(path));
    std::string line;
    long count = -1;
    bool header_done = false;
    int coord_props = 0;
    if (!std::getline(in, line) || line != "ply") throw Error("io: not a ply file: " + path);
    while (std::getline(in, line)) {
        std::istringstream fields(line);
        std::string tag;
        fields >> tag;
        if (tag == "element") {
            std::string what;
            fields >> what >> count;
            if (what != "vertex") throw Error("io: unsupported ply element in " + path);
        } else if (tag == "property") {
            ++coord_props;
        } else if (tag == "end_header") {
            header_done = true;
            break;
        } else if (tag != "format" && tag != "comment") {
            throw Error("io: unsupported ply line '" + line + "' in " + path);
        }
    }
    if (!header_done || count < 0 || coord_props != 3)
        throw Error("io: malformed ply header in " + path);
    PointCloud cloud;
    cloud.points.reserve(std::size_t(count));
    for (long i = 0; i < count; ++i) {
        Vec3 p;
        if (!(in >> p.x() >> p.y() >> p.z())) throw Error("io: truncated ply " + path);
        cloud.points.push_back(p);
    }
    return cloud;
}

// ---------------------------------------------------------------------------
// Dataset directories

void write_dataset(const std::string& dir, const Dataset& dataset) {
    if (dataset.rgb.size() != dataset.cameras.size() ||
        dataset.depth.size() != dataset.cameras.size() ||
        dataset.mask.size() != dataset.cameras.size())
        throw Error("io: dataset image counts must match the camera count");
    fs::create_directories(fs::path(dir) / "rgb");
    fs::create_directories(fs::path(dir) / "depth");
    fs::create_directories(fs::path(dir) / "mask");
    write_cameras((fs::path(dir) / "cameras.txt").string(), dataset.cameras);
    write_split((fs::path(dir) / "split.txt").string(), dataset.split);
    if (!dataset.cloud.points.empty())
        write_ply((fs::path(dir) / "cloud.ply").string(), dataset.cloud);
    for (std::size_t i = 0; i < dataset.cameras.size(); ++i) {
        std::string name = frame_name(int(i));
        write_png((fs::path(dir) / "rgb" / (name + ".png")).string(), dataset.rgb[i], true);
        write_pfm((fs::path(dir) / "depth" / (name + ".pfm")).string(), dataset.depth[i]);
        write_png((fs::path(dir) / "mask" / (name + ".png")).string(), dataset.mask[i], false);
    }
}

Dataset read_dataset(const std::string& dir) {
    Dataset dataset;
    dataset.cameras = read_cameras((fs::path(dir) / "cameras.txt").string());
    dataset.split = read_split((fs::path(dir) / "split.txt").string());
    std::string cloud_path = (fs::path(dir) / "cloud.ply").string();
    if (fs::exists(cloud_path)) dataset.cloud = read_ply(cloud_path);
    for (std::size_t i = 0; i < dataset.cameras.size(); ++i) {
        std::string name = frame_name(int(i));
        dataset.rgb.push_back(read_png((fs::path(dir) / "rgb" / (name + ".png")).string(), true));
        dataset.depth.push_back(read_pfm((fs::path(dir) / "depth" / (name + ".pfm")).string()));
        dataset.mask.push_back(
            read_png((fs::path(dir) / "mask" / (name + ".png")).string(), false));
        const Camera& cam = dataset.cameras[i];
        if (dataset.rgb.back().width != cam.width || dataset.rgb.back().height != cam.height)
            throw Error("io: image size mismatch for " + name);
    }
    return dataset;
}

// ---------------------------------------------------------------------------
// Checkpoints

namespace {

constexpr std::uint32_t kCheckpointMagic = 0x53594d53;  // "SMYS" tag bytes
constexpr std::uint32_t kCheckpointVersion = 1;

void put_u32(std::ostream& out, std::uint32_t v) {
    unsigned char b[4] = {static_cast<unsigned char>(v), static_cast<unsigned char>(v >> 8),
                          static_cast<unsigned char>(v >> 16),
                          static_cast<unsigned char>(v >> 24)};
    out.write(reinterpret_cast<const char*>(b), 4);
}

std::uint32_t get_u32(std::istream& in) {
    unsigned char b[4];
    in.read(reinterpret_cast<char*>(b), 4);
    return std::uint32_t(b[0]) | std::uint32_t(b[1]) << 8 | std::uint32_t(b[2]) << 16 |
           std::uint32_t(b[3]) << 24;
}

void put_u64(std::ostream& out, std::uint64_t v) {
    put_u32(out, std::uint32_t(v));
    put_u32(out, std::uint32_t(v >> 32));
}

std::uint64_t get_u64(std::istream& in) {
    std::uint64_t lo = get_u32(in);
    std::uint64_t hi = get_u32(in);
    return lo | hi << 32;
}

void put_string(std::ostream& out, const std::string& s) {
    put_u64(out, s.size());
    out.write(s.data(), std::streamsize(s.size()));
}

std::string get_string(std::istream& in) {
    std::uint64_t n = get_u64(in);
    if (n > (1u << 24)) throw Error("io: implausible string length in checkpoint");
    std::string s(n, '\0');
    in.read(s.data(), std::streamsize(n));
    return s;
}

}  // namespace

void write_checkpoint(const std::string& path, const Checkpoint& checkpoint) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error("io: cannot open " + path);
    put_u32(out, kCheckpointMagic);
    put_u32(out, kCheckpointVersion);

    const auto& slices = checkpoint.store.slices();
    put_u64(out, slices.size());
    for (const ParamSlice& s : slices) {
        put_string(out, s.name);
        put_string(out, s.group);
        put_u64(out, std::uint64_t(s.size));
    }
    const VecX& values = checkpoint.store.values();
    put_u64(out, std::uint64_t(values.size()));
    static_assert(sizeof(Scalar) == 8, "checkpoints store 64-bit doubles");
    out.write(reinterpret_cast<const char*>(values.data()),
              std::streamsize(values.size()) * 8);

    put_u64(out, checkpoint.extra.size());
    for (const auto& [key, value] : checkpoint.extra) {
        put_string(out, key);
        put_string(out, value);
    }
    if (!out) throw Error("io: checkpoint write failed for " + path);
}

Checkpoint read_checkpoint(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error("io: cannot open " + path);
    if (get_u32(in) != kCheckpointMagic || !in) throw Error("io: not a checkpoint: " + path);
    std::uint32_t version = get_u32(in);
    if (version != kCheckpointVersion)
        throw Error("io: unsupported checkpoint version in " + path);

    Checkpoint checkpoint;
    std::uint64_t n_slices = get_u64(in);
    for (std::uint64_t i = 0; i < n_slices && in; ++i) {
        std::string name = get_string(in);
        std::string group = get_string(in);
        std::uint64_t size = get_u64(in);
        checkpoint.store.add(name, group, Eigen::Index(size));
    }
    std::uint64_t n_values = get_u64(in);
    if (Eigen::Index(n_values) != checkpoint.store.size())
        throw Error("io: checkpoint value count disagrees with the slice table");
    in.read(reinterpret_cast<char*>(checkpoint.store.values().data()),
            std::streamsize(n_values) * 8);

    std::uint64_t n_extra = get_u64(in);
    for (std::uint64_t i = 0; i < n_extra && in; ++i) {
        std::string key = get_string(in);
        checkpoint.extra[key] = get_string(in);
    }
    if (!in) throw Error("io: truncated checkpoint " + path);
    return checkpoint;
}

}  // namespace symsurf

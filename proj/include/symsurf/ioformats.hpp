#pragma once

#include <map>
#include <string>
#include <vector>

#include "symsurf/camera.hpp"
#include "symsurf/common.hpp"
#include "symsurf/image.hpp"
#include "symsurf/init.hpp"
#include "symsurf/nn.hpp"
#include "symsurf/scene.hpp"

namespace symsurf {

// ---------------------------------------------------------------------------
// Plain-text key-value config files: one `key value` pair per line, '#'
// starts a comment. Unknown keys are preserved.

using KeyValueMap = std::map<std::string, std::string>;

KeyValueMap parse_key_values(const std::string& text);
KeyValueMap read_key_values(const std::string& path);
void write_key_values(const std::string& path, const KeyValueMap& kv);

// ---------------------------------------------------------------------------
// Dataset directory layout:
//   cameras.txt   header `size <w> <h>`, then per frame: id, 9 intrinsics,
//                 16 extrinsics (both row-major)
//   rgb/frame%06d.png, depth/frame%06d.pfm, mask/frame%06d.png
//   split.txt     `train <ids...>` / `test <ids...>` lines
//   cloud.ply     optional ASCII point cloud

void write_cameras(const std::string& path, const std::vector<Camera>& cameras);
std::vector<Camera> read_cameras(const std::string& path);

void write_split(const std::string& path, const SplitResult& split);
SplitResult read_split(const std::string& path);

void write_ply(const std::string& path, const PointCloud& cloud);
PointCloud read_ply(const std::string& path);

struct Dataset {
    std::vector<Camera> cameras;
    std::vector<Image> rgb;    // linear colour
    std::vector<Image> depth;  // 0 where the mask is empty
    std::vector<Image> mask;
    SplitResult split;
    PointCloud cloud;  // may be empty
};

void write_dataset(const std::string& dir, const Dataset& dataset);
Dataset read_dataset(const std::string& dir);

// ---------------------------------------------------------------------------
// Versioned binary checkpoint: magic, version, named parameter-slice table,
// little-endian doubles, plus a string map for ancillary state (symmetry
// records, iteration counter, configuration echo).

struct Checkpoint {
    ParameterStore store;
    std::map<std::string, std::string> extra;
};

void write_checkpoint(const std::string& path, const Checkpoint& checkpoint);
Checkpoint read_checkpoint(const std::string& path);

}  // namespace symsurf

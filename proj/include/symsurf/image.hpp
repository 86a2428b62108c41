#pragma once

#include <string>
#include <vector>

#include "symsurf/common.hpp"

namespace symsurf {

// Row-major, top-left origin, channel-interleaved, values nominally [0,1]
// for colour/mask images; unbounded for depth maps.
struct Image {
    int width = 0;
    int height = 0;
    int channels = 1;
    std::vector<Scalar> data;

    Image() = default;
    Image(int w, int h, int c, Scalar fill = 0.0)
        : width(w), height(h), channels(c), data(std::size_t(w) * h * c, fill) {}

    Scalar& at(int x, int y, int c = 0) {
        return data[(std::size_t(y) * width + x) * channels + c];
    }
    Scalar at(int x, int y, int c = 0) const {
        return data[(std::size_t(y) * width + x) * channels + c];
    }
    std::size_t pixel_count() const { return std::size_t(width) * height; }
};

// 8-bit PNG. `gamma` applies the 1/2.2 encode on write and the 2.2 decode on
// read (used for colour renders; masks are stored linearly).
void write_png(const std::string& path, const Image& image, bool gamma);
Image read_png(const std::string& path, bool gamma);

// Grayscale PFM, little-endian 32-bit float, rows stored bottom-to-top.
void write_pfm(const std::string& path, const Image& image);
Image read_pfm(const std::string& path);

}  // namespace symsurf

#include "symsurf/image.hpp"

#include <png.h>

#include <cmath>
#include <cstdio>
#include <fstream>
#include <memory>

namespace symsurf {

namespace {

struct FileCloser {
    void operator()(std::FILE* f) const {
        if (f) std::fclose(f);
    }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

unsigned char encode_byte(Scalar v, bool gamma) {
    v = clamp01(v);
    if (gamma) v = std::pow(v, 1.0 / 2.2);
    return static_cast<unsigned char>(std::lround(v * 255.0));
}

Scalar decode_byte(unsigned char b, bool gamma) {
    Scalar v = b / 255.0;
    return gamma ? std::pow(v, 2.2) : v;
}

}  // namespace

void write_png(const std::string& path, const Image& image, bool gamma) {
    if (image.channels != 1 && image.channels != 3)
        throw Error("image: png supports 1 or 3 channels");
    FilePtr file(std::fopen(path.c_str(), "wb"));
    if (!file) throw Error("image: cannot open " + path);

    png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    png_infop info = png ? png_create_info_struct(png) : nullptr;
    if (!png || !info) {
        png_destroy_write_struct(&png, &info);
        throw Error("image: libpng allocation failed");
    }
    if (setjmp(png_jmpbuf(png))) {
        png_destroy_write_struct(&png, &info);
        throw Error("image: png write failed for " + path);
    }
    png_init_io(png, file.get());
    png_set_IHDR(png, info, png_uint_32(image.width), png_uint_32(image.height), 8,
                 image.channels == 1 ? PNG_COLOR_TYPE_GRAY : PNG_COLOR_TYPE_RGB,
                 PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
    png_write_info(png, info);

    std::vector<unsigned char> row(std::size_t(image.width) * image.channels);
    for (int y = 0; y < image.height; ++y) {
        for (int x = 0; x < image.width; ++x)
            for (int c = 0; c < image.channels; ++c)
                row[std::size_t(x) * image.channels + c] = encode_byte(image.at(x, y, c), gamma);
        png_write_row(png, row.data());
    }
    png_write_end(png, nullptr);
    png_destroy_write_struct(&png, &info);
}

Image read_png(const std::string& path, bool gamma) {
    FilePtr file(std::fopen(path.c_str(), "rb"));
    if (!file) throw Error("image: cannot open " + path);

    png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    png_infop info = png ? png_create_info_struct(png) : nullptr;
    if (!png || !info) {
        png_destroy_read_struct(&png, &info, nullptr);
        throw Error("image: libpng allocation failed");
    }
    if (setjmp(png_jmpbuf(png))) {
        png_destroy_read_struct(&png, &info, nullptr);
        throw Error("image: png read failed for " + path);
    }
    png_init_io(png, file.get());
    png_read_info(png, info);

    png_set_strip_16(png);
    png_set_strip_alpha(png);
    png_set_expand(png);
    if (png_get_color_type(png, info) == PNG_COLOR_TYPE_PALETTE) png_set_palette_to_rgb(png);
    png_read_update_info(png, info);

    const int width = int(png_get_image_width(png, info));
    const int height = int(png_get_image_height(png, info));
    const int channels = int(png_get_channels(png, info));
    if (channels != 1 && channels != 3) {
        png_destroy_read_struct(&png, &info, nullptr);
        throw Error("image: unsupported png channel count");
    }

    Image image(width, height, channels);
    std::vector<unsigned char> row(std::size_t(width) * channels);
    for (int y = 0; y < height; ++y) {
        png_read_row(png, row.data(), nullptr);
        for (int x = 0; x < width; ++x)
            for (int c = 0; c < channels; ++c)
                image.at(x, y, c) = decode_byte(row[std::size_t(x) * channels + c], gamma);
    }
    png_destroy_read_struct(&png, &info, nullptr);
    return image;
}

void write_pfm(const std::string& path, const Image& image) {
    if (image.channels != 1) throw Error("image: pfm writer is grayscale only");
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error("image: cannot open " + path);
    out << "Pf\n" << image.width << ' ' << image.height << "\n-1.0\n";
    for (int y = image.height - 1; y >= 0; --y) {  // bottom-to-top
        for (int x = 0; x < image.width; ++x) {
            float v = float(image.at(x, y));
            out.write(reinterpret_cast<const char*>(&v), sizeof v);
        }
    }
    if (!out) throw Error("image: pfm write failed for " + path);
}

Image read_pfm(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error("image: cannot open " + path);
    std::string magic;
    int width = 0, height = 0;
    double scale = 0.0;
    in >> magic >> width >> height >> scale;
    if (magic != "Pf" || width <= 0 || height <= 0 || scale >= 0.0)
        throw Error("image: unsupported pfm header in " + path);
    in.get();  // single whitespace after the header

    Image image(width, height, 1);
    for (int y = height - 1; y >= 0; --y) {
        for (int x = 0; x < width; ++x) {
            float v = 0.0f;
            in.read(reinterpret_cast<char*>(&v), sizeof v);
            image.at(x, y) = v;
        }
    }
    if (!in) throw Error("image: truncated pfm " + path);
    return image;
}

}  // namespace symsurf

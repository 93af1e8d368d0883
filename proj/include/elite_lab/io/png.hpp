#ifndef ELITE_LAB_IO_PNG_HPP
#define ELITE_LAB_IO_PNG_HPP

#include <png.h>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <memory>
#include <string>
#include <vector>

#include "elite_lab/errors.hpp"
#include "elite_lab/image.hpp"

// 8-bit PNG reading and writing through libpng. Output bytes depend only on
// the pixel values.
namespace elite::io {

namespace detail {

struct FileCloser {
    void operator()(std::FILE* f) const {
        if (f) std::fclose(f);
    }
};
using File = std::unique_ptr<std::FILE, FileCloser>;

inline void write_png_rows(const std::filesystem::path& path, std::size_t height, std::size_t width, int color_type,
                           const std::vector<std::uint8_t>& bytes) {
    const std::size_t channels = color_type == PNG_COLOR_TYPE_RGB ? 3 : 1;
    const auto tmp = std::filesystem::path(path.string() + ".tmp");
    {
        File f(std::fopen(tmp.string().c_str(), "wb"));
        if (!f) throw ConfigError("cannot write " + tmp.string());
        png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
        png_infop info = png ? png_create_info_struct(png) : nullptr;
        if (!png || !info) {
            png_destroy_write_struct(&png, &info);
            throw ConfigError("libpng initialisation failed");
        }
        if (setjmp(png_jmpbuf(png))) {
            png_destroy_write_struct(&png, &info);
            throw ConfigError("libpng failed writing " + path.string());
        }
        png_init_io(png, f.get());
        png_set_IHDR(png, info, static_cast<png_uint_32>(width), static_cast<png_uint_32>(height), 8, color_type,
                     PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
        png_write_info(png, info);
        for (std::size_t y = 0; y < height; ++y)
            png_write_row(png, const_cast<png_bytep>(bytes.data() + y * width * channels));
        png_write_end(png, nullptr);
        png_destroy_write_struct(&png, &info);
    }
    std::filesystem::rename(tmp, path);
}

inline std::uint8_t to_byte(float v) {
    return static_cast<std::uint8_t>(std::lround(std::clamp(v, 0.f, 1.f) * 255.f));
}

struct Decoded {
    std::size_t height = 0, width = 0, channels = 0;
    std::vector<std::uint8_t> bytes;
};

inline Decoded read_png_bytes(const std::filesystem::path& path) {
    File f(std::fopen(path.string().c_str(), "rb"));
    if (!f) throw ConfigError("cannot open " + path.string());
    png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    png_infop info = png ? png_create_info_struct(png) : nullptr;
    if (!png || !info) {
        png_destroy_read_struct(&png, &info, nullptr);
        throw ConfigError("libpng initialisation failed");
    }
    if (setjmp(png_jmpbuf(png))) {
        png_destroy_read_struct(&png, &info, nullptr);
        throw ConfigError("not a readable PNG: " + path.string());
    }
    png_init_io(png, f.get());
    png_read_info(png, info);
    png_set_strip_16(png);
    png_set_strip_alpha(png);
    png_set_packing(png);
    if (png_get_color_type(png, info) == PNG_COLOR_TYPE_PALETTE) png_set_palette_to_rgb(png);
    if (png_get_color_type(png, info) == PNG_COLOR_TYPE_GRAY && png_get_bit_depth(png, info) < 8)
        png_set_expand_gray_1_2_4_to_8(png);
    png_read_update_info(png, info);
    Decoded d;
    d.height = png_get_image_height(png, info);
    d.width = png_get_image_width(png, info);
    d.channels = png_get_channels(png, info);
    d.bytes.resize(d.height * d.width * d.channels);
    std::vector<png_bytep> rows(d.height);
    for (std::size_t y = 0; y < d.height; ++y) rows[y] = d.bytes.data() + y * d.width * d.channels;
    png_read_image(png, rows.data());
    png_destroy_read_struct(&png, &info, nullptr);
    return d;
}

}  // namespace detail

inline void write_png(const std::filesystem::path& path, const Image& img) {
    std::vector<std::uint8_t> bytes(img.pixels.size());
    std::transform(img.pixels.begin(), img.pixels.end(), bytes.begin(), detail::to_byte);
    detail::write_png_rows(path, img.height, img.width, PNG_COLOR_TYPE_RGB, bytes);
}

inline void write_mask_png(const std::filesystem::path& path, const Mask& m) {
    std::vector<std::uint8_t> bytes(m.bits.size());
    std::transform(m.bits.begin(), m.bits.end(), bytes.begin(), [](std::uint8_t b) { return b ? 255 : 0; });
    detail::write_png_rows(path, m.height, m.width, PNG_COLOR_TYPE_GRAY, bytes);
}

// Grayscale heatmap; values are stretched to the [min, max] range.
inline void write_heatmap_png(const std::filesystem::path& path, const std::vector<double>& values, std::size_t height,
                              std::size_t width) {
    if (values.size() != height * width) throw ShapeError("heatmap: value count mismatch");
    const auto [lo, hi] = std::minmax_element(values.begin(), values.end());
    const double range = *hi - *lo;
    std::vector<std::uint8_t> bytes(values.size());
    for (std::size_t i = 0; i < values.size(); ++i)
        bytes[i] = detail::to_byte(range > 0 ? static_cast<float>((values[i] - *lo) / range) : 0.f);
    detail::write_png_rows(path, height, width, PNG_COLOR_TYPE_GRAY, bytes);
}

inline Image read_png(const std::filesystem::path& path) {
    auto d = detail::read_png_bytes(path);
    Image img(d.height, d.width);
    for (std::size_t i = 0; i < d.height * d.width; ++i)
        for (std::size_t c = 0; c < 3; ++c)
            img.pixels[i * 3 + c] = d.bytes[i * d.channels + (d.channels >= 3 ? c : 0)] / 255.f;
    return img;
}

// Pixels at or above half intensity are foreground.
inline Mask read_mask_png(const std::filesystem::path& path) {
    auto d = detail::read_png_bytes(path);
    Mask m(d.height, d.width);
    for (std::size_t i = 0; i < d.height * d.width; ++i) m.bits[i] = d.bytes[i * d.channels] >= 128 ? 1 : 0;
    return m;
}

}  // namespace elite::io

#endif  // ELITE_LAB_IO_PNG_HPP

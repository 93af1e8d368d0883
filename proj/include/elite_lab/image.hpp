#ifndef ELITE_LAB_IMAGE_HPP
#define ELITE_LAB_IMAGE_HPP

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "elite_lab/diffcore/tensor.hpp"
#include "elite_lab/errors.hpp"

namespace elite {

// H×W×3 image, channel-interleaved, values in [0,1].
struct Image {
    std::size_t height = 0;
    std::size_t width = 0;
    std::vector<float> pixels;

    Image() = default;
    Image(std::size_t h, std::size_t w, float fill = 0.f) : height(h), width(w), pixels(h * w * 3, fill) {}

    float& at(std::size_t y, std::size_t x, std::size_t c) { return pixels[(y * width + x) * 3 + c]; }
    float at(std::size_t y, std::size_t x, std::size_t c) const { return pixels[(y * width + x) * 3 + c]; }

    bool operator==(const Image&) const = default;
};

// H×W binary mask.
struct Mask {
    std::size_t height = 0;
    std::size_t width = 0;
    std::vector<std::uint8_t> bits;

    Mask() = default;
    Mask(std::size_t h, std::size_t w, std::uint8_t fill = 0) : height(h), width(w), bits(h * w, fill) {}

    std::uint8_t& at(std::size_t y, std::size_t x) { return bits[y * width + x]; }
    std::uint8_t at(std::size_t y, std::size_t x) const { return bits[y * width + x]; }

    std::size_t count() const {
        return static_cast<std::size_t>(std::count(bits.begin(), bits.end(), std::uint8_t{1}));
    }

    bool operator==(const Mask&) const = default;
};

inline Image apply_mask(const Image& img, const Mask& m) {
    if (img.height != m.height || img.width != m.width) throw ShapeError("apply_mask: extent mismatch");
    Image out = img;
    for (std::size_t y = 0; y < img.height; ++y)
        for (std::size_t x = 0; x < img.width; ++x)
            if (!m.at(y, x))
                for (std::size_t c = 0; c < 3; ++c) out.at(y, x, c) = 0.f;
    return out;
}

inline float quantize8(float v) {
    return std::round(std::clamp(v, 0.f, 1.f) * 255.f) / 255.f;
}

// Non-overlapping patches flattened row by row: [(H/p)*(W/p), p*p*3].
template <class T>
diff::Tensor<T> patchify(const Image& img, std::size_t patch) {
    if (patch == 0 || img.height % patch || img.width % patch)
        throw ShapeError("patchify: image " + std::to_string(img.height) + "x" + std::to_string(img.width) +
                         " not divisible by patch " + std::to_string(patch));
    const std::size_t gh = img.height / patch, gw = img.width / patch, pd = patch * patch * 3;
    std::vector<T> d(gh * gw * pd);
    for (std::size_t gy = 0; gy < gh; ++gy)
        for (std::size_t gx = 0; gx < gw; ++gx)
            for (std::size_t y = 0; y < patch; ++y)
                for (std::size_t x = 0; x < patch; ++x)
                    for (std::size_t c = 0; c < 3; ++c)
                        d[(gy * gw + gx) * pd + (y * patch + x) * 3 + c] =
                            static_cast<T>(img.at(gy * patch + y, gx * patch + x, c));
    return diff::Tensor<T>({gh * gw, pd}, std::move(d));
}

template <class T>
Image unpatchify(const diff::Tensor<T>& t, std::size_t height, std::size_t width, std::size_t patch) {
    const std::size_t gw = width / patch, pd = patch * patch * 3;
    if (t.numel() != height * width * 3) throw ShapeError("unpatchify: element count mismatch");
    Image img(height, width);
    for (std::size_t gy = 0; gy < height / patch; ++gy)
        for (std::size_t gx = 0; gx < gw; ++gx)
            for (std::size_t y = 0; y < patch; ++y)
                for (std::size_t x = 0; x < patch; ++x)
                    for (std::size_t c = 0; c < 3; ++c)
                        img.at(gy * patch + y, gx * patch + x, c) =
                            static_cast<float>(t[(gy * gw + gx) * pd + (y * patch + x) * 3 + c]);
    return img;
}

}  // namespace elite

#endif  // ELITE_LAB_IMAGE_HPP

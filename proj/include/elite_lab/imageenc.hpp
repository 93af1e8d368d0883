#ifndef ELITE_LAB_IMAGEENC_HPP
#define ELITE_LAB_IMAGEENC_HPP

#include <algorithm>
#include <string>
#include <vector>

#include "elite_lab/diffcore/nn.hpp"
#include "elite_lab/image.hpp"

// Patch-token transformer whose intermediate block outputs are tapped to
// give hierarchical image features.
namespace elite::imageenc {

using diff::Tensor;

struct ImageEncoderConfig {
    std::size_t image_size = 64;
    std::size_t patch = 8;
    std::size_t dim = 64;
    std::size_t layers = 6;
    std::size_t mlp_hidden = 128;
    // 1-based block indices, deepest first.
    std::vector<std::size_t> taps = {6, 1, 2, 3, 4};

    std::size_t grid() const { return image_size / patch; }
    std::size_t tokens() const { return grid() * grid(); }
    std::size_t patch_dim() const { return patch * patch * 3; }
};

// Tap list of the reference 24-block encoder: deepest first, then
// every fourth block.
inline std::vector<std::size_t> default_taps(std::size_t layers) {
    std::vector<std::size_t> taps{layers};
    const std::size_t step = layers / 6;
    for (std::size_t i = 1; i <= 4 && step > 0; ++i) taps.push_back(i * step);
    return taps;
}

template <class T>
struct TapFeatures {
    std::vector<Tensor<T>> grids;   // [p*p, c] per tap, deepest first
    std::vector<Tensor<T>> pooled;  // [1, c] per tap
    std::vector<std::size_t> tap_layer_ids;

    std::size_t size() const { return grids.size(); }
};

// Arithmetic mean over token positions: [p*p, c] -> [1, c].
template <class T>
Tensor<T> pool_features(const Tensor<T>& grid) {
    if (!grid.defined() || grid.numel() == 0) throw ShapeError("pool_features: empty grid");
    if (grid.dim() != 2) throw ShapeError("pool_features: expected [tokens, channels]");
    return diff::mean_rows(grid);
}

inline void validate_taps(const std::vector<std::size_t>& taps, std::size_t layers) {
    if (taps.empty()) throw ConfigError("tap list is empty");
    for (auto t : taps)
        if (t < 1 || t > layers)
            throw ConfigError("tap layer " + std::to_string(t) + " outside 1.." + std::to_string(layers));
    if (*std::max_element(taps.begin(), taps.end()) != taps.front())
        throw ConfigError("tap list must start with the deepest layer");
}

template <class T>
struct ImageEncoder {
    ImageEncoderConfig config;
    diff::Linear<T> patch_embed;
    Tensor<T> pos_embed;  // [tokens, dim]
    std::vector<diff::TransformerBlock<T>> blocks;

    ImageEncoder() = default;
    ImageEncoder(const ImageEncoderConfig& cfg, diff::Rng& rng)
        : config(cfg),
          patch_embed(cfg.patch_dim(), cfg.dim, rng),
          pos_embed(diff::param_normal<T>({cfg.tokens(), cfg.dim}, rng, 0.5)) {
        if (cfg.image_size % cfg.patch) throw ConfigError("image size must be divisible by the patch size");
        validate_taps(cfg.taps, cfg.layers);
        for (std::size_t i = 0; i < cfg.layers; ++i) blocks.emplace_back(cfg.dim, cfg.mlp_hidden, rng);
    }

    // Runs blocks 1..max(taps) and returns the post-block tokens of each tap.
    TapFeatures<T> encode(const Image& image, const std::vector<std::size_t>& taps) const {
        validate_taps(taps, config.layers);
        if (image.height != config.image_size || image.width != config.image_size)
            throw ShapeError("encode_image: expected " + std::to_string(config.image_size) + "x" +
                             std::to_string(config.image_size) + " input");
        auto x = diff::add(patch_embed(patchify<T>(image, config.patch)), pos_embed);
        std::vector<Tensor<T>> per_layer(config.layers + 1);
        const std::size_t deepest = taps.front();
        for (std::size_t l = 1; l <= deepest; ++l) {
            x = blocks[l - 1](x);
            per_layer[l] = x;
        }
        TapFeatures<T> out;
        out.tap_layer_ids = taps;
        for (auto t : taps) {
            out.grids.push_back(per_layer[t]);
            out.pooled.push_back(pool_features(per_layer[t]));
        }
        return out;
    }

    TapFeatures<T> encode(const Image& image) const { return encode(image, config.taps); }

    // Pooled deepest-block embedding, the image side of the similarity metrics.
    Tensor<T> embed(const Image& image) const {
        return encode(image, {config.layers}).pooled.front();
    }

    void collect(diff::ParamList<T>& out, const std::string& prefix) const {
        patch_embed.collect(out, prefix + ".patch_embed");
        out.emplace_back(prefix + ".pos_embed", pos_embed);
        for (std::size_t i = 0; i < blocks.size(); ++i) blocks[i].collect(out, prefix + ".block" + std::to_string(i));
    }
};

}  // namespace elite::imageenc

#endif  // ELITE_LAB_IMAGEENC_HPP

#ifndef ELITE_LAB_LDM_AUTOENCODER_HPP
#define ELITE_LAB_LDM_AUTOENCODER_HPP

#include <algorithm>
#include <string>

#include "elite_lab/diffcore/nn.hpp"
#include "elite_lab/image.hpp"

namespace elite::ldm {

using diff::Tensor;

struct AutoencoderConfig {
    std::size_t image_size = 64;
    std::size_t factor = 4;  // spatial downsampling
    std::size_t latent_channels = 4;
    std::size_t hidden = 64;

    std::size_t latent_side() const { return image_size / factor; }
    std::size_t latent_tokens() const { return latent_side() * latent_side(); }
};

// Patch autoencoder E/D between images and a [side*side, channels] latent.
// Latents are multiplied by `latent_scale` so the diffusion model sees
// roughly unit variance.
template <class T>
struct Autoencoder {
    AutoencoderConfig config;
    diff::Linear<T> enc1, enc2;
    diff::Conv3x3<T> enc_out;
    diff::Conv3x3<T> dec_in;
    diff::Linear<T> dec1, dec_out;
    Tensor<T> latent_scale;  // [1]

    Autoencoder() = default;
    Autoencoder(const AutoencoderConfig& cfg, diff::Rng& rng)
        : config(cfg),
          enc1(cfg.factor * cfg.factor * 3, cfg.hidden, rng),
          enc2(cfg.hidden, cfg.hidden, rng),
          enc_out(cfg.hidden, cfg.latent_channels, rng),
          dec_in(cfg.latent_channels, cfg.hidden, rng),
          dec1(cfg.hidden, cfg.hidden, rng),
          dec_out(cfg.hidden, cfg.factor * cfg.factor * 3, rng),
          latent_scale(Tensor<T>::full({1}, T(1))) {}

    void check_extent(const Image& img) const {
        if (img.height % config.factor || img.width % config.factor)
            throw ShapeError("encode_latent: image extent not divisible by the downsampling factor");
        if (img.height != config.image_size || img.width != config.image_size)
            throw ShapeError("encode_latent: expected a " + std::to_string(config.image_size) + " pixel image");
    }

    // Unscaled latent, differentiable in the encoder weights.
    Tensor<T> encode_raw(const Image& img) const {
        check_extent(img);
        const std::size_t s = config.latent_side();
        auto h = diff::gelu(enc2(diff::gelu(enc1(patchify<T>(img, config.factor)))));
        return enc_out(h, s, s);
    }

    Tensor<T> decode_raw(const Tensor<T>& z) const {
        const std::size_t s = config.latent_side();
        if (z.dim() != 2 || z.rows() != config.latent_tokens() || z.cols() != config.latent_channels)
            throw ShapeError("decode_latent: latent must be [" + std::to_string(config.latent_tokens()) + ", " +
                             std::to_string(config.latent_channels) + "]");
        return dec_out(diff::gelu(dec1(diff::gelu(dec_in(z, s, s)))));
    }

    Tensor<T> encode_latent(const Image& img) const { return diff::scale(encode_raw(img), latent_scale[0]); }

    Image decode_latent(const Tensor<T>& z) const {
        auto px = decode_raw(diff::scale(z, T(1) / latent_scale[0]));
        Image img = unpatchify(px, config.image_size, config.image_size, config.factor);
        for (auto& v : img.pixels) v = std::clamp(v, 0.f, 1.f);
        return img;
    }

    // Mean squared pixel error of decode(encode(x)).
    T reconstruction_error(const Image& img) const {
        auto px = decode_raw(encode_raw(img));
        auto target = patchify<T>(img, config.factor);
        return diff::mse(px, target).item();
    }

    void collect(diff::ParamList<T>& out, const std::string& prefix) const {
        enc1.collect(out, prefix + ".enc1");
        enc2.collect(out, prefix + ".enc2");
        enc_out.collect(out, prefix + ".enc_out");
        dec_in.collect(out, prefix + ".dec_in");
        dec1.collect(out, prefix + ".dec1");
        dec_out.collect(out, prefix + ".dec_out");
        out.emplace_back(prefix + ".latent_scale", latent_scale);
    }
};

}  // namespace elite::ldm

#endif  // ELITE_LAB_LDM_AUTOENCODER_HPP

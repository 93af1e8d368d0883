#ifndef ELITE_LAB_LDM_UNET_HPP
#define ELITE_LAB_LDM_UNET_HPP

#include <cmath>
#include <optional>
#include <string>
#include <tuple>
#include <vector>

#include "elite_lab/diffcore/nn.hpp"
#include "elite_lab/ldm/attention.hpp"
#include "elite_lab/localmap/attention.hpp"

namespace elite::ldm {

using diff::Tensor;

enum class LocalBlocks { All, Deepest };

struct DenoiserConfig {
    std::size_t latent_channels = 4;
    std::size_t side = 16;  // latent spatial extent
    std::size_t ch1 = 32;   // channels at side×side
    std::size_t ch2 = 64;   // channels at side/2×side/2
    std::size_t attn_dim = 64;  // d'
    std::size_t ctx_dim = 64;
    std::size_t time_dim = 64;
    LocalBlocks local_blocks = LocalBlocks::All;
    bool reweight_local = true;
    // Reweight with the w0 column averaged over blocks (from a global-only
    // pre-pass) instead of each block's own map.
    bool average_reweight_maps = false;
};

// Everything the denoiser is conditioned on besides (z_t, t).
template <class T>
struct Condition {
    Tensor<T> ctx;  // textual features [L, d_ctx]
    std::optional<std::size_t> primary_position;  // row of w0 in ctx
    const localmap::LocalFeatureMap<T>* local = nullptr;
    double lambda = 0.0;
};

// Per-block global attention maps recorded during a forward pass.
template <class T>
struct AttentionCapture {
    std::vector<Tensor<T>> global_maps;  // A^g, one per cross-attention block
    std::vector<std::size_t> sides;      // spatial extent of each block's queries
};

// Cross-attention block: Q from latent tokens, K^g/V^g from the text
// features and, when a local map is attached, K^l/V^l from the local grid.
template <class T>
struct CrossAttnBlock {
    diff::LayerNorm<T> norm;
    Tensor<T> wq;          // [C, d']
    Tensor<T> wk_g, wv_g;  // [d_ctx, d']
    Tensor<T> wk_l, wv_l;  // [d_ctx, d'], bias-free
    diff::Linear<T> wo;    // d' -> C

    CrossAttnBlock() = default;
    CrossAttnBlock(std::size_t channels, std::size_t ctx_dim, std::size_t attn_dim, diff::Rng& rng)
        : norm(channels),
          wq(diff::param_normal<T>({channels, attn_dim}, rng, 1.0 / std::sqrt(double(channels)))),
          wk_g(diff::param_normal<T>({ctx_dim, attn_dim}, rng, 1.0 / std::sqrt(double(ctx_dim)))),
          wv_g(diff::param_normal<T>({ctx_dim, attn_dim}, rng, 1.0 / std::sqrt(double(ctx_dim)))),
          wk_l(diff::param_normal<T>({ctx_dim, attn_dim}, rng, 1.0 / std::sqrt(double(ctx_dim)))),
          wv_l(diff::param_normal<T>({ctx_dim, attn_dim}, rng, 1.0 / std::sqrt(double(ctx_dim)))),
          wo(attn_dim, channels, rng, true, 0.5) {}

    Tensor<T> operator()(const Tensor<T>& x, const Condition<T>& cond, bool use_local, bool reweight,
                         AttentionCapture<T>* capture, std::size_t side,
                         const Tensor<T>* shared_column = nullptr) const {
        auto q = diff::matmul(norm(x), wq);
        auto g = attend(q, cond.ctx, wk_g, wv_g);
        if (capture) {
            capture->global_maps.push_back(g.map);
            capture->sides.push_back(side);
        }
        Tensor<T> out = g.out;
        if (use_local && cond.local && cond.lambda != 0.0) {
            auto l = localmap::local_attend(q, *cond.local, wk_l, wv_l);
            Tensor<T> local_out = l.out;
            if (reweight) {
                if (!cond.primary_position) throw ContractError("local attention reweighting needs the w0 position");
                auto reweighted = shared_column
                                      ? localmap::reweight_with_column(l.map, *shared_column)
                                      : localmap::reweight_attention(l.map, g.map, *cond.primary_position);
                local_out = diff::matmul(reweighted, l.values);
            }
            out = localmap::fuse(g.out, local_out, cond.lambda);
        }
        return diff::add(x, wo(out));
    }

    // V^l for the regularizer of the local objective.
    Tensor<T> local_values(const localmap::LocalFeatureMap<T>& local) const {
        return diff::matmul(local.masked(), wv_l);
    }

    void collect(diff::ParamList<T>& out, const std::string& prefix) const {
        norm.collect(out, prefix + ".norm");
        out.emplace_back(prefix + ".wq", wq);
        out.emplace_back(prefix + ".wk_g", wk_g);
        out.emplace_back(prefix + ".wv_g", wv_g);
        out.emplace_back(prefix + ".wk_l", wk_l);
        out.emplace_back(prefix + ".wv_l", wv_l);
        wo.collect(out, prefix + ".wo");
    }
};

template <class T>
struct ResBlock {
    diff::LayerNorm<T> norm1, norm2;
    diff::Conv3x3<T> conv1, conv2;
    diff::Linear<T> time_proj;

    ResBlock() = default;
    ResBlock(std::size_t channels, std::size_t time_dim, diff::Rng& rng)
        : norm1(channels),
          norm2(channels),
          conv1(channels, channels, rng),
          conv2(channels, channels, rng, 0.5),
          time_proj(time_dim, channels, rng) {}

    Tensor<T> operator()(const Tensor<T>& x, const Tensor<T>& temb, std::size_t side) const {
        auto h = conv1(diff::silu(norm1(x)), side, side);
        h = diff::add_rowvec(h, time_proj(temb));
        h = conv2(diff::silu(norm2(h)), side, side);
        return diff::add(x, h);
    }

    void collect(diff::ParamList<T>& out, const std::string& prefix) const {
        norm1.collect(out, prefix + ".norm1");
        conv1.collect(out, prefix + ".conv1");
        time_proj.collect(out, prefix + ".time_proj");
        norm2.collect(out, prefix + ".norm2");
        conv2.collect(out, prefix + ".conv2");
    }
};

// Sinusoidal features of the timestep: [1, dim].
template <class T>
Tensor<T> timestep_features(std::size_t t, std::size_t dim) {
    std::vector<T> d(dim);
    const std::size_t half = dim / 2;
    for (std::size_t i = 0; i < half; ++i) {
        const double freq = std::exp(-std::log(10000.0) * static_cast<double>(i) / static_cast<double>(half));
        d[i] = static_cast<T>(std::sin(static_cast<double>(t) * freq));
        d[half + i] = static_cast<T>(std::cos(static_cast<double>(t) * freq));
    }
    return Tensor<T>({1, dim}, std::move(d));
}

// Two-resolution denoiser eps_theta(z_t, t, ctx) on [side*side, channels]
// latents, one cross-attention block per resolution.
template <class T>
struct UNet {
    DenoiserConfig config;
    diff::Linear<T> time1, time2;
    diff::Conv3x3<T> conv_in;
    ResBlock<T> res_hi;
    CrossAttnBlock<T> attn_hi;
    diff::Linear<T> down;
    ResBlock<T> res_lo;
    CrossAttnBlock<T> attn_lo;
    diff::Linear<T> merge;
    ResBlock<T> res_up;
    diff::LayerNorm<T> norm_out;
    diff::Conv3x3<T> conv_out;

    UNet() = default;
    UNet(const DenoiserConfig& cfg, diff::Rng& rng)
        : config(cfg),
          time1(cfg.time_dim, cfg.time_dim, rng),
          time2(cfg.time_dim, cfg.time_dim, rng),
          conv_in(cfg.latent_channels, cfg.ch1, rng),
          res_hi(cfg.ch1, cfg.time_dim, rng),
          attn_hi(cfg.ch1, cfg.ctx_dim, cfg.attn_dim, rng),
          down(cfg.ch1, cfg.ch2, rng),
          res_lo(cfg.ch2, cfg.time_dim, rng),
          attn_lo(cfg.ch2, cfg.ctx_dim, cfg.attn_dim, rng),
          merge(cfg.ch1 + cfg.ch2, cfg.ch1, rng),
          res_up(cfg.ch1, cfg.time_dim, rng),
          norm_out(cfg.ch1),
          conv_out(cfg.ch1, cfg.latent_channels, rng, 0.3) {
        if (cfg.side % 2) throw ConfigError("latent side must be even");
    }

    std::vector<const CrossAttnBlock<T>*> attention_blocks() const { return {&attn_hi, &attn_lo}; }

    bool block_uses_local(std::size_t block) const {
        return config.local_blocks == LocalBlocks::All || block == 1;
    }

    Tensor<T> operator()(const Tensor<T>& z, std::size_t t, const Condition<T>& cond,
                         AttentionCapture<T>* capture = nullptr) const {
        if (cond.lambda < 0) throw ConfigError("fusion weight lambda must be non-negative");
        const std::size_t s = config.side, s2 = s / 2;
        if (z.dim() != 2 || z.rows() != s * s || z.cols() != config.latent_channels)
            throw ShapeError("unet: latent must be [" + std::to_string(s * s) + ", " +
                             std::to_string(config.latent_channels) + "]");
        const bool local_active = cond.local && cond.lambda != 0.0;
        Tensor<T> col_hi, col_lo;
        if (local_active && config.reweight_local && config.average_reweight_maps) {
            if (!cond.primary_position) throw ContractError("local attention reweighting needs the w0 position");
            std::tie(col_hi, col_lo) = averaged_columns(z, t, cond);
        }
        auto temb = time2(diff::silu(time1(timestep_features<T>(t, config.time_dim))));
        auto temb_act = diff::silu(temb);

        auto h1 = conv_in(z, s, s);
        h1 = res_hi(h1, temb_act, s);
        h1 = attn_hi(h1, cond, block_uses_local(0), config.reweight_local, capture, s,
                     col_hi.defined() ? &col_hi : nullptr);

        auto h2 = down(diff::avg_pool2x2(h1, s, s));
        h2 = res_lo(h2, temb_act, s2);
        h2 = attn_lo(h2, cond, block_uses_local(1), config.reweight_local, capture, s2,
                     col_lo.defined() ? &col_lo : nullptr);

        auto u = merge(diff::concat_cols<T>({diff::upsample2x(h2, s2, s2), h1}));
        u = res_up(u, temb_act, s);
        return conv_out(diff::silu(norm_out(u)), s, s);
    }

    // w0 column of A^g averaged over both blocks at full resolution, then
    // returned at each block's resolution. Taken from a global-only pass.
    std::pair<Tensor<T>, Tensor<T>> averaged_columns(const Tensor<T>& z, std::size_t t, const Condition<T>& cond) const {
        diff::NoGradGuard no_grad;
        const std::size_t s = config.side, s2 = s / 2;
        Condition<T> global_only{cond.ctx, cond.primary_position, nullptr, 0.0};
        AttentionCapture<T> cap;
        (*this)(z, t, global_only, &cap);
        const std::size_t w0 = *cond.primary_position;
        auto hi = diff::column(cap.global_maps[0], w0);
        auto lo = diff::column(cap.global_maps[1], w0);
        auto lo_up = diff::reshape(diff::upsample2x(diff::reshape(lo, {s2 * s2, 1}), s2, s2), {s * s});
        auto avg = diff::scale(diff::add(hi, lo_up), T(0.5));
        auto avg_lo = diff::reshape(diff::avg_pool2x2(diff::reshape(avg, {s * s, 1}), s, s), {s2 * s2});
        return {avg, avg_lo};
    }

    void collect(diff::ParamList<T>& out, const std::string& prefix) const {
        time1.collect(out, prefix + ".time1");
        time2.collect(out, prefix + ".time2");
        conv_in.collect(out, prefix + ".conv_in");
        res_hi.collect(out, prefix + ".res_hi");
        attn_hi.collect(out, prefix + ".attn_hi");
        down.collect(out, prefix + ".down");
        res_lo.collect(out, prefix + ".res_lo");
        attn_lo.collect(out, prefix + ".attn_lo");
        merge.collect(out, prefix + ".merge");
        res_up.collect(out, prefix + ".res_up");
        norm_out.collect(out, prefix + ".norm_out");
        conv_out.collect(out, prefix + ".conv_out");
    }

    diff::ParamList<T> global_kv() const {
        diff::ParamList<T> out;
        for (auto* b : attention_blocks()) {
            out.emplace_back("wk_g", b->wk_g);
            out.emplace_back("wv_g", b->wv_g);
        }
        return out;
    }

    diff::ParamList<T> local_kv() const {
        diff::ParamList<T> out;
        for (auto* b : attention_blocks()) {
            out.emplace_back("wk_l", b->wk_l);
            out.emplace_back("wv_l", b->wv_l);
        }
        return out;
    }

    // Starting point for the local branch: a copy of the global projections.
    void init_local_from_global() const {
        for (auto* b : attention_blocks()) {
            Tensor<T> k = b->wk_l, v = b->wv_l;
            k.assign(b->wk_g.data());
            v.assign(b->wv_g.data());
        }
    }
};

}  // namespace elite::ldm

#endif  // ELITE_LAB_LDM_UNET_HPP

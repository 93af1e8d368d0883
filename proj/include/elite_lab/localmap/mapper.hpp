#ifndef ELITE_LAB_LOCALMAP_MAPPER_HPP
#define ELITE_LAB_LOCALMAP_MAPPER_HPP

#include <cmath>
#include <tuple>
#include <string>
#include <vector>

#include "elite_lab/diffcore/optim.hpp"
#include "elite_lab/globalmap.hpp"
#include "elite_lab/imageenc.hpp"
#include "elite_lab/ldm/stack.hpp"
#include "elite_lab/localmap/attention.hpp"

namespace elite::localmap {

// Tap grids stacked along channels: N × [p*p, c] -> [p*p, N*c].
template <class T>
Tensor<T> stack_taps(const imageenc::TapFeatures<T>& taps) {
    if (taps.grids.empty()) throw ShapeError("stack_taps: no tap grids");
    return diff::concat_cols(taps.grids);
}

// M^l: positionwise three-layer MLP from stacked tap features into the
// textual feature space.
template <class T>
struct LocalMapper {
    diff::Mlp3<T> mlp;
    std::size_t side = 0;

    LocalMapper() = default;
    LocalMapper(std::size_t taps, std::size_t feature_dim, std::size_t ctx_dim, std::size_t side_, diff::Rng& rng)
        : mlp(taps * feature_dim, 2 * feature_dim, ctx_dim, rng), side(side_) {}

    LocalFeatureMap<T> map_grid(const Tensor<T>& stacked, const Tensor<T>& mask_grid) const {
        if (stacked.rows() != side * side || mask_grid.numel() != side * side)
            throw ShapeError("local mapper: expected " + std::to_string(side * side) + " patches");
        return {mlp(stacked), mask_grid, side};
    }

    // e = M^l(psi(x·m)) with the mask kept at patch resolution.
    LocalFeatureMap<T> map_local(const imageenc::ImageEncoder<T>& encoder, const Image& image, const Mask& mask) const {
        if (mask.height != image.height || mask.width != image.width)
            throw ShapeError("map_local: mask extent differs from the image");
        auto taps = encoder.encode(apply_mask(image, mask));
        return map_grid(stack_taps(taps), downsample_mask<T>(mask, side));
    }

    void collect(diff::ParamList<T>& out, const std::string& prefix) const { mlp.collect(out, prefix + ".mlp"); }
};

struct LocalLossConfig {
    double lambda_local = 0.0001;
};

// Σ over local-enabled blocks of ‖V^l‖₁.
template <class T>
Tensor<T> local_value_l1(const ldm::UNet<T>& unet, const LocalFeatureMap<T>& local) {
    Tensor<T> total;
    const auto blocks = unet.attention_blocks();
    for (std::size_t b = 0; b < blocks.size(); ++b) {
        if (!unet.block_uses_local(b)) continue;
        auto l1 = diff::abs_sum(blocks[b]->local_values(local));
        total = total.defined() ? diff::add(total, l1) : l1;
    }
    return total;
}

// L_LDM + lambda_local·Σ‖V^l‖₁ averaged over the batch, with λ = 1 fusion
// and only w0 spliced into the prompt.
template <class T, class Rng>
ldm::LossBreakdown<T> local_loss(const std::vector<const ldm::TrainingItem<T>*>& batch, const LocalMapper<T>& mapper,
                                 const globalmap::GlobalMapper<T>& global, const ldm::DiffusionStack<T>& stack, Rng& rng,
                                 const LocalLossConfig& cfg) {
    if (cfg.lambda_local < 0) throw ConfigError("lambda_local must be non-negative");
    std::vector<Tensor<T>> latents;
    std::vector<LocalFeatureMap<T>> locals;
    std::vector<ldm::Condition<T>> conds;
    locals.reserve(batch.size());
    Tensor<T> reg;
    for (const auto* item : batch) {
        const auto& prompt = textenc::sample_template(rng);
        ldm::Condition<T> c;
        {
            diff::NoGradGuard frozen;
            auto v = global.map_pooled(item->pooled);
            std::tie(c.ctx, c.primary_position) = stack.condition(prompt, &v, textenc::SpliceMode::PrimaryOnly);
        }
        locals.push_back(mapper.map_grid(item->local_taps, item->mask_grid));
        c.local = &locals.back();
        c.lambda = 1.0;
        conds.push_back(c);
        latents.push_back(item->latent);
        auto l1 = local_value_l1(*stack.unet, locals.back());
        reg = reg.defined() ? diff::add(reg, l1) : l1;
    }
    reg = diff::scale(reg, T(1) / static_cast<T>(batch.size()));
    auto ldm_term = ldm::ldm_loss<T>(latents, rng, *stack.schedule, [&](const Tensor<T>& zt, std::size_t t, std::size_t i) {
        return (*stack.unet)(zt, t, conds[i]);
    });
    ldm::LossBreakdown<T> out;
    out.ldm = ldm_term.item();
    out.reg = reg.item();
    out.total = diff::add(ldm_term, diff::scale(reg, static_cast<T>(cfg.lambda_local)));
    return out;
}

// Stage-2 optimizer: updates M^l and the local K/V projections only.
template <class T>
class LocalTrainer {
public:
    // `global` must come from a stage-1 checkpoint.
    LocalTrainer(const LocalMapper<T>& mapper, const globalmap::GlobalMapper<T>* global,
                 const ldm::DiffusionStack<T>& stack, diff::AdamConfig adam, LocalLossConfig loss_cfg)
        : mapper_(mapper), global_(require_stage1(global)), stack_(stack), loss_cfg_(loss_cfg),
          optimizer_(diff::tensors_of(trainable(mapper, stack)), adam) {}

    static diff::ParamList<T> trainable(const LocalMapper<T>& mapper, const ldm::DiffusionStack<T>& stack) {
        diff::ParamList<T> list;
        mapper.collect(list, "local");
        const auto blocks = stack.unet->attention_blocks();
        for (std::size_t b = 0; b < blocks.size(); ++b) {
            if (!stack.unet->block_uses_local(b)) continue;
            list.emplace_back("wk_l", blocks[b]->wk_l);
            list.emplace_back("wv_l", blocks[b]->wv_l);
        }
        return list;
    }

    template <class Rng>
    ldm::LossBreakdown<T> step(const std::vector<const ldm::TrainingItem<T>*>& batch, Rng& rng) {
        diff::ParamList<T> all;
        stack_.text->collect(all, "text");
        stack_.unet->collect(all, "unet");
        global_->collect(all, "global");
        diff::set_trainable(all, false);
        diff::set_trainable(trainable(mapper_, stack_), true);
        optimizer_.zero_grad();
        auto loss = local_loss(batch, mapper_, *global_, stack_, rng, loss_cfg_);
        if (!std::isfinite(static_cast<double>(loss.total.item())))
            throw NumericError("stage-2 loss is not finite");
        diff::backward(loss.total);
        optimizer_.step();
        optimizer_.zero_grad();
        return loss;
    }

private:
    static const globalmap::GlobalMapper<T>* require_stage1(const globalmap::GlobalMapper<T>* g) {
        if (!g) throw ConfigError("train-local requires a stage-1 (train-global) checkpoint");
        return g;
    }

    const LocalMapper<T>& mapper_;
    const globalmap::GlobalMapper<T>* global_;
    ldm::DiffusionStack<T> stack_;
    LocalLossConfig loss_cfg_;
    diff::Adam<T> optimizer_;
};

}  // namespace elite::localmap

#endif  // ELITE_LAB_LOCALMAP_MAPPER_HPP

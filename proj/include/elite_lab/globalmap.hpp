#ifndef ELITE_LAB_GLOBALMAP_HPP
#define ELITE_LAB_GLOBALMAP_HPP

#include <cmath>
#include <string>
#include <vector>

#include "elite_lab/diffcore/optim.hpp"
#include "elite_lab/imageenc.hpp"
#include "elite_lab/ldm/stack.hpp"

// Global mapping: pooled multi-layer image features -> N word embeddings.
namespace elite::globalmap {

using diff::Tensor;

template <class T>
struct GlobalMapper {
    std::vector<diff::Mlp3<T>> heads;  // head 0 reads the deepest tap
    std::vector<std::size_t> tap_layer_ids;

    GlobalMapper() = default;
    GlobalMapper(const std::vector<std::size_t>& taps, std::size_t feature_dim, std::size_t word_dim, diff::Rng& rng)
        : tap_layer_ids(taps) {
        for (std::size_t i = 0; i < taps.size(); ++i)
            heads.emplace_back(feature_dim, 2 * feature_dim, word_dim, rng, /*zero_last=*/true);
    }

    std::size_t words() const { return heads.size(); }

    // v[i] = head_i(pooled_i).
    textenc::WordEmbeddingSet<T> map_pooled(const std::vector<Tensor<T>>& pooled) const {
        if (pooled.size() != heads.size())
            throw ConfigError("global mapper has " + std::to_string(heads.size()) + " heads but received " +
                              std::to_string(pooled.size()) + " taps");
        std::vector<Tensor<T>> rows;
        rows.reserve(heads.size());
        for (std::size_t i = 0; i < heads.size(); ++i) rows.push_back(heads[i](pooled[i]));
        return {diff::concat_rows(rows), tap_layer_ids};
    }

    textenc::WordEmbeddingSet<T> map_global(const imageenc::TapFeatures<T>& taps) const {
        if (taps.size() != heads.size())
            throw ConfigError("tap count " + std::to_string(taps.size()) + " does not match head count " +
                              std::to_string(heads.size()));
        return map_pooled(taps.pooled);
    }

    void collect(diff::ParamList<T>& out, const std::string& prefix) const {
        for (std::size_t i = 0; i < heads.size(); ++i) heads[i].collect(out, prefix + ".head" + std::to_string(i));
    }
};

struct GlobalLossConfig {
    double lambda_global = 0.01;
    bool regularize_auxiliary_only = false;
};

// L_LDM + lambda_global·‖v‖₁ averaged over the batch; each item is
// conditioned on a sampled template with all N words spliced in.
template <class T, class Rng>
ldm::LossBreakdown<T> global_loss(const std::vector<const ldm::TrainingItem<T>*>& batch, const GlobalMapper<T>& mapper,
                                  const ldm::DiffusionStack<T>& stack, Rng& rng, const GlobalLossConfig& cfg) {
    if (cfg.lambda_global < 0) throw ConfigError("lambda_global must be non-negative");
    std::vector<Tensor<T>> latents;
    std::vector<ldm::Condition<T>> conds;
    Tensor<T> reg;
    for (const auto* item : batch) {
        const auto& prompt = textenc::sample_template(rng);
        auto v = mapper.map_pooled(item->pooled);
        auto [ctx, pos] = stack.condition(prompt, &v, textenc::SpliceMode::Full);
        conds.push_back({ctx, pos, nullptr, 0.0});
        latents.push_back(item->latent);
        auto rows = cfg.regularize_auxiliary_only && v.count() > 1 ? diff::slice_rows(v.words, 1, v.count()) : v.words;
        auto l1 = diff::abs_sum(rows);
        reg = reg.defined() ? diff::add(reg, l1) : l1;
    }
    reg = diff::scale(reg, T(1) / static_cast<T>(batch.size()));
    auto ldm_term = ldm::ldm_loss<T>(latents, rng, *stack.schedule, [&](const Tensor<T>& zt, std::size_t t, std::size_t i) {
        return (*stack.unet)(zt, t, conds[i]);
    });
    ldm::LossBreakdown<T> out;
    out.ldm = ldm_term.item();
    out.reg = reg.item();
    out.total = diff::add(ldm_term, diff::scale(reg, static_cast<T>(cfg.lambda_global)));
    return out;
}

// Stage-1 optimizer: updates the mapper heads and the global K/V
// projections of every cross-attention block, nothing else.
template <class T>
class GlobalTrainer {
public:
    GlobalTrainer(const GlobalMapper<T>& mapper, const ldm::DiffusionStack<T>& stack, diff::AdamConfig adam,
                  GlobalLossConfig loss_cfg)
        : mapper_(mapper), stack_(stack), loss_cfg_(loss_cfg), optimizer_(trainable_tensors(mapper, stack), adam) {}

    static diff::ParamList<T> trainable(const GlobalMapper<T>& mapper, const ldm::DiffusionStack<T>& stack) {
        diff::ParamList<T> list;
        mapper.collect(list, "global");
        for (auto& p : stack.unet->global_kv()) list.push_back(p);
        return list;
    }

    template <class Rng>
    ldm::LossBreakdown<T> step(const std::vector<const ldm::TrainingItem<T>*>& batch, Rng& rng) {
        freeze_all_but_trainable();
        optimizer_.zero_grad();
        auto loss = global_loss(batch, mapper_, stack_, rng, loss_cfg_);
        if (!std::isfinite(static_cast<double>(loss.total.item())))
            throw NumericError("stage-1 loss is not finite");
        diff::backward(loss.total);
        optimizer_.step();
        optimizer_.zero_grad();
        return loss;
    }

private:
    static std::vector<Tensor<T>> trainable_tensors(const GlobalMapper<T>& mapper, const ldm::DiffusionStack<T>& stack) {
        return diff::tensors_of(trainable(mapper, stack));
    }

    void freeze_all_but_trainable() {
        diff::ParamList<T> all;
        stack_.text->collect(all, "text");
        stack_.unet->collect(all, "unet");
        diff::set_trainable(all, false);
        diff::set_trainable(trainable(mapper_, stack_), true);
    }

    const GlobalMapper<T>& mapper_;
    ldm::DiffusionStack<T> stack_;
    GlobalLossConfig loss_cfg_;
    diff::Adam<T> optimizer_;
};

}  // namespace elite::globalmap

#endif  // ELITE_LAB_GLOBALMAP_HPP

#ifndef ELITE_LAB_LDM_STACK_HPP
#define ELITE_LAB_LDM_STACK_HPP

#include <vector>

#include "elite_lab/ldm/diffusion.hpp"
#include "elite_lab/textenc.hpp"

namespace elite::ldm {

// Non-owning view of the frozen text-to-image stack the mappers train
// against.
template <class T>
struct DiffusionStack {
    const textenc::Vocabulary* vocab = nullptr;
    const textenc::TextEncoder<T>* text = nullptr;
    const UNet<T>* unet = nullptr;
    const NoiseSchedule* schedule = nullptr;

    // Text features for `prompt` with optional concept words spliced in.
    std::pair<Tensor<T>, std::optional<std::size_t>> condition(const std::string& prompt,
                                                               const textenc::WordEmbeddingSet<T>* v,
                                                               textenc::SpliceMode mode) const {
        const auto tp = textenc::tokenize(prompt, *vocab);
        const auto seq = text->inject_concept(tp, v, mode);
        return {text->encode(seq), seq.primary_position};
    }

    Tensor<T> unconditional() const {
        return text->encode(textenc::TokenizedPrompt::empty(*vocab));
    }
};

// Per-item training inputs with every frozen-encoder output precomputed.
template <class T>
struct TrainingItem {
    Tensor<T> latent;                // [side*side, channels], scaled
    std::vector<Tensor<T>> pooled;   // pooled taps of the full image, deepest first
    Tensor<T> local_taps;            // [p*p, N*c] taps of the masked image, channels stacked
    Tensor<T> mask_grid;             // [p*p] downsampled object mask
    std::size_t category_id = 0;
};

template <class T>
struct LossBreakdown {
    Tensor<T> total;
    T ldm = T(0);
    T reg = T(0);  // regularizer before weighting
};

}  // namespace elite::ldm

#endif  // ELITE_LAB_LDM_STACK_HPP

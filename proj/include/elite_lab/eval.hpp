#ifndef ELITE_LAB_EVAL_HPP
#define ELITE_LAB_EVAL_HPP

#include <algorithm>
#include <chrono>
#include <cmath>
#include <numeric>
#include <string>
#include <vector>

#include <json.hpp>

#include "elite_lab/diffcore/optim.hpp"
#include "elite_lab/imageenc.hpp"
#include "elite_lab/ldm/stack.hpp"

// Embedding-cosine similarity metrics, the optimization-based inversion
// baseline and timing helpers.
namespace elite::eval {

using diff::Tensor;

template <class T>
double cosine(const Tensor<T>& a, const Tensor<T>& b) {
    if (a.numel() != b.numel()) throw ShapeError("cosine: length mismatch");
    double ab = 0, aa = 0, bb = 0;
    for (std::size_t i = 0; i < a.numel(); ++i) {
        ab += double(a[i]) * double(b[i]);
        aa += double(a[i]) * double(a[i]);
        bb += double(b[i]) * double(b[i]);
    }
    if (aa == 0 || bb == 0) return 0.0;
    return std::clamp(ab / std::sqrt(aa * bb), -1.0, 1.0);
}

// The frozen embedders the metrics read. `clip_image` is the encoder shared
// with the generative stack; `dino_image` is trained independently.
template <class T>
struct Embedders {
    const imageenc::ImageEncoder<T>* clip_image = nullptr;
    const imageenc::ImageEncoder<T>* dino_image = nullptr;
    const diff::Linear<T>* image_proj = nullptr;
    const diff::Linear<T>* text_proj = nullptr;
    const textenc::TextEncoder<T>* text = nullptr;
    const textenc::Vocabulary* vocab = nullptr;

    // Joint-space caption embedding: projected mean of the context features.
    Tensor<T> text_embedding(const std::string& caption) const {
        return (*text_proj)(diff::mean_rows(text->encode(textenc::tokenize(caption, *vocab))));
    }

    Tensor<T> image_embedding(const Image& img) const { return (*image_proj)(clip_image->embed(img)); }
};

template <class T>
double clip_i(const Embedders<T>& e, const Image& generated, const Image& reference) {
    diff::NoGradGuard no_grad;
    return cosine(e.clip_image->embed(generated), e.clip_image->embed(reference));
}

template <class T>
double dino_i(const Embedders<T>& e, const Image& generated, const Image& reference) {
    diff::NoGradGuard no_grad;
    return cosine(e.dino_image->embed(generated), e.dino_image->embed(reference));
}

// S* is replaced by the category name before encoding the caption.
template <class T>
double clip_t(const Embedders<T>& e, const Image& generated, const std::string& prompt,
              const std::string& category_name) {
    const std::string caption = textenc::substitute(prompt, category_name);
    diff::NoGradGuard no_grad;
    return cosine(e.image_embedding(generated), e.text_embedding(caption));
}

struct InversionConfig {
    std::size_t steps = 500;
    double lr = 5e-3;
};

template <class T>
struct InversionResult {
    Tensor<T> embedding;  // [1, d]
    double wall_ms = 0;
    std::vector<double> losses;
};

// Single-sample diffusion loss of the template prompt with `embedding` in
// place of S*; draws (template, t, eps) from `rng`.
template <class T, class Rng>
Tensor<T> inversion_loss(const Tensor<T>& embedding, const Tensor<T>& latent, const ldm::DiffusionStack<T>& stack,
                         Rng& rng) {
    const auto& prompt = textenc::sample_template(rng);
    textenc::WordEmbeddingSet<T> v{embedding, {}};
    auto [ctx, pos] = stack.condition(prompt, &v, textenc::SpliceMode::PrimaryOnly);
    ldm::Condition<T> cond{ctx, pos, nullptr, 0.0};
    return ldm::ldm_loss<T>({latent}, rng, *stack.schedule,
                            [&](const Tensor<T>& zt, std::size_t t, std::size_t) { return (*stack.unet)(zt, t, cond); });
}

// Mean inversion loss over `draws` fixed (template, t, eps) draws from
// `seed`; the same seed gives the same batch sequence for any embedding.
template <class T>
double inversion_objective(const Tensor<T>& embedding, const Tensor<T>& latent, const ldm::DiffusionStack<T>& stack,
                           std::uint64_t seed, std::size_t draws) {
    diff::NoGradGuard no_grad;
    diff::Rng rng(seed);
    double total = 0;
    for (std::size_t i = 0; i < draws; ++i) total += inversion_loss(embedding, latent, stack, rng).item();
    return total / static_cast<double>(draws);
}

// Optimizes one word embedding against the frozen stack, starting from
// `init` ([1, d]). Only the embedding is updated.
template <class T>
InversionResult<T> invert_baseline(const Tensor<T>& latent, const Tensor<T>& init, const ldm::DiffusionStack<T>& stack,
                                   const InversionConfig& cfg, std::uint64_t seed) {
    const auto start = std::chrono::steady_clock::now();
    InversionResult<T> out;
    Tensor<T> e = init.detach().clone();
    e.set_requires_grad(true);
    diff::ParamList<T> frozen;
    stack.text->collect(frozen, "text");
    stack.unet->collect(frozen, "unet");
    diff::set_trainable(frozen, false);
    diff::Adam<T> opt({e}, {cfg.lr});
    diff::Rng rng(seed);
    for (std::size_t s = 0; s < cfg.steps; ++s) {
        opt.zero_grad();
        auto loss = inversion_loss(e, latent, stack, rng);
        const double l = loss.item();
        if (!std::isfinite(l)) throw NumericError("inversion loss is not finite");
        out.losses.push_back(l);
        diff::backward(loss);
        opt.step();
    }
    e.set_requires_grad(false);
    out.embedding = e;
    out.wall_ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start).count();
    return out;
}

// Reference timings for the encoder and the optimization baselines, kept
// next to the measured ones for comparison.
struct ReferenceTimes {
    double encoder_s = 0.05;
    double custom_diffusion_s = 6 * 60;
    double textual_inversion_s = 50 * 60;
};

struct ConceptMetrics {
    std::string concept_name;
    double clip_i = 0, clip_t = 0, dino_i = 0;
};

struct MetricReport {
    double clip_i = 0, clip_t = 0, dino_i = 0;
    double encode_ms = 0, baseline_ms = 0;
    std::size_t baseline_steps = 0;
    std::vector<ConceptMetrics> per_concept;
    ReferenceTimes reference;

    double speedup() const { return encode_ms > 0 ? baseline_ms / encode_ms : 0.0; }

    nlohmann::ordered_json to_json() const {
        nlohmann::ordered_json j;
        j["clip_i"] = clip_i;
        j["clip_t"] = clip_t;
        j["dino_i"] = dino_i;
        j["encode_ms"] = encode_ms;
        j["baseline_ms"] = baseline_ms;
        j["baseline_steps"] = baseline_steps;
        j["speedup"] = speedup();
        j["reference"] = {{"encoder_s", reference.encoder_s},
                          {"custom_diffusion_s", reference.custom_diffusion_s},
                          {"textual_inversion_s", reference.textual_inversion_s}};
        auto& pc = j["per_concept"] = nlohmann::ordered_json::array();
        for (const auto& c : per_concept)
            pc.push_back({{"concept", c.concept_name}, {"clip_i", c.clip_i}, {"clip_t", c.clip_t}, {"dino_i", c.dino_i}});
        return j;
    }
};

// Mean wall time of `fn()` over `repeats` calls, in milliseconds.
template <class F>
double time_ms(F&& fn, std::size_t repeats = 1) {
    const auto start = std::chrono::steady_clock::now();
    for (std::size_t i = 0; i < repeats; ++i) fn();
    return std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start).count() /
           static_cast<double>(std::max<std::size_t>(repeats, 1));
}

inline double mean(const std::vector<double>& v) {
    return v.empty() ? 0.0 : std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

// Average ranks with ties sharing the mean rank.
inline std::vector<double> ranks(const std::vector<double>& v) {
    std::vector<std::size_t> idx(v.size());
    std::iota(idx.begin(), idx.end(), 0);
    std::sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return v[a] < v[b]; });
    std::vector<double> r(v.size());
    for (std::size_t i = 0; i < idx.size();) {
        std::size_t j = i;
        while (j + 1 < idx.size() && v[idx[j + 1]] == v[idx[i]]) ++j;
        for (std::size_t k = i; k <= j; ++k) r[idx[k]] = 0.5 * double(i + j) + 1.0;
        i = j + 1;
    }
    return r;
}

inline double pearson(const std::vector<double>& a, const std::vector<double>& b) {
    if (a.size() != b.size() || a.size() < 2) throw ContractError("pearson: need two equal-length samples");
    const double ma = mean(a), mb = mean(b);
    double ab = 0, aa = 0, bb = 0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        ab += (a[i] - ma) * (b[i] - mb);
        aa += (a[i] - ma) * (a[i] - ma);
        bb += (b[i] - mb) * (b[i] - mb);
    }
    return aa > 0 && bb > 0 ? ab / std::sqrt(aa * bb) : 0.0;
}

inline double spearman(const std::vector<double>& a, const std::vector<double>& b) {
    return pearson(ranks(a), ranks(b));
}

// Coefficient of determination of the least-squares line through (x, y).
inline double linear_r2(const std::vector<double>& x, const std::vector<double>& y) {
    const double r = pearson(x, y);
    return r * r;
}

}  // namespace elite::eval

#endif  // ELITE_LAB_EVAL_HPP

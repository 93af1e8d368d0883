#ifndef ELITE_LAB_PIPELINE_HPP
#define ELITE_LAB_PIPELINE_HPP

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <functional>
#include <numeric>
#include <random>
#include <string>
#include <vector>

#include "elite_lab/data.hpp"
#include "elite_lab/eval.hpp"
#include "elite_lab/globalmap.hpp"
#include "elite_lab/imageenc.hpp"
#include "elite_lab/io/checkpoint.hpp"
#include "elite_lab/io/config.hpp"
#include "elite_lab/ldm/autoencoder.hpp"
#include "elite_lab/ldm/diffusion.hpp"
#include "elite_lab/ldm/stack.hpp"
#include "elite_lab/localmap/mapper.hpp"
#include "elite_lab/textenc.hpp"

// The whole model bundle and the training stages that build it, in order:
// encoders -> autoencoder -> backbone -> global -> local.
namespace elite::pipeline {

using diff::Tensor;
using io::RunConfig;

inline constexpr const char* kStageEncoders = "encoders";
inline constexpr const char* kStageAutoencoder = "autoencoder";
inline constexpr const char* kStageBackbone = "backbone";
inline constexpr const char* kStageGlobal = "global";
inline constexpr const char* kStageLocal = "local";

inline const std::vector<std::string>& stage_order() {
    static const std::vector<std::string> s = {kStageEncoders, kStageAutoencoder, kStageBackbone, kStageGlobal,
                                               kStageLocal};
    return s;
}

inline data::DatasetSpec dataset_spec(const RunConfig& c) {
    data::DatasetSpec s;
    s.canvas = c.canvas;
    s.min_radius = c.min_radius;
    s.max_radius = c.max_radius;
    s.min_color_distance = c.min_color_distance;
    s.noise = c.noise;
    return s;
}

inline imageenc::ImageEncoderConfig image_encoder_config(const RunConfig& c) {
    return {c.image_size, c.patch, c.enc_dim, c.enc_layers, c.enc_mlp_hidden, c.taps};
}

inline textenc::TextEncoderConfig text_encoder_config(const RunConfig& c) {
    return {c.word_dim, c.ctx_dim, c.text_layers, c.text_mlp_hidden, c.max_length};
}

inline ldm::AutoencoderConfig autoencoder_config(const RunConfig& c) {
    return {c.image_size, c.latent_factor, c.latent_channels, c.ae_hidden};
}

inline ldm::DenoiserConfig denoiser_config(const RunConfig& c) {
    ldm::DenoiserConfig d;
    d.latent_channels = c.latent_channels;
    d.side = c.image_size / c.latent_factor;
    d.ch1 = c.unet_ch1;
    d.ch2 = c.unet_ch2;
    d.attn_dim = c.attn_dim;
    d.ctx_dim = c.ctx_dim;
    d.time_dim = c.time_dim;
    d.local_blocks = c.local_blocks == "deepest" ? ldm::LocalBlocks::Deepest : ldm::LocalBlocks::All;
    d.reweight_local = c.reweight_local;
    d.average_reweight_maps = c.average_reweight_maps;
    return d;
}

// Keys whose values change tensor shapes; a checkpoint must agree on all.
inline const std::vector<std::string>& shape_keys() {
    static const std::vector<std::string> k = {
        "image_size", "patch", "enc_dim", "enc_layers", "enc_mlp_hidden", "taps", "word_dim", "ctx_dim",
        "text_layers", "text_mlp_hidden", "max_length", "latent_factor", "latent_channels", "ae_hidden",
        "unet_ch1", "unet_ch2", "attn_dim", "time_dim"};
    return k;
}

inline diff::Rng component_rng(std::uint64_t seed, std::uint64_t component) {
    return diff::Rng(data::item_seed(seed, 100 + component, 0));
}

// Concept inputs for generation: the mapped words and the local grid.
template <class T>
struct EncodedConcept {
    textenc::WordEmbeddingSet<T> words;
    localmap::LocalFeatureMap<T> local;
};

struct GenerateOptions {
    std::string prompt = "a photo of a S*";
    double lambda = 0.8;
    textenc::SpliceMode mode = textenc::SpliceMode::PrimaryOnly;
    std::uint64_t seed = 0;
    std::size_t steps = 50;
    double guidance = 5.0;
};

struct StepLog {
    std::string stage;
    std::size_t step = 0;
    double total = 0, ldm = 0, reg = 0;
};

template <class T>
struct Model {
    RunConfig config;
    data::DatasetSpec spec;
    data::Splits splits;
    textenc::Vocabulary vocab;
    imageenc::ImageEncoder<T> image_encoder;
    diff::Linear<T> image_recon;  // pretraining head: tokens -> patch pixels
    diff::Linear<T> image_proj, text_proj;  // joint image/text space
    imageenc::ImageEncoder<T> dino_encoder;
    diff::Linear<T> dino_recon;
    textenc::TextEncoder<T> text;
    ldm::Autoencoder<T> autoencoder;
    ldm::UNet<T> unet;
    globalmap::GlobalMapper<T> global;
    localmap::LocalMapper<T> local;
    ldm::NoiseSchedule schedule;
    std::vector<std::string> stages;

    explicit Model(const RunConfig& c)
        : config(c),
          spec(dataset_spec(c)),
          splits(data::make_splits(spec, c.num_categories, c.num_heldout)),
          vocab(textenc::Vocabulary::standard(spec)),
          schedule(ldm::NoiseSchedule::cosine(c.schedule_steps)) {
        io::validate(c);
        const auto ie = image_encoder_config(c);
        {
            auto rng = component_rng(c.seed, 0);
            image_encoder = imageenc::ImageEncoder<T>(ie, rng);
            image_recon = diff::Linear<T>(c.enc_dim, ie.patch_dim(), rng);
            image_proj = diff::Linear<T>(c.enc_dim, c.ctx_dim, rng, false);
            text_proj = diff::Linear<T>(c.ctx_dim, c.ctx_dim, rng, false);
        }
        {
            auto rng = component_rng(c.seed, 1);
            dino_encoder = imageenc::ImageEncoder<T>(ie, rng);
            dino_recon = diff::Linear<T>(c.enc_dim, ie.patch_dim(), rng);
        }
        {
            auto rng = component_rng(c.seed, 2);
            text = textenc::TextEncoder<T>(text_encoder_config(c), vocab.size(), rng);
        }
        {
            auto rng = component_rng(c.seed, 3);
            autoencoder = ldm::Autoencoder<T>(autoencoder_config(c), rng);
        }
        {
            auto rng = component_rng(c.seed, 4);
            unet = ldm::UNet<T>(denoiser_config(c), rng);
        }
        {
            auto rng = component_rng(c.seed, 5);
            global = globalmap::GlobalMapper<T>(c.taps, c.enc_dim, c.word_dim, rng);
        }
        {
            auto rng = component_rng(c.seed, 6);
            local = localmap::LocalMapper<T>(c.taps.size(), c.enc_dim, c.ctx_dim, ie.grid(), rng);
        }
    }

    Model(const Model&) = delete;
    Model& operator=(const Model&) = delete;

    diff::ParamList<T> params() const {
        diff::ParamList<T> p;
        image_encoder.collect(p, "image_encoder");
        image_recon.collect(p, "image_recon");
        image_proj.collect(p, "image_proj");
        text_proj.collect(p, "text_proj");
        dino_encoder.collect(p, "dino_encoder");
        dino_recon.collect(p, "dino_recon");
        text.collect(p, "text");
        autoencoder.collect(p, "autoencoder");
        unet.collect(p, "unet");
        global.collect(p, "global");
        local.collect(p, "local");
        return p;
    }

    ldm::DiffusionStack<T> stack() const { return {&vocab, &text, &unet, &schedule}; }

    eval::Embedders<T> embedders() const {
        return {&image_encoder, &dino_encoder, &image_proj, &text_proj, &text, &vocab};
    }

    bool has_stage(const std::string& s) const { return std::find(stages.begin(), stages.end(), s) != stages.end(); }

    void require_stage(const std::string& s, const std::string& command) const {
        if (!has_stage(s))
            throw ConfigError(command + " requires a checkpoint that includes the '" + s + "' stage");
    }

    void mark_stage(const std::string& s) {
        if (!has_stage(s)) stages.push_back(s);
    }

    void save(const std::filesystem::path& stem) const { io::save_checkpoint(stem, params(), config, stages); }

    // Loads weights and stage tags; shape-relevant config keys must match.
    void load(const std::filesystem::path& stem) {
        const auto ck = io::load_checkpoint(stem);
        const auto mine = io::to_json(config);
        for (const auto& k : shape_keys()) {
            if (!ck.config.contains(k) || ck.config.at(k) != mine.at(k))
                throw ConfigError("checkpoint " + stem.string() + " was built with " + k + "=" +
                                  (ck.config.contains(k) ? ck.config.at(k).dump() : std::string("<missing>")) +
                                  ", config has " + mine.at(k).dump());
        }
        io::restore(ck, params());
        stages = ck.stages;
    }

    data::ConceptSample training_sample(std::size_t index) const {
        return data::training_sample(config.seed, index, spec, splits, config.image_size);
    }

    data::ConceptSample concept_sample(std::size_t index, std::size_t variant = 0) const {
        return data::concept_sample(config.seed, index, variant, spec, splits, config.image_size);
    }

    std::string category_name(std::size_t id) const { return data::category_name(spec, id); }

    EncodedConcept<T> encode(const Image& image, const Mask& mask) const {
        diff::NoGradGuard no_grad;
        EncodedConcept<T> e;
        e.words = global.map_global(image_encoder.encode(image));
        e.local = local.map_local(image_encoder, image, mask);
        return e;
    }

    // Text condition for `prompt`; S* is filled from `words` when given.
    ldm::Condition<T> condition(const std::string& prompt, const textenc::WordEmbeddingSet<T>* words,
                                textenc::SpliceMode mode, const localmap::LocalFeatureMap<T>* local_map,
                                double lambda) const {
        diff::NoGradGuard no_grad;
        auto [ctx, pos] = stack().condition(prompt, words, mode);
        return {ctx, pos, local_map, lambda};
    }

    Tensor<T> generate_latent(const textenc::WordEmbeddingSet<T>* words, const localmap::LocalFeatureMap<T>* local_map,
                              const GenerateOptions& opt, ldm::AttentionCapture<T>* capture = nullptr) const {
        if (opt.lambda < 0) throw ConfigError("lambda must be non-negative");
        auto cond = condition(opt.prompt, words, opt.mode, local_map, opt.lambda);
        ldm::Condition<T> uncond;
        {
            diff::NoGradGuard no_grad;
            uncond.ctx = stack().unconditional();
        }
        diff::Rng rng(opt.seed);
        ldm::SamplerConfig sc{opt.steps, opt.guidance};
        return ldm::sample(unet, schedule, cond, uncond, sc, rng, capture);
    }

    Image generate(const textenc::WordEmbeddingSet<T>* words, const localmap::LocalFeatureMap<T>* local_map,
                   const GenerateOptions& opt, ldm::AttentionCapture<T>* capture = nullptr) const {
        diff::NoGradGuard no_grad;
        auto img = autoencoder.decode_latent(generate_latent(words, local_map, opt, capture));
        for (auto& v : img.pixels) v = quantize8(v);
        return img;
    }

    Image generate(const EncodedConcept<T>& enc, const GenerateOptions& opt,
                   ldm::AttentionCapture<T>* capture = nullptr) const {
        return generate(&enc.words, &enc.local, opt, capture);
    }
};

using LogFn = std::function<void(const StepLog&)>;

namespace detail {

inline std::vector<std::size_t> draw_indices(diff::Rng& rng, std::size_t n, std::size_t batch) {
    std::uniform_int_distribution<std::size_t> pick(0, n - 1);
    std::vector<std::size_t> out(batch);
    for (auto& i : out) i = pick(rng);
    return out;
}

template <class T>
Image noisy(const Image& img, diff::Rng& rng, double sigma) {
    Image out = img;
    std::normal_distribution<double> nd(0.0, sigma);
    for (auto& v : out.pixels) v = std::clamp(static_cast<float>(v + nd(rng)), 0.f, 1.f);
    return out;
}

inline void emit(const LogFn& log, std::vector<StepLog>& all, StepLog s) {
    if (log) log(s);
    all.push_back(std::move(s));
}

}  // namespace detail

// Image/text encoders: the shared image encoder and the text encoder learn
// a contrastive joint space over category captions plus patch
// reconstruction; the second image encoder learns denoising reconstruction.
template <class T>
std::vector<StepLog> pretrain_encoders(Model<T>& m, const LogFn& log = {}) {
    const auto& c = m.config;
    diff::ParamList<T> trainable;
    m.image_encoder.collect(trainable, "image_encoder");
    m.image_recon.collect(trainable, "image_recon");
    m.image_proj.collect(trainable, "image_proj");
    m.text_proj.collect(trainable, "text_proj");
    m.text.collect(trainable, "text");
    m.dino_encoder.collect(trainable, "dino_encoder");
    m.dino_recon.collect(trainable, "dino_recon");
    diff::set_trainable(m.params(), false);
    diff::set_trainable(trainable, true);
    diff::Adam<T> opt(diff::tensors_of(trainable), {c.encoder_lr});
    diff::Rng rng(data::item_seed(c.seed, 200, 0));
    const std::size_t ncat = m.splits.train.size();
    const std::size_t reps = std::max<std::size_t>(1, c.num_train_samples / ncat);
    const std::size_t batch = std::min(c.encoder_batch, ncat);
    const auto& ie = m.image_encoder.config;
    std::vector<StepLog> logs;
    for (std::size_t step = 0; step < c.encoder_steps; ++step) {
        // distinct categories per batch so every off-diagonal pair is a negative
        std::vector<std::size_t> cats(ncat);
        std::iota(cats.begin(), cats.end(), 0);
        std::shuffle(cats.begin(), cats.end(), rng);
        std::uniform_int_distribution<std::size_t> pick_rep(0, reps - 1);
        std::vector<Tensor<T>> img_emb, txt_emb;
        Tensor<T> recon;
        for (std::size_t b = 0; b < batch; ++b) {
            const std::size_t index = pick_rep(rng) * ncat + cats[b];
            const auto s = m.training_sample(index);
            const auto caption = textenc::substitute(textenc::sample_template(rng), m.category_name(s.category_id));
            auto taps = m.image_encoder.encode(s.image, {ie.layers});
            auto target = patchify<T>(s.image, ie.patch);
            auto r1 = diff::mse(m.image_recon(taps.grids.front()), target);
            auto dn = m.dino_encoder.encode(detail::noisy<T>(s.image, rng, 0.1), {ie.layers});
            auto r2 = diff::mse(m.dino_recon(dn.grids.front()), target);
            auto r = diff::add(r1, r2);
            recon = recon.defined() ? diff::add(recon, r) : r;
            img_emb.push_back(m.image_proj(taps.pooled.front()));
            txt_emb.push_back(m.text_proj(diff::mean_rows(m.text.encode(textenc::tokenize(caption, m.vocab)))));
        }
        auto zi = diff::l2_normalize_rows(diff::concat_rows(img_emb));
        auto zt = diff::l2_normalize_rows(diff::concat_rows(txt_emb));
        auto logits = diff::scale(diff::matmul_nt(zi, zt), T(10));
        std::vector<std::size_t> diag(batch);
        std::iota(diag.begin(), diag.end(), 0);
        auto contrastive = diff::scale(
            diff::add(diff::cross_entropy_rows(logits, diag), diff::cross_entropy_rows(diff::transpose(logits), diag)),
            T(0.5));
        recon = diff::scale(recon, T(1) / static_cast<T>(batch));
        auto loss = diff::add(contrastive, recon);
        if (!std::isfinite(double(loss.item()))) throw NumericError("encoder pretraining loss is not finite");
        opt.zero_grad();
        diff::backward(loss);
        opt.step();
        detail::emit(log, logs, {kStageEncoders, step, double(loss.item()), double(contrastive.item()), double(recon.item())});
    }
    diff::set_trainable(trainable, false);
    m.mark_stage(kStageEncoders);
    return logs;
}

// Pixel autoencoder, then the latent scale that brings latents to unit
// standard deviation.
template <class T>
std::vector<StepLog> train_autoencoder(Model<T>& m, const LogFn& log = {}) {
    const auto& c = m.config;
    diff::ParamList<T> trainable;
    m.autoencoder.collect(trainable, "autoencoder");
    trainable.pop_back();  // latent_scale is set from statistics, not trained
    diff::set_trainable(m.params(), false);
    diff::set_trainable(trainable, true);
    diff::Adam<T> opt(diff::tensors_of(trainable), {c.ae_lr});
    diff::Rng rng(data::item_seed(c.seed, 201, 0));
    Tensor<T> scale = m.autoencoder.latent_scale;
    scale.data()[0] = T(1);
    std::vector<StepLog> logs;
    for (std::size_t step = 0; step < c.ae_steps; ++step) {
        Tensor<T> rec, kl;
        for (auto i : detail::draw_indices(rng, c.num_train_samples, c.ae_batch)) {
            const auto s = m.training_sample(i);
            auto z = m.autoencoder.encode_raw(s.image);
            auto r = diff::mse(m.autoencoder.decode_raw(z), patchify<T>(s.image, c.latent_factor));
            auto k = diff::mean(diff::square(z));
            rec = rec.defined() ? diff::add(rec, r) : r;
            kl = kl.defined() ? diff::add(kl, k) : k;
        }
        const T inv = T(1) / static_cast<T>(c.ae_batch);
        rec = diff::scale(rec, inv);
        kl = diff::scale(kl, inv);
        auto loss = diff::add(rec, diff::scale(kl, T(1e-4)));
        if (!std::isfinite(double(loss.item()))) throw NumericError("autoencoder loss is not finite");
        opt.zero_grad();
        diff::backward(loss);
        opt.step();
        detail::emit(log, logs, {kStageAutoencoder, step, double(loss.item()), double(rec.item()), double(kl.item())});
    }
    diff::set_trainable(trainable, false);
    {
        diff::NoGradGuard no_grad;
        double sum = 0, sq = 0;
        std::size_t n = 0;
        const std::size_t count = std::min<std::size_t>(256, c.num_train_samples);
        for (std::size_t i = 0; i < count; ++i) {
            auto z = m.autoencoder.encode_raw(m.training_sample(i).image);
            for (T v : z.data()) {
                sum += double(v);
                sq += double(v) * double(v);
                ++n;
            }
        }
        const double var = sq / double(n) - (sum / double(n)) * (sum / double(n));
        scale.data()[0] = static_cast<T>(var > 0 ? 1.0 / std::sqrt(var) : 1.0);
    }
    m.mark_stage(kStageAutoencoder);
    return logs;
}

// Frozen-encoder outputs for the first `count` training samples.
template <class T>
std::vector<ldm::TrainingItem<T>> build_items(const Model<T>& m, std::size_t count, bool pooled, bool local) {
    diff::NoGradGuard no_grad;
    std::vector<ldm::TrainingItem<T>> items(count);
    for (std::size_t i = 0; i < count; ++i) {
        const auto s = m.training_sample(i);
        auto& it = items[i];
        it.category_id = s.category_id;
        it.latent = m.autoencoder.encode_latent(s.image);
        if (pooled) it.pooled = m.image_encoder.encode(s.image).pooled;
        if (local) {
            it.local_taps = localmap::stack_taps(m.image_encoder.encode(apply_mask(s.image, s.mask)));
            it.mask_grid = localmap::downsample_mask<T>(s.mask, m.local.side);
        }
    }
    return items;
}

template <class T>
std::vector<const ldm::TrainingItem<T>*> gather(const std::vector<ldm::TrainingItem<T>>& items,
                                                const std::vector<std::size_t>& idx) {
    std::vector<const ldm::TrainingItem<T>*> out;
    out.reserve(idx.size());
    for (auto i : idx) out.push_back(&items[i]);
    return out;
}

// Text-conditioned denoiser on category captions with caption dropout for
// classifier-free guidance. The local K/V projections stay untouched.
template <class T>
std::vector<StepLog> train_backbone(Model<T>& m, const LogFn& log = {}) {
    const auto& c = m.config;
    diff::ParamList<T> all_unet;
    m.unet.collect(all_unet, "unet");
    diff::ParamList<T> trainable;
    for (auto& p : all_unet)
        if (p.first.find(".wk_l") == std::string::npos && p.first.find(".wv_l") == std::string::npos)
            trainable.push_back(p);
    diff::set_trainable(m.params(), false);
    diff::set_trainable(trainable, true);
    diff::Adam<T> opt(diff::tensors_of(trainable), {c.backbone_lr});
    const auto items = build_items(m, c.num_train_samples, false, false);
    diff::Rng rng(data::item_seed(c.seed, 202, 0));
    std::bernoulli_distribution drop(c.caption_dropout);
    const auto stack = m.stack();
    Tensor<T> uncond;
    {
        diff::NoGradGuard no_grad;
        uncond = stack.unconditional();
    }
    std::vector<StepLog> logs;
    for (std::size_t step = 0; step < c.backbone_steps; ++step) {
        const auto idx = detail::draw_indices(rng, items.size(), c.backbone_batch);
        std::vector<Tensor<T>> latents;
        std::vector<ldm::Condition<T>> conds;
        for (auto i : idx) {
            latents.push_back(items[i].latent);
            const auto& tpl = textenc::sample_template(rng);
            if (drop(rng)) {
                conds.push_back({uncond, std::nullopt, nullptr, 0.0});
            } else {
                diff::NoGradGuard no_grad;
                const auto caption = textenc::substitute(tpl, m.category_name(items[i].category_id));
                conds.push_back({m.text.encode(textenc::tokenize(caption, m.vocab)), std::nullopt, nullptr, 0.0});
            }
        }
        auto loss = ldm::ldm_loss<T>(latents, rng, m.schedule, [&](const Tensor<T>& zt, std::size_t t, std::size_t i) {
            return m.unet(zt, t, conds[i]);
        });
        if (!std::isfinite(double(loss.item()))) throw NumericError("backbone loss is not finite");
        opt.zero_grad();
        diff::backward(loss);
        opt.step();
        detail::emit(log, logs, {kStageBackbone, step, double(loss.item()), double(loss.item()), 0.0});
    }
    diff::set_trainable(trainable, false);
    m.mark_stage(kStageBackbone);
    return logs;
}

// Stage 1: global mapper heads and global K/V projections.
template <class T>
std::vector<StepLog> train_global(Model<T>& m, const LogFn& log = {}) {
    const auto& c = m.config;
    m.require_stage(kStageBackbone, "train-global");
    const auto items = build_items(m, c.num_train_samples, true, false);
    const auto stack = m.stack();
    globalmap::GlobalTrainer<T> trainer(m.global, stack, {c.global_lr},
                                        {c.lambda_global, c.regularize_auxiliary_only});
    diff::Rng rng(data::item_seed(c.seed, 203, 0));
    std::vector<StepLog> logs;
    for (std::size_t step = 0; step < c.global_steps; ++step) {
        const auto batch = gather(items, detail::draw_indices(rng, items.size(), c.global_batch));
        auto loss = trainer.step(batch, rng);
        detail::emit(log, logs, {kStageGlobal, step, double(loss.total.item()), double(loss.ldm), double(loss.reg)});
    }
    diff::set_trainable(m.params(), false);
    m.mark_stage(kStageGlobal);
    return logs;
}

// Stage 2: local mapper and local K/V projections, which start as copies of
// the trained global projections.
template <class T>
std::vector<StepLog> train_local(Model<T>& m, const LogFn& log = {}) {
    const auto& c = m.config;
    if (!m.has_stage(kStageGlobal)) throw ConfigError("train-local requires a stage-1 (train-global) checkpoint");
    m.unet.init_local_from_global();
    const auto items = build_items(m, c.num_train_samples, true, true);
    const auto stack = m.stack();
    localmap::LocalTrainer<T> trainer(m.local, &m.global, stack, {c.local_lr}, {c.lambda_local});
    diff::Rng rng(data::item_seed(c.seed, 204, 0));
    std::vector<StepLog> logs;
    for (std::size_t step = 0; step < c.local_steps; ++step) {
        const auto batch = gather(items, detail::draw_indices(rng, items.size(), c.local_batch));
        auto loss = trainer.step(batch, rng);
        detail::emit(log, logs, {kStageLocal, step, double(loss.total.item()), double(loss.ldm), double(loss.reg)});
    }
    diff::set_trainable(m.params(), false);
    m.mark_stage(kStageLocal);
    return logs;
}

// Random primary word with the same per-entry RMS as `reference`.
template <class T>
textenc::WordEmbeddingSet<T> random_words(const textenc::WordEmbeddingSet<T>& reference, std::uint64_t seed) {
    diff::Rng rng(seed);
    auto w0 = diff::slice_rows(reference.words, 0, 1).detach();
    double sq = 0;
    for (T v : w0.data()) sq += double(v) * double(v);
    const double rms = std::sqrt(sq / double(w0.numel()));
    return {Tensor<T>::randn(w0.shape(), rng, static_cast<T>(rms > 0 ? rms : 1.0)), {}};
}

struct EvalOptions {
    std::vector<double> lambdas = {0.0, 0.4, 0.8};
    std::size_t concepts = 20;
    std::size_t seeds = 5;
    std::string fidelity_prompt = "a photo of a S*";
    std::vector<std::string> prompts = textenc::evaluation_prompts();
    bool random_baseline = true;
    std::size_t steps = 50;
    double guidance = 5.0;
};

// Per held-out concept: metrics per lambda (mean over seeds for clip_i and
// dino_i, mean over prompts for clip_t) plus the random-word baseline.
struct ConceptEval {
    std::string name;
    std::vector<double> clip_i, dino_i, clip_t;  // indexed like EvalOptions::lambdas
    double clip_i_random = 0;
};

struct PromptRecord {
    std::string concept_name, prompt;
    double lambda = 0, clip_t = 0, clip_i = 0;
};

template <class T>
std::vector<ConceptEval> evaluate_concepts(const Model<T>& m, const EvalOptions& opt,
                                           std::vector<PromptRecord>* records = nullptr) {
    const auto emb = m.embedders();
    std::vector<ConceptEval> out;
    const std::size_t n = std::min(opt.concepts, m.splits.heldout.size());
    for (std::size_t ci = 0; ci < n; ++ci) {
        const auto sample = m.concept_sample(ci);
        const auto name = m.category_name(sample.category_id);
        const auto enc = m.encode(sample.image, sample.mask);
        ConceptEval ce;
        ce.name = name;
        for (double lam : opt.lambdas) {
            std::vector<double> ci_vals, di_vals, ct_vals;
            for (std::size_t s = 0; s < opt.seeds; ++s) {
                GenerateOptions g{opt.fidelity_prompt, lam, textenc::SpliceMode::PrimaryOnly, s, opt.steps, opt.guidance};
                const auto img = m.generate(enc, g);
                ci_vals.push_back(eval::clip_i(emb, img, sample.image));
                di_vals.push_back(eval::dino_i(emb, img, sample.image));
            }
            for (std::size_t p = 0; p < opt.prompts.size(); ++p) {
                GenerateOptions g{opt.prompts[p], lam, textenc::SpliceMode::PrimaryOnly, 1000 + p, opt.steps,
                                  opt.guidance};
                const auto img = m.generate(enc, g);
                const double ct = eval::clip_t(emb, img, opt.prompts[p], name);
                ct_vals.push_back(ct);
                if (records) records->push_back({name, opt.prompts[p], lam, ct, eval::clip_i(emb, img, sample.image)});
            }
            ce.clip_i.push_back(eval::mean(ci_vals));
            ce.dino_i.push_back(eval::mean(di_vals));
            ce.clip_t.push_back(eval::mean(ct_vals));
        }
        if (opt.random_baseline) {
            std::vector<double> vals;
            for (std::size_t s = 0; s < opt.seeds; ++s) {
                const auto rw = random_words(enc.words, data::item_seed(m.config.seed, 300 + ci, s));
                GenerateOptions g{opt.fidelity_prompt, 0.0, textenc::SpliceMode::PrimaryOnly, s, opt.steps, opt.guidance};
                vals.push_back(eval::clip_i(emb, m.generate(&rw, nullptr, g), sample.image));
            }
            ce.clip_i_random = eval::mean(vals);
        }
        out.push_back(std::move(ce));
    }
    return out;
}

// Encoder forward time against optimization-based inversion on the same
// model, both on concept `index`.
template <class T>
std::pair<double, double> benchmark_encoding(const Model<T>& m, std::size_t index, std::size_t baseline_steps,
                                             std::size_t encode_repeats = 20) {
    const auto sample = m.concept_sample(index);
    const double encode_ms = eval::time_ms([&] { (void)m.encode(sample.image, sample.mask); }, encode_repeats);
    Tensor<T> latent;
    {
        diff::NoGradGuard no_grad;
        latent = m.autoencoder.encode_latent(sample.image);
    }
    const auto cat = data::category_of(m.spec, sample.category_id);
    const auto init = m.text.lookup({m.vocab.id(m.spec.shapes[cat.shape].name)});
    const auto res = eval::invert_baseline(latent, init, m.stack(), {baseline_steps, m.config.baseline_lr},
                                           data::item_seed(m.config.seed, 400, index));
    return {encode_ms, res.wall_ms};
}

}  // namespace elite::pipeline

#endif  // ELITE_LAB_PIPELINE_HPP

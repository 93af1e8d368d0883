#ifndef ELITE_LAB_IO_CONFIG_HPP
#define ELITE_LAB_IO_CONFIG_HPP

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <set>
#include <string>
#include <type_traits>
#include <vector>

#include <json.hpp>

#include "elite_lab/errors.hpp"

namespace elite::io {

using Json = nlohmann::ordered_json;

// Every knob of a run. Defaults carry the reference hyperparameters; the
// desk-scale config in configs/ shrinks step counts and raises the rates.
struct RunConfig {
    std::uint64_t seed = 0;

    // data
    std::size_t canvas = 96;
    std::size_t image_size = 64;
    std::size_t num_categories = 60;
    std::size_t num_heldout = 20;
    std::size_t num_train_samples = 2000;
    double min_radius = 0.18;
    double max_radius = 0.32;
    double min_color_distance = 0.35;
    double noise = 0.02;

    // image encoder
    std::size_t patch = 8;
    std::size_t enc_dim = 64;
    std::size_t enc_layers = 6;
    std::size_t enc_mlp_hidden = 128;
    std::vector<std::size_t> taps = {6, 1, 2, 3, 4};

    // text encoder
    std::size_t word_dim = 64;
    std::size_t ctx_dim = 64;
    std::size_t text_layers = 2;
    std::size_t text_mlp_hidden = 128;
    std::size_t max_length = 32;

    // autoencoder and denoiser
    std::size_t latent_factor = 4;
    std::size_t latent_channels = 4;
    std::size_t ae_hidden = 64;
    std::size_t unet_ch1 = 32;
    std::size_t unet_ch2 = 64;
    std::size_t attn_dim = 64;
    std::size_t time_dim = 64;
    std::size_t schedule_steps = 1000;
    std::string local_blocks = "all";  // all | deepest
    bool reweight_local = true;
    bool average_reweight_maps = false;

    // pretraining of the frozen components
    std::size_t encoder_steps = 600;
    std::size_t encoder_batch = 16;
    double encoder_lr = 1e-3;
    std::size_t ae_steps = 800;
    std::size_t ae_batch = 16;
    double ae_lr = 2e-3;
    std::size_t backbone_steps = 3000;
    std::size_t backbone_batch = 16;
    double backbone_lr = 1e-3;
    double caption_dropout = 0.1;

    // stage 1
    std::size_t global_steps = 3000;
    std::size_t global_batch = 16;
    double global_lr = 1e-6;
    double lambda_global = 0.01;
    bool regularize_auxiliary_only = false;

    // stage 2
    std::size_t local_steps = 1000;
    std::size_t local_batch = 8;
    double local_lr = 1e-5;
    double lambda_local = 0.0001;

    // sampling and inference
    std::size_t sample_steps = 50;
    double guidance_scale = 5.0;
    double lambda_generation = 0.8;
    double lambda_editing = 0.6;

    // evaluation
    std::size_t eval_samples = 200;
    std::size_t eval_seeds = 5;
    std::size_t baseline_steps = 500;
    double baseline_lr = 5e-3;

    // paths, relative to the working directory
    std::string data_dir = "data";
    std::string checkpoint_dir = "checkpoints";
    std::string output_dir = "out";

    // Applies `f(key, member)` to every field in declaration order.
    template <class Self, class F>
    static void visit(Self& c, F&& f) {
        f("seed", c.seed);
        f("canvas", c.canvas);
        f("image_size", c.image_size);
        f("num_categories", c.num_categories);
        f("num_heldout", c.num_heldout);
        f("num_train_samples", c.num_train_samples);
        f("min_radius", c.min_radius);
        f("max_radius", c.max_radius);
        f("min_color_distance", c.min_color_distance);
        f("noise", c.noise);
        f("patch", c.patch);
        f("enc_dim", c.enc_dim);
        f("enc_layers", c.enc_layers);
        f("enc_mlp_hidden", c.enc_mlp_hidden);
        f("taps", c.taps);
        f("word_dim", c.word_dim);
        f("ctx_dim", c.ctx_dim);
        f("text_layers", c.text_layers);
        f("text_mlp_hidden", c.text_mlp_hidden);
        f("max_length", c.max_length);
        f("latent_factor", c.latent_factor);
        f("latent_channels", c.latent_channels);
        f("ae_hidden", c.ae_hidden);
        f("unet_ch1", c.unet_ch1);
        f("unet_ch2", c.unet_ch2);
        f("attn_dim", c.attn_dim);
        f("time_dim", c.time_dim);
        f("schedule_steps", c.schedule_steps);
        f("local_blocks", c.local_blocks);
        f("reweight_local", c.reweight_local);
        f("average_reweight_maps", c.average_reweight_maps);
        f("encoder_steps", c.encoder_steps);
        f("encoder_batch", c.encoder_batch);
        f("encoder_lr", c.encoder_lr);
        f("ae_steps", c.ae_steps);
        f("ae_batch", c.ae_batch);
        f("ae_lr", c.ae_lr);
        f("backbone_steps", c.backbone_steps);
        f("backbone_batch", c.backbone_batch);
        f("backbone_lr", c.backbone_lr);
        f("caption_dropout", c.caption_dropout);
        f("global_steps", c.global_steps);
        f("global_batch", c.global_batch);
        f("global_lr", c.global_lr);
        f("lambda_global", c.lambda_global);
        f("regularize_auxiliary_only", c.regularize_auxiliary_only);
        f("local_steps", c.local_steps);
        f("local_batch", c.local_batch);
        f("local_lr", c.local_lr);
        f("lambda_local", c.lambda_local);
        f("sample_steps", c.sample_steps);
        f("guidance_scale", c.guidance_scale);
        f("lambda_generation", c.lambda_generation);
        f("lambda_editing", c.lambda_editing);
        f("eval_samples", c.eval_samples);
        f("eval_seeds", c.eval_seeds);
        f("baseline_steps", c.baseline_steps);
        f("baseline_lr", c.baseline_lr);
        f("data_dir", c.data_dir);
        f("checkpoint_dir", c.checkpoint_dir);
        f("output_dir", c.output_dir);
    }

    bool operator==(const RunConfig&) const = default;
};

namespace detail {

template <class V>
void read_value(const Json& j, const std::string& key, V& out) {
    try {
        if constexpr (std::is_same_v<V, bool>) {
            if (!j.is_boolean()) throw ConfigError("");
        } else if constexpr (std::is_same_v<V, std::string>) {
            if (!j.is_string()) throw ConfigError("");
        } else if constexpr (std::is_floating_point_v<V>) {
            if (!j.is_number()) throw ConfigError("");
        } else if constexpr (std::is_integral_v<V>) {
            if (!j.is_number_unsigned() && !(j.is_number_integer() && j.get<long long>() >= 0)) throw ConfigError("");
        } else {
            if (!j.is_array()) throw ConfigError("");
            for (const auto& e : j)
                if (!e.is_number_unsigned()) throw ConfigError("");
        }
        out = j.get<V>();
    } catch (const ConfigError&) {
        throw ConfigError("config key '" + key + "' has the wrong type");
    }
}

}  // namespace detail

inline void validate(const RunConfig& c) {
    const std::pair<const char*, double> nonneg[] = {
        {"lambda_global", c.lambda_global}, {"lambda_local", c.lambda_local},
        {"lambda_generation", c.lambda_generation}, {"lambda_editing", c.lambda_editing},
        {"global_lr", c.global_lr}, {"local_lr", c.local_lr}, {"encoder_lr", c.encoder_lr},
        {"ae_lr", c.ae_lr}, {"backbone_lr", c.backbone_lr}, {"baseline_lr", c.baseline_lr},
        {"guidance_scale", c.guidance_scale}, {"caption_dropout", c.caption_dropout}, {"noise", c.noise}};
    for (const auto& [key, v] : nonneg)
        if (!(v >= 0)) throw ConfigError(std::string("negative weight: '") + key + "' must be non-negative");
    if (c.caption_dropout > 1) throw ConfigError("caption_dropout must be at most 1");
    if (c.local_blocks != "all" && c.local_blocks != "deepest")
        throw ConfigError("local_blocks must be 'all' or 'deepest'");
    if (c.global_batch == 0 || c.local_batch == 0 || c.encoder_batch == 0 || c.ae_batch == 0 || c.backbone_batch == 0)
        throw ConfigError("batch sizes must be positive");
    if (c.image_size % c.latent_factor || (c.image_size / c.latent_factor) % 2)
        throw ConfigError("image_size / latent_factor must be an even integer");
    if (c.sample_steps == 0 || c.sample_steps > c.schedule_steps)
        throw ConfigError("sample_steps must lie in 1..schedule_steps");
}

inline Json to_json(const RunConfig& c) {
    Json j = Json::object();
    RunConfig::visit(c, [&](const char* key, const auto& v) { j[key] = v; });
    return j;
}

// Unknown keys are rejected; missing keys keep their defaults.
inline RunConfig config_from_json(const Json& j) {
    if (!j.is_object()) throw ConfigError("config must be a JSON object");
    RunConfig c;
    std::set<std::string> known;
    RunConfig::visit(c, [&](const char* key, auto& v) {
        known.insert(key);
        if (auto it = j.find(key); it != j.end()) detail::read_value(*it, key, v);
    });
    for (const auto& [key, v] : j.items())
        if (!known.count(key)) throw ConfigError("unknown config key '" + key + "'");
    validate(c);
    return c;
}

inline RunConfig parse_config(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config " + path.string());
    Json j;
    try {
        j = Json::parse(in);
    } catch (const nlohmann::json::parse_error& e) {
        throw ConfigError("invalid JSON in " + path.string() + ": " + e.what());
    }
    return config_from_json(j);
}

}  // namespace elite::io

#endif  // ELITE_LAB_IO_CONFIG_HPP

#include <CLI11.hpp>

#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>

#include "elite_lab/elite_lab.hpp"

using namespace elite;
namespace fs = std::filesystem;
using Json = io::Json;
using Model = pipeline::Model<float>;

namespace {

struct Options {
    std::string config;
    std::optional<std::uint64_t> seed;
    std::string out;
    std::string ckpt;
    std::optional<double> lambda;
    std::string mode = "primary";
    std::optional<std::size_t> steps;
    std::optional<double> guidance;
    std::string image, mask;
    std::optional<std::size_t> index;
    std::string concept_file;
    std::string prompt = "a photo of a S*";
    std::string name;
    std::string init_word;
    bool no_local = false;
    std::optional<std::size_t> concepts, eval_seeds, baseline_steps;
};

io::RunConfig load_config(const Options& o) {
    io::RunConfig c = o.config.empty() ? io::RunConfig{} : io::parse_config(o.config);
    return c;
}

fs::path out_dir(const Options& o, const io::RunConfig& c) {
    fs::path p = o.out.empty() ? fs::path(c.output_dir) : fs::path(o.out);
    fs::create_directories(p);
    return p;
}

fs::path stage_stem(const io::RunConfig& c, const std::string& stage) { return fs::path(c.checkpoint_dir) / stage; }

bool stem_exists(const fs::path& stem) { return fs::exists(io::manifest_path(stem)); }

// --ckpt, else the most advanced stage present in checkpoint_dir.
fs::path resolve_checkpoint(const Options& o, const io::RunConfig& c, const std::string& command) {
    if (!o.ckpt.empty()) return o.ckpt;
    const auto& order = pipeline::stage_order();
    for (auto it = order.rbegin(); it != order.rend(); ++it)
        if (stem_exists(stage_stem(c, *it))) return stage_stem(c, *it);
    throw ConfigError(command + ": no checkpoint found in " + c.checkpoint_dir);
}

void write_text(const fs::path& p, const std::string& s) { io::detail::write_atomic(p, s); }

pipeline::LogFn jsonl_logger(std::ofstream& log) {
    return [&log](const pipeline::StepLog& s) {
        Json j{{"stage", s.stage}, {"step", s.step}, {"total", s.total}, {"ldm", s.ldm}, {"reg", s.reg}};
        log << j.dump() << '\n';
        if ((s.step + 1) % 100 == 0) std::cerr << s.stage << " step " << s.step + 1 << " ldm " << s.ldm << '\n';
    };
}

// One training stage: load the prerequisite, train, save checkpoint_dir/<stage>.
template <class Fn>
int run_stage(const Options& o, const std::string& stage, const char* prerequisite, const std::string& command, Fn train) {
    auto c = load_config(o);
    if (o.seed) c.seed = *o.seed;
    Model m(c);
    if (prerequisite) {
        const fs::path stem = o.ckpt.empty() ? stage_stem(c, prerequisite) : fs::path(o.ckpt);
        if (!stem_exists(stem))
            throw ConfigError(command + " requires the '" + prerequisite + "' checkpoint (" +
                              io::manifest_path(stem).string() + " not found)");
        m.load(stem);
        m.require_stage(prerequisite, command);
    }
    fs::create_directories(c.checkpoint_dir);
    const auto stem = stage_stem(c, stage);
    const auto log_path = fs::path(stem.string() + ".losses.jsonl");
    {
        std::ofstream log(log_path.string() + ".tmp", std::ios::trunc);
        train(m, jsonl_logger(log));
    }
    fs::rename(log_path.string() + ".tmp", log_path);
    m.save(stem);
    std::cout << "saved " << io::manifest_path(stem).string() << '\n';
    return 0;
}

Json tensor_json(const diff::Tensor<float>& t) {
    return {{"shape", t.shape()}, {"data", t.to_vector()}};
}

diff::Tensor<float> tensor_from(const Json& j) {
    return diff::Tensor<float>(j.at("shape").get<diff::Shape>(), j.at("data").get<std::vector<float>>());
}

Json concept_json(const pipeline::EncodedConcept<float>& e) {
    return {{"format", "elite-lab-concept"},
            {"words", tensor_json(e.words.words)},
            {"tap_layer_ids", e.words.tap_layer_ids},
            {"local", {{"side", e.local.side}, {"grid", tensor_json(e.local.grid)}, {"mask", tensor_json(e.local.mask)}}}};
}

pipeline::EncodedConcept<float> concept_from(const fs::path& p) {
    std::ifstream in(p);
    if (!in) throw ConfigError("cannot open concept file " + p.string());
    Json j;
    try {
        j = Json::parse(in);
        pipeline::EncodedConcept<float> e;
        e.words.words = tensor_from(j.at("words"));
        e.words.tap_layer_ids = j.at("tap_layer_ids").get<std::vector<std::size_t>>();
        e.local.side = j.at("local").at("side").get<std::size_t>();
        e.local.grid = tensor_from(j.at("local").at("grid"));
        e.local.mask = tensor_from(j.at("local").at("mask"));
        return e;
    } catch (const nlohmann::json::exception& ex) {
        throw ConfigError("malformed concept file " + p.string() + ": " + ex.what());
    }
}

struct ConceptInput {
    Image image;
    Mask mask;
    std::optional<std::size_t> category_id;
    std::string source;
};

std::optional<ConceptInput> concept_input(const Options& o, const Model& m) {
    if (!o.image.empty()) {
        ConceptInput ci{io::read_png(o.image), {}, std::nullopt, o.image};
        ci.mask = o.mask.empty() ? Mask(ci.image.height, ci.image.width, 1) : io::read_mask_png(o.mask);
        return ci;
    }
    if (o.index) {
        auto s = m.concept_sample(*o.index);
        return ConceptInput{s.image, s.mask, s.category_id, "heldout:" + std::to_string(*o.index)};
    }
    return std::nullopt;
}

// Concept from --concept, --image/--mask or --index; none when no source is given.
std::optional<pipeline::EncodedConcept<float>> load_concept(const Options& o, const Model& m, std::string& source) {
    if (!o.concept_file.empty()) {
        source = o.concept_file;
        return concept_from(o.concept_file);
    }
    if (auto ci = concept_input(o, m)) {
        source = ci->source;
        return m.encode(ci->image, ci->mask);
    }
    return std::nullopt;
}

textenc::SpliceMode parse_mode(const std::string& s) {
    if (s == "primary") return textenc::SpliceMode::PrimaryOnly;
    if (s == "full") return textenc::SpliceMode::Full;
    throw ConfigError("--mode must be 'primary' or 'full'");
}

pipeline::GenerateOptions generate_options(const Options& o, const io::RunConfig& c) {
    pipeline::GenerateOptions g;
    g.prompt = o.prompt;
    g.lambda = o.lambda.value_or(c.lambda_generation);
    g.mode = parse_mode(o.mode);
    g.seed = o.seed.value_or(c.seed);
    g.steps = o.steps.value_or(c.sample_steps);
    g.guidance = o.guidance.value_or(c.guidance_scale);
    if (g.lambda < 0) throw ConfigError("negative weight: --lambda must be non-negative");
    if (g.guidance < 0) throw ConfigError("negative weight: --guidance must be non-negative");
    return g;
}

std::string stem_name(const Options& o, const std::string& fallback) { return o.name.empty() ? fallback : o.name; }

int cmd_gen_data(const Options& o) {
    auto c = load_config(o);
    if (o.seed) c.seed = *o.seed;
    const auto spec = pipeline::dataset_spec(c);
    const auto splits = data::make_splits(spec, c.num_categories, c.num_heldout);
    const fs::path root = o.out.empty() ? fs::path(c.data_dir) : fs::path(o.out);
    fs::create_directories(root / "train");
    fs::create_directories(root / "concepts");
    std::string index;
    auto emit = [&](const char* split, std::size_t i, const data::ConceptSample& s, const fs::path& dir) {
        char buf[16];
        std::snprintf(buf, sizeof buf, "%06zu", i);
        io::write_png(dir / (std::string(buf) + ".png"), s.image);
        io::write_mask_png(dir / (std::string(buf) + "_mask.png"), s.mask);
        index += Json{{"split", split},
                      {"index", i},
                      {"category_id", s.category_id},
                      {"category", data::category_name(spec, s.category_id)},
                      {"image", (dir.filename() / (std::string(buf) + ".png")).string()},
                      {"mask", (dir.filename() / (std::string(buf) + "_mask.png")).string()}}
                     .dump() +
                 '\n';
    };
    for (std::size_t i = 0; i < c.num_train_samples; ++i)
        emit("train", i, data::training_sample(c.seed, i, spec, splits, c.image_size), root / "train");
    for (std::size_t i = 0; i < splits.heldout.size(); ++i)
        emit("heldout", i, data::concept_sample(c.seed, i, 0, spec, splits, c.image_size), root / "concepts");
    write_text(root / "index.jsonl", index);
    std::cout << "wrote " << c.num_train_samples << " training and " << splits.heldout.size() << " held-out samples to "
              << root.string() << '\n';
    return 0;
}

int cmd_encode(const Options& o) {
    auto c = load_config(o);
    const auto stem = resolve_checkpoint(o, c, "encode");
    Model m(c);
    m.load(stem);
    m.require_stage(pipeline::kStageGlobal, "encode");
    auto ci = concept_input(o, m);
    if (!ci) throw ConfigError("encode needs --image (with optional --mask) or --index");
    const auto e = m.encode(ci->image, ci->mask);
    const auto dir = out_dir(o, c);
    const auto path = dir / (stem_name(o, "concept") + ".json");
    auto j = concept_json(e);
    j["source"] = ci->source;
    j["checkpoint"] = stem.string();
    write_text(path, j.dump() + "\n");
    std::cout << "wrote " << path.string() << " (" << e.words.count() << " words)\n";
    return 0;
}

int cmd_generate(const Options& o) {
    auto c = load_config(o);
    const auto stem = resolve_checkpoint(o, c, "generate");
    Model m(c);
    m.load(stem);
    m.require_stage(pipeline::kStageBackbone, "generate");
    const auto g = generate_options(o, c);
    std::string source;
    auto e = load_concept(o, m, source);
    if (e) m.require_stage(pipeline::kStageGlobal, "generate with a concept");
    const bool use_local = e && !o.no_local && m.has_stage(pipeline::kStageLocal);
    const auto img = e ? m.generate(&e->words, use_local ? &e->local : nullptr, g) : m.generate(nullptr, nullptr, g);
    const auto dir = out_dir(o, c);
    const auto name = stem_name(o, "generated");
    io::write_png(dir / (name + ".png"), img);
    Json meta{{"image", name + ".png"},
              {"prompt", g.prompt},
              {"lambda", g.lambda},
              {"mode", o.mode},
              {"seed", g.seed},
              {"steps", g.steps},
              {"guidance", g.guidance},
              {"concept", source},
              {"local_mapper", use_local},
              {"checkpoint", stem.string()},
              {"stages", m.stages}};
    write_text(dir / (name + ".json"), meta.dump(2) + "\n");
    std::cout << "wrote " << (dir / (name + ".png")).string() << '\n';
    return 0;
}

int cmd_attn_map(const Options& o) {
    auto c = load_config(o);
    const auto stem = resolve_checkpoint(o, c, "attn-map");
    Model m(c);
    m.load(stem);
    m.require_stage(pipeline::kStageGlobal, "attn-map");
    auto g = generate_options(o, c);
    std::string source;
    auto e = load_concept(o, m, source);
    if (!e) throw ConfigError("attn-map needs a concept (--concept, --image or --index)");
    const bool use_local = !o.no_local && m.has_stage(pipeline::kStageLocal);
    ldm::AttentionCapture<float> cap;
    const auto img = m.generate(&e->words, use_local ? &e->local : nullptr, g, &cap);
    const auto cond = m.condition(g.prompt, &e->words, g.mode, nullptr, 0.0);
    const std::size_t pos = *cond.primary_position;
    const std::size_t words = g.mode == textenc::SpliceMode::Full ? e->words.count() : 1;
    const std::size_t side = m.unet.config.side;
    const auto dir = out_dir(o, c);
    const auto name = stem_name(o, "attn");
    io::write_png(dir / (name + "_image.png"), img);
    // Average over sampler steps and blocks at the finest block resolution.
    Json index = Json::array();
    for (std::size_t w = 0; w < words; ++w) {
        std::vector<double> acc(side * side, 0.0);
        for (std::size_t k = 0; k < cap.global_maps.size(); ++k) {
            const auto& a = cap.global_maps[k];
            const std::size_t s = cap.sides[k], up = side / s;
            for (std::size_t y = 0; y < side; ++y)
                for (std::size_t x = 0; x < side; ++x) acc[y * side + x] += a.at((y / up) * s + x / up, pos + w);
        }
        for (auto& v : acc) v /= static_cast<double>(cap.global_maps.size());
        const auto file = name + "_word" + std::to_string(w) + ".png";
        io::write_heatmap_png(dir / file, acc, side, side);
        index.push_back({{"word", w}, {"file", file}, {"tap_layer", e->words.tap_layer_ids.empty() ? 0 : e->words.tap_layer_ids[w]}});
    }
    write_text(dir / (name + ".json"),
               Json{{"prompt", g.prompt}, {"mode", o.mode}, {"seed", g.seed}, {"concept", source}, {"maps", index}}.dump(2) +
                   "\n");
    std::cout << "wrote " << words << " attention maps to " << dir.string() << '\n';
    return 0;
}

int cmd_invert(const Options& o) {
    auto c = load_config(o);
    const auto stem = resolve_checkpoint(o, c, "invert-baseline");
    Model m(c);
    m.load(stem);
    m.require_stage(pipeline::kStageBackbone, "invert-baseline");
    Options src = o;
    if (src.image.empty() && !src.index) src.index = 0;
    auto ci = concept_input(src, m);
    std::string init_word = o.init_word;
    if (init_word.empty() && ci->category_id)
        init_word = m.spec.shapes[data::category_of(m.spec, *ci->category_id).shape].name;
    if (init_word.empty()) throw ConfigError("invert-baseline with --image needs --init-word");
    diff::Tensor<float> latent, init;
    {
        diff::NoGradGuard no_grad;
        latent = m.autoencoder.encode_latent(ci->image);
        init = m.text.lookup({m.vocab.id(init_word)});
    }
    const std::size_t steps = o.steps.value_or(c.baseline_steps);
    const auto res = eval::invert_baseline(latent, init, m.stack(), {steps, c.baseline_lr}, o.seed.value_or(c.seed));
    const auto dir = out_dir(o, c);
    const auto name = stem_name(o, "inversion");
    textenc::WordEmbeddingSet<float> v{res.embedding, {}};
    pipeline::GenerateOptions g{"a photo of a S*", 0.0, textenc::SpliceMode::PrimaryOnly, o.seed.value_or(c.seed),
                                c.sample_steps, o.guidance.value_or(c.guidance_scale)};
    io::write_png(dir / (name + ".png"), m.generate(&v, nullptr, g));
    Json j{{"source", ci->source},     {"init_word", init_word}, {"steps", steps},
           {"lr", c.baseline_lr},      {"wall_ms", res.wall_ms}, {"losses", res.losses},
           {"embedding", tensor_json(res.embedding)}};
    write_text(dir / (name + ".json"), j.dump() + "\n");
    std::cout << "inversion: " << steps << " steps in " << res.wall_ms << " ms\n";
    return 0;
}

int cmd_eval(const Options& o) {
    auto c = load_config(o);
    const auto stem = resolve_checkpoint(o, c, "eval");
    Model m(c);
    m.load(stem);
    m.require_stage(pipeline::kStageLocal, "eval");
    pipeline::EvalOptions opt;
    opt.lambdas = {0.0, 0.4, c.lambda_generation};
    opt.concepts = o.concepts.value_or(std::min<std::size_t>(20, m.splits.heldout.size()));
    opt.seeds = o.eval_seeds.value_or(c.eval_seeds);
    opt.steps = o.steps.value_or(c.sample_steps);
    opt.guidance = o.guidance.value_or(c.guidance_scale);
    std::vector<pipeline::PromptRecord> records;
    const auto res = pipeline::evaluate_concepts(m, opt, &records);
    eval::MetricReport report;
    const std::size_t last = opt.lambdas.size() - 1;
    std::vector<double> ci, ct, di, rnd;
    for (const auto& r : res) {
        report.per_concept.push_back({r.name, r.clip_i[last], r.clip_t[last], r.dino_i[last]});
        ci.push_back(r.clip_i[last]);
        ct.push_back(r.clip_t[last]);
        di.push_back(r.dino_i[last]);
        rnd.push_back(r.clip_i_random);
    }
    report.clip_i = eval::mean(ci);
    report.clip_t = eval::mean(ct);
    report.dino_i = eval::mean(di);
    {
        const std::size_t prev = diff::Parallelism::workers();
        diff::Parallelism::set_serial();
        report.baseline_steps = o.baseline_steps.value_or(c.baseline_steps);
        std::tie(report.encode_ms, report.baseline_ms) = pipeline::benchmark_encoding(m, 0, report.baseline_steps);
        diff::Parallelism::set_workers(prev);
    }
    auto j = report.to_json();
    j["lambda"] = opt.lambdas[last];
    j["clip_i_random"] = eval::mean(rnd);
    Json sweep = Json::array();
    for (std::size_t l = 0; l < opt.lambdas.size(); ++l) {
        std::vector<double> a, b, d;
        for (const auto& r : res) {
            a.push_back(r.clip_i[l]);
            b.push_back(r.clip_t[l]);
            d.push_back(r.dino_i[l]);
        }
        sweep.push_back({{"lambda", opt.lambdas[l]}, {"clip_i", eval::mean(a)}, {"clip_t", eval::mean(b)}, {"dino_i", eval::mean(d)}});
    }
    j["lambda_sweep"] = sweep;
    const auto dir = out_dir(o, c);
    write_text(dir / "metrics.json", j.dump(2) + "\n");
    std::string lines;
    for (const auto& r : records)
        lines += Json{{"concept", r.concept_name}, {"prompt", r.prompt}, {"lambda", r.lambda}, {"clip_t", r.clip_t},
                      {"clip_i", r.clip_i}}
                     .dump() +
                 '\n';
    write_text(dir / "prompts.jsonl", lines);
    std::cout << "clip_i " << report.clip_i << " clip_t " << report.clip_t << " dino_i " << report.dino_i << " speedup "
              << report.speedup() << "x\n";
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"elite-lab: encoder-based visual concept inversion on a desk-scale latent diffusion model"};
    app.require_subcommand(1);
    Options o;

    auto common = [&](CLI::App* s) {
        s->add_option("--config", o.config, "JSON run config");
        s->add_option("--seed", o.seed, "run seed (training) or sampling seed (generation)");
        s->add_option("--out", o.out, "output directory");
        s->add_option("--ckpt", o.ckpt, "checkpoint stem to load");
    };
    auto sampling = [&](CLI::App* s) {
        s->add_option("--lambda", o.lambda, "local fusion weight");
        s->add_option("--mode", o.mode, "primary | full")->check(CLI::IsMember({"primary", "full"}));
        s->add_option("--steps", o.steps, "sampler steps");
        s->add_option("--guidance", o.guidance, "classifier-free guidance scale");
        s->add_option("--prompt", o.prompt, "prompt with S* for the concept");
    };
    auto concept_src = [&](CLI::App* s) {
        s->add_option("--image", o.image, "concept image PNG");
        s->add_option("--mask", o.mask, "object mask PNG");
        s->add_option("--index", o.index, "held-out concept index from the synthetic generator");
        s->add_option("--name", o.name, "output file stem");
    };

    std::function<int()> action;
    auto sub = [&](const char* name, const char* help, std::function<int()> fn) {
        auto* s = app.add_subcommand(name, help);
        common(s);
        s->callback([&action, fn] { action = fn; });
        return s;
    };

    sub("gen-data", "write the synthetic training and held-out samples", [&] { return cmd_gen_data(o); });
    sub("pretrain-encoders", "train the frozen image and text encoders", [&] {
        return run_stage(o, pipeline::kStageEncoders, nullptr, "pretrain-encoders",
                         [](Model& m, const pipeline::LogFn& l) { pipeline::pretrain_encoders(m, l); });
    });
    sub("train-autoencoder", "train the latent autoencoder", [&] {
        return run_stage(o, pipeline::kStageAutoencoder, pipeline::kStageEncoders, "train-autoencoder",
                         [](Model& m, const pipeline::LogFn& l) { pipeline::train_autoencoder(m, l); });
    });
    sub("train-backbone", "train the text-conditioned denoiser", [&] {
        return run_stage(o, pipeline::kStageBackbone, pipeline::kStageAutoencoder, "train-backbone",
                         [](Model& m, const pipeline::LogFn& l) { pipeline::train_backbone(m, l); });
    });
    sub("train-global", "stage 1: global mapping network", [&] {
        return run_stage(o, pipeline::kStageGlobal, pipeline::kStageBackbone, "train-global",
                         [](Model& m, const pipeline::LogFn& l) { pipeline::train_global(m, l); });
    });
    sub("train-local", "stage 2: local mapping network", [&] {
        return run_stage(o, pipeline::kStageLocal, pipeline::kStageGlobal, "train-local",
                         [](Model& m, const pipeline::LogFn& l) { pipeline::train_local(m, l); });
    });
    concept_src(sub("encode", "map a concept image to word embeddings and a local grid", [&] { return cmd_encode(o); }));
    {
        auto* s = sub("generate", "sample an image, optionally conditioned on a concept", [&] { return cmd_generate(o); });
        sampling(s);
        concept_src(s);
        s->add_option("--concept", o.concept_file, "concept JSON written by encode");
        s->add_flag("--no-local", o.no_local, "skip the local mapper");
    }
    {
        auto* s = sub("attn-map", "per-word attention heatmaps", [&] { return cmd_attn_map(o); });
        sampling(s);
        concept_src(s);
        s->add_option("--concept", o.concept_file, "concept JSON written by encode");
        s->add_flag("--no-local", o.no_local, "skip the local mapper");
    }
    {
        auto* s = sub("invert-baseline", "optimization-based single-word inversion", [&] { return cmd_invert(o); });
        concept_src(s);
        s->add_option("--steps", o.steps, "optimization steps");
        s->add_option("--guidance", o.guidance, "guidance for the preview image");
        s->add_option("--init-word", o.init_word, "vocabulary word to start from");
    }
    {
        auto* s = sub("eval", "metrics over held-out concepts", [&] { return cmd_eval(o); });
        s->add_option("--steps", o.steps, "sampler steps");
        s->add_option("--guidance", o.guidance, "classifier-free guidance scale");
        s->add_option("--concepts", o.concepts, "held-out concepts to evaluate");
        s->add_option("--eval-seeds", o.eval_seeds, "seeds per concept");
        s->add_option("--baseline-steps", o.baseline_steps, "inversion steps for the timing comparison");
    }

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 2;
    }

    diff::Parallelism::set_workers(diff::Parallelism::from_environment());
    try {
        return action();
    } catch (const ConfigError& e) {
        std::cerr << "config error: " << e.what() << '\n';
        return 2;
    } catch (const NumericError& e) {
        std::cerr << "numeric error: " << e.what() << '\n';
        return 3;
    } catch (const ContractError& e) {
        std::cerr << "contract error: " << e.what() << '\n';
        return 4;
    } catch (const ShapeError& e) {
        std::cerr << "shape error: " << e.what() << '\n';
        return 4;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    }
}

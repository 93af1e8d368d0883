// End-to-end walk through the library on a small config: train every stage,
// encode one held-out concept and render it at several fusion weights.
//
//   elite_lab_demo [config.json] [out_dir]

#include <filesystem>
#include <iostream>

#include "elite_lab/elite_lab.hpp"

using namespace elite;
namespace fs = std::filesystem;

int main(int argc, char** argv) {
    const fs::path cfg_path = argc > 1 ? fs::path(argv[1]) : fs::path(ELITE_LAB_CONFIG_DIR) / "tiny.json";
    const fs::path out = argc > 2 ? fs::path(argv[2]) : fs::path("demo_out");
    try {
        diff::Parallelism::set_workers(diff::Parallelism::from_environment());
        const auto cfg = io::parse_config(cfg_path);
        pipeline::Model<float> m(cfg);
        fs::create_directories(out);

        auto last = [](const std::vector<pipeline::StepLog>& l) { return l.empty() ? 0.0 : l.back().ldm; };
        std::cout << "encoders      " << pipeline::pretrain_encoders(m).size() << " steps\n";
        std::cout << "autoencoder   " << pipeline::train_autoencoder(m).size() << " steps\n";
        std::cout << "backbone      final L_LDM " << last(pipeline::train_backbone(m)) << '\n';
        std::cout << "global (M^g)  final L_LDM " << last(pipeline::train_global(m)) << '\n';
        std::cout << "local (M^l)   final L_LDM " << last(pipeline::train_local(m)) << '\n';

        const auto sample = m.concept_sample(0);
        const auto name = m.category_name(sample.category_id);
        io::write_png(out / "concept.png", sample.image);
        io::write_mask_png(out / "concept_mask.png", sample.mask);

        const auto enc = m.encode(sample.image, sample.mask);
        std::cout << "held-out concept '" << name << "' -> " << enc.words.count() << " words, "
                  << enc.local.side << "x" << enc.local.side << " local grid\n";

        const auto emb = m.embedders();
        for (double lambda : {0.0, 0.4, 0.8}) {
            pipeline::GenerateOptions g;
            g.lambda = lambda;
            g.steps = cfg.sample_steps;
            g.guidance = cfg.guidance_scale;
            const auto img = m.generate(enc, g);
            const auto file = "lambda_" + std::to_string(static_cast<int>(lambda * 10)) + ".png";
            io::write_png(out / file, img);
            std::cout << "lambda " << lambda << "  clip_i " << eval::clip_i(emb, img, sample.image) << "  -> "
                      << (out / file).string() << '\n';
        }
        pipeline::GenerateOptions g;
        g.prompt = "a S* in the snow";
        g.steps = cfg.sample_steps;
        const auto img = m.generate(enc, g);
        io::write_png(out / "snow.png", img);
        std::cout << "'" << g.prompt << "' clip_t " << eval::clip_t(emb, img, g.prompt, name) << '\n';
    } catch (const std::exception& e) {
        std::cerr << "demo failed: " << e.what() << '\n';
        return 1;
    }
    return 0;
}

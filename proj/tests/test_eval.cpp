#include <gtest/gtest.h>

#include "test_util.hpp"

using namespace elite;
using diff::Tensor;

namespace {

Image random_image(std::size_t n, std::uint64_t seed) {
    diff::Rng rng(seed);
    std::uniform_real_distribution<float> u(0.f, 1.f);
    Image img(n, n);
    for (auto& v : img.pixels) v = u(rng);
    return img;
}

}  // namespace

TEST(Cosine, KnownValues) {
    Tensor<double> a({3}, {1, 2, 3}), b({3}, {-2, 1, 0}), c({3}, {2, 4, 6}), z({3}, {0, 0, 0});
    EXPECT_NEAR(eval::cosine(a, c), 1.0, 1e-12);
    EXPECT_NEAR(eval::cosine(a, b), 0.0, 1e-12);
    EXPECT_NEAR(eval::cosine(a, diff::scale(a, -1.0)), -1.0, 1e-12);
    EXPECT_EQ(eval::cosine(a, z), 0.0);
    EXPECT_THROW(eval::cosine(a, Tensor<double>({2}, {1, 1})), ShapeError);
}

TEST(Cosine, BoundedOnRandomPairs) {
    diff::Rng rng(1);
    for (int i = 0; i < 100; ++i) {
        auto a = Tensor<double>::randn({17}, rng), b = Tensor<double>::randn({17}, rng);
        const double c = eval::cosine(a, b);
        EXPECT_LE(std::abs(c), 1.0);
        EXPECT_DOUBLE_EQ(c, eval::cosine(b, a));
    }
}

TEST(Metrics, SelfSimilarityIsOne) {
    pipeline::Model<double> m(testkit::toy_config());
    auto e = m.embedders();
    auto img = random_image(16, 2);
    EXPECT_NEAR(eval::clip_i(e, img, img), 1.0, 1e-9);
    EXPECT_NEAR(eval::dino_i(e, img, img), 1.0, 1e-9);
    auto other = random_image(16, 3);
    EXPECT_LT(eval::clip_i(e, img, other), 1.0);
}

TEST(Metrics, ClipTextSubstitutesCategoryName) {
    pipeline::Model<double> m(testkit::toy_config());
    auto e = m.embedders();
    auto img = random_image(16, 4);
    const double got = eval::clip_t(e, img, "a S* in the snow", "red plain circle");
    const double want = eval::cosine(e.image_embedding(img), e.text_embedding("a red plain circle in the snow"));
    EXPECT_DOUBLE_EQ(got, want);
    EXPECT_THROW(eval::clip_t(e, img, "a photo", "red plain circle"), ContractError);
}

TEST(InvertBaseline, ZeroStepsReturnsInit) {
    pipeline::Model<double> m(testkit::toy_config());
    diff::Rng rng(5);
    auto latent = Tensor<double>::randn({16, 2}, rng);
    auto init = Tensor<double>::randn({1, 8}, rng);
    auto r = eval::invert_baseline(latent, init, m.stack(), {0, 1e-2}, 6);
    EXPECT_EQ(r.embedding.to_vector(), init.to_vector());
    EXPECT_TRUE(r.losses.empty());
}

TEST(InvertBaseline, OnlyTheEmbeddingMoves) {
    pipeline::Model<double> m(testkit::toy_config());
    diff::Rng rng(7);
    auto latent = Tensor<double>::randn({16, 2}, rng);
    auto init = Tensor<double>::randn({1, 8}, rng);
    const auto before = diff::checksum(m.params());
    auto r = eval::invert_baseline(latent, init, m.stack(), {5, 1e-2}, 8);
    EXPECT_EQ(diff::checksum(m.params()), before);
    EXPECT_EQ(r.losses.size(), 5u);
    EXPECT_NE(r.embedding.to_vector(), init.to_vector());
    EXPECT_FALSE(init.requires_grad());
    auto again = eval::invert_baseline(latent, init, m.stack(), {5, 1e-2}, 8);
    EXPECT_EQ(again.embedding.to_vector(), r.embedding.to_vector());
}

TEST(InvertBaseline, ObjectiveIsDeterministicPerSeed) {
    pipeline::Model<double> m(testkit::toy_config());
    diff::Rng rng(9);
    auto latent = Tensor<double>::randn({16, 2}, rng);
    auto e = Tensor<double>::randn({1, 8}, rng);
    EXPECT_EQ(eval::inversion_objective(e, latent, m.stack(), 3, 4), eval::inversion_objective(e, latent, m.stack(), 3, 4));
}

TEST(RandomWords, MatchesReferenceRms) {
    diff::Rng rng(10);
    textenc::WordEmbeddingSet<double> ref{Tensor<double>::randn({5, 400}, rng, 0.3), {}};
    auto r = pipeline::random_words(ref, 11);
    EXPECT_EQ(r.words.shape(), (diff::Shape{1, 400}));
    double sa = 0, sb = 0;
    for (std::size_t c = 0; c < 400; ++c) {
        sa += ref.words.at(0, c) * ref.words.at(0, c);
        sb += r.words.at(0, c) * r.words.at(0, c);
    }
    EXPECT_NEAR(std::sqrt(sb / 400), std::sqrt(sa / 400), 0.05);
    EXPECT_EQ(pipeline::random_words(ref, 11).words.to_vector(), r.words.to_vector());
}

TEST(MetricReport, JsonFields) {
    eval::MetricReport r;
    r.clip_i = 0.8;
    r.encode_ms = 2;
    r.baseline_ms = 500;
    r.baseline_steps = 100;
    r.per_concept.push_back({"red plain circle", 0.7, 0.2, 0.6});
    auto j = r.to_json();
    for (const char* k : {"clip_i", "clip_t", "dino_i", "encode_ms", "baseline_ms", "speedup", "reference", "per_concept"})
        EXPECT_TRUE(j.contains(k)) << k;
    EXPECT_DOUBLE_EQ(j["speedup"].get<double>(), 250.0);
    EXPECT_EQ(j["per_concept"][0]["concept"], "red plain circle");
    EXPECT_EQ(eval::MetricReport{}.speedup(), 0.0);
}

TEST(Ranks, TiesShareMeanRank) {
    EXPECT_EQ(eval::ranks({10, 20, 20, 30}), (std::vector<double>{1, 2.5, 2.5, 4}));
    EXPECT_EQ(eval::ranks({3, 1, 2}), (std::vector<double>{3, 1, 2}));
    EXPECT_EQ(eval::ranks({5, 5, 5}), (std::vector<double>{2, 2, 2}));
}

TEST(Spearman, MonotoneAndReversed) {
    std::vector<double> a{1, 2, 3, 4, 5}, b{1, 8, 27, 64, 125}, c{9, 7, 5, 3, 1};
    EXPECT_NEAR(eval::spearman(a, b), 1.0, 1e-12);
    EXPECT_NEAR(eval::spearman(a, c), -1.0, 1e-12);
    // Hand-computed: rank differences d = {0,-1,1}, rho = 1 - 6·2/(3·8).
    EXPECT_NEAR(eval::spearman({1, 2, 3}, {1, 3, 2}), 0.5, 1e-12);
    EXPECT_THROW(eval::spearman({1}, {1}), ContractError);
    EXPECT_NEAR(eval::linear_r2({1, 2, 3}, {2, 4, 6}), 1.0, 1e-12);
}

TEST(TimeMs, NonNegative) {
    int n = 0;
    EXPECT_GE(eval::time_ms([&] { ++n; }, 3), 0.0);
    EXPECT_EQ(n, 3);
}

#include <gtest/gtest.h>

#include <numeric>

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

imageenc::ImageEncoder<float> make_encoder(std::uint64_t seed = 1) {
    diff::Rng rng(seed);
    return imageenc::ImageEncoder<float>({}, rng);
}

}  // namespace

TEST(ImageEncoder, GridsAreEightByEightTokens) {
    auto enc = make_encoder();
    auto taps = enc.encode(random_image(64, 2));
    ASSERT_EQ(taps.size(), 5u);
    EXPECT_EQ(taps.tap_layer_ids, (std::vector<std::size_t>{6, 1, 2, 3, 4}));
    for (std::size_t i = 0; i < taps.size(); ++i) {
        EXPECT_EQ(taps.grids[i].shape(), (diff::Shape{64, 64}));
        EXPECT_EQ(taps.pooled[i].shape(), (diff::Shape{1, 64}));
    }
}

TEST(ImageEncoder, DefaultTapsForTwentyFourLayers) {
    EXPECT_EQ(imageenc::default_taps(24), (std::vector<std::size_t>{24, 4, 8, 12, 16}));
    EXPECT_EQ(imageenc::default_taps(6), (std::vector<std::size_t>{6, 1, 2, 3, 4}));
}

TEST(ImageEncoder, GridZeroIsDeepestPostBlockOutput) {
    auto enc = make_encoder();
    auto img = random_image(64, 3);
    auto taps = enc.encode(img);
    auto deep = enc.encode(img, {6});
    EXPECT_EQ(taps.grids[0].to_vector(), deep.grids[0].to_vector());
    // Manual forward through block 1.
    auto x = diff::add(enc.patch_embed(patchify<float>(img, 8)), enc.pos_embed);
    EXPECT_EQ(enc.blocks[0](x).to_vector(), taps.grids[1].to_vector());
}

TEST(ImageEncoder, SameImageTwiceIsBitIdentical) {
    auto enc = make_encoder();
    auto img = random_image(64, 4);
    auto a = enc.encode(img), b = enc.encode(img);
    for (std::size_t i = 0; i < a.size(); ++i) EXPECT_EQ(a.grids[i].to_vector(), b.grids[i].to_vector());
}

TEST(ImageEncoder, InvalidTapsAreConfigErrors) {
    auto enc = make_encoder();
    auto img = random_image(64, 5);
    EXPECT_THROW(enc.encode(img, {7}), ConfigError);
    EXPECT_THROW(enc.encode(img, {0}), ConfigError);
    EXPECT_THROW(enc.encode(img, {2, 6}), ConfigError);
    EXPECT_THROW(enc.encode(img, {}), ConfigError);
    EXPECT_THROW(enc.encode(random_image(48, 5)), ShapeError);
}

TEST(ImageEncoder, SwappingTwoPatchesChangesTokens) {
    auto enc = make_encoder(7);
    auto img = random_image(64, 6);
    auto swapped = img;
    for (std::size_t y = 0; y < 8; ++y)
        for (std::size_t x = 0; x < 8; ++x)
            for (std::size_t c = 0; c < 3; ++c) std::swap(swapped.at(y, x, c), swapped.at(y + 8, x + 24, c));
    auto a = enc.encode(img), b = enc.encode(swapped);
    bool differs = false;
    for (std::size_t i = 0; i < a.size(); ++i) {
        // Token rows of the swapped positions, swapped back.
        auto ga = a.grids[i].to_vector(), gb = b.grids[i].to_vector();
        for (std::size_t c = 0; c < 64; ++c) std::swap(gb[0 * 64 + c], gb[(1 * 8 + 3) * 64 + c]);
        differs = differs || ga != gb;
    }
    EXPECT_TRUE(differs);
}

TEST(PoolFeatures, ConstantGridGivesConstant) {
    auto g = Tensor<float>::full({16, 5}, 2.5f);
    auto p = imageenc::pool_features(g);
    EXPECT_EQ(p.shape(), (diff::Shape{1, 5}));
    for (float v : p.data()) EXPECT_FLOAT_EQ(v, 2.5f);
}

TEST(PoolFeatures, TwoTokenMean) {
    auto g = Tensor<float>({2, 2}, {1.f, 0.f, 3.f, 4.f});
    auto p = imageenc::pool_features(g);
    EXPECT_FLOAT_EQ(p[0], 2.f);
    EXPECT_FLOAT_EQ(p[1], 2.f);
}

TEST(PoolFeatures, PermutationInvariant) {
    diff::Rng rng(8);
    auto g = Tensor<double>::randn({36, 7}, rng);
    std::vector<std::size_t> perm(36);
    std::iota(perm.begin(), perm.end(), 0);
    std::shuffle(perm.begin(), perm.end(), rng);
    auto a = imageenc::pool_features(g), b = imageenc::pool_features(diff::gather_rows(g, perm));
    for (std::size_t c = 0; c < 7; ++c) EXPECT_NEAR(a[c], b[c], 1e-12);
    for (std::size_t p : {1u, 3u, 9u}) EXPECT_EQ(imageenc::pool_features(Tensor<double>::zeros({p * p, 7})).numel(), 7u);
}

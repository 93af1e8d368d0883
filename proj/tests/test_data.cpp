#include <gtest/gtest.h>

#include <set>

#include "test_util.hpp"

using namespace elite;

namespace {

const data::DatasetSpec kSpec{};

}  // namespace

TEST(Data, DefaultGridHasSixHundredCategories) { EXPECT_EQ(kSpec.category_count(), 600u); }

TEST(Data, FixedSeedIsBitIdentical) {
    for (std::size_t cat : {0u, 17u, 599u}) {
        auto a = data::gen_concept_image(42, kSpec, cat);
        auto b = data::gen_concept_image(42, kSpec, cat);
        EXPECT_EQ(a.image, b.image);
        EXPECT_EQ(a.mask, b.mask);
        EXPECT_EQ(a.bbox, b.bbox);
    }
    EXPECT_NE(data::gen_concept_image(1, kSpec, 3).image, data::gen_concept_image(2, kSpec, 3).image);
}

TEST(Data, MaskIsBinaryAndBBoxIsTight) {
    for (std::uint64_t seed = 0; seed < 40; ++seed) {
        const std::size_t cat = (seed * 37) % kSpec.category_count();
        auto s = data::gen_concept_image(seed, kSpec, cat);
        std::size_t on = 0;
        std::size_t x0 = s.mask.width, y0 = s.mask.height, x1 = 0, y1 = 0;
        for (std::size_t y = 0; y < s.mask.height; ++y)
            for (std::size_t x = 0; x < s.mask.width; ++x) {
                const auto m = s.mask.at(y, x);
                ASSERT_TRUE(m == 0 || m == 1);
                if (m) {
                    ++on;
                    x0 = std::min(x0, x);
                    y0 = std::min(y0, y);
                    x1 = std::max(x1, x + 1);
                    y1 = std::max(y1, y + 1);
                }
            }
        EXPECT_EQ(on, s.mask.count());
        EXPECT_GT(on, 0u);
        EXPECT_EQ(s.bbox, (data::BBox{x0, y0, x1, y1}));
    }
}

TEST(Data, ForegroundAndBackgroundColoursDiffer) {
    for (std::uint64_t seed = 0; seed < 30; ++seed) {
        auto s = data::gen_concept_image(seed, kSpec, (seed * 13) % 600);
        auto [fg, bg] = data::region_means(s);
        double d = 0;
        for (int c = 0; c < 3; ++c) d += (fg[c] - bg[c]) * (fg[c] - bg[c]);
        EXPECT_GT(std::sqrt(d), 0.1) << "seed " << seed;
    }
}

TEST(Data, DegenerateSpecIsConfigError) {
    auto spec = kSpec;
    spec.min_radius = 0.0;
    EXPECT_THROW(data::gen_concept_image(0, spec, 0), ConfigError);
    spec = kSpec;
    spec.shapes.clear();
    EXPECT_THROW(data::gen_concept_image(0, spec, 0), ConfigError);
    EXPECT_THROW(data::category_of(kSpec, 600), ConfigError);
}

TEST(Data, CropOfFullImageBBoxIsPureResize) {
    auto s = data::gen_concept_image(5, kSpec, 10);
    s.bbox = {0, 0, s.image.width, s.image.height};
    auto same = data::crop_resize(s, s.image.width);
    EXPECT_EQ(same.image, s.image);
    EXPECT_EQ(same.mask, s.mask);
}

TEST(Data, CropResizeKeepsMaskBinaryAtDefaultTarget) {
    auto s = data::crop_resize(data::gen_concept_image(6, kSpec, 44), 64);
    EXPECT_EQ(s.image.height, 64u);
    EXPECT_EQ(s.image.width, 64u);
    for (auto b : s.mask.bits) EXPECT_TRUE(b == 0 || b == 1);
    EXPECT_GT(s.mask.count(), 0u);
}

TEST(Data, EmptyBBoxIsContractError) {
    auto s = data::gen_concept_image(7, kSpec, 1);
    s.bbox = {4, 4, 4, 9};
    EXPECT_THROW(data::crop_resize(s, 64), ContractError);
}

TEST(Data, SplitsAreDisjointAndCoverVocabulary) {
    auto sp = data::make_splits(kSpec, 60, 20);
    EXPECT_EQ(sp.train.size(), 60u);
    EXPECT_EQ(sp.heldout.size(), 20u);
    std::set<std::size_t> train(sp.train.begin(), sp.train.end()), held(sp.heldout.begin(), sp.heldout.end());
    EXPECT_EQ(train.size(), 60u);
    EXPECT_EQ(held.size(), 20u);
    for (auto h : held) EXPECT_EQ(train.count(h), 0u);
    std::set<std::size_t> shapes, palettes, textures;
    for (auto id : sp.train) {
        auto c = data::category_of(kSpec, id);
        shapes.insert(c.shape);
        palettes.insert(c.palette);
        textures.insert(c.texture);
    }
    EXPECT_EQ(shapes.size(), kSpec.shapes.size());
    EXPECT_EQ(palettes.size(), kSpec.palettes.size());
    EXPECT_EQ(textures.size(), kSpec.textures.size());
    EXPECT_THROW(data::make_splits(kSpec, 590, 20), ConfigError);
}

TEST(Data, IndexReproducibleFromSeedAndIndexAlone) {
    auto sp = data::make_splits(kSpec, 60, 20);
    auto a = data::training_sample(3, 123, kSpec, sp, 64);
    // Generating other indices first must not matter.
    for (std::size_t i = 0; i < 5; ++i) (void)data::training_sample(3, i, kSpec, sp, 64);
    auto b = data::training_sample(3, 123, kSpec, sp, 64);
    EXPECT_EQ(a.image, b.image);
    EXPECT_EQ(a.category_id, sp.train[123 % 60]);
    EXPECT_NE(data::item_seed(0, 1, 5), data::item_seed(0, 2, 5));
    EXPECT_NE(data::item_seed(0, 1, 5), data::item_seed(1, 1, 5));
}

TEST(Data, CategoryNamesUseVocabularyWords) {
    EXPECT_EQ(data::category_name(kSpec, 0), "red plain circle");
    auto c = data::category_of(kSpec, 123);
    EXPECT_EQ(data::category_id(kSpec, c), 123u);
}

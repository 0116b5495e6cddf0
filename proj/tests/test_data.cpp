#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <array>
#include <filesystem>
#include <fstream>
#include <map>
#include <set>

#include "outfitgan/data/corpus.hpp"
#include "outfitgan/data/image_io.hpp"
#include "outfitgan/data/outfit.hpp"

using namespace outfitgan;
using namespace outfitgan::data;

namespace {

bool same_pixels(const FeatureMap<float>& a, const FeatureMap<float>& b) {
    return a.same_shape(b) && a.data == b.data;
}

std::filesystem::path fresh_dir(const std::string& name) {
    const auto dir = std::filesystem::temp_directory_path() / name;
    std::filesystem::remove_all(dir);
    return dir;
}

}  // namespace

TEST_CASE("corpus generation is deterministic") {
    const auto a = generate_synthetic_corpus(7, 10, 32, 4);
    const auto b = generate_synthetic_corpus(7, 10, 32, 4);
    REQUIRE(a.train.size() == b.train.size());
    REQUIRE(a.test.size() == b.test.size());
    for (std::size_t o = 0; o < a.train.size(); ++o)
        for (std::size_t i = 0; i < a.train[o].items.size(); ++i) {
            CHECK(same_pixels(a.train[o].items[i].pixels, b.train[o].items[i].pixels));
            CHECK(a.train[o].items[i].category == b.train[o].items[i].category);
            CHECK(same_pixels(a.train[o].silhouettes[i].mask, b.train[o].silhouettes[i].mask));
        }
}

TEST_CASE("every record holds one item per category with valid masks") {
    const auto split = generate_synthetic_corpus(3, 12, 32, 4);
    auto all = split.train;
    all.insert(all.end(), split.test.begin(), split.test.end());
    for (const auto& rec : all) {
        REQUIRE(rec.size() == 4);
        std::set<int> cats;
        for (const auto& it : rec.items) cats.insert(it.category);
        CHECK(cats == std::set<int>{0, 1, 2, 3});
        for (const auto& s : rec.silhouettes) {
            for (Index i = 0; i < s.mask.data.size(); ++i) {
                const float v = s.mask.data.data()[i];
                CHECK((v == 0.0f || v == 1.0f));
            }
            const float occ = mask_occupancy(s);
            CHECK(occ >= 0.01f);
            CHECK(occ <= 0.99f);
        }
        CHECK_NOTHROW(validate_record(rec, 4));
    }
}

TEST_CASE("items within an outfit share a palette more than across outfits") {
    const auto split = generate_synthetic_corpus(7, 60, 32, 4);
    std::vector<std::vector<Eigen::Vector3f>> palettes;
    for (const auto& rec : split.train) {
        std::vector<Eigen::Vector3f> p;
        for (std::size_t i = 0; i < rec.items.size(); ++i)
            p.push_back(mean_foreground_color(rec.items[i], rec.silhouettes[i]));
        palettes.push_back(std::move(p));
    }
    double within = 0, across = 0;
    long nw = 0, na = 0;
    for (std::size_t o = 0; o < palettes.size(); ++o)
        for (std::size_t i = 0; i < palettes[o].size(); ++i)
            for (std::size_t j = i + 1; j < palettes[o].size(); ++j) {
                within += (palettes[o][i] - palettes[o][j]).norm();
                ++nw;
            }
    for (std::size_t o = 0; o + 1 < palettes.size(); ++o)
        for (std::size_t i = 0; i < palettes[o].size(); ++i) {
            across += (palettes[o][i] - palettes[o + 1][i]).norm();
            ++na;
        }
    CHECK(within / nw < across / na);
}

TEST_CASE("silhouette extraction matches stored masks and rejects degenerate input") {
    const auto split = generate_synthetic_corpus(11, 25, 32, 4);
    double iou_sum = 0;
    long n = 0;
    for (const auto& rec : split.train)
        for (std::size_t i = 0; i < rec.items.size(); ++i) {
            iou_sum += iou(extract_silhouette(rec.items[i]), rec.silhouettes[i]);
            ++n;
        }
    CHECK(iou_sum / n >= 0.95);

    ItemImage blank;
    blank.pixels = constant_map<float>(3, 32, 32, 1.0f);
    blank.category = 0;
    CHECK_THROWS_AS(extract_silhouette(blank), DegenerateMaskError);

    // flat 25% centered square recovers exactly
    ItemImage sq;
    sq.pixels = constant_map<float>(3, 32, 32, 1.0f);
    sq.category = 1;
    for (Index c = 0; c < 3; ++c)
        for (Index y = 8; y < 24; ++y)
            for (Index x = 8; x < 24; ++x) sq.pixels.at(c, y, x) = -0.5f;
    const auto m = extract_silhouette(sq);
    for (Index y = 0; y < 32; ++y)
        for (Index x = 0; x < 32; ++x) {
            const bool in = y >= 8 && y < 24 && x >= 8 && x < 24;
            CHECK(m.mask.at(0, y, x) == (in ? 1.0f : 0.0f));
        }
}

TEST_CASE("silhouette extraction ignores foreground recoloring") {
    auto rec = generate_outfit(5, 0, 32, 4);
    const auto before = extract_silhouette(rec.items[0]);
    auto& px = rec.items[0].pixels;
    for (Index y = 0; y < px.height; ++y)
        for (Index x = 0; x < px.width; ++x)
            if (before.mask.at(0, y, x) > 0.5f) {
                px.at(0, y, x) = -0.9f;
                px.at(1, y, x) = 0.3f;
                px.at(2, y, x) = -0.2f;
            }
    const auto after = extract_silhouette(rec.items[0]);
    CHECK(same_pixels(before.mask, after.mask));
}

TEST_CASE("orientation normalization mirrors left-heavy items and is idempotent") {
    ItemImage img;
    img.pixels = constant_map<float>(3, 32, 32, 1.0f);
    img.category = 3;
    for (Index c = 0; c < 3; ++c)
        for (Index y = 10; y < 22; ++y)
            for (Index x = 2; x < 10; ++x) img.pixels.at(c, y, x) = -0.8f;

    const auto flipped = normalize_orientation(img);
    CHECK_FALSE(same_pixels(flipped.pixels, img.pixels));
    CHECK(flipped.pixels.at(0, 10, 31 - 2) == -0.8f);

    const auto right = normalize_orientation(flipped);
    CHECK(same_pixels(right.pixels, flipped.pixels));

    for (std::uint64_t s = 0; s < 6; ++s) {
        auto rec = generate_outfit(s, 1, 32, 4);
        const auto once = normalize_orientation(rec.items[2]);
        const auto twice = normalize_orientation(once);
        CHECK(same_pixels(once.pixels, twice.pixels));
    }
}

TEST_CASE("given-mask sampling is uniform over valid masks") {
    Rng rng(123);
    CHECK_THROWS_AS(sample_given_mask(rng, 1), ConfigError);

    // n=2 has exactly two valid masks
    std::set<std::vector<int>> seen2;
    for (int d = 0; d < 200; ++d) seen2.insert(sample_given_mask(rng, 2).given);
    CHECK(seen2 == std::set<std::vector<int>>{{0, 1}, {1, 0}});

    // n=4: all 14 masks appear with near-uniform frequency
    std::map<std::vector<int>, long> counts;
    for (int d = 0; d < 14000; ++d) {
        const auto g = sample_given_mask(rng, 4);
        const int s = g.count_given();
        REQUIRE(s >= 1);
        REQUIRE(s <= 3);
        ++counts[g.given];
    }
    REQUIRE(counts.size() == 14);
    for (const auto& [mask, c] : counts) {
        CHECK(c > 850);
        CHECK(c < 1150);
    }

    // no invalid mask in 1e5 draws for any small n
    for (Index n = 2; n <= 6; ++n) {
        Rng r(n);
        for (int d = 0; d < 100000; ++d) {
            const auto g = sample_given_mask(r, n);
            const int s = g.count_given();
            REQUIRE(s >= 1);
            REQUIRE(s <= n - 1);
        }
    }
}

TEST_CASE("dataset split sizes, determinism and disjointness") {
    const auto [tr, te] = split_indices(20000, 0.8f, 9);
    CHECK(tr.size() == 16000);
    CHECK(te.size() == 4000);
    const auto [tr2, te2] = split_indices(20000, 0.8f, 9);
    CHECK(tr == tr2);
    CHECK(te == te2);
    std::set<Index> seen(tr.begin(), tr.end());
    for (const Index i : te) CHECK(seen.insert(i).second);
    CHECK(seen.size() == 20000);

    const auto split = generate_synthetic_corpus(2, 10, 16, 4, 0.8f);
    CHECK(split.train.size() == 8);
    CHECK(split.test.size() == 2);

    CHECK_THROWS_AS(split_dataset({}, 0.8f, 1), ConfigError);
}

TEST_CASE("corpus save/load round trip") {
    const auto dir = fresh_dir("outfitgan_corpus_rt");
    const auto split = generate_synthetic_corpus(4, 6, 16, 4);
    save_corpus(split, dir.string());
    CHECK(std::filesystem::exists(dir / "manifest.json"));

    const auto back = load_corpus(dir.string());
    REQUIRE(back.train.size() == split.train.size());
    REQUIRE(back.test.size() == split.test.size());
    for (std::size_t o = 0; o < split.train.size(); ++o)
        for (std::size_t i = 0; i < 4; ++i) {
            const auto& a = split.train[o];
            const auto& b = back.train[o];
            CHECK(b.items[i].category == a.items[i].category);
            CHECK(same_pixels(b.silhouettes[i].mask, a.silhouettes[i].mask));
            CHECK((b.items[i].pixels.data - a.items[i].pixels.data).cwiseAbs().maxCoeff() <= 1.0f / 127.5f);
        }
    CHECK(back.train[0].likes == split.train[0].likes);
    std::filesystem::remove_all(dir);
}

TEST_CASE("given-mask and record validation reject out-of-contract input") {
    GivenMask none{{0, 0, 0, 0}};
    GivenMask all{{1, 1, 1, 1}};
    GivenMask ok{{1, 0, 1, 0}};
    CHECK_THROWS_AS(validate_given(none), ConfigError);
    CHECK_THROWS_AS(validate_given(all), ConfigError);
    CHECK_NOTHROW(validate_given(ok));
}

TEST_CASE("mask IoU behaves as a similarity") {
    SilhouetteMask a, b;
    a.mask = constant_map<float>(1, 16, 16, 0.0f);
    b.mask = constant_map<float>(1, 16, 16, 0.0f);
    for (Index y = 0; y < 8; ++y)
        for (Index x = 0; x < 8; ++x) a.mask.at(0, y, x) = 1.0f;
    CHECK(iou(a, a) == 1.0f);
    CHECK(iou(a, b) == 0.0f);
    for (Index y = 0; y < 8; ++y)
        for (Index x = 0; x < 8; ++x) b.mask.at(0, y, x) = 1.0f;
    CHECK(iou(a, b) == 1.0f);
}

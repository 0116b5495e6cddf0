#include "outfitgan/data/corpus.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>

#include <json.hpp>

#include "outfitgan/data/image_io.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace outfitgan::data {

namespace {

float dist_to_background(const FeatureMap<float>& px, Index p) {
    const float dr = kBackgroundValue - px.data(0, p);
    const float dg = kBackgroundValue - px.data(1, p);
    const float db = kBackgroundValue - px.data(2, p);
    return std::sqrt(dr * dr + dg * dg + db * db);
}

Eigen::Vector3f hsv_to_rgb(float h, float s, float v) {
    h = h - std::floor(h);
    const float c = v * s;
    const float hp = h * 6.0f;
    const float x = c * (1.0f - std::fabs(std::fmod(hp, 2.0f) - 1.0f));
    float r = 0, g = 0, b = 0;
    if (hp < 1)      { r = c; g = x; }
    else if (hp < 2) { r = x; g = c; }
    else if (hp < 3) { g = c; b = x; }
    else if (hp < 4) { g = x; b = c; }
    else if (hp < 5) { r = x; b = c; }
    else             { r = c; b = x; }
    const float m = v - c;
    return {r + m, g + m, b + m};
}

/// HSV([0,1]) -> quantized [-1,1] RGB.
Eigen::Vector3f palette_color(float h, float s, float v) {
    Eigen::Vector3f rgb01 = hsv_to_rgb(h, s, v);
    Eigen::Vector3f out;
    for (int c = 0; c < 3; ++c) out[c] = quantize_u8(rgb01[c] * 2.0f - 1.0f);
    return out;
}

struct Box {
    float x0, y0, x1, y1;
};

void fill_box(FeatureMap<float>& m, const Box& b, float value) {
    const auto r = static_cast<float>(m.width);
    for (Index y = 0; y < m.height; ++y) {
        const float cy = (static_cast<float>(y) + 0.5f) / r;
        if (cy < b.y0 || cy >= b.y1) continue;
        for (Index x = 0; x < m.width; ++x) {
            const float cx = (static_cast<float>(x) + 0.5f) / r;
            if (cx >= b.x0 && cx < b.x1) m.data(0, y * m.width + x) = value;
        }
    }
}

float jit(Rng& rng) { return static_cast<float>(rng.uniform(-0.02, 0.02)); }

/// Category archetypes in unit coordinates, lightly jittered per item.
FeatureMap<float> rasterize_shape(int archetype, Index r, Rng& rng) {
    FeatureMap<float> m(1, r, r);
    switch (archetype) {
        case 0: {  // top: torso plus two sleeves
            fill_box(m, {0.30f + jit(rng), 0.25f + jit(rng), 0.70f + jit(rng), 0.80f + jit(rng)}, 1.0f);
            const float sy0 = 0.25f + jit(rng), sy1 = 0.45f + jit(rng);
            fill_box(m, {0.12f + jit(rng), sy0, 0.30f, sy1}, 1.0f);
            fill_box(m, {0.70f, sy0, 0.88f + jit(rng), sy1}, 1.0f);
            break;
        }
        case 1: {  // bag: body plus hollow handle
            fill_box(m, {0.38f + jit(rng), 0.18f + jit(rng), 0.62f + jit(rng), 0.48f}, 1.0f);
            fill_box(m, {0.44f, 0.24f, 0.56f, 0.48f}, 0.0f);
            fill_box(m, {0.30f + jit(rng), 0.45f + jit(rng), 0.70f + jit(rng), 0.82f + jit(rng)}, 1.0f);
            break;
        }
        case 2: {  // trousers: waistband and two legs
            const float ly1 = 0.85f + jit(rng);
            fill_box(m, {0.32f + jit(rng), 0.18f + jit(rng), 0.68f + jit(rng), 0.36f}, 1.0f);
            fill_box(m, {0.32f + jit(rng), 0.35f, 0.47f + jit(rng), ly1}, 1.0f);
            fill_box(m, {0.53f + jit(rng), 0.35f, 0.68f + jit(rng), ly1}, 1.0f);
            break;
        }
        default: {  // shoe: sole plus right-leaning shaft
            fill_box(m, {0.15f + jit(rng), 0.60f + jit(rng), 0.85f + jit(rng), 0.74f + jit(rng)}, 1.0f);
            fill_box(m, {0.55f + jit(rng), 0.30f + jit(rng), 0.85f + jit(rng), 0.62f}, 1.0f);
            break;
        }
    }
    return m;
}

/// Foreground centre-of-mass x coordinate, or -1 when empty.
float foreground_com_x(const FeatureMap<float>& fg_mask) {
    double sum = 0, cnt = 0;
    for (Index y = 0; y < fg_mask.height; ++y)
        for (Index x = 0; x < fg_mask.width; ++x)
            if (fg_mask.data(0, y * fg_mask.width + x) > 0.5f) {
                sum += static_cast<double>(x);
                cnt += 1;
            }
    return cnt > 0 ? static_cast<float>(sum / cnt) : -1.0f;
}

void paint_item(ItemImage& item, const SilhouetteMask& mask, const Eigen::Vector3f& primary,
                const Eigen::Vector3f& secondary, Index stripe_period) {
    const Index r = mask.resolution();
    for (Index y = 0; y < r; ++y) {
        const bool alt = ((y / stripe_period) % 2) == 1;
        const Eigen::Vector3f& col = alt ? secondary : primary;
        for (Index x = 0; x < r; ++x) {
            const Index p = y * r + x;
            const bool fg = mask.mask.data(0, p) > 0.5f;
            for (int c = 0; c < 3; ++c) item.pixels.data(c, p) = fg ? col[static_cast<Index>(c)] : kBackgroundValue;
        }
    }
}

std::string outfit_id(Index i) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "outfit_%05lld", static_cast<long long>(i));
    return buf;
}

void save_record(const OutfitRecord& rec, const fs::path& dir) {
    fs::create_directories(dir);
    json meta;
    meta["likes"] = rec.likes;
    meta["categories"] = json::array();
    for (Index k = 0; k < rec.size(); ++k) {
        const auto ks = std::to_string(k);
        write_png_rgb((dir / ("item_" + ks + ".png")).string(), rec.items[static_cast<std::size_t>(k)].pixels);
        write_png_gray((dir / ("mask_" + ks + ".png")).string(), rec.silhouettes[static_cast<std::size_t>(k)].mask);
        meta["categories"].push_back(rec.items[static_cast<std::size_t>(k)].category);
    }
    std::ofstream out(dir / "meta.json");
    if (!out) throw IoError("cannot write " + (dir / "meta.json").string());
    out << meta.dump(2) << "\n";
}

OutfitRecord load_record(const fs::path& dir) {
    std::ifstream in(dir / "meta.json");
    if (!in) throw IoError("cannot read " + (dir / "meta.json").string());
    json meta = json::parse(in);
    OutfitRecord rec;
    rec.likes = meta.at("likes").get<long>();
    const auto& cats = meta.at("categories");
    for (std::size_t k = 0; k < cats.size(); ++k) {
        const auto ks = std::to_string(k);
        ItemImage item;
        item.pixels = read_png_rgb((dir / ("item_" + ks + ".png")).string());
        item.category = cats[k].get<int>();
        SilhouetteMask mask;
        mask.mask = read_png_gray((dir / ("mask_" + ks + ".png")).string());
        rec.items.push_back(std::move(item));
        rec.silhouettes.push_back(std::move(mask));
    }
    return rec;
}

}  // namespace

FeatureMap<float> flip_horizontal(const FeatureMap<float>& x) {
    FeatureMap<float> y(x.channels, x.height, x.width);
    for (Index c = 0; c < x.channels; ++c)
        for (Index iy = 0; iy < x.height; ++iy)
            for (Index ix = 0; ix < x.width; ++ix)
                y.data(c, iy * x.width + ix) = x.data(c, iy * x.width + (x.width - 1 - ix));
    return y;
}

OutfitRecord generate_outfit(std::uint64_t seed, Index outfit_index, Index resolution, Index n_categories) {
    Rng rng(derive_seed(seed, "outfit", static_cast<std::uint64_t>(outfit_index)));
    OutfitRecord rec;
    rec.likes = static_cast<long>(rng.uniform_index(1000));

    const float base_h = static_cast<float>(rng.uniform());
    const float base_s = static_cast<float>(rng.uniform(0.45, 0.90));
    const float base_v = static_cast<float>(rng.uniform(0.35, 0.72));
    const Index stripe_period = std::max<Index>(2, resolution / 16);

    for (Index k = 0; k < n_categories; ++k) {
        SilhouetteMask mask;
        mask.mask = rasterize_shape(static_cast<int>(k % 4), resolution, rng);
        if (const float comx = foreground_com_x(mask.mask);
            comx >= 0.0f && comx < static_cast<float>(resolution - 1) / 2.0f)
            mask.mask = flip_horizontal(mask.mask);

        const float h = base_h + static_cast<float>(rng.uniform(-0.03, 0.03));
        const float s = std::clamp(base_s + static_cast<float>(rng.uniform(-0.06, 0.06)), 0.30f, 0.95f);
        const float v = std::clamp(base_v + static_cast<float>(rng.uniform(-0.06, 0.06)), 0.25f, 0.72f);
        const float v2 = v > 0.45f ? v - 0.18f : v + 0.18f;

        ItemImage item(resolution, static_cast<int>(k));
        paint_item(item, mask, palette_color(h, s, v), palette_color(h, s, v2), stripe_period);
        rec.items.push_back(std::move(item));
        rec.silhouettes.push_back(std::move(mask));
    }
    validate_record(rec, n_categories);
    return rec;
}

DatasetSplit generate_synthetic_corpus(std::uint64_t seed, Index n_outfits, Index resolution, Index n_categories,
                                       float split_ratio) {
    if (n_outfits < 2) throw ConfigError("corpus needs at least two outfits");
    if (!is_power_of_two(resolution) || resolution < 16)
        throw ConfigError("corpus resolution must be a power of two >= 16");
    if (n_categories < 2 || n_categories > 8) throw ConfigError("n_categories must be in [2, 8]");

    std::vector<OutfitRecord> records;
    records.reserve(static_cast<std::size_t>(n_outfits));
    for (Index i = 0; i < n_outfits; ++i) records.push_back(generate_outfit(seed, i, resolution, n_categories));
    DatasetSplit split = split_dataset(std::move(records), split_ratio, seed);
    split.seed = seed;
    return split;
}

SilhouetteMask extract_silhouette(const ItemImage& image, float background_tolerance) {
    const Index r = image.resolution();
    SilhouetteMask out(r);
    for (Index p = 0; p < r * r; ++p)
        out.mask.data(0, p) = dist_to_background(image.pixels, p) > background_tolerance ? 1.0f : 0.0f;
    const float occ = mask_occupancy(out);
    if (occ < 0.01f || occ > 0.99f) throw DegenerateMaskError("extracted silhouette occupancy outside [1%, 99%]");
    return out;
}

ItemImage normalize_orientation(const ItemImage& image, float background_tolerance) {
    const Index r = image.resolution();
    FeatureMap<float> fg(1, r, r);
    for (Index p = 0; p < r * r; ++p)
        fg.data(0, p) = dist_to_background(image.pixels, p) > background_tolerance ? 1.0f : 0.0f;
    const float comx = foreground_com_x(fg);
    if (comx < 0.0f || comx >= static_cast<float>(r - 1) / 2.0f) return image;
    ItemImage out = image;
    out.pixels = flip_horizontal(image.pixels);
    return out;
}

GivenMask sample_given_mask(Rng& rng, Index n) {
    if (n < 2) throw ConfigError("given-mask sampling needs n >= 2");
    if (n > 62) throw ConfigError("given-mask sampling supports n <= 62");
    const std::uint64_t all = (std::uint64_t(1) << n) - 1;
    std::uint64_t bits;
    do {
        bits = rng.uniform_index(all + 1);
    } while (bits == 0 || bits == all);
    GivenMask g;
    g.given.resize(static_cast<std::size_t>(n));
    for (Index i = 0; i < n; ++i) g.given[static_cast<std::size_t>(i)] = static_cast<int>((bits >> i) & 1);
    return g;
}

std::pair<std::vector<Index>, std::vector<Index>> split_indices(Index n, float ratio, std::uint64_t seed) {
    if (n <= 0) throw ConfigError("cannot split an empty record list");
    if (!(ratio > 0.0f && ratio < 1.0f)) throw ConfigError("split ratio must lie in (0,1)");
    std::vector<Index> order(static_cast<std::size_t>(n));
    for (Index i = 0; i < n; ++i) order[static_cast<std::size_t>(i)] = i;
    Rng rng(derive_seed(seed, "split", 0));
    for (Index i = n - 1; i > 0; --i)
        std::swap(order[static_cast<std::size_t>(i)],
                  order[static_cast<std::size_t>(rng.uniform_index(static_cast<std::uint64_t>(i) + 1))]);
    const auto n_train = static_cast<std::size_t>(std::floor(static_cast<double>(ratio) * static_cast<double>(n)));
    std::vector<Index> train(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(n_train));
    std::vector<Index> test(order.begin() + static_cast<std::ptrdiff_t>(n_train), order.end());
    return {train, test};
}

DatasetSplit split_dataset(std::vector<OutfitRecord> records, float ratio, std::uint64_t seed) {
    auto [train_idx, test_idx] = split_indices(static_cast<Index>(records.size()), ratio, seed);
    DatasetSplit out;
    out.seed = seed;
    out.train.reserve(train_idx.size());
    out.test.reserve(test_idx.size());
    for (Index i : train_idx) out.train.push_back(std::move(records[static_cast<std::size_t>(i)]));
    for (Index i : test_idx) out.test.push_back(std::move(records[static_cast<std::size_t>(i)]));
    return out;
}

void save_corpus(const DatasetSplit& split, const std::string& dir) {
    fs::create_directories(dir);
    json manifest;
    manifest["seed"] = split.seed;
    manifest["train"] = json::array();
    manifest["test"] = json::array();
    Index counter = 0;
    for (const auto& rec : split.train) {
        const std::string id = outfit_id(counter++);
        save_record(rec, fs::path(dir) / id);
        manifest["train"].push_back(id);
    }
    for (const auto& rec : split.test) {
        const std::string id = outfit_id(counter++);
        save_record(rec, fs::path(dir) / id);
        manifest["test"].push_back(id);
    }
    std::ofstream out(fs::path(dir) / "manifest.json");
    if (!out) throw IoError("cannot write corpus manifest in " + dir);
    out << manifest.dump(2) << "\n";
}

DatasetSplit load_corpus(const std::string& dir) {
    std::ifstream in(fs::path(dir) / "manifest.json");
    if (!in) throw IoError("missing corpus manifest in " + dir);
    json manifest = json::parse(in);
    DatasetSplit split;
    split.seed = manifest.value("seed", std::uint64_t(0));
    for (const auto& id : manifest.at("train")) {
        split.train.push_back(load_record(fs::path(dir) / id.get<std::string>()));
        split.manifest[id.get<std::string>()] = (fs::path(dir) / id.get<std::string>()).string();
    }
    for (const auto& id : manifest.at("test")) {
        split.test.push_back(load_record(fs::path(dir) / id.get<std::string>()));
        split.manifest[id.get<std::string>()] = (fs::path(dir) / id.get<std::string>()).string();
    }
    return split;
}

Eigen::Vector3f mean_foreground_color(const ItemImage& img, const SilhouetteMask& m) {
    Eigen::Vector3d acc = Eigen::Vector3d::Zero();
    double cnt = 0;
    for (Index p = 0; p < m.mask.pixels(); ++p)
        if (m.mask.data(0, p) > 0.5f) {
            for (int c = 0; c < 3; ++c) acc[c] += static_cast<double>(img.pixels.data(c, p));
            cnt += 1;
        }
    if (cnt == 0) return Eigen::Vector3f::Zero();
    return (acc / cnt).cast<float>();
}

}  // namespace outfitgan::data

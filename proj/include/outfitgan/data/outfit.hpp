#pragma once

#include <cmath>
#include <map>
#include <string>
#include <vector>

#include "outfitgan/core/errors.hpp"
#include "outfitgan/core/types.hpp"

namespace outfitgan::data {

/// One fashion item: 3xRxR pixels in [-1,1] plus its category index.
struct ItemImage {
    FeatureMap<float> pixels;
    int category = 0;

    ItemImage() : pixels(3, 0, 0) {}
    ItemImage(Index r, int cat) : pixels(3, r, r), category(cat) {}
    Index resolution() const { return pixels.height; }
};

/// Binary silhouette raster stored as a 1xRxR map with values in {0,1}.
struct SilhouetteMask {
    FeatureMap<float> mask;

    SilhouetteMask() : mask(1, 0, 0) {}
    explicit SilhouetteMask(Index r) : mask(1, r, r) {}
    Index resolution() const { return mask.height; }
};

struct OutfitRecord {
    std::vector<ItemImage> items;
    std::vector<SilhouetteMask> silhouettes;
    long likes = 0;

    Index size() const { return static_cast<Index>(items.size()); }
};

/// Marks which item slots are inputs (1) vs. synthesis targets (0).
struct GivenMask {
    std::vector<int> given;

    Index size() const { return static_cast<Index>(given.size()); }
    bool is_given(Index i) const { return given[static_cast<std::size_t>(i)] != 0; }
    Index count_given() const {
        Index s = 0;
        for (int g : given) s += g;
        return s;
    }
};

struct DatasetSplit {
    std::vector<OutfitRecord> train;
    std::vector<OutfitRecord> test;
    std::uint64_t seed = 0;
    std::map<std::string, std::string> manifest;  // record id -> directory
};

// ---------------------------------------------------------------------------
// validation

inline float mask_occupancy(const SilhouetteMask& m) {
    return m.mask.data.sum() / static_cast<float>(m.mask.pixels());
}

inline void validate_item(const ItemImage& img) {
    if (img.pixels.channels != 3 || img.pixels.height != img.pixels.width)
        throw ShapeError("item image must be 3 channels and square");
    if (!is_power_of_two(img.pixels.height) || img.pixels.height < 16)
        throw ConfigError("item resolution must be a power of two >= 16");
    if (!img.pixels.all_finite()) throw NumericError("item image contains non-finite pixels");
    if (img.pixels.data.minCoeff() < -1.0f || img.pixels.data.maxCoeff() > 1.0f)
        throw NumericError("item pixels outside [-1,1]");
}

inline void validate_mask(const SilhouetteMask& m) {
    for (Index i = 0; i < m.mask.data.size(); ++i) {
        const float v = m.mask.data.data()[i];
        if (v != 0.0f && v != 1.0f) throw NumericError("silhouette mask is not binary");
    }
    const float occ = mask_occupancy(m);
    if (occ < 0.01f || occ > 0.99f) throw DegenerateMaskError("silhouette occupancy outside [1%, 99%]");
}

inline void validate_given(const GivenMask& g) {
    const Index n = g.size();
    const Index s = g.count_given();
    if (s < 1 || s > n - 1) throw ConfigError("given mask must leave at least one given and one target item");
}

/// Checks item count, category permutation, and item/mask shape agreement.
inline void validate_record(const OutfitRecord& rec, Index n_categories) {
    if (rec.size() != n_categories) throw ShapeError("outfit record item count mismatch");
    if (static_cast<Index>(rec.silhouettes.size()) != n_categories)
        throw ShapeError("outfit record silhouette count mismatch");
    std::vector<int> seen(static_cast<std::size_t>(n_categories), 0);
    for (const auto& it : rec.items) {
        if (it.category < 0 || it.category >= n_categories) throw ConfigError("category index out of range");
        if (seen[static_cast<std::size_t>(it.category)]++) throw ConfigError("duplicate category in outfit");
    }
    for (Index i = 0; i < rec.size(); ++i)
        if (rec.items[static_cast<std::size_t>(i)].resolution() != rec.silhouettes[static_cast<std::size_t>(i)].resolution())
            throw ShapeError("item/silhouette resolution mismatch");
}

inline float iou(const SilhouetteMask& a, const SilhouetteMask& b) {
    if (!a.mask.same_shape(b.mask)) throw ShapeError("iou: mask shape mismatch");
    float inter = 0.0f, uni = 0.0f;
    for (Index i = 0; i < a.mask.data.size(); ++i) {
        const bool pa = a.mask.data.data()[i] > 0.5f;
        const bool pb = b.mask.data.data()[i] > 0.5f;
        inter += (pa && pb) ? 1.0f : 0.0f;
        uni += (pa || pb) ? 1.0f : 0.0f;
    }
    return uni > 0.0f ? inter / uni : 1.0f;
}

}  // namespace outfitgan::data

#pragma once

#include <optional>
#include <vector>

#include "outfitgan/extractor/extractor.hpp"
#include "outfitgan/generator/generator.hpp"

namespace outfitgan::generator {

/// Everything produced by one synthesis pass, with the traces needed to
/// backpropagate through both networks afterwards.
template <typename T>
struct SynOutfitResult {
    std::vector<FeatureMap<T>> images;   // N composited items
    std::vector<FeatureMap<T>> raw;      // generator outputs (target slots only)
    std::vector<MatX<T>> styles;         // per-item K x style_dim
    typename extractor::StyleExtractor<T>::Trace ext_tr;
    std::vector<std::optional<typename Generator<T>::Trace>> gen_tr;  // per slot, targets only
};

/// One outfit through extract -> synthesize -> composite. Given slots are
/// returned bit-exactly; the generator only runs for target slots.
template <typename T>
SynOutfitResult<T> syn_outfit(const std::vector<FeatureMap<T>>& items, const std::vector<int>& categories,
                              const std::vector<FeatureMap<T>>& silhouettes, const data::GivenMask& given,
                              const extractor::StyleExtractor<T>& ext, const Generator<T>& gen) {
    const auto n = items.size();
    if (silhouettes.size() != n || categories.size() != n || static_cast<std::size_t>(given.size()) != n)
        throw ShapeError("syn_outfit: input length mismatch");
    if (ext.style_layers() != gen.style_layers())
        throw ConfigError("syn_outfit: extractor/generator style layer counts differ");

    SynOutfitResult<T> out;
    // Target slots enter the extractor as zeroed images (handled via `given`),
    // so the style codes depend only on the items actually supplied.
    out.styles = ext.forward(items, categories, given, out.ext_tr);
    out.raw.assign(n, FeatureMap<T>(0, 0, 0));
    out.gen_tr.resize(n);
    out.images.reserve(n);
    for (std::size_t i = 0; i < n; ++i) {
        if (given.is_given(static_cast<Index>(i))) {
            out.images.push_back(items[i]);
            continue;
        }
        out.gen_tr[i].emplace();
        out.raw[i] = gen.forward(out.styles[i], silhouettes[i], *out.gen_tr[i]);
        out.images.push_back(out.raw[i]);
    }
    return out;
}

/// Adapter over an OutfitRecord using its own silhouettes.
template <typename T>
SynOutfitResult<T> syn_outfit(const data::OutfitRecord& rec, const data::GivenMask& given,
                              const extractor::StyleExtractor<T>& ext, const Generator<T>& gen) {
    std::vector<FeatureMap<T>> items, sils;
    std::vector<int> cats;
    for (const auto& it : rec.items) {
        items.push_back(it.pixels.template cast<T>());
        cats.push_back(it.category);
    }
    for (const auto& s : rec.silhouettes) sils.push_back(s.mask.template cast<T>());
    return syn_outfit(items, cats, sils, given, ext, gen);
}

}  // namespace outfitgan::generator

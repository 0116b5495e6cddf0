#pragma once

#include <string>
#include <utility>
#include <vector>

#include "outfitgan/core/rng.hpp"
#include "outfitgan/data/outfit.hpp"

namespace outfitgan::data {

/// Corpus background is pure white in [-1,1] space.
constexpr float kBackgroundValue = 1.0f;
constexpr float kBackgroundTolerance = 0.25f;

/// Deterministic procedural outfit corpus. Items within an outfit share a
/// sampled palette theme (hue/saturation/value plus stripe texture), so
/// within-outfit appearance is statistically closer than across outfits.
/// Category archetypes: 0 top, 1 bag, 2 trousers, 3 shoe (cycled for N > 4).
DatasetSplit generate_synthetic_corpus(std::uint64_t seed, Index n_outfits, Index resolution, Index n_categories,
                                       float split_ratio = 0.8f);

/// One outfit, derived purely from (seed, outfit_index).
OutfitRecord generate_outfit(std::uint64_t seed, Index outfit_index, Index resolution, Index n_categories);

/// Threshold the distance-to-background of every pixel. Rejects masks whose
/// occupancy falls outside [1%, 99%].
SilhouetteMask extract_silhouette(const ItemImage& image, float background_tolerance = kBackgroundTolerance);

/// Mirror the image horizontally when the foreground centre of mass sits in
/// the left half; idempotent, identity on background-only images.
ItemImage normalize_orientation(const ItemImage& image, float background_tolerance = kBackgroundTolerance);

/// Uniform over all binary vectors with 1 <= sum <= n-1 (rejection sampled).
GivenMask sample_given_mask(Rng& rng, Index n);

/// Seeded shuffle of 0..n-1 cut at floor(ratio*n); the record-free core of
/// split_dataset, usable for size checks without materializing records.
std::pair<std::vector<Index>, std::vector<Index>> split_indices(Index n, float ratio, std::uint64_t seed);

DatasetSplit split_dataset(std::vector<OutfitRecord> records, float ratio, std::uint64_t seed);

/// Directory layout: <dir>/outfit_XXXXX/{item_<k>.png, mask_<k>.png, meta.json}
/// plus a top-level manifest.json naming the train/test membership.
void save_corpus(const DatasetSplit& split, const std::string& dir);
DatasetSplit load_corpus(const std::string& dir);

/// Mean [-1,1] RGB over the mask's foreground pixels.
Eigen::Vector3f mean_foreground_color(const ItemImage& img, const SilhouetteMask& m);

FeatureMap<float> flip_horizontal(const FeatureMap<float>& x);

}  // namespace outfitgan::data

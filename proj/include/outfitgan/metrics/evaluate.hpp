#pragma once

#include <functional>
#include <string>
#include <vector>

#include "outfitgan/data/outfit.hpp"
#include "outfitgan/discriminator/collocation.hpp"
#include "outfitgan/extractor/extractor.hpp"
#include "outfitgan/generator/generator.hpp"
#include "outfitgan/metrics/f2bt.hpp"

namespace outfitgan::metrics {

/// Outfit compatibility predictor: higher is more compatible.
using PsiScorer = std::function<double(const std::vector<FeatureMap<float>>& images, const std::vector<int>& categories)>;

/// Negative mean pairwise distance between item embeddings under `coll`;
/// coherent outfits cluster, so tighter clusters score higher.
PsiScorer make_collocation_psi(const discriminator::CollocationDiscriminator<float>& coll);

struct EvalOptions {
    std::vector<Index> settings = {1, 2, 3};  // given-item counts per setting
    std::uint64_t seed = 11;
    std::string mask_source = "real";  // real | random-pool
    bool oracle = false;               // ground truth stands in for synthesis
};

struct SettingResult {
    Index given_count = 0;
    double ssim_mean = 0;
    double fid_value = 0;
    std::vector<double> psi;  // per test outfit; empty without a scorer
};

struct MetricReport {
    std::vector<SettingResult> settings;
    double ssim_avg = 0;
    double fid_avg = 0;
    std::string label;  // checkpoint path or run name
};

/// Synthesizes the targets of every test outfit under each given-count
/// setting and scores SSIM against ground truth plus FID between the
/// synthesized and real target pools.
MetricReport evaluate_run(const extractor::StyleExtractor<float>& ext, const generator::Generator<float>& gen,
                          const std::vector<data::OutfitRecord>& test, const EvalOptions& opt,
                          const PsiScorer* psi = nullptr);

/// Per-setting tournament across runs; rows follow `reports` order.
/// Requires every report to carry psi scores for the same outfits.
std::vector<std::vector<long>> f2bt_tournament(const std::vector<MetricReport>& reports);

/// report.json payload: per-setting and average metrics, plus provenance.
std::string report_to_json(const std::vector<MetricReport>& reports, const std::string& config_hash,
                           const std::vector<std::vector<long>>* tournament = nullptr);

}  // namespace outfitgan::metrics

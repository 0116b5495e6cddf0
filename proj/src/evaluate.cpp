#include "outfitgan/metrics/evaluate.hpp"

#include <json.hpp>

#include <bit>

#include "outfitgan/core/rng.hpp"
#include "outfitgan/generator/syn_outfit.hpp"
#include "outfitgan/metrics/features.hpp"
#include "outfitgan/metrics/fid.hpp"
#include "outfitgan/metrics/ssim.hpp"

namespace outfitgan::metrics {

namespace {

/// Uniform draw over given-masks with exactly `count` ones.
data::GivenMask mask_with_count(Rng& rng, Index n, Index count) {
    if (count < 1 || count > n - 1) throw ConfigError("eval: given count must be in [1, n-1]");
    std::vector<data::GivenMask> pool;
    for (unsigned bits = 1; bits < (1u << n); ++bits) {
        if (std::popcount(bits) != static_cast<int>(count)) continue;
        data::GivenMask m;
        for (Index i = 0; i < n; ++i) m.given.push_back((bits >> i) & 1u);
        pool.push_back(std::move(m));
    }
    return pool[rng.uniform_index(pool.size())];
}

/// Silhouettes for one synthesis pass: the record's own, or (for target
/// slots) category-matched donors drawn from the test pool.
std::vector<FeatureMap<float>> pick_silhouettes(const data::OutfitRecord& rec, const data::GivenMask& gm,
                                                const std::vector<data::OutfitRecord>& test,
                                                const std::string& mask_source, Rng& rng) {
    std::vector<FeatureMap<float>> sils;
    for (Index i = 0; i < rec.size(); ++i) {
        const auto ii = static_cast<std::size_t>(i);
        if (mask_source == "real" || gm.is_given(i)) {
            sils.push_back(rec.silhouettes[ii].mask);
            continue;
        }
        const auto& donor = test[rng.uniform_index(test.size())];
        const int want = rec.items[ii].category;
        for (Index j = 0; j < donor.size(); ++j)
            if (donor.items[static_cast<std::size_t>(j)].category == want) {
                sils.push_back(donor.silhouettes[static_cast<std::size_t>(j)].mask);
                break;
            }
    }
    return sils;
}

}  // namespace

PsiScorer make_collocation_psi(const discriminator::CollocationDiscriminator<float>& coll) {
    return [&coll](const std::vector<FeatureMap<float>>& images, const std::vector<int>& categories) {
        if (images.size() != categories.size() || images.size() < 2)
            throw ShapeError("psi: need >= 2 images with matching categories");
        std::vector<VecX<float>> cs;
        for (std::size_t i = 0; i < images.size(); ++i) {
            typename discriminator::CollocationDiscriminator<float>::Trace tr;
            cs.push_back(coll.embed_item(images[i], categories[i], tr));
        }
        double acc = 0;
        long pairs = 0;
        for (std::size_t i = 0; i < cs.size(); ++i)
            for (std::size_t j = i + 1; j < cs.size(); ++j) {
                acc += static_cast<double>((cs[i] - cs[j]).norm());
                ++pairs;
            }
        return -acc / static_cast<double>(pairs);
    };
}

MetricReport evaluate_run(const extractor::StyleExtractor<float>& ext, const generator::Generator<float>& gen,
                          const std::vector<data::OutfitRecord>& test, const EvalOptions& opt,
                          const PsiScorer* psi) {
    if (test.empty()) throw ConfigError("evaluate_run: empty test split");
    if (opt.mask_source != "real" && opt.mask_source != "random-pool")
        throw ConfigError("evaluate_run: mask source must be real or random-pool");

    FrozenFeatureNet<double> feat(test.front().items.front().resolution());

    MetricReport rep;
    for (const Index g : opt.settings) {
        SettingResult sr;
        sr.given_count = g;
        double ssim_acc = 0;
        long ssim_cnt = 0;
        std::vector<FeatureMap<double>> synth_pool, real_pool;

        for (std::size_t o = 0; o < test.size(); ++o) {
            const auto& rec = test[o];
            Rng rng(derive_seed(opt.seed, "eval-mask", static_cast<std::uint64_t>(g) * 1000003u + o));
            const auto gm = mask_with_count(rng, rec.size(), g);

            std::vector<FeatureMap<float>> images;
            std::vector<int> categories;
            for (const auto& it : rec.items) categories.push_back(it.category);

            if (opt.oracle) {
                for (const auto& it : rec.items) images.push_back(it.pixels);
            } else {
                std::vector<FeatureMap<float>> items;
                for (const auto& it : rec.items) items.push_back(it.pixels);
                const auto sils = pick_silhouettes(rec, gm, test, opt.mask_source, rng);
                images = generator::syn_outfit(items, categories, sils, gm, ext, gen).images;
            }

            for (Index i = 0; i < rec.size(); ++i) {
                if (gm.is_given(i)) continue;
                const auto ii = static_cast<std::size_t>(i);
                const auto syn_d = images[ii].cast<double>();
                const auto real_d = rec.items[ii].pixels.cast<double>();
                ssim_acc += ssim<double>(to_unit_range(syn_d), to_unit_range(real_d));
                ++ssim_cnt;
                synth_pool.push_back(syn_d);
                real_pool.push_back(real_d);
            }
            if (psi) sr.psi.push_back((*psi)(images, categories));
        }

        sr.ssim_mean = ssim_cnt ? ssim_acc / static_cast<double>(ssim_cnt) : 0.0;
        sr.fid_value = fid(feature_stats(synth_pool, feat), feature_stats(real_pool, feat));
        rep.settings.push_back(std::move(sr));
    }

    for (const auto& sr : rep.settings) {
        rep.ssim_avg += sr.ssim_mean;
        rep.fid_avg += sr.fid_value;
    }
    rep.ssim_avg /= static_cast<double>(rep.settings.size());
    rep.fid_avg /= static_cast<double>(rep.settings.size());
    return rep;
}

std::vector<std::vector<long>> f2bt_tournament(const std::vector<MetricReport>& reports) {
    if (reports.size() < 2) throw ConfigError("f2bt tournament: need at least 2 runs");
    const std::size_t n_settings = reports.front().settings.size();
    std::vector<std::vector<long>> out;
    for (std::size_t s = 0; s < n_settings; ++s) {
        std::vector<std::vector<double>> rows;
        for (const auto& rep : reports) {
            if (rep.settings.size() != n_settings || rep.settings[s].psi.empty())
                throw ConfigError("f2bt tournament: runs lack aligned psi scores");
            rows.push_back(rep.settings[s].psi);
        }
        out.push_back(f2bt(ScoreTable::from_rows(rows)));
    }
    return out;
}

std::string report_to_json(const std::vector<MetricReport>& reports, const std::string& config_hash,
                           const std::vector<std::vector<long>>* tournament) {
    nlohmann::json j;
    j["config_hash"] = config_hash;
    for (const auto& rep : reports) {
        nlohmann::json jr;
        jr["label"] = rep.label;
        for (const auto& sr : rep.settings) {
            nlohmann::json js;
            js["ssim"] = sr.ssim_mean;
            js["fid"] = sr.fid_value;
            jr["settings"][std::to_string(sr.given_count)] = js;
        }
        jr["avg"]["ssim"] = rep.ssim_avg;
        jr["avg"]["fid"] = rep.fid_avg;
        j["runs"].push_back(jr);
    }
    if (tournament) {
        for (std::size_t s = 0; s < tournament->size(); ++s) {
            const std::string key = std::to_string(reports.front().settings[s].given_count);
            j["f2bt"][key] = (*tournament)[s];
        }
        std::vector<double> avg(reports.size(), 0.0);
        for (const auto& per_setting : *tournament)
            for (std::size_t m = 0; m < per_setting.size(); ++m)
                avg[m] += static_cast<double>(per_setting[m]) / static_cast<double>(tournament->size());
        j["f2bt"]["Avg"] = avg;
    }
    return j.dump(2) + "\n";
}

}  // namespace outfitgan::metrics

#include <CLI11.hpp>
#include <json.hpp>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include "outfitgan/config/config.hpp"
#include "outfitgan/data/corpus.hpp"
#include "outfitgan/data/image_io.hpp"
#include "outfitgan/generator/syn_outfit.hpp"
#include "outfitgan/metrics/evaluate.hpp"
#include "outfitgan/training/trainer.hpp"

namespace fs = std::filesystem;
using namespace outfitgan;

namespace {

struct CommonArgs {
    std::string config_path;
    std::string out;
    long seed = -1;  // -1: keep config value
};

fs::path resolve_out(const std::string& flag) {
    if (!flag.empty()) return flag;
    if (const char* env = std::getenv("OUTFITGAN_OUT")) return env;
    return "out";
}

Config load_config(const CommonArgs& a, const char* seed_key) {
    Config cfg = a.config_path.empty() ? Config::defaults() : Config::load(a.config_path);
    if (a.seed >= 0) cfg.set(seed_key, std::to_string(a.seed));
    return cfg;
}

/// Audit trail: resolved config and run provenance under the output dir.
fs::path prepare_out_dir(const Config& cfg, const std::string& out_flag, const std::string& command) {
    const fs::path out = resolve_out(out_flag);
    std::error_code ec;
    fs::create_directories(out, ec);
    if (ec) throw IoError("cannot create output directory " + out.string() + ": " + ec.message());
    cfg.save((out / "config.cfg").string());
    nlohmann::json j;
    j["command"] = command;
    j["config_hash"] = cfg.hash();
    std::ofstream run(out / "run.json");
    if (!run) throw IoError("cannot write " + (out / "run.json").string());
    run << j.dump(2) << "\n";
    return out;
}

data::DatasetSplit corpus_from_config(const Config& cfg) {
    return data::generate_synthetic_corpus(cfg.get_u64("data.seed"), cfg.get_int("data.n_outfits"),
                                           cfg.get_int("data.resolution"), cfg.get_int("data.n_categories"),
                                           static_cast<float>(cfg.get_real("data.split_ratio")));
}

data::GivenMask parse_given_spec(const std::string& spec, Index n) {
    data::GivenMask gm;
    std::string tok;
    std::istringstream is(spec);
    while (std::getline(is, tok, ',')) {
        if (tok == "0")
            gm.given.push_back(0);
        else if (tok == "1")
            gm.given.push_back(1);
        else
            throw ConfigError("--given entries must be 0 or 1, got '" + tok + "'");
    }
    if (gm.size() != n)
        throw ConfigError("--given must list exactly " + std::to_string(n) + " comma-separated entries");
    data::validate_given(gm);  // rejects all-given and none-given
    return gm;
}

/// N item tiles side by side as one image.
FeatureMap<float> tile_row(const std::vector<FeatureMap<float>>& images) {
    const Index r = images.front().height;
    FeatureMap<float> grid(3, r, r * static_cast<Index>(images.size()));
    for (std::size_t k = 0; k < images.size(); ++k)
        for (Index c = 0; c < 3; ++c)
            for (Index y = 0; y < r; ++y)
                for (Index x = 0; x < r; ++x)
                    grid.at(c, y, static_cast<Index>(k) * r + x) = images[k].at(c, y, x);
    return grid;
}

int cmd_synth_data(const CommonArgs& a) {
    const Config cfg = load_config(a, "data.seed");
    const fs::path out = prepare_out_dir(cfg, a.out, "synth-data");
    const auto split = corpus_from_config(cfg);
    data::save_corpus(split, (out / "corpus").string());
    std::cout << "corpus: " << split.train.size() << " train / " << split.test.size() << " test records -> "
              << (out / "corpus").string() << "\n";
    return 0;
}

int cmd_train(const CommonArgs& a, long iters, const std::string& resume) {
    const Config cfg = load_config(a, "train.seed");
    const fs::path out = prepare_out_dir(cfg, a.out, "train");
    const auto split = corpus_from_config(cfg);

    training::Trainer<float> tr(cfg, split);
    for (const auto& w : tr.warnings()) std::cerr << "warning: " << w << "\n";
    tr.set_checkpoint_root(out / "ckpt");
    if (!resume.empty()) {
        tr.resume(resume);
        std::cout << "resumed from " << resume << " at iteration " << tr.iteration() << "\n";
    }
    const Index target = iters > 0 ? tr.iteration() + iters : tr.planned_iterations();

    const fs::path log_path = out / "loss.log";
    const bool fresh = !fs::exists(log_path) || fs::file_size(log_path) == 0;
    std::ofstream log(log_path, std::ios::app);
    if (!log) throw IoError("cannot open " + log_path.string());
    if (fresh) log << training::loss_row_header() << "\n";

    tr.run(target, &log);
    std::cout << "trained to iteration " << tr.iteration() << "; checkpoints under " << (out / "ckpt").string()
              << "\n";
    return 0;
}

int cmd_generate(const CommonArgs& a, const std::string& ckpt, const std::string& given_spec,
                 const std::string& mask_source_flag) {
    const Config cfg = load_config(a, "eval.seed");
    const fs::path out = prepare_out_dir(cfg, a.out, "generate");
    const auto split = corpus_from_config(cfg);
    const Index n = cfg.get_int("data.n_categories");
    const auto gm = parse_given_spec(given_spec, n);
    const std::string mask_source = mask_source_flag.empty() ? cfg.get_str("eval.mask_source") : mask_source_flag;
    if (mask_source != "real" && mask_source != "random-pool")
        throw ConfigError("--mask-source must be real or random-pool");

    training::Trainer<float> tr(cfg, split);
    tr.resume(ckpt);

    const auto& test = split.test;
    Rng rng(derive_seed(cfg.get_u64("eval.seed"), "generate-pool", 0));
    for (std::size_t o = 0; o < test.size(); ++o) {
        const auto& rec = test[o];
        std::vector<FeatureMap<float>> items, sils;
        std::vector<int> cats;
        for (const auto& it : rec.items) {
            items.push_back(it.pixels);
            cats.push_back(it.category);
        }
        for (Index i = 0; i < rec.size(); ++i) {
            const auto ii = static_cast<std::size_t>(i);
            if (mask_source == "real" || gm.is_given(i)) {
                sils.push_back(rec.silhouettes[ii].mask);
                continue;
            }
            const auto& donor = test[rng.uniform_index(test.size())];
            for (Index j = 0; j < donor.size(); ++j)
                if (donor.items[static_cast<std::size_t>(j)].category == cats[ii]) {
                    sils.push_back(donor.silhouettes[static_cast<std::size_t>(j)].mask);
                    break;
                }
        }
        const auto syn = generator::syn_outfit(items, cats, sils, gm, tr.style_extractor(), tr.image_generator());
        char name[64];
        std::snprintf(name, sizeof name, "outfit_%03zu.png", o);
        data::write_png_rgb((out / name).string(), tile_row(syn.images));
    }
    std::cout << "wrote " << test.size() << " outfit grids to " << out.string() << "\n";
    return 0;
}

int cmd_eval(const CommonArgs& a, const std::vector<std::string>& ckpts, const std::string& mask_source_flag) {
    const Config cfg = load_config(a, "eval.seed");
    const fs::path out = prepare_out_dir(cfg, a.out, "eval");
    const auto split = corpus_from_config(cfg);
    const Index n = cfg.get_int("data.n_categories");

    metrics::EvalOptions opt;
    opt.settings.clear();
    for (Index g = 1; g < n; ++g) opt.settings.push_back(g);
    opt.seed = cfg.get_u64("eval.seed");
    opt.mask_source = mask_source_flag.empty() ? cfg.get_str("eval.mask_source") : mask_source_flag;

    // The compatibility predictor is shared across runs: the first
    // checkpoint's collocation discriminator scores every method.
    std::optional<discriminator::CollocationDiscriminator<float>> psi_dis;
    metrics::PsiScorer psi;

    std::vector<metrics::MetricReport> reports;
    for (const auto& ck : ckpts) {
        training::Trainer<float> tr(cfg, split);
        tr.resume(ck);
        if (!psi_dis) {
            psi_dis = tr.collocation_dis();
            psi = metrics::make_collocation_psi(*psi_dis);
        }
        auto rep = metrics::evaluate_run(tr.style_extractor(), tr.image_generator(), split.test, opt, &psi);
        rep.label = ck;
        reports.push_back(std::move(rep));
    }

    std::vector<std::vector<long>> tournament;
    const bool have_tournament = reports.size() >= 2;
    if (have_tournament) {
        tournament = metrics::f2bt_tournament(reports);
        std::vector<std::string> names;
        for (const auto& r : reports) names.push_back(r.label);
        for (std::size_t s = 0; s < tournament.size(); ++s) {
            std::vector<std::vector<double>> rows;
            for (const auto& r : reports) rows.push_back(r.settings[s].psi);
            const auto table = metrics::ScoreTable::from_rows(rows);
            char name[64];
            std::snprintf(name, sizeof name, "scores_given%ld.csv", static_cast<long>(reports[0].settings[s].given_count));
            std::ofstream csv(out / name);
            csv << table.to_csv(names);
        }
    } else {
        std::cerr << "warning: only one checkpoint given; tournament comparison skipped\n";
    }

    std::ofstream rj(out / "report.json");
    if (!rj) throw IoError("cannot write " + (out / "report.json").string());
    rj << metrics::report_to_json(reports, cfg.hash(), have_tournament ? &tournament : nullptr);

    for (const auto& rep : reports)
        std::cout << rep.label << ": ssim avg " << rep.ssim_avg << ", fid avg " << rep.fid_avg << "\n";
    std::cout << "report written to " << (out / "report.json").string() << "\n";
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Complementary outfit synthesis: data, training, generation, evaluation"};
    app.require_subcommand(1);

    CommonArgs common;
    std::string resume, ckpt_single, given_spec, mask_source;
    std::vector<std::string> ckpts;
    long iters = 0;

    auto add_common = [&](CLI::App* sub) {
        sub->add_option("--config", common.config_path, "config file (dotted key = value lines)");
        sub->add_option("--seed", common.seed, "override the subcommand's seed config key");
        sub->add_option("--out", common.out, "output directory (default $OUTFITGAN_OUT or ./out)");
    };

    auto* sd = app.add_subcommand("synth-data", "generate the synthetic outfit corpus");
    add_common(sd);

    auto* tn = app.add_subcommand("train", "run adversarial training");
    add_common(tn);
    tn->add_option("--iters", iters, "train this many additional iterations (default: train.n_iter)");
    tn->add_option("--resume", resume, "checkpoint directory to continue from");

    auto* gn = app.add_subcommand("generate", "synthesize outfit grids from a checkpoint");
    add_common(gn);
    gn->add_option("--ckpt", ckpt_single, "checkpoint directory")->required();
    gn->add_option("--given", given_spec, "comma-separated 0/1 per category; 1 = given")->required();
    gn->add_option("--mask-source", mask_source, "silhouette source: real | random-pool");

    auto* ev = app.add_subcommand("eval", "compute metrics for one or more checkpoints");
    add_common(ev);
    ev->add_option("--ckpt", ckpts, "checkpoint directories (2+ enables the tournament)")->required();
    ev->add_option("--mask-source", mask_source, "silhouette source: real | random-pool");

    try {
        app.parse(argc, argv);
        if (sd->parsed()) return cmd_synth_data(common);
        if (tn->parsed()) return cmd_train(common, iters, resume);
        if (gn->parsed()) return cmd_generate(common, ckpt_single, given_spec, mask_source);
        if (ev->parsed()) return cmd_eval(common, ckpts, mask_source);
        return 2;
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? 0 : 2;
    } catch (const ConfigError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const NumericError& e) {
        std::cerr << "numeric error: " << e.what() << "\n";
        return 3;
    } catch (const IoError& e) {
        std::cerr << "i/o error: " << e.what() << "\n";
        return 4;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
}

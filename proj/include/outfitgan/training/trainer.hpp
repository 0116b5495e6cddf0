#pragma once

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "outfitgan/config/config.hpp"
#include "outfitgan/data/corpus.hpp"
#include "outfitgan/discriminator/collocation.hpp"
#include "outfitgan/discriminator/unet.hpp"
#include "outfitgan/extractor/extractor.hpp"
#include "outfitgan/generator/syn_outfit.hpp"
#include "outfitgan/nn/adam.hpp"
#include "outfitgan/training/checkpoint.hpp"
#include "outfitgan/training/losses.hpp"

namespace outfitgan::training {

/// One training iteration's logged losses (the append-only log columns).
struct LossRow {
    Index iter = 0;
    double l_dis = 0, l_coll_dis = 0, l_gan = 0, l1 = 0, lvgg = 0, lcoll = 0, lg = 0;
};

inline std::string loss_row_header() { return "iter, L_dis, L_coll_dis, L_gan, L1, Lvgg, Lcoll, Lg"; }

inline std::string format_loss_row(const LossRow& r) {
    char buf[256];
    std::snprintf(buf, sizeof buf, "%ld, %.8g, %.8g, %.8g, %.8g, %.8g, %.8g, %.8g", static_cast<long>(r.iter),
                  r.l_dis, r.l_coll_dis, r.l_gan, r.l1, r.lvgg, r.lcoll, r.lg);
    return buf;
}

/// Three-phase adversarial trainer: per iteration it updates the real/fake
/// discriminator, then the collocation discriminator, then extractor and
/// generator jointly, each phase with the others' parameters frozen. All
/// randomness is re-derived from (seed, iteration), so runs are
/// deterministic and resumable.
template <typename T>
class Trainer {
public:
    Trainer(const Config& cfg, data::DatasetSplit split) : cfg_(cfg), split_(std::move(split)) {
        batch_size_ = cfg.get_int("train.batch_size");
        if (batch_size_ < 2) throw ConfigError("train.batch_size must be >= 2 (contrastive phase needs pairs)");
        n_iter_ = cfg.get_int("train.n_iter");
        r1_every_ = cfg.get_int("train.r1_every");
        if (r1_every_ < 1) throw ConfigError("train.r1_every must be >= 1");
        r1_gamma_ = static_cast<T>(cfg.get_real("train.r1_gamma"));
        lambda1_ = static_cast<T>(cfg.get_real("train.lambda1"));
        lambda2_ = static_cast<T>(cfg.get_real("train.lambda2"));
        lambda3_ = static_cast<T>(cfg.get_real("train.lambda3"));
        seed_ = cfg.get_u64("train.seed");
        ckpt_every_ = cfg.get_int("train.ckpt_every");
        margin_ = static_cast<T>(cfg.get_real("collocation.margin"));

        const Index resolution = cfg.get_int("data.resolution");
        if (cfg.get_int("generator.resolution") != resolution)
            throw ConfigError("generator.resolution must match data.resolution");
        n_categories_ = cfg.get_int("data.n_categories");
        if (split_.train.empty()) throw ConfigError("trainer: empty training split");
        if (split_.train.front().size() != n_categories_)
            throw ConfigError("trainer: dataset outfit size disagrees with data.n_categories");

        extractor::ExtractorConfig ec;
        ec.resolution = resolution;
        ec.n_categories = n_categories_;
        ec.d_v = cfg.get_int("extractor.d_v");
        ec.d_cat = cfg.get_int("extractor.d_cat");
        ec.hidden = cfg.get_int("extractor.hidden");
        ec.mlp_layers = cfg.get_int("extractor.mlp_layers");
        ec.mlp_width = cfg.get_int("extractor.mlp_width");
        ec.style_dim = cfg.get_int("extractor.style_dim");
        ec.n_scales = cfg.get_int("extractor.n_scales");
        ext_.emplace(ec);

        generator::GeneratorConfig gc;
        gc.resolution = resolution;
        gc.base_channels = cfg.get_int("generator.base_channels");
        gc.max_channels = cfg.get_int("generator.max_channels");
        gc.style_dim = ec.style_dim;
        gen_.emplace(gc);

        discriminator::UNetConfig uc;
        uc.resolution = resolution;
        uc.base_channels = cfg.get_int("dis.channels");
        uc.max_channels = cfg.get_int("generator.max_channels");
        uc.logit_clamp = cfg.get_real("dis.logit_clamp");
        dis_.emplace(uc);

        discriminator::CollocationConfig cc;
        cc.resolution = resolution;
        cc.base_channels = cfg.get_int("collocation.channels");
        cc.max_channels = cfg.get_int("generator.max_channels");
        cc.embed_dim = cfg.get_int("collocation.embed_dim");
        cc.n_categories = n_categories_;
        coll_.emplace(cc);

        Rng r_ext(derive_seed(seed_, "init-extractor", 0));
        Rng r_gen(derive_seed(seed_, "init-generator", 0));
        Rng r_dis(derive_seed(seed_, "init-dis", 0));
        Rng r_coll(derive_seed(seed_, "init-coll", 0));
        ext_->init(r_ext);
        gen_->init(r_gen);
        dis_->init(r_dis);
        coll_->init(r_coll);

        {
            ParamCollector<T> pc(params_eg_);
            pc.scope("extractor", [&](ParamCollector<T>& c) { ext_->collect(c); });
            pc.scope("generator", [&](ParamCollector<T>& c) { gen_->collect(c); });
        }
        params_d_ = collect_params<T>(*dis_);
        params_coll_ = collect_params<T>(*coll_);

        const T lr = static_cast<T>(cfg.get_real("train.lr"));
        const T b1 = static_cast<T>(cfg.get_real("train.adam_beta1"));
        const T b2 = static_cast<T>(cfg.get_real("train.adam_beta2"));
        adam_eg_ = nn::Adam<T>(lr, b1, b2);
        adam_d_ = nn::Adam<T>(lr, b1, b2);
        adam_coll_ = nn::Adam<T>(lr, b1, b2);
        adam_eg_.attach(params_eg_);
        adam_d_.attach(params_d_);
        adam_coll_.attach(params_coll_);

        std::string warn;
        taps_ = make_perceptual_taps<T>(cfg.get_str("loss.perceptual_backend"), resolution, &warn);
        if (!warn.empty()) warnings_.push_back(warn);
    }

    // -- accessors --------------------------------------------------------

    Index iteration() const { return iteration_; }
    Index planned_iterations() const { return n_iter_; }
    Index r1_every() const { return r1_every_; }
    const std::vector<LossRow>& history() const { return history_; }
    const std::vector<std::string>& warnings() const { return warnings_; }

    extractor::StyleExtractor<T>& style_extractor() { return *ext_; }
    generator::Generator<T>& image_generator() { return *gen_; }
    discriminator::UNetDiscriminator<T>& real_fake_dis() { return *dis_; }
    discriminator::CollocationDiscriminator<T>& collocation_dis() { return *coll_; }

    const ParamList<T>& params_eg() const { return params_eg_; }
    const ParamList<T>& params_dis() const { return params_d_; }
    const ParamList<T>& params_coll() const { return params_coll_; }

    /// Called after each phase of each iteration: observer(phase in {1,2,3}, iter).
    std::function<void(int, Index)> phase_observer;

    void set_checkpoint_root(std::filesystem::path root) { ckpt_root_ = std::move(root); }
    const std::filesystem::path& checkpoint_root() const { return ckpt_root_; }

    /// True on iterations where the gradient penalty is applied.
    bool r1_scheduled(Index iter) const { return iter % r1_every_ == 0; }

    // -- training ---------------------------------------------------------

    /// One full iteration (three phases). Aborts with a diagnostic
    /// checkpoint on the first non-finite loss.
    LossRow step() {
        const Index t = ++iteration_;
        const Index batch = batch_size_;
        const Index n = n_categories_;

        Rng rng_batch(derive_seed(seed_, "batch", static_cast<std::uint64_t>(t)));
        Rng rng_given(derive_seed(seed_, "given", static_cast<std::uint64_t>(t)));
        Rng rng_neg2(derive_seed(seed_, "neg2", static_cast<std::uint64_t>(t)));
        Rng rng_neg3(derive_seed(seed_, "neg3", static_cast<std::uint64_t>(t)));

        std::vector<data::OutfitRecord> recs;
        std::vector<data::GivenMask> given;
        for (Index b = 0; b < batch; ++b) {
            recs.push_back(split_.train[rng_batch.uniform_index(split_.train.size())]);
            given.push_back(data::sample_given_mask(rng_given, n));
        }

        // Synthesis pass shared by phases 1 and 3: extractor and generator
        // are frozen during phases 1-2, so these traces stay valid.
        std::vector<generator::SynOutfitResult<T>> syn;
        std::vector<std::vector<FeatureMap<T>>> real_items(static_cast<std::size_t>(batch));
        for (Index b = 0; b < batch; ++b) {
            const auto bi = static_cast<std::size_t>(b);
            syn.push_back(generator::syn_outfit(recs[bi], given[bi], *ext_, *gen_));
            for (const auto& it : recs[bi].items) real_items[bi].push_back(it.pixels.template cast<T>());
        }
        if (t % 100 == 0) check_composite_exactness(syn, real_items, given, t);

        LossRow row;
        row.iter = t;

        // ---- phase 1: update the real/fake discriminator ----------------
        {
            zero_grads(params_d_);
            std::vector<typename discriminator::UNetDiscriminator<T>::Trace> tr_r, tr_f;
            std::vector<typename discriminator::UNetDiscriminator<T>::Output> reals, fakes;
            std::vector<FeatureMap<T>> real_batch;
            for (Index b = 0; b < batch; ++b)
                for (Index i = 0; i < n; ++i) {
                    if (given[static_cast<std::size_t>(b)].is_given(i)) continue;
                    const auto bi = static_cast<std::size_t>(b);
                    const auto ii = static_cast<std::size_t>(i);
                    tr_r.emplace_back();
                    reals.push_back(dis_->forward(real_items[bi][ii], tr_r.back()));
                    real_batch.push_back(real_items[bi][ii]);
                    tr_f.emplace_back();
                    fakes.push_back(dis_->forward(syn[bi].images[ii], tr_f.back()));
                }
            discriminator::DisLossGrads<T> grads;
            T ldis = discriminator::dis_loss<T>(reals, fakes, &grads);
            for (std::size_t k = 0; k < reals.size(); ++k) {
                dis_->backward(tr_r[k], grads.enc_real[k], grads.dec_real[k]);
                dis_->backward(tr_f[k], grads.enc_fake[k], grads.dec_fake[k]);
            }
            if (r1_scheduled(t)) ldis += r1_penalty(*dis_, real_batch, r1_gamma_);
            row.l_dis = static_cast<double>(ldis);
            abort_if_non_finite(row, t);
            adam_d_.step(params_d_);
            if (phase_observer) phase_observer(1, t);
        }

        // ---- phase 2: update the collocation discriminator ---------------
        {
            zero_grads(params_coll_);
            const auto nb = static_cast<std::size_t>(batch);
            std::vector<std::vector<typename discriminator::CollocationDiscriminator<T>::Trace>> btr(nb), ntr(nb);
            std::vector<discriminator::ItemEmbeds<T>> bemb(nb), nemb(nb), pos2(nb);
            std::vector<data::OutfitRecord> negs;
            for (std::size_t b = 0; b < nb; ++b) {
                btr[b].resize(static_cast<std::size_t>(n));
                for (Index i = 0; i < n; ++i)
                    bemb[b].push_back(coll_->embed_item(real_items[b][static_cast<std::size_t>(i)],
                                                        recs[b].items[static_cast<std::size_t>(i)].category,
                                                        btr[b][static_cast<std::size_t>(i)]));
                negs.push_back(discriminator::sample_negative_outfit(recs, rng_neg2));
                ntr[b].resize(static_cast<std::size_t>(n));
                for (Index i = 0; i < n; ++i) {
                    const auto ii = static_cast<std::size_t>(i);
                    nemb[b].push_back(coll_->embed_item(negs[b].items[ii].pixels.template cast<T>(),
                                                        negs[b].items[ii].category, ntr[b][ii]));
                }
            }
            for (std::size_t b = 0; b < nb; ++b) pos2[b] = bemb[(b + 1) % nb];
            std::vector<discriminator::ItemEmbeds<T>> g1, g2, g3;
            const T lcd = discriminator::collocation_dis_loss<T>(bemb, pos2, nemb, margin_, &g1, &g2, &g3);
            for (std::size_t b = 0; b < nb; ++b)
                for (std::size_t i = 0; i < static_cast<std::size_t>(n); ++i) {
                    coll_->backward(btr[b][i], g1[b][i]);
                    coll_->backward(btr[(b + 1) % nb][i], g2[b][i]);
                    coll_->backward(ntr[b][i], g3[b][i]);
                }
            row.l_coll_dis = static_cast<double>(lcd);
            abort_if_non_finite(row, t);
            adam_coll_.step(params_coll_);
            if (phase_observer) phase_observer(2, t);
        }

        // ---- phase 3: update extractor and generator jointly --------------
        {
            GLossParts<T> parts;
            const T lg = g_loss_and_grads(recs, given, syn, real_items, rng_neg3, &parts);
            row.l_gan = static_cast<double>(parts.gan);
            row.l1 = static_cast<double>(parts.l1);
            row.lvgg = static_cast<double>(parts.vgg);
            row.lcoll = static_cast<double>(parts.coll);
            row.lg = static_cast<double>(lg);
            abort_if_non_finite(row, t);
            adam_eg_.step(params_eg_);
            if (phase_observer) phase_observer(3, t);
        }

        history_.push_back(row);
        return row;
    }

    /// Full generator objective at the current parameters for a fixed batch
    /// and negative-sampling seed; gradients land in params_eg() and nothing
    /// is updated. Deterministic for fixed inputs, so it supports
    /// finite-difference probing.
    T g_loss_probe(const std::vector<data::OutfitRecord>& recs, const std::vector<data::GivenMask>& given,
                   std::uint64_t neg_seed, GLossParts<T>* parts = nullptr) {
        std::vector<generator::SynOutfitResult<T>> syn;
        std::vector<std::vector<FeatureMap<T>>> real_items(recs.size());
        for (std::size_t b = 0; b < recs.size(); ++b) {
            syn.push_back(generator::syn_outfit(recs[b], given[b], *ext_, *gen_));
            for (const auto& it : recs[b].items) real_items[b].push_back(it.pixels.template cast<T>());
        }
        Rng rng_neg(derive_seed(neg_seed, "probe-neg", 0));
        return g_loss_and_grads(recs, given, syn, real_items, rng_neg, parts);
    }

    /// Steps until `target_iter` (absolute), writing log lines and periodic
    /// checkpoints when a checkpoint root is configured.
    void run(Index target_iter, std::ostream* log = nullptr) {
        while (iteration_ < target_iter) {
            const LossRow row = step();
            if (log) *log << format_loss_row(row) << "\n" << std::flush;
            const bool last = iteration_ == target_iter;
            if (!ckpt_root_.empty() && ckpt_every_ > 0 && (iteration_ % ckpt_every_ == 0 || last))
                save(ckpt_root_ / std::to_string(iteration_));
        }
    }

    // -- checkpointing ------------------------------------------------------

    std::vector<CheckpointGroup<T>> checkpoint_groups() {
        return {{"eg", &params_eg_, &adam_eg_}, {"dis", &params_d_, &adam_d_}, {"coll", &params_coll_, &adam_coll_}};
    }

    void save(const std::filesystem::path& dir) {
        CheckpointMeta meta;
        meta.iteration = iteration_;
        meta.config_hash = cfg_.hash();
        meta.config_text = cfg_.dump();
        meta.seed = seed_;
        save_checkpoint<T>(dir, meta, checkpoint_groups());
    }

    /// Restores parameters, optimizer state, and the iteration counter.
    /// Refuses checkpoints written under a different config unless `force`.
    void resume(const std::filesystem::path& dir, bool force = false) {
        const CheckpointMeta meta = load_checkpoint<T>(dir, checkpoint_groups(), cfg_.hash(), force);
        iteration_ = meta.iteration;
    }

private:
    /// Generator-objective losses with gradients accumulated into params_eg()
    /// (zeroed first). The discriminators contribute gradients but stay fixed.
    T g_loss_and_grads(const std::vector<data::OutfitRecord>& recs, const std::vector<data::GivenMask>& given,
                       std::vector<generator::SynOutfitResult<T>>& syn,
                       const std::vector<std::vector<FeatureMap<T>>>& real_items, Rng& rng_neg,
                       GLossParts<T>* parts_out) {
        zero_grads(params_eg_);
        const auto nb = recs.size();
        const Index n = n_categories_;

        // adversarial part
        std::vector<typename discriminator::UNetDiscriminator<T>::Trace> tf;
        std::vector<typename discriminator::UNetDiscriminator<T>::Output> fakes;
        std::vector<std::pair<std::size_t, std::size_t>> slots;  // (b, i) per fake
        for (std::size_t b = 0; b < nb; ++b)
            for (Index i = 0; i < n; ++i) {
                if (given[b].is_given(i)) continue;
                tf.emplace_back();
                fakes.push_back(dis_->forward(syn[b].images[static_cast<std::size_t>(i)], tf.back()));
                slots.emplace_back(b, static_cast<std::size_t>(i));
            }
        std::vector<T> genc;
        std::vector<FeatureMap<T>> gdec;
        GLossParts<T> parts;
        parts.gan = discriminator::gan_loss_g<T>(fakes, &genc, &gdec);

        // per-slot composite-image gradients, target slots only
        std::vector<std::vector<FeatureMap<T>>> gcomp(nb);
        for (std::size_t b = 0; b < nb; ++b) gcomp[b].assign(static_cast<std::size_t>(n), FeatureMap<T>(0, 0, 0));
        for (std::size_t k = 0; k < fakes.size(); ++k) {
            const auto [b, i] = slots[k];
            gcomp[b][i] = dis_->backward(tf[k], genc[k], gdec[k], /*accumulate=*/false);
        }

        // reconstruction part
        const T wb = T(1) / T(nb);
        for (std::size_t b = 0; b < nb; ++b) {
            std::vector<FeatureMap<T>> gl1;
            parts.l1 += l1_loss<T>(real_items[b], syn[b].images, &gl1) * wb;
            for (std::size_t i = 0; i < gl1.size(); ++i)
                if (!given[b].is_given(static_cast<Index>(i))) gcomp[b][i].data += lambda1_ * wb * gl1[i].data;
        }

        // perceptual part (target slots; averaged over all N items)
        if (taps_) {
            const T wi = wb / T(n);
            for (std::size_t b = 0; b < nb; ++b)
                for (Index i = 0; i < n; ++i) {
                    if (given[b].is_given(i)) continue;
                    const auto ii = static_cast<std::size_t>(i);
                    FeatureMap<T> gv(0, 0, 0);
                    parts.vgg += perceptual_loss<T>(real_items[b][ii], syn[b].images[ii], *taps_, &gv) * wi;
                    gcomp[b][ii].data += lambda2_ * wi * gv.data;
                }
        }

        // collocation part on the composited outfits vs shuffled negatives
        {
            std::vector<std::vector<typename discriminator::CollocationDiscriminator<T>::Trace>> mtr(nb);
            std::vector<discriminator::ItemEmbeds<T>> mixed(nb), neg(nb);
            for (std::size_t b = 0; b < nb; ++b) {
                mtr[b].resize(static_cast<std::size_t>(n));
                for (Index i = 0; i < n; ++i) {
                    const auto ii = static_cast<std::size_t>(i);
                    mixed[b].push_back(coll_->embed_item(syn[b].images[ii], recs[b].items[ii].category, mtr[b][ii]));
                }
                auto negrec = discriminator::sample_negative_outfit(recs, rng_neg);
                typename discriminator::CollocationDiscriminator<T>::Trace scratch;
                for (Index i = 0; i < n; ++i) {
                    const auto ii = static_cast<std::size_t>(i);
                    neg[b].push_back(coll_->embed_item(negrec.items[ii].pixels.template cast<T>(),
                                                       negrec.items[ii].category, scratch));
                }
            }
            std::vector<discriminator::ItemEmbeds<T>> gm;
            parts.coll = discriminator::collocation_g_loss<T>(mixed, neg, &gm);
            for (std::size_t b = 0; b < nb; ++b)
                for (Index i = 0; i < n; ++i) {
                    if (given[b].is_given(i)) continue;  // given slots never reach the generator
                    const auto ii = static_cast<std::size_t>(i);
                    FeatureMap<T> gx = coll_->backward(mtr[b][ii], gm[b][ii], /*accumulate=*/false,
                                                       /*want_input_grad=*/true);
                    gcomp[b][ii].data += lambda3_ * gx.data;
                }
        }

        // back through generator (target slots) and extractor (all items)
        for (std::size_t b = 0; b < nb; ++b) {
            std::vector<MatX<T>> gstyles(static_cast<std::size_t>(n),
                                         MatX<T>::Zero(gen_->style_layers(), gen_->config().style_dim));
            for (Index i = 0; i < n; ++i) {
                if (given[b].is_given(i)) continue;
                const auto ii = static_cast<std::size_t>(i);
                gstyles[ii] = gen_->backward(*syn[b].gen_tr[ii], gcomp[b][ii]);
            }
            ext_->backward(syn[b].ext_tr, gstyles);
        }

        if (parts_out) *parts_out = parts;
        return total_g_loss(parts, lambda1_, lambda2_, lambda3_);
    }

    void abort_if_non_finite(const LossRow& row, Index t) {
        const double vals[] = {row.l_dis, row.l_coll_dis, row.l_gan, row.l1, row.lvgg, row.lcoll, row.lg};
        for (double v : vals)
            if (!std::isfinite(v)) {
                std::string where = "non-finite loss at iteration " + std::to_string(t);
                if (!ckpt_root_.empty()) {
                    const auto diag = ckpt_root_ / ("diagnostic-" + std::to_string(t));
                    save(diag);
                    where += "; diagnostic checkpoint written to " + diag.string();
                }
                throw NumericError(where);
            }
    }

    void check_composite_exactness(const std::vector<generator::SynOutfitResult<T>>& syn,
                                   const std::vector<std::vector<FeatureMap<T>>>& real_items,
                                   const std::vector<data::GivenMask>& given, Index t) const {
        for (std::size_t b = 0; b < syn.size(); ++b)
            for (Index i = 0; i < n_categories_; ++i) {
                if (!given[b].is_given(i)) continue;
                const auto ii = static_cast<std::size_t>(i);
                if (!(syn[b].images[ii].data.array() == real_items[b][ii].data.array()).all())
                    throw NumericError("compositing leaked into a given slot at iteration " + std::to_string(t));
            }
    }

    Config cfg_;
    data::DatasetSplit split_;

    Index batch_size_ = 4, n_iter_ = 0, r1_every_ = 16, ckpt_every_ = 0, n_categories_ = 4;
    T r1_gamma_ = T(10), lambda1_ = T(100), lambda2_ = T(10), lambda3_ = T(10);
    T margin_ = T(0);
    std::uint64_t seed_ = 1;

    std::optional<extractor::StyleExtractor<T>> ext_;
    std::optional<generator::Generator<T>> gen_;
    std::optional<discriminator::UNetDiscriminator<T>> dis_;
    std::optional<discriminator::CollocationDiscriminator<T>> coll_;
    std::optional<PerceptualTaps<T>> taps_;

    ParamList<T> params_eg_, params_d_, params_coll_;
    nn::Adam<T> adam_eg_, adam_d_, adam_coll_;

    Index iteration_ = 0;
    std::vector<LossRow> history_;
    std::vector<std::string> warnings_;
    std::filesystem::path ckpt_root_;
};

}  // namespace outfitgan::training

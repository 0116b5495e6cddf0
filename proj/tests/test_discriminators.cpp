#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <set>

#include "outfitgan/core/params.hpp"
#include "outfitgan/data/corpus.hpp"
#include "outfitgan/discriminator/collocation.hpp"
#include "outfitgan/discriminator/unet.hpp"
#include "testutil.hpp"

using namespace outfitgan;
using namespace outfitgan::discriminator;

namespace {

UNetConfig tiny_unet() {
    UNetConfig cfg;
    cfg.resolution = 16;
    cfg.base_channels = 4;
    cfg.max_channels = 8;
    return cfg;
}

CollocationConfig tiny_coll() {
    CollocationConfig cfg;
    cfg.resolution = 16;
    cfg.base_channels = 4;
    cfg.max_channels = 8;
    cfg.embed_dim = 5;
    cfg.n_categories = 4;
    return cfg;
}

typename UNetDiscriminator<double>::Output flat_output(double logit, Index res) {
    typename UNetDiscriminator<double>::Output o;
    o.enc_logit = logit;
    o.dec_logits = constant_map<double>(1, res, res, logit);
    return o;
}

ItemEmbeds<double> embeds(std::initializer_list<std::initializer_list<double>> vs) {
    ItemEmbeds<double> out;
    for (const auto& v : vs) {
        VecX<double> e(static_cast<Index>(v.size()));
        Index i = 0;
        for (const double x : v) e[i++] = x;
        out.push_back(std::move(e));
    }
    return out;
}

}  // namespace

TEST_CASE("critic heads give a scalar and a full-resolution map") {
    UNetDiscriminator<double> d(tiny_unet());
    Rng rng(1);
    d.init(rng);
    FeatureMap<double> x = testutil::random_image<double>(rng, 3, 16, 0.5);
    typename UNetDiscriminator<double>::Trace tr;
    const auto out = d.forward(x, tr);
    CHECK(std::isfinite(out.enc_logit));
    CHECK(out.dec_logits.channels == 1);
    CHECK(out.dec_logits.height == 16);
    CHECK(out.dec_logits.width == 16);
}

TEST_CASE("undecided critic scores the textbook loss constants") {
    // logit 0 on both heads, one real + one fake, 4x4 pixel map
    const auto real = flat_output(0.0, 4);
    const auto fake = flat_output(0.0, 4);
    UnetLossParts<double> parts;
    const double total = dis_loss<double>({real}, {fake}, nullptr, &parts);
    CHECK(parts.enc == doctest::Approx(2 * std::log(2.0)).epsilon(1e-4));
    CHECK(parts.dec == doctest::Approx(32 * std::log(2.0)).epsilon(1e-4));
    CHECK(total == doctest::Approx(34 * std::log(2.0)).epsilon(1e-4));

    UnetLossParts<double> gparts;
    const double g = gan_loss_g<double>({fake}, nullptr, nullptr, &gparts);
    CHECK(g == doctest::Approx(17 * std::log(2.0)).epsilon(1e-4));

    CHECK_THROWS_AS(dis_loss<double>({}, {fake}), ConfigError);
    CHECK_THROWS_AS(gan_loss_g<double>({}), ConfigError);
}

TEST_CASE("loss gradients w.r.t. logits match finite differences") {
    Rng rng(2);
    auto real = flat_output(0.0, 4);
    auto fake = flat_output(0.0, 4);
    for (Index i = 0; i < 16; ++i) {
        real.dec_logits.data.data()[i] = rng.normal();
        fake.dec_logits.data.data()[i] = rng.normal();
    }
    real.enc_logit = 0.7;
    fake.enc_logit = -0.3;

    DisLossGrads<double> grads;
    dis_loss<double>({real}, {fake}, &grads);

    const auto dis_at = [&]() { return dis_loss<double>({real}, {fake}); };
    double worst = 0;
    {
        const double base = real.enc_logit;
        worst = std::max(worst, testutil::fd_rel_err(
                                    [&](double t) {
                                        real.enc_logit = t;
                                        const double l = dis_at();
                                        real.enc_logit = base;
                                        return l;
                                    },
                                    base, grads.enc_real[0]));
    }
    for (const Index idx : {Index(0), Index(7), Index(15)}) {
        double* v = fake.dec_logits.data.data() + idx;
        const double base = *v;
        worst = std::max(worst, testutil::fd_rel_err(
                                    [&](double t) {
                                        *v = t;
                                        const double l = dis_at();
                                        *v = base;
                                        return l;
                                    },
                                    base, grads.dec_fake[0].data.data()[idx]));
    }
    CHECK(worst < 1e-6);
}

TEST_CASE("critic parameter gradients match finite differences") {
    UNetDiscriminator<double> d(tiny_unet());
    Rng rng(3);
    d.init(rng);
    FeatureMap<double> xr = testutil::random_image<double>(rng, 3, 16, 0.5);
    FeatureMap<double> xf = testutil::random_image<double>(rng, 3, 16, 0.5);

    const auto loss = [&]() {
        typename UNetDiscriminator<double>::Trace tr, tf;
        const auto or_ = d.forward(xr, tr);
        const auto of = d.forward(xf, tf);
        return dis_loss<double>({or_}, {of});
    };

    auto params = collect_params<double>(d);
    zero_grads(params);
    typename UNetDiscriminator<double>::Trace tr, tf;
    const auto or_ = d.forward(xr, tr);
    const auto of = d.forward(xf, tf);
    DisLossGrads<double> grads;
    dis_loss<double>({or_}, {of}, &grads);
    d.backward(tr, grads.enc_real[0], grads.dec_real[0], true);
    d.backward(tf, grads.enc_fake[0], grads.dec_fake[0], true);

    double worst = 0;
    for (const auto& p : params)
        for (const Index idx : testutil::probe_indices(p.size, 2)) {
            double* v = p.value + idx;
            const double base = *v;
            worst = std::max(worst, testutil::fd_rel_err(
                                        [&](double t) {
                                            *v = t;
                                            const double l = loss();
                                            *v = base;
                                            return l;
                                        },
                                        base, p.grad[idx]));
        }
    CHECK(worst < 1e-4);
}

TEST_CASE("probability view is clamped while raw logits are not") {
    UNetDiscriminator<double> d(tiny_unet());
    CHECK(d.logit_clamp() == 20.0);
    const double lo = 1.0 / (1.0 + std::exp(20.0));
    const double hi = 1.0 / (1.0 + std::exp(-20.0));
    CHECK(nn::sigmoid_scalar(clamp_logit(1000.0, 20.0)) == doctest::Approx(hi).epsilon(1e-12));
    CHECK(nn::sigmoid_scalar(clamp_logit(-1000.0, 20.0)) == doctest::Approx(lo).epsilon(1e-12));

    // losses stay finite even for absurd logits
    const auto far = flat_output(1e6, 4);
    CHECK(std::isfinite(dis_loss<double>({far}, {far})));
    CHECK(std::isfinite(gan_loss_g<double>({flat_output(-1e6, 4)})));
}

TEST_CASE("contrastive loss reproduces the two-item hand example") {
    const auto pos = embeds({{0, 0}, {2, 0}});
    const auto neg = embeds({{0, 0}, {4, 0}});
    const double loss = collocation_dis_loss<double>({pos}, {pos}, {neg}, 0.0);
    CHECK(loss == doctest::Approx(-6.0).epsilon(1e-6));

    // all embeddings identical: every distance vanishes
    const auto same = embeds({{1, 1}, {1, 1}});
    CHECK(collocation_dis_loss<double>({same}, {same}, {same}, 0.0) ==
          doctest::Approx(0.0).epsilon(1e-12));
}

TEST_CASE("contrastive losses match finite differences on raw embeddings") {
    Rng rng(4);
    const auto randomized = [&](int n) {
        ItemEmbeds<double> e;
        for (int i = 0; i < n; ++i) {
            VecX<double> v(3);
            for (Index j = 0; j < 3; ++j) v[j] = rng.normal();
            e.push_back(std::move(v));
        }
        return e;
    };
    std::vector<ItemEmbeds<double>> p1{randomized(4), randomized(4)};
    std::vector<ItemEmbeds<double>> p2{randomized(4), randomized(4)};
    std::vector<ItemEmbeds<double>> ng{randomized(4), randomized(4)};

    for (const double margin : {0.0, 8.0}) {
        std::vector<ItemEmbeds<double>> g1, g2, g3;
        collocation_dis_loss<double>(p1, p2, ng, margin, &g1, &g2, &g3);

        double worst = 0;
        const auto probe = [&](std::vector<ItemEmbeds<double>>& batch, const std::vector<ItemEmbeds<double>>& g) {
            for (std::size_t b = 0; b < batch.size(); ++b)
                for (std::size_t i = 0; i < batch[b].size(); ++i)
                    for (Index j = 0; j < 3; ++j) {
                        double* v = &batch[b][i][j];
                        const double base = *v;
                        worst = std::max(
                            worst, testutil::fd_rel_err(
                                       [&](double t) {
                                           *v = t;
                                           const double l = collocation_dis_loss<double>(p1, p2, ng, margin);
                                           *v = base;
                                           return l;
                                       },
                                       base, g[b][i][j]));
                    }
        };
        probe(p1, g1);
        probe(p2, g2);
        probe(ng, g3);
        CHECK(worst < 1e-6);
    }

    // generator-side variant
    std::vector<ItemEmbeds<double>> mixed{randomized(4), randomized(4)};
    std::vector<ItemEmbeds<double>> neg2{randomized(4), randomized(4)};
    std::vector<ItemEmbeds<double>> gm, gn;
    collocation_g_loss<double>(mixed, neg2, &gm, &gn);
    double worst = 0;
    for (std::size_t b = 0; b < mixed.size(); ++b)
        for (std::size_t i = 0; i < mixed[b].size(); ++i)
            for (Index j = 0; j < 3; ++j) {
                double* v = &mixed[b][i][j];
                const double base = *v;
                worst = std::max(worst, testutil::fd_rel_err(
                                            [&](double t) {
                                                *v = t;
                                                const double l = collocation_g_loss<double>(mixed, neg2);
                                                *v = base;
                                                return l;
                                            },
                                            base, gm[b][i][j]));
            }
    CHECK(worst < 1e-6);
}

TEST_CASE("hinged negatives bound the objective from below") {
    Rng rng(5);
    for (int rep = 0; rep < 50; ++rep) {
        ItemEmbeds<double> pos, neg;
        for (int i = 0; i < 4; ++i) {
            VecX<double> a(3), b(3);
            for (Index j = 0; j < 3; ++j) {
                a[j] = 10 * rng.normal();
                b[j] = 10 * rng.normal();
            }
            pos.push_back(a);
            neg.push_back(b);
        }
        const double margin = 1.0;
        const double l = collocation_dis_loss<double>({pos}, {pos}, {neg}, margin);
        CHECK(l >= -1e-12);  // spread and both hinged terms are all nonnegative
        CHECK(std::isfinite(l));
    }
}

TEST_CASE("outfit embedding is the item mean and permutation invariant") {
    const auto items = embeds({{0, 0}, {2, 0}});
    const VecX<double> m = outfit_embedding(items);
    CHECK(m[0] == 1.0);
    CHECK(m[1] == 0.0);

    const auto all_same = embeds({{3, -1}, {3, -1}, {3, -1}});
    CHECK(outfit_embedding(all_same) == all_same[0]);

    Rng rng(6);
    ItemEmbeds<double> es;
    for (int i = 0; i < 4; ++i) {
        VecX<double> v(4);
        for (Index j = 0; j < 4; ++j) v[j] = rng.normal();
        es.push_back(v);
    }
    auto perm = es;
    std::swap(perm[0], perm[3]);
    std::swap(perm[1], perm[2]);
    CHECK((outfit_embedding(es) - outfit_embedding(perm)).cwiseAbs().maxCoeff() < 1e-15);

    CHECK_THROWS_AS(outfit_embedding(ItemEmbeds<double>{}), ConfigError);
}

TEST_CASE("item embedding uses a per-category map") {
    CollocationDiscriminator<double> coll(tiny_coll());
    Rng rng(7);
    coll.init(rng);
    FeatureMap<double> x = testutil::random_image<double>(rng, 3, 16, 0.5);

    typename CollocationDiscriminator<double>::Trace t0, t1, t2;
    const auto c0 = coll.embed_item(x, 0, t0);
    const auto c1 = coll.embed_item(x, 1, t1);
    CHECK(c0.size() == 5);
    CHECK((c0 - c1).cwiseAbs().maxCoeff() > 1e-9);

    const auto c0b = coll.embed_item(x, 0, t2);
    CHECK(c0 == c0b);

    typename CollocationDiscriminator<double>::Trace t3;
    CHECK_THROWS_AS(coll.embed_item(x, 9, t3), ConfigError);
}

TEST_CASE("embedding gradients flow back through the backbone") {
    CollocationDiscriminator<double> coll(tiny_coll());
    Rng rng(8);
    coll.init(rng);
    FeatureMap<double> x = testutil::random_image<double>(rng, 3, 16, 0.5);
    VecX<double> coeff(5);
    for (Index i = 0; i < 5; ++i) coeff[i] = rng.normal();

    const auto loss = [&]() {
        typename CollocationDiscriminator<double>::Trace tr;
        return coll.embed_item(x, 2, tr).dot(coeff);
    };

    auto params = collect_params<double>(coll);
    zero_grads(params);
    typename CollocationDiscriminator<double>::Trace tr;
    coll.embed_item(x, 2, tr);
    coll.backward(tr, coeff, true, false);

    double worst = 0;
    for (const auto& p : params)
        for (const Index idx : testutil::probe_indices(p.size, 3)) {
            double* v = p.value + idx;
            const double base = *v;
            worst = std::max(worst, testutil::fd_rel_err(
                                        [&](double t) {
                                            *v = t;
                                            const double l = loss();
                                            *v = base;
                                            return l;
                                        },
                                        base, p.grad[idx]));
        }
    CHECK(worst < 1e-4);
}

TEST_CASE("negative outfits shuffle items across the batch with categories intact") {
    const auto split = data::generate_synthetic_corpus(9, 8, 16, 4);
    std::vector<data::OutfitRecord> batch(split.train.begin(), split.train.begin() + 4);
    Rng rng(10);
    for (int rep = 0; rep < 20; ++rep) {
        const auto neg = sample_negative_outfit(batch, rng);
        REQUIRE(neg.size() == 4);
        std::set<int> cats;
        for (const auto& it : neg.items) cats.insert(it.category);
        CHECK(cats == std::set<int>{0, 1, 2, 3});
        // every item is lifted verbatim from some batch record
        for (const auto& it : neg.items) {
            bool found = false;
            for (const auto& rec : batch)
                for (const auto& src : rec.items)
                    if (src.category == it.category && src.pixels.data == it.pixels.data) found = true;
            CHECK(found);
        }
    }
}

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <array>
#include <cmath>
#include <filesystem>
#include <fstream>

#include "outfitgan/config/config.hpp"
#include "outfitgan/data/corpus.hpp"
#include "outfitgan/training/losses.hpp"
#include "outfitgan/training/trainer.hpp"
#include "testutil.hpp"

using namespace outfitgan;
using namespace outfitgan::training;

namespace {

/// Tiny trainer setup: R=16 nets, 6 outfits, batch 2.
Config tiny_config() {
    Config cfg = Config::defaults();
    cfg.set("data.resolution", "16");
    cfg.set("data.n_outfits", "6");
    cfg.set("generator.resolution", "16");
    cfg.set("generator.base_channels", "4");
    cfg.set("generator.max_channels", "8");
    cfg.set("extractor.d_v", "8");
    cfg.set("extractor.d_cat", "4");
    cfg.set("extractor.hidden", "6");
    cfg.set("extractor.mlp_layers", "2");
    cfg.set("extractor.mlp_width", "12");
    cfg.set("extractor.style_dim", "8");
    cfg.set("dis.channels", "4");
    cfg.set("collocation.channels", "4");
    cfg.set("collocation.embed_dim", "5");
    cfg.set("train.batch_size", "2");
    cfg.set("train.n_iter", "10");
    return cfg;
}

data::DatasetSplit tiny_split(const Config& cfg) {
    return data::generate_synthetic_corpus(cfg.get_u64("data.seed"), cfg.get_int("data.n_outfits"),
                                           cfg.get_int("data.resolution"), cfg.get_int("data.n_categories"),
                                           static_cast<float>(cfg.get_real("data.split_ratio")));
}

/// Linear scalar critic D(x) = <a, x>; exposes the tangent interface.
struct LinearCritic {
    FeatureMap<double> a;
    struct EncTrace {};
    double encoder_forward(const FeatureMap<double>&, EncTrace&) const { return 0; }
    FeatureMap<double> encoder_input_gradient(const EncTrace&) const { return a; }
    void encoder_tangent_accumulate(const EncTrace&, const FeatureMap<double>&, double) {}
};

std::filesystem::path fresh_dir(const std::string& name) {
    const auto dir = std::filesystem::temp_directory_path() / name;
    std::filesystem::remove_all(dir);
    std::filesystem::create_directories(dir);
    return dir;
}

}  // namespace

TEST_CASE("generator objective is the weighted sum of its parts") {
    GLossParts<double> parts{1.0, 0.1, 0.02, 0.005};
    CHECK(total_g_loss(parts, 100.0, 10.0, 10.0) == doctest::Approx(11.25).epsilon(1e-9));
    CHECK(total_g_loss(GLossParts<double>{}, 100.0, 10.0, 10.0) == 0.0);
    // linear in each component
    GLossParts<double> doubled{2.0, 0.2, 0.04, 0.01};
    CHECK(total_g_loss(doubled, 100.0, 10.0, 10.0) == doctest::Approx(22.5).epsilon(1e-9));
}

TEST_CASE("pixel loss oracles") {
    std::vector<FeatureMap<double>> ones{constant_map<double>(3, 8, 8, 1.0)};
    std::vector<FeatureMap<double>> zeros{constant_map<double>(3, 8, 8, 0.0)};
    CHECK(l1_loss(ones, ones) == 0.0);
    CHECK(l1_loss(ones, zeros) == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(l1_loss(ones, zeros) == l1_loss(zeros, ones));

    std::vector<FeatureMap<double>> gsynth;
    l1_loss(ones, zeros, &gsynth);
    CHECK(gsynth[0].data.data()[0] == doctest::Approx(-1.0 / 192.0).epsilon(1e-12));

    std::vector<FeatureMap<double>> tall{constant_map<double>(3, 4, 4, 1.0)};
    CHECK_THROWS_AS(l1_loss(ones, tall), ShapeError);
}

TEST_CASE("perceptual loss is zero at identity and linear in small perturbations") {
    PerceptualTaps<double> taps(16);
    Rng rng(1);
    const auto real = testutil::random_image<double>(rng, 3, 16, 0.5);
    CHECK(perceptual_loss(real, real, taps) == 0.0);

    // piecewise-linear activations: doubling a small perturbation doubles
    // the loss as long as no activation changes side
    auto delta = testutil::random_image<double>(rng, 3, 16, 1e-4);
    auto synth1 = real;
    synth1.data += delta.data;
    auto synth2 = real;
    synth2.data += 2 * delta.data;
    const double l1 = perceptual_loss(real, synth1, taps);
    const double l2 = perceptual_loss(real, synth2, taps);
    CHECK(l1 > 0.0);
    CHECK(std::abs(l2 - 2 * l1) <= 1e-6 * l2);

    std::string warn;
    CHECK_FALSE(make_perceptual_taps<double>("off", 16, &warn).has_value());
    CHECK(warn.empty());
    CHECK(make_perceptual_taps<double>("pretrained", 16, &warn).has_value());
    CHECK_FALSE(warn.empty());
    CHECK(make_perceptual_taps<double>("frozen_random", 16).has_value());
    CHECK_THROWS_AS(make_perceptual_taps<double>("vgg19", 16), ConfigError);
}

TEST_CASE("gradient penalty equals its closed form for a linear critic") {
    Rng rng(2);
    LinearCritic lin;
    lin.a = testutil::random_image<double>(rng, 3, 8, 1.0);
    std::vector<FeatureMap<double>> batch;
    for (int i = 0; i < 3; ++i) batch.push_back(testutil::random_image<double>(rng, 3, 8, 1.0));

    const double gamma = 10.0;
    const double expect = 0.5 * gamma * lin.a.data.squaredNorm();
    CHECK(r1_penalty<double>(lin, batch, gamma, false) == doctest::Approx(expect).epsilon(1e-12));

    LinearCritic flat;
    flat.a = constant_map<double>(3, 8, 8, 0.0);
    CHECK(r1_penalty<double>(flat, batch, gamma, false) == 0.0);
    CHECK_THROWS_AS(r1_penalty<double>(lin, {}, gamma, false), ConfigError);
}

TEST_CASE("critic input gradients used by the penalty match finite differences") {
    discriminator::UNetConfig uc;
    uc.resolution = 16;
    uc.base_channels = 4;
    uc.max_channels = 8;
    discriminator::UNetDiscriminator<double> d(uc);
    Rng rng(3);
    d.init(rng);
    FeatureMap<double> x = testutil::random_image<double>(rng, 3, 16, 0.5);

    typename discriminator::UNetDiscriminator<double>::EncTrace tr;
    d.encoder_forward(x, tr);
    const FeatureMap<double> v = d.encoder_input_gradient(tr);

    const auto enc_at = [&]() {
        typename discriminator::UNetDiscriminator<double>::EncTrace t;
        return d.encoder_forward(x, t);
    };
    double worst = 0;
    for (const Index idx : testutil::probe_indices(x.data.size(), 8)) {
        double* p = x.data.data() + idx;
        const double base = *p;
        worst = std::max(worst, testutil::fd_rel_err(
                                    [&](double t) {
                                        *p = t;
                                        const double l = enc_at();
                                        *p = base;
                                        return l;
                                    },
                                    base, v.data.data()[idx]));
    }
    CHECK(worst < 1e-4);

    // parameter gradients of the full penalty via the tangent pass
    auto params = collect_params<double>(d);
    const double gamma = 10.0;
    std::vector<FeatureMap<double>> batch{x};
    const auto penalty_at = [&]() { return r1_penalty<double>(d, batch, gamma, false); };
    zero_grads(params);
    r1_penalty<double>(d, batch, gamma, true);
    double worst_p = 0;
    for (const auto& p : params)
        for (const Index idx : testutil::probe_indices(p.size, 2)) {
            double* ptr = p.value + idx;
            const double base = *ptr;
            worst_p = std::max(worst_p, testutil::fd_rel_err(
                                            [&](double t) {
                                                *ptr = t;
                                                const double l = penalty_at();
                                                *ptr = base;
                                                return l;
                                            },
                                            base, p.grad[idx]));
        }
    CHECK(worst_p < 1e-3);
}

TEST_CASE("penalty schedule fires exactly on multiples of the period") {
    const Config cfg = tiny_config();
    Trainer<float> tr(cfg, tiny_split(cfg));
    CHECK(tr.r1_every() == 16);
    CHECK_FALSE(tr.r1_scheduled(1));
    CHECK_FALSE(tr.r1_scheduled(15));
    CHECK(tr.r1_scheduled(16));
    CHECK_FALSE(tr.r1_scheduled(17));
    CHECK(tr.r1_scheduled(32));
    // resuming at t continues at the next multiple: t + 16 - (t mod 16)
    for (const Index t : {Index(3), Index(16), Index(20), Index(31)}) {
        Index next = t + 1;
        while (!tr.r1_scheduled(next)) ++next;
        CHECK(next == t + 16 - (t % 16));
    }
}

TEST_CASE("each phase updates only its own parameters") {
    const Config cfg = tiny_config();
    Trainer<float> tr(cfg, tiny_split(cfg));

    int violations = 0;
    std::array<std::uint64_t, 3> fp{};
    tr.phase_observer = [&](int phase, Index) {
        const std::array<std::uint64_t, 3> now{param_fingerprint(tr.params_eg()), param_fingerprint(tr.params_dis()),
                                               param_fingerprint(tr.params_coll())};
        if (phase == 1 && (now[0] != fp[0] || now[2] != fp[2])) ++violations;
        if (phase == 2 && (now[0] != fp[0] || now[1] != fp[1])) ++violations;
        if (phase == 3 && (now[1] != fp[1] || now[2] != fp[2])) ++violations;
        fp = now;
    };
    fp = {param_fingerprint(tr.params_eg()), param_fingerprint(tr.params_dis()), param_fingerprint(tr.params_coll())};
    for (int i = 0; i < 48; ++i) tr.step();
    CHECK(violations == 0);
    CHECK(tr.iteration() == 48);
}

TEST_CASE("fixed seed reproduces the loss trajectory") {
    const Config cfg = tiny_config();
    Trainer<float> a(cfg, tiny_split(cfg));
    Trainer<float> b(cfg, tiny_split(cfg));
    for (int i = 0; i < 10; ++i) {
        const auto ra = a.step();
        const auto rb = b.step();
        CHECK(std::abs(ra.l_dis - rb.l_dis) <= 1e-6);
        CHECK(std::abs(ra.l_coll_dis - rb.l_coll_dis) <= 1e-6);
        CHECK(std::abs(ra.l_gan - rb.l_gan) <= 1e-6);
        CHECK(std::abs(ra.l1 - rb.l1) <= 1e-6);
        CHECK(std::abs(ra.lvgg - rb.lvgg) <= 1e-6);
        CHECK(std::abs(ra.lcoll - rb.lcoll) <= 1e-6);
        CHECK(std::abs(ra.lg - rb.lg) <= 1e-6);
    }
}

TEST_CASE("checkpoints round-trip and guard against mismatch and corruption") {
    const auto dir = fresh_dir("outfitgan_ckpt_rt");
    const Config cfg = tiny_config();
    Trainer<float> tr(cfg, tiny_split(cfg));
    for (int i = 0; i < 3; ++i) tr.step();
    const auto fp_before = param_fingerprint(tr.params_eg());
    tr.save(dir);

    Trainer<float> back(cfg, tiny_split(cfg));
    back.resume(dir);
    CHECK(back.iteration() == 3);
    CHECK(param_fingerprint(back.params_eg()) == fp_before);
    CHECK(param_fingerprint(back.params_dis()) == param_fingerprint(tr.params_dis()));
    CHECK(param_fingerprint(back.params_coll()) == param_fingerprint(tr.params_coll()));

    // replay: both trainers continue identically
    for (int i = 0; i < 4; ++i) {
        const auto ra = tr.step();
        const auto rb = back.step();
        CHECK(ra.lg == rb.lg);
        CHECK(ra.l_dis == rb.l_dis);
    }

    // config-hash mismatch refused unless forced
    Config other = tiny_config();
    other.set("train.lr", "0.001");
    Trainer<float> wrong(other, tiny_split(other));
    CHECK_THROWS_AS(wrong.resume(dir), ConfigError);
    CHECK(wrong.iteration() == 0);
    CHECK_NOTHROW(wrong.resume(dir, true));
    CHECK(wrong.iteration() == 3);

    // corruption surfaces as an I/O error and leaves the trainer untouched
    bool truncated = false;
    for (const auto& e : std::filesystem::recursive_directory_iterator(dir))
        if (!truncated && e.is_regular_file() && e.path().extension() == ".params" &&
            std::filesystem::file_size(e.path()) > 64) {
            std::filesystem::resize_file(e.path(), 64);
            truncated = true;
        }
    REQUIRE(truncated);
    Trainer<float> fresh(cfg, tiny_split(cfg));
    const auto fp_fresh = param_fingerprint(fresh.params_eg());
    CHECK_THROWS_AS(fresh.resume(dir), IoError);
    CHECK(fresh.iteration() == 0);
    CHECK(param_fingerprint(fresh.params_eg()) == fp_fresh);
    std::filesystem::remove_all(dir);
}

TEST_CASE("trainer rejects out-of-contract configuration") {
    Config cfg = tiny_config();
    const auto split = tiny_split(cfg);

    Config small = cfg;
    small.set("train.batch_size", "1");
    CHECK_THROWS_AS(Trainer<float>(small, split), ConfigError);

    Config mismatched = cfg;
    mismatched.set("generator.resolution", "32");
    CHECK_THROWS_AS(Trainer<float>(mismatched, split), ConfigError);

    CHECK_THROWS_AS(Trainer<float>(cfg, data::DatasetSplit{}), ConfigError);
}

TEST_CASE("loss rows serialize with all eight columns") {
    CHECK(loss_row_header() == "iter, L_dis, L_coll_dis, L_gan, L1, Lvgg, Lcoll, Lg");
    LossRow r{42, 1.5, -0.25, 3.0, 0.125, 0.5, -1.0, 10.0};
    const auto line = format_loss_row(r);
    long iter;
    double v[7];
    REQUIRE(std::sscanf(line.c_str(), "%ld, %lf, %lf, %lf, %lf, %lf, %lf, %lf", &iter, &v[0], &v[1], &v[2], &v[3],
                        &v[4], &v[5], &v[6]) == 8);
    CHECK(iter == 42);
    CHECK(v[0] == 1.5);
    CHECK(v[6] == 10.0);
}

TEST_CASE("composited generator objective gradients match finite differences") {
    Config cfg = tiny_config();
    cfg.set("collocation.margin", "1");
    const auto split = tiny_split(cfg);
    Trainer<double> tr(cfg, split);

    std::vector<data::OutfitRecord> recs{split.train[0], split.train[1]};
    std::vector<data::GivenMask> given{data::GivenMask{{1, 0, 1, 0}}, data::GivenMask{{0, 1, 0, 1}}};

    const double base_loss = tr.g_loss_probe(recs, given, 77);
    CHECK(std::isfinite(base_loss));

    // the probe refills the gradient buffers on every call, so capture the
    // analytic values before the finite-difference sweep mutates them
    struct Probe {
        double* value;
        double analytic;
    };
    std::vector<Probe> probes;
    for (const auto& p : tr.params_eg())
        for (const Index idx : testutil::probe_indices(p.size, 1)) probes.push_back({p.value + idx, p.grad[idx]});

    double worst = 0;
    for (const auto& pr : probes) {
        const double base = *pr.value;
        worst = std::max(worst, testutil::fd_rel_err(
                                    [&](double t) {
                                        *pr.value = t;
                                        const double l = tr.g_loss_probe(recs, given, 77);
                                        *pr.value = base;
                                        return l;
                                    },
                                    base, pr.analytic));
    }
    CHECK(worst < 1e-3);
}

TEST_CASE("losses stay finite over a long random run") {
    Config cfg = tiny_config();
    cfg.set("train.n_iter", "1000");
    cfg.set("collocation.margin", "1");
    Trainer<float> tr(cfg, tiny_split(cfg));
    for (int i = 0; i < 1000; ++i) {
        const auto row = tr.step();
        REQUIRE(std::isfinite(row.l_dis));
        REQUIRE(std::isfinite(row.l_coll_dis));
        REQUIRE(std::isfinite(row.lg));
    }
}

#pragma once

#include <vector>

#include "outfitgan/core/errors.hpp"
#include "outfitgan/core/params.hpp"
#include "outfitgan/core/rng.hpp"
#include "outfitgan/core/types.hpp"
#include "outfitgan/nn/layers.hpp"

namespace outfitgan::discriminator {

struct UNetConfig {
    Index resolution = 64;
    Index base_channels = 16;
    Index max_channels = 128;
    double logit_clamp = 20.0;
};

/// Real/fake critic with a UNet shape: the encoder ends in a global scalar
/// logit, the decoder (with skip connections) ends in a per-pixel logit map
/// at input resolution. Forward returns raw logits; the probability view
/// clamps them, while the losses use the stable softplus directly.
template <typename T>
class UNetDiscriminator {
public:
    explicit UNetDiscriminator(const UNetConfig& cfg) : cfg_(cfg) {
        if (!is_power_of_two(cfg.resolution) || cfg.resolution < 16)
            throw ConfigError("discriminator: resolution must be a power of two >= 16");
        n_down_ = log2_exact(cfg.resolution) - 2;  // encoder bottoms out at 4x4

        enc_.resize(static_cast<std::size_t>(n_down_) + 1);
        enc_[0].configure(3, ch(0), 3, 1, 1);  // stem keeps resolution
        for (Index s = 1; s <= n_down_; ++s) enc_[static_cast<std::size_t>(s)].configure(ch(s - 1), ch(s), 3, 2, 1);
        enc_head_.configure(ch(n_down_), 1);

        dec_.resize(static_cast<std::size_t>(n_down_));
        for (Index s = 0; s < n_down_; ++s)
            dec_[static_cast<std::size_t>(s)].configure(ch(s + 1) + ch(s), ch(s), 3, 1, 1);
        dec_head_.configure(ch(0), 1, 1, 1, 0);
    }

    const UNetConfig& config() const { return cfg_; }
    T logit_clamp() const { return T(cfg_.logit_clamp); }

    void init(Rng& rng) {
        for (auto& c : enc_) c.init(rng);
        enc_head_.init(rng);
        for (auto& c : dec_) c.init(rng);
        dec_head_.init(rng);
    }

    void collect(ParamCollector<T>& pc) {
        for (std::size_t s = 0; s < enc_.size(); ++s)
            pc.scope("enc" + std::to_string(s), [&](ParamCollector<T>& sc) { enc_[s].collect(sc); });
        pc.scope("enc_head", [&](ParamCollector<T>& sc) { enc_head_.collect(sc); });
        for (std::size_t s = 0; s < dec_.size(); ++s)
            pc.scope("dec" + std::to_string(s), [&](ParamCollector<T>& sc) { dec_[s].collect(sc); });
        pc.scope("dec_head", [&](ParamCollector<T>& sc) { dec_head_.collect(sc); });
    }

    struct Output {
        T enc_logit = T(0);
        FeatureMap<T> dec_logits{1, 0, 0};
    };

    struct Trace {
        std::vector<typename nn::Conv2d<T>::Trace> enc_tr;
        std::vector<FeatureMap<T>> enc_pre;  // pre-activations (LReLU masks)
        VecX<T> gap;
        std::vector<typename nn::Conv2d<T>::Trace> dec_tr;
        std::vector<FeatureMap<T>> dec_pre;
        typename nn::Conv2d<T>::Trace dec_head_tr;
    };

    Output forward(const FeatureMap<T>& x, Trace& tr) const {
        if (x.height != cfg_.resolution || x.channels != 3)
            throw ShapeError("discriminator: input resolution/channel mismatch");
        const auto m = static_cast<std::size_t>(n_down_);
        tr.enc_tr.resize(m + 1);
        tr.enc_pre.assign(m + 1, FeatureMap<T>(0, 0, 0));
        std::vector<FeatureMap<T>> act(m + 1, FeatureMap<T>(0, 0, 0));

        FeatureMap<T> h = x;
        for (std::size_t s = 0; s <= m; ++s) {
            tr.enc_pre[s] = enc_[s].forward(h, tr.enc_tr[s]);
            h = tr.enc_pre[s];
            h.data = nn::leaky_relu(h.data, T(0.2));
            act[s] = h;
        }
        tr.gap = nn::global_avg_pool(h);

        Output out;
        out.enc_logit = enc_head_.forward(tr.gap)[0];

        tr.dec_tr.resize(m);
        tr.dec_pre.assign(m, FeatureMap<T>(0, 0, 0));
        FeatureMap<T> d = act[m];
        for (Index s = n_down_ - 1; s >= 0; --s) {
            const auto si = static_cast<std::size_t>(s);
            FeatureMap<T> cat = nn::concat_channels(nn::upsample2x_nearest(d), act[si]);
            tr.dec_pre[si] = dec_[si].forward(cat, tr.dec_tr[si]);
            d = tr.dec_pre[si];
            d.data = nn::leaky_relu(d.data, T(0.2));
        }
        out.dec_logits = dec_head_.forward(d, tr.dec_head_tr);
        return out;
    }

    /// Reverse pass from (scalar grad, per-pixel grad). Returns the input
    /// gradient; parameter grads accumulate unless `accumulate` is false.
    FeatureMap<T> backward(const Trace& tr, T g_enc, const FeatureMap<T>& g_dec, bool accumulate = true) {
        const auto m = static_cast<std::size_t>(n_down_);
        std::vector<FeatureMap<T>> g_act(m + 1, FeatureMap<T>(0, 0, 0));
        for (std::size_t s = 0; s <= m; ++s) {
            const auto& p = tr.enc_pre[s];
            g_act[s] = FeatureMap<T>(p.channels, p.height, p.width);
        }

        // decoder head and stages (forward went s = m-1 .. 0)
        FeatureMap<T> gd = accumulate ? dec_head_.backward(tr.dec_head_tr, g_dec)
                                      : dec_head_.backward_input(tr.dec_head_tr, g_dec);
        for (Index s = 0; s < n_down_; ++s) {
            const auto si = static_cast<std::size_t>(s);
            gd.data = nn::leaky_relu_backward(tr.dec_pre[si].data, gd.data, T(0.2));
            FeatureMap<T> gcat = accumulate ? dec_[si].backward(tr.dec_tr[si], gd)
                                            : dec_[si].backward_input(tr.dec_tr[si], gd);
            const Index up_ch = gcat.channels - g_act[si].channels;
            FeatureMap<T> gup(up_ch, gcat.height, gcat.width);
            gup.data = gcat.data.topRows(up_ch);
            g_act[si].data += gcat.data.bottomRows(g_act[si].channels);
            gd = nn::upsample2x_nearest_backward(gup);
        }
        g_act[m].data += gd.data;  // decoder start shares the top encoder feature

        // encoder head
        VecX<T> genc(1);
        genc[0] = g_enc;
        VecX<T> ggap = accumulate ? enc_head_.backward(tr.gap, genc) : VecX<T>(enc_head_.backward_input(genc));
        const auto& top = tr.enc_pre[m];
        g_act[m].data += nn::global_avg_pool_backward(ggap, top.channels, top.height, top.width).data;

        // encoder chain
        FeatureMap<T> g = std::move(g_act[m]);
        for (Index s = n_down_; s >= 0; --s) {
            const auto si = static_cast<std::size_t>(s);
            g.data = nn::leaky_relu_backward(tr.enc_pre[si].data, g.data, T(0.2));
            g = accumulate ? enc_[si].backward(tr.enc_tr[si], g) : enc_[si].backward_input(tr.enc_tr[si], g);
            if (s > 0) g.data += g_act[si - 1].data;
        }
        return g;
    }

    // -- encoder-only interface used by the R1 penalty -------------------

    struct EncTrace {
        std::vector<typename nn::Conv2d<T>::Trace> tr;
        std::vector<FeatureMap<T>> pre;
        VecX<T> gap;
    };

    /// Raw scalar logit through the encoder path only.
    T encoder_forward(const FeatureMap<T>& x, EncTrace& tr) const {
        const auto m = static_cast<std::size_t>(n_down_);
        tr.tr.resize(m + 1);
        tr.pre.assign(m + 1, FeatureMap<T>(0, 0, 0));
        FeatureMap<T> h = x;
        for (std::size_t s = 0; s <= m; ++s) {
            tr.pre[s] = enc_[s].forward(h, tr.tr[s]);
            h = tr.pre[s];
            h.data = nn::leaky_relu(h.data, T(0.2));
        }
        tr.gap = nn::global_avg_pool(h);
        return enc_head_.forward(tr.gap)[0];
    }

    /// Gradient of the encoder logit w.r.t. the input image; parameters untouched.
    FeatureMap<T> encoder_input_gradient(const EncTrace& tr) const {
        VecX<T> one(1);
        one[0] = T(1);
        VecX<T> ggap = enc_head_.backward_input(one);
        const auto& top = tr.pre.back();
        FeatureMap<T> g = nn::global_avg_pool_backward(ggap, top.channels, top.height, top.width);
        for (Index s = n_down_; s >= 0; --s) {
            const auto si = static_cast<std::size_t>(s);
            g.data = nn::leaky_relu_backward(tr.pre[si].data, g.data, T(0.2));
            g = enc_[si].backward_input(tr.tr[si], g);
        }
        return g;
    }

    /// Directional derivative <v, grad_x logit> via a tangent pass with the
    /// trace's LReLU masks frozen, followed by a reverse pass that adds
    /// scale * d<v, grad_x logit>/d(weights) into the weight grads. Biases do
    /// not appear in the tangent map, so their grads stay zero.
    T encoder_tangent_accumulate(const EncTrace& tr, const FeatureMap<T>& v, T scale) {
        const auto m = static_cast<std::size_t>(n_down_);
        std::vector<typename nn::Conv2d<T>::Trace> ttr(m + 1);
        std::vector<FeatureMap<T>> tact(m + 1, FeatureMap<T>(0, 0, 0));
        FeatureMap<T> t = v;
        for (std::size_t s = 0; s <= m; ++s) {
            t = enc_[s].forward_nobias(t, ttr[s]);
            t.data = (tr.pre[s].data.array() > T(0)).select(t.data, t.data * T(0.2));
            tact[s] = t;
        }
        VecX<T> tgap = nn::global_avg_pool(t);
        const T s_out = enc_head_.weight.row(0).dot(tgap);

        // reverse over the tangent computation
        VecX<T> u(1);
        u[0] = scale;
        enc_head_.weight_grad.row(0) += (u[0] * tgap).transpose();
        VecX<T> ggap = enc_head_.weight.transpose() * u;
        const auto& top = tr.pre[m];
        FeatureMap<T> g = nn::global_avg_pool_backward(ggap, top.channels, top.height, top.width);
        for (Index s = n_down_; s >= 0; --s) {
            const auto si = static_cast<std::size_t>(s);
            g.data = (tr.pre[si].data.array() > T(0)).select(g.data, g.data * T(0.2));
            g = enc_[si].backward(ttr[si], g, /*with_bias=*/false);
        }
        return s_out;
    }

private:
    Index ch(Index stage) const { return std::min(cfg_.max_channels, cfg_.base_channels << stage); }

    UNetConfig cfg_;
    Index n_down_ = 0;
    std::vector<nn::Conv2d<T>> enc_;
    nn::Linear<T> enc_head_;
    std::vector<nn::Conv2d<T>> dec_;
    nn::Conv2d<T> dec_head_;
};

// -- losses (raw logits; stable softplus keeps every log finite) ---------

template <typename T>
T clamp_logit(T z, T c) {
    return z > c ? c : (z < -c ? -c : z);
}

/// -log sigmoid(z); gradient written to *gz if given. The softplus form is
/// exact and finite for any finite logit, and its gradient stays in (-1, 0),
/// so a confident critic can always be pulled back.
template <typename T>
T nll_real(T z, T* gz) {
    if (gz) *gz = nn::sigmoid_scalar(z) - T(1);
    return nn::softplus(-z);
}

/// -log(1 - sigmoid(z)).
template <typename T>
T nll_fake(T z, T* gz) {
    if (gz) *gz = nn::sigmoid_scalar(z);
    return nn::softplus(z);
}

template <typename T>
struct DisLossGrads {
    std::vector<T> enc_real, enc_fake;
    std::vector<FeatureMap<T>> dec_real, dec_fake;
};

/// Scalar-head and pixel-head components of the real/fake objective.
template <typename T>
struct UnetLossParts {
    T enc = T(0), dec = T(0);
    T total() const { return enc + dec; }
};

/// Real/fake objective: scalar and pixel-wise negative log-likelihood, reals
/// pushed to 1 and fakes to 0. Pixel term is summed over the map and averaged
/// over each batch; the scalar term is averaged per batch and the real/fake
/// parts added.
template <typename T>
T dis_loss(const std::vector<typename UNetDiscriminator<T>::Output>& reals,
           const std::vector<typename UNetDiscriminator<T>::Output>& fakes,
           DisLossGrads<T>* grads = nullptr, UnetLossParts<T>* parts = nullptr) {
    if (reals.empty() || fakes.empty()) throw ConfigError("dis_loss: empty batch");
    if (grads) {
        grads->enc_real.assign(reals.size(), T(0));
        grads->enc_fake.assign(fakes.size(), T(0));
        grads->dec_real.clear();
        grads->dec_fake.clear();
    }
    const T wr = T(1) / T(reals.size());
    const T wf = T(1) / T(fakes.size());
    UnetLossParts<T> acc;
    for (std::size_t i = 0; i < reals.size(); ++i) {
        T gz;
        acc.enc += wr * nll_real(reals[i].enc_logit, &gz);
        if (grads) grads->enc_real[i] = wr * gz;
        FeatureMap<T> gmap(1, reals[i].dec_logits.height, reals[i].dec_logits.width);
        for (Index p = 0; p < reals[i].dec_logits.data.size(); ++p) {
            acc.dec += wr * nll_real(reals[i].dec_logits.data.data()[p], &gz);
            gmap.data.data()[p] = wr * gz;
        }
        if (grads) grads->dec_real.push_back(std::move(gmap));
    }
    for (std::size_t i = 0; i < fakes.size(); ++i) {
        T gz;
        acc.enc += wf * nll_fake(fakes[i].enc_logit, &gz);
        if (grads) grads->enc_fake[i] = wf * gz;
        FeatureMap<T> gmap(1, fakes[i].dec_logits.height, fakes[i].dec_logits.width);
        for (Index p = 0; p < fakes[i].dec_logits.data.size(); ++p) {
            acc.dec += wf * nll_fake(fakes[i].dec_logits.data.data()[p], &gz);
            gmap.data.data()[p] = wf * gz;
        }
        if (grads) grads->dec_fake.push_back(std::move(gmap));
    }
    if (parts) *parts = acc;
    return acc.total();
}

/// Probability view of the two heads: sigmoid of the clamped logits, so
/// values stay strictly inside (0,1).
template <typename T>
struct RealFakeOutput {
    T enc_prob = T(0.5);
    FeatureMap<T> dec_prob_map{1, 0, 0};
};

template <typename T>
RealFakeOutput<T> dis_forward(const UNetDiscriminator<T>& d, const FeatureMap<T>& x) {
    typename UNetDiscriminator<T>::Trace tr;
    const auto out = d.forward(x, tr);
    const T c = d.logit_clamp();
    RealFakeOutput<T> p;
    p.enc_prob = nn::sigmoid_scalar(clamp_logit(out.enc_logit, c));
    p.dec_prob_map = FeatureMap<T>(1, out.dec_logits.height, out.dec_logits.width);
    for (Index i = 0; i < out.dec_logits.data.size(); ++i)
        p.dec_prob_map.data.data()[i] = nn::sigmoid_scalar(clamp_logit(out.dec_logits.data.data()[i], c));
    return p;
}

/// Generator-side adversarial term: fakes pushed to 1 at both heads.
template <typename T>
T gan_loss_g(const std::vector<typename UNetDiscriminator<T>::Output>& fakes,
             std::vector<T>* g_enc = nullptr, std::vector<FeatureMap<T>>* g_dec = nullptr,
             UnetLossParts<T>* parts = nullptr) {
    if (fakes.empty()) throw ConfigError("gan_loss_g: empty batch");
    if (g_enc) g_enc->assign(fakes.size(), T(0));
    if (g_dec) g_dec->clear();
    const T w = T(1) / T(fakes.size());
    UnetLossParts<T> acc;
    for (std::size_t i = 0; i < fakes.size(); ++i) {
        T gz;
        acc.enc += w * nll_real(fakes[i].enc_logit, &gz);
        if (g_enc) (*g_enc)[i] = w * gz;
        FeatureMap<T> gmap(1, fakes[i].dec_logits.height, fakes[i].dec_logits.width);
        for (Index p = 0; p < fakes[i].dec_logits.data.size(); ++p) {
            acc.dec += w * nll_real(fakes[i].dec_logits.data.data()[p], &gz);
            gmap.data.data()[p] = w * gz;
        }
        if (g_dec) g_dec->push_back(std::move(gmap));
    }
    if (parts) *parts = acc;
    return acc.total();
}

}  // namespace outfitgan::discriminator

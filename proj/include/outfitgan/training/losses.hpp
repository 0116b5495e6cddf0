#pragma once

#include <optional>
#include <string>
#include <vector>

#include "outfitgan/core/errors.hpp"
#include "outfitgan/core/rng.hpp"
#include "outfitgan/core/types.hpp"
#include "outfitgan/nn/layers.hpp"

namespace outfitgan::training {

/// Mean absolute pixel difference per item, averaged over the outfit's N
/// items. `gsynth`, when given, receives d(loss)/d(synth) per item.
template <typename T>
T l1_loss(const std::vector<FeatureMap<T>>& real, const std::vector<FeatureMap<T>>& synth,
          std::vector<FeatureMap<T>>* gsynth = nullptr) {
    if (real.size() != synth.size() || real.empty()) throw ShapeError("l1_loss: item count mismatch");
    const T wn = T(1) / T(real.size());
    if (gsynth) gsynth->assign(synth.size(), FeatureMap<T>(0, 0, 0));
    T loss = T(0);
    for (std::size_t i = 0; i < real.size(); ++i) {
        if (!real[i].same_shape(synth[i])) throw ShapeError("l1_loss: item shape mismatch");
        const T wp = wn / T(real[i].data.size());
        loss += (synth[i].data - real[i].data).cwiseAbs().sum() * wp;
        if (gsynth) {
            auto& g = (*gsynth)[i];
            g = FeatureMap<T>(synth[i].channels, synth[i].height, synth[i].width);
            g.data = (synth[i].data - real[i].data).array().sign() * wp;
        }
    }
    return loss;
}

/// Frozen randomly-initialized convolutional feature network exposing four
/// tap points of strictly decreasing spatial size. Weights are fixed by a
/// constant seed and are never trained.
template <typename T>
class PerceptualTaps {
public:
    explicit PerceptualTaps(Index resolution) : resolution_(resolution) {
        if (!is_power_of_two(resolution) || resolution < 16)
            throw ConfigError("perceptual taps: resolution must be a power of two >= 16");
        Rng rng(derive_seed(0x5eedfacedull, "perceptual-taps", 0));
        Index in = 3;
        static constexpr Index widths[4] = {8, 12, 16, 20};
        for (int s = 0; s < 4; ++s) {
            conv_[s].configure(in, widths[s], 3, 2, 1);
            conv_[s].init(rng);
            in = widths[s];
        }
    }

    Index resolution() const { return resolution_; }

    struct Trace {
        std::vector<typename nn::Conv2d<T>::Trace> tr;
        std::vector<FeatureMap<T>> pre;
    };

    /// Four post-activation feature maps at R/2, R/4, R/8, R/16.
    std::vector<FeatureMap<T>> forward(const FeatureMap<T>& x, Trace* tr = nullptr) const {
        if (x.height != resolution_ || x.channels != 3) throw ShapeError("perceptual taps: input shape mismatch");
        if (tr) {
            tr->tr.resize(4);
            tr->pre.assign(4, FeatureMap<T>(0, 0, 0));
        }
        std::vector<FeatureMap<T>> taps;
        taps.reserve(4);
        FeatureMap<T> h = x;
        for (int s = 0; s < 4; ++s) {
            typename nn::Conv2d<T>::Trace local;
            auto& ct = tr ? tr->tr[static_cast<std::size_t>(s)] : local;
            FeatureMap<T> pre = conv_[s].forward(h, ct);
            if (tr) tr->pre[static_cast<std::size_t>(s)] = pre;
            h = pre;
            h.data = nn::leaky_relu(h.data, T(0.2));
            taps.push_back(h);
        }
        return taps;
    }

    /// Input-image gradient from per-tap gradients; weights stay frozen.
    FeatureMap<T> backward_input(const Trace& tr, const std::vector<FeatureMap<T>>& gtaps) const {
        FeatureMap<T> g = gtaps[3];
        for (int s = 3; s >= 0; --s) {
            g.data = nn::leaky_relu_backward(tr.pre[static_cast<std::size_t>(s)].data, g.data, T(0.2));
            g = conv_[s].backward_input(tr.tr[static_cast<std::size_t>(s)], g);
            if (s > 0) g.data += gtaps[static_cast<std::size_t>(s - 1)].data;
        }
        return g;
    }

private:
    Index resolution_;
    nn::Conv2d<T> conv_[4];
};

/// Sum over taps of the mean absolute feature difference for one image pair.
/// `gsynth`, when given, receives d(loss)/d(synth).
template <typename T>
T perceptual_loss(const FeatureMap<T>& real, const FeatureMap<T>& synth, const PerceptualTaps<T>& taps,
                  FeatureMap<T>* gsynth = nullptr) {
    if (!real.same_shape(synth)) throw ShapeError("perceptual_loss: image shape mismatch");
    auto fr = taps.forward(real);
    typename PerceptualTaps<T>::Trace tr;
    auto fs = taps.forward(synth, gsynth ? &tr : nullptr);
    if (fr.size() != fs.size()) throw ShapeError("perceptual_loss: tap count mismatch");
    T loss = T(0);
    std::vector<FeatureMap<T>> gt;
    for (std::size_t t = 0; t < fr.size(); ++t) {
        if (!fr[t].same_shape(fs[t])) throw ShapeError("perceptual_loss: tap shape mismatch");
        const T w = T(1) / T(fr[t].data.size());
        loss += (fs[t].data - fr[t].data).cwiseAbs().sum() * w;
        if (gsynth) {
            FeatureMap<T> g(fs[t].channels, fs[t].height, fs[t].width);
            g.data = (fs[t].data - fr[t].data).array().sign() * w;
            gt.push_back(std::move(g));
        }
    }
    if (gsynth) *gsynth = taps.backward_input(tr, gt);
    return loss;
}

/// Builds the configured perceptual backend; `off` yields no network, and
/// `pretrained` falls back to the frozen-random network with a warning
/// because no pretrained classification weights ship with this artifact.
template <typename T>
std::optional<PerceptualTaps<T>> make_perceptual_taps(const std::string& backend, Index resolution,
                                                      std::string* warning = nullptr) {
    if (backend == "off") return std::nullopt;
    if (backend == "pretrained") {
        if (warning)
            *warning = "perceptual backend 'pretrained' unavailable in this build; using frozen_random instead";
        return PerceptualTaps<T>(resolution);
    }
    if (backend == "frozen_random") return PerceptualTaps<T>(resolution);
    throw ConfigError("unknown perceptual backend: " + backend);
}

template <typename T>
struct GLossParts {
    T gan = T(0), l1 = T(0), vgg = T(0), coll = T(0);
};

/// L_g = L_gan + lambda1*L1 + lambda2*Lvgg + lambda3*Lcoll.
template <typename T>
T total_g_loss(const GLossParts<T>& p, T lambda1, T lambda2, T lambda3) {
    return p.gan + lambda1 * p.l1 + lambda2 * p.vgg + lambda3 * p.coll;
}

/// Gradient penalty (gamma/2)*E[||d enc(x)/dx||^2] over a real batch.
/// When `accumulate` is set the discriminator's parameter gradients receive
/// d(penalty)/d(theta), computed by a tangent pass with frozen activation
/// masks. Works for any discriminator exposing encoder_forward /
/// encoder_input_gradient / encoder_tangent_accumulate.
template <typename T, typename Disc>
T r1_penalty(Disc& d, const std::vector<FeatureMap<T>>& reals, T gamma, bool accumulate = true) {
    if (reals.empty()) throw ConfigError("r1_penalty: empty batch");
    const T wb = T(1) / T(reals.size());
    T penalty = T(0);
    for (const auto& x : reals) {
        typename Disc::EncTrace tr;
        d.encoder_forward(x, tr);
        FeatureMap<T> v = d.encoder_input_gradient(tr);
        penalty += T(0.5) * gamma * wb * v.data.squaredNorm();
        if (accumulate) d.encoder_tangent_accumulate(tr, v, gamma * wb);
    }
    return penalty;
}

}  // namespace outfitgan::training

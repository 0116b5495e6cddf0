#pragma once

#include <optional>
#include <string>
#include <vector>

#include "outfitgan/core/rng.hpp"
#include "outfitgan/nn/layers.hpp"

namespace outfitgan::metrics {

/// Fixed randomly-initialized CNN used to embed images for distribution
/// comparison. Scores from it are self-consistent but not comparable to
/// embeddings from any pretrained network.
template <typename T>
class FrozenFeatureNet {
public:
    explicit FrozenFeatureNet(Index resolution) : resolution_(resolution) {
        if (!is_power_of_two(resolution) || resolution < 16)
            throw ConfigError("feature net: resolution must be a power of two >= 16");
        Rng rng(derive_seed(0x5eedfacedull, "fid-features", 0));
        Index in = 3;
        static constexpr Index widths[4] = {16, 32, 48, 64};
        for (int s = 0; s < 4; ++s) {
            conv_[s].configure(in, widths[s], 3, 2, 1);
            conv_[s].init(rng);
            in = widths[s];
        }
    }

    Index resolution() const { return resolution_; }
    Index feature_dim() const { return 64; }

    /// Pooled post-activation features of the deepest stage.
    VecX<T> forward(const FeatureMap<T>& x) const {
        if (x.height != resolution_ || x.channels != 3) throw ShapeError("feature net: input shape mismatch");
        FeatureMap<T> h = x;
        for (int s = 0; s < 4; ++s) {
            typename nn::Conv2d<T>::Trace tr;
            h = conv_[s].forward(h, tr);
            h.data = nn::leaky_relu(h.data, T(0.2));
        }
        return nn::global_avg_pool(h);
    }

private:
    Index resolution_;
    nn::Conv2d<T> conv_[4];
};

/// Backend selection: "frozen_random" builds the fixed random net;
/// "pretrained" is not shipped and falls back with a warning.
template <typename T>
FrozenFeatureNet<T> make_feature_net(const std::string& backend, Index resolution, std::string* warning = nullptr) {
    if (backend == "pretrained") {
        if (warning)
            *warning = "pretrained feature backend unavailable; using frozen_random "
                       "(scores not comparable across backends)";
        return FrozenFeatureNet<T>(resolution);
    }
    if (backend == "frozen_random") return FrozenFeatureNet<T>(resolution);
    throw ConfigError("unknown feature backend: " + backend);
}

}  // namespace outfitgan::metrics

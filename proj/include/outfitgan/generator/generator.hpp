#pragma once

#include <vector>

#include "outfitgan/core/errors.hpp"
#include "outfitgan/core/params.hpp"
#include "outfitgan/core/rng.hpp"
#include "outfitgan/core/types.hpp"
#include "outfitgan/data/outfit.hpp"
#include "outfitgan/nn/layers.hpp"

namespace outfitgan::generator {

/// Modulate conv weights by a per-input-channel style scale, then normalize
/// each output channel to (near) unit L2 norm. Layout matches nn::Conv2d:
/// weight(o, c*k*k + t).
template <typename T>
void demodulate_weights(const MatX<T>& weight, const VecX<T>& sprime, T eps, Index in_ch, Index ksize,
                        MatX<T>& wmod, VecX<T>& norm) {
    const Index kk = ksize * ksize;
    if (sprime.size() != in_ch || weight.cols() != in_ch * kk) throw ShapeError("demodulate: weight/style shape mismatch");
    if (!sprime.allFinite()) throw NumericError("demodulate: non-finite style scales");
    wmod.resize(weight.rows(), weight.cols());
    for (Index c = 0; c < in_ch; ++c) wmod.middleCols(c * kk, kk) = weight.middleCols(c * kk, kk) * sprime[c];
    norm = (wmod.rowwise().squaredNorm().array() + eps).sqrt().matrix();
    wmod.array().colwise() /= norm.array();
}

/// Style-modulated 3x3 convolution (stride 1, pad 1), no own bias. The affine
/// map's bias starts at 1 so a zero style vector modulates by exactly 1.
template <typename T>
struct ModulatedConv2d {
    Index in_ch = 0, out_ch = 0, ksize = 3, pad = 1;
    T eps = T(1e-8);
    MatX<T> weight, weight_grad;  // out_ch x (in_ch*k*k)
    nn::Linear<T> affine;         // style_dim -> in_ch

    struct Trace {
        MatX<T> cols;
        Index in_h = 0, in_w = 0;
        VecX<T> style, sprime, norm;
        MatX<T> wmod;
    };

    void configure(Index in, Index out, Index k, Index style_dim) {
        in_ch = in;
        out_ch = out;
        ksize = k;
        pad = (k - 1) / 2;
        weight.setZero(out, in * k * k);
        weight_grad.setZero(out, in * k * k);
        affine.configure(style_dim, in);
    }

    void init(Rng& rng) {
        const T std = std::sqrt(T(2) / T(in_ch * ksize * ksize));
        for (Index i = 0; i < weight.size(); ++i) weight.data()[i] = T(rng.normal()) * std;
        affine.init(rng, T(0.2), T(1));  // small weights, unit bias
    }

    void collect(ParamCollector<T>& pc) {
        pc.add("weight", weight, weight_grad);
        pc.scope("affine", [&](ParamCollector<T>& s) { affine.collect(s); });
    }

    FeatureMap<T> forward(const FeatureMap<T>& x, const VecX<T>& style, Trace& tr) const {
        tr.style = style;
        tr.sprime = affine.forward(style);
        demodulate_weights(weight, tr.sprime, eps, in_ch, ksize, tr.wmod, tr.norm);
        tr.in_h = x.height;
        tr.in_w = x.width;
        nn::im2col(x, ksize, 1, pad, tr.cols);
        FeatureMap<T> y(out_ch, x.height, x.width);
        y.data.noalias() = tr.wmod * tr.cols;
        return y;
    }

    /// Accumulates weight and affine grads; returns (input grad, style grad).
    std::pair<FeatureMap<T>, VecX<T>> backward(const Trace& tr, const FeatureMap<T>& gy) {
        const Index kk = ksize * ksize;
        // through the convolution
        MatX<T> gwmod = gy.data * tr.cols.transpose();
        MatX<T> gcols = tr.wmod.transpose() * gy.data;
        FeatureMap<T> gx = nn::col2im(gcols, in_ch, tr.in_h, tr.in_w, ksize, 1, pad);

        // through demodulation: g' = (g - w'' <g,w''>) / norm, per output row
        MatX<T> gwprime(gwmod.rows(), gwmod.cols());
        for (Index o = 0; o < out_ch; ++o) {
            const T dot = gwmod.row(o).dot(tr.wmod.row(o));
            gwprime.row(o) = (gwmod.row(o) - tr.wmod.row(o) * dot) / tr.norm[o];
        }

        // through modulation: w' = s'[c] * w
        VecX<T> gsprime = VecX<T>::Zero(in_ch);
        for (Index c = 0; c < in_ch; ++c) {
            weight_grad.middleCols(c * kk, kk) += gwprime.middleCols(c * kk, kk) * tr.sprime[c];
            gsprime[c] = (gwprime.middleCols(c * kk, kk).array() * weight.middleCols(c * kk, kk).array()).sum();
        }
        VecX<T> gstyle = affine.backward(tr.style, gsprime);
        return {std::move(gx), std::move(gstyle)};
    }
};

/// Area-average the full-resolution binary mask down to `target` and
/// re-binarize at 0.5, keeping the channel binary at every scale.
template <typename T>
FeatureMap<T> downsample_mask(const FeatureMap<T>& mask, Index target) {
    if (mask.height % target != 0) throw ShapeError("mask size not divisible by target size");
    const Index f = mask.height / target;
    FeatureMap<T> out(1, target, target);
    for (Index y = 0; y < target; ++y)
        for (Index x = 0; x < target; ++x) {
            T acc = T(0);
            for (Index dy = 0; dy < f; ++dy)
                for (Index dx = 0; dx < f; ++dx) acc += mask.data(0, (y * f + dy) * mask.width + (x * f + dx));
            out.data(0, y * target + x) = acc / T(f * f) >= T(0.5) ? T(1) : T(0);
        }
    return out;
}

/// Silhouette-and-style fusion block: optional 2x upsample, concatenation of
/// the downsampled silhouette as an extra channel, style-demodulated conv,
/// per-channel bias, leaky ReLU.
template <typename T>
struct SSFusionBlock {
    bool upsample = false;
    ModulatedConv2d<T> conv;  // in_ch counts the +1 mask channel
    VecX<T> bias, bias_grad;

    struct Trace {
        typename ModulatedConv2d<T>::Trace conv_tr;
        FeatureMap<T> pre{0, 0, 0};  // post-bias pre-activation
    };

    void configure(Index feat_in, Index feat_out, bool up, Index style_dim) {
        upsample = up;
        conv.configure(feat_in + 1, feat_out, 3, style_dim);
        bias.setZero(feat_out);
        bias_grad.setZero(feat_out);
    }

    void init(Rng& rng) {
        conv.init(rng);
        bias.setZero();
    }

    void collect(ParamCollector<T>& pc) {
        pc.scope("conv", [&](ParamCollector<T>& s) { conv.collect(s); });
        pc.add("bias", bias, bias_grad);
    }

    FeatureMap<T> forward(const FeatureMap<T>& x, const FeatureMap<T>& mask_full, const VecX<T>& style,
                          Trace& tr) const {
        FeatureMap<T> h = upsample ? nn::upsample2x_nearest(x) : x;
        if (mask_full.height % h.height != 0) throw ShapeError("fusion block: silhouette/feature size incompatible");
        FeatureMap<T> withmask = nn::concat_channels(h, downsample_mask(mask_full, h.height));
        FeatureMap<T> y = conv.forward(withmask, style, tr.conv_tr);
        y.data.colwise() += bias;
        tr.pre = y;
        y.data = nn::leaky_relu(y.data, T(0.2));
        return y;
    }

    /// Returns (input grad, style grad); the mask channel's grad is dropped.
    std::pair<FeatureMap<T>, VecX<T>> backward(const Trace& tr, const FeatureMap<T>& gy) {
        FeatureMap<T> gpre = gy;
        gpre.data = nn::leaky_relu_backward(tr.pre.data, gy.data, T(0.2));
        bias_grad.noalias() += gpre.data.rowwise().sum();
        auto [gcat, gstyle] = conv.backward(tr.conv_tr, gpre);
        FeatureMap<T> gup(gcat.channels - 1, gcat.height, gcat.width);
        gup.data = gcat.data.topRows(gcat.channels - 1);
        FeatureMap<T> gx = upsample ? nn::upsample2x_nearest_backward(gup) : std::move(gup);
        return {std::move(gx), std::move(gstyle)};
    }
};

struct GeneratorConfig {
    Index resolution = 64;
    Index base_channels = 16;
    Index max_channels = 128;
    Index style_dim = 512;
};

/// Progressive synthesis network: a learned 4x4 constant followed by two
/// fusion blocks per resolution level, consuming one style vector per block
/// (K = 2*log2(R) - 2 in total), closed by a 1x1 conv and tanh.
template <typename T>
class Generator {
public:
    explicit Generator(const GeneratorConfig& cfg) : cfg_(cfg) {
        if (!is_power_of_two(cfg.resolution) || cfg.resolution < 16)
            throw ConfigError("generator: resolution must be a power of two >= 16");
        const Index levels = log2_exact(cfg.resolution) - 1;  // 4 .. R
        k_ = 2 * levels;

        const auto ch = [&](Index level) {
            const Index res = Index(4) << level;
            return std::min(cfg.max_channels, cfg.base_channels * cfg.resolution / res);
        };
        constant_.setZero(ch(0), 16);
        constant_grad_.setZero(ch(0), 16);
        blocks_.resize(static_cast<std::size_t>(k_));
        for (Index b = 0; b < k_; ++b) {
            const Index level = b / 2;
            const bool up = (b % 2 == 0) && level > 0;
            const Index in = up ? ch(level - 1) : ch(level);
            blocks_[static_cast<std::size_t>(b)].configure(in, ch(level), up, cfg.style_dim);
        }
        to_rgb_.configure(ch(levels - 1), 3, 1, 1, 0);
    }

    Index style_layers() const { return k_; }
    const GeneratorConfig& config() const { return cfg_; }

    void init(Rng& rng) {
        for (Index i = 0; i < constant_.size(); ++i) constant_.data()[i] = T(rng.normal());
        for (auto& b : blocks_) b.init(rng);
        to_rgb_.init(rng);
    }

    void collect(ParamCollector<T>& pc) {
        pc.add("constant", constant_, constant_grad_);
        for (std::size_t b = 0; b < blocks_.size(); ++b)
            pc.scope("block" + std::to_string(b), [&](ParamCollector<T>& s) { blocks_[b].collect(s); });
        pc.scope("to_rgb", [&](ParamCollector<T>& s) { to_rgb_.collect(s); });
    }

    struct Trace {
        std::vector<typename SSFusionBlock<T>::Trace> blocks;
        typename nn::Conv2d<T>::Trace rgb_tr;
        FeatureMap<T> out{0, 0, 0};  // post-tanh output
    };

    /// styles: K x style_dim (row k modulates block k); silhouette at full R.
    FeatureMap<T> forward(const MatX<T>& styles, const FeatureMap<T>& silhouette, Trace& tr) const {
        if (styles.rows() != k_) throw ConfigError("generator: style layer count mismatch");
        if (silhouette.height != cfg_.resolution || silhouette.width != cfg_.resolution)
            throw ShapeError("generator: silhouette resolution mismatch");
        tr.blocks.resize(static_cast<std::size_t>(k_));
        FeatureMap<T> h(constant_.rows(), 4, 4);
        h.data = constant_;
        for (Index b = 0; b < k_; ++b)
            h = blocks_[static_cast<std::size_t>(b)].forward(h, silhouette, styles.row(b).transpose(),
                                                             tr.blocks[static_cast<std::size_t>(b)]);
        FeatureMap<T> y = to_rgb_.forward(h, tr.rgb_tr);
        y.data = y.data.array().tanh().matrix();
        tr.out = y;
        return y;
    }

    /// Accumulates parameter grads; returns the K x style_dim style grads.
    MatX<T> backward(Trace& tr, const FeatureMap<T>& gy) {
        FeatureMap<T> gpre = gy;
        gpre.data = (gy.data.array() * (T(1) - tr.out.data.array().square())).matrix();
        FeatureMap<T> gh = to_rgb_.backward(tr.rgb_tr, gpre);
        MatX<T> gstyles(k_, cfg_.style_dim);
        for (Index b = k_ - 1; b >= 0; --b) {
            auto [gx, gstyle] = blocks_[static_cast<std::size_t>(b)].backward(tr.blocks[static_cast<std::size_t>(b)], gh);
            gstyles.row(b) = gstyle.transpose();
            gh = std::move(gx);
        }
        constant_grad_ += gh.data;
        return gstyles;
    }

private:
    GeneratorConfig cfg_;
    Index k_ = 0;
    MatX<T> constant_, constant_grad_;
    std::vector<SSFusionBlock<T>> blocks_;
    nn::Conv2d<T> to_rgb_;
};

/// Compositing rule: given slots pass the real item through bit-exactly,
/// target slots take the generator output.
template <typename T>
std::vector<FeatureMap<T>> composite_outfit(const std::vector<FeatureMap<T>>& real_items,
                                            const std::vector<FeatureMap<T>>& generated,
                                            const data::GivenMask& given) {
    const auto n = real_items.size();
    if (generated.size() != n || static_cast<std::size_t>(given.size()) != n)
        throw ShapeError("composite: length mismatch");
    std::vector<FeatureMap<T>> out;
    out.reserve(n);
    for (std::size_t i = 0; i < n; ++i)
        out.push_back(given.is_given(static_cast<Index>(i)) ? real_items[i] : generated[i]);
    return out;
}

}  // namespace outfitgan::generator

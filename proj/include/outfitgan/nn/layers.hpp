#pragma once

#include <cmath>
#include <string>

#include "outfitgan/core/params.hpp"
#include "outfitgan/core/rng.hpp"
#include "outfitgan/core/types.hpp"

namespace outfitgan::nn {

// ---------------------------------------------------------------------------
// elementwise

template <typename T>
MatX<T> leaky_relu(const MatX<T>& x, T slope) {
    return x.array().max(x.array() * slope).matrix();
}

/// d/dx of leaky_relu given the pre-activation input.
template <typename T>
MatX<T> leaky_relu_backward(const MatX<T>& x, const MatX<T>& gy, T slope) {
    return (x.array() > T(0)).select(gy, gy * slope);
}

template <typename T>
T sigmoid_scalar(T z) {
    if (z >= T(0)) return T(1) / (T(1) + std::exp(-z));
    const T e = std::exp(z);
    return e / (T(1) + e);
}

/// log(sigmoid(z)) = -softplus(-z), numerically stable.
template <typename T>
T log_sigmoid(T z) {
    if (z >= T(0)) return -std::log1p(std::exp(-z));
    return z - std::log1p(std::exp(z));
}

template <typename T>
T softplus(T z) {
    if (z >= T(0)) return z + std::log1p(std::exp(-z));
    return std::log1p(std::exp(z));
}

// ---------------------------------------------------------------------------
// im2col convolution plumbing

template <typename T>
struct ConvShape {
    Index in_ch, in_h, in_w, out_h, out_w;
};

inline Index conv_out_dim(Index in, Index k, Index stride, Index pad) {
    return (in + 2 * pad - k) / stride + 1;
}

/// Unfold x into a (in_ch*k*k) x (out_h*out_w) patch matrix.
template <typename T>
void im2col(const FeatureMap<T>& x, Index k, Index stride, Index pad, MatX<T>& cols) {
    const Index oh = conv_out_dim(x.height, k, stride, pad);
    const Index ow = conv_out_dim(x.width, k, stride, pad);
    cols.resize(x.channels * k * k, oh * ow);
    for (Index oy = 0; oy < oh; ++oy) {
        for (Index ox = 0; ox < ow; ++ox) {
            const Index col = oy * ow + ox;
            Index row = 0;
            for (Index c = 0; c < x.channels; ++c) {
                for (Index ky = 0; ky < k; ++ky) {
                    const Index iy = oy * stride + ky - pad;
                    for (Index kx = 0; kx < k; ++kx, ++row) {
                        const Index ix = ox * stride + kx - pad;
                        cols(row, col) = (iy >= 0 && iy < x.height && ix >= 0 && ix < x.width)
                                             ? x.data(c, iy * x.width + ix)
                                             : T(0);
                    }
                }
            }
        }
    }
}

/// Adjoint of im2col: scatter-add patch gradients back onto the input grid.
template <typename T>
FeatureMap<T> col2im(const MatX<T>& gcols, Index in_ch, Index in_h, Index in_w, Index k, Index stride, Index pad) {
    FeatureMap<T> gx(in_ch, in_h, in_w);
    const Index oh = conv_out_dim(in_h, k, stride, pad);
    const Index ow = conv_out_dim(in_w, k, stride, pad);
    for (Index oy = 0; oy < oh; ++oy) {
        for (Index ox = 0; ox < ow; ++ox) {
            const Index col = oy * ow + ox;
            Index row = 0;
            for (Index c = 0; c < in_ch; ++c) {
                for (Index ky = 0; ky < k; ++ky) {
                    const Index iy = oy * stride + ky - pad;
                    for (Index kx = 0; kx < k; ++kx, ++row) {
                        const Index ix = ox * stride + kx - pad;
                        if (iy >= 0 && iy < in_h && ix >= 0 && ix < in_w)
                            gx.data(c, iy * in_w + ix) += gcols(row, col);
                    }
                }
            }
        }
    }
    return gx;
}

// ---------------------------------------------------------------------------
// layers

template <typename T>
struct Conv2d {
    Index in_ch = 0, out_ch = 0, ksize = 3, stride = 1, pad = 1;
    MatX<T> weight;  // out_ch x (in_ch*k*k)
    VecX<T> bias;
    MatX<T> weight_grad;
    VecX<T> bias_grad;

    struct Trace {
        MatX<T> cols;
        Index in_h = 0, in_w = 0;
    };

    Conv2d() = default;
    Conv2d(Index in, Index out, Index k, Index s, Index p) { configure(in, out, k, s, p); }

    void configure(Index in, Index out, Index k, Index s, Index p) {
        in_ch = in;
        out_ch = out;
        ksize = k;
        stride = s;
        pad = p;
        weight.setZero(out, in * k * k);
        bias.setZero(out);
        weight_grad.setZero(out, in * k * k);
        bias_grad.setZero(out);
    }

    void init(Rng& rng) {
        const T std = std::sqrt(T(2) / T(in_ch * ksize * ksize));
        for (Index i = 0; i < weight.size(); ++i) weight.data()[i] = T(rng.normal()) * std;
        bias.setZero();
    }

    void collect(ParamCollector<T>& pc) {
        pc.add("weight", weight, weight_grad);
        pc.add("bias", bias, bias_grad);
    }

    FeatureMap<T> forward(const FeatureMap<T>& x, Trace& tr) const {
        if (x.channels != in_ch) throw ShapeError("Conv2d: channel mismatch");
        tr.in_h = x.height;
        tr.in_w = x.width;
        im2col(x, ksize, stride, pad, tr.cols);
        FeatureMap<T> y(out_ch, conv_out_dim(x.height, ksize, stride, pad),
                        conv_out_dim(x.width, ksize, stride, pad));
        y.data.noalias() = weight * tr.cols;
        y.data.colwise() += bias;
        return y;
    }

    /// Weight-only application (no bias); used for R1 tangent propagation.
    FeatureMap<T> forward_nobias(const FeatureMap<T>& x, Trace& tr) const {
        tr.in_h = x.height;
        tr.in_w = x.width;
        im2col(x, ksize, stride, pad, tr.cols);
        FeatureMap<T> y(out_ch, conv_out_dim(x.height, ksize, stride, pad),
                        conv_out_dim(x.width, ksize, stride, pad));
        y.data.noalias() = weight * tr.cols;
        return y;
    }

    FeatureMap<T> backward(const Trace& tr, const FeatureMap<T>& gy, bool with_bias = true) {
        weight_grad.noalias() += gy.data * tr.cols.transpose();
        if (with_bias) bias_grad.noalias() += gy.data.rowwise().sum();
        MatX<T> gcols = weight.transpose() * gy.data;
        return col2im(gcols, in_ch, tr.in_h, tr.in_w, ksize, stride, pad);
    }

    /// Input gradient only, parameters untouched.
    FeatureMap<T> backward_input(const Trace& tr, const FeatureMap<T>& gy) const {
        MatX<T> gcols = weight.transpose() * gy.data;
        return col2im(gcols, in_ch, tr.in_h, tr.in_w, ksize, stride, pad);
    }
};

template <typename T>
struct Linear {
    MatX<T> weight;  // out x in
    VecX<T> bias;
    MatX<T> weight_grad;
    VecX<T> bias_grad;

    Linear() = default;
    Linear(Index in, Index out) { configure(in, out); }

    void configure(Index in, Index out) {
        weight.setZero(out, in);
        bias.setZero(out);
        weight_grad.setZero(out, in);
        bias_grad.setZero(out);
    }

    Index in_dim() const { return weight.cols(); }
    Index out_dim() const { return weight.rows(); }

    void init(Rng& rng, T weight_scale = T(1), T bias_value = T(0)) {
        const T std = weight_scale * std::sqrt(T(2) / T(weight.cols()));
        for (Index i = 0; i < weight.size(); ++i) weight.data()[i] = T(rng.normal()) * std;
        bias.setConstant(bias_value);
    }

    void collect(ParamCollector<T>& pc) {
        pc.add("weight", weight, weight_grad);
        pc.add("bias", bias, bias_grad);
    }

    VecX<T> forward(const VecX<T>& x) const { return weight * x + bias; }

    MatX<T> forward(const MatX<T>& x) const {
        MatX<T> y = weight * x;
        y.colwise() += bias;
        return y;
    }

    VecX<T> backward(const VecX<T>& x, const VecX<T>& gy, bool with_bias = true) {
        weight_grad.noalias() += gy * x.transpose();
        if (with_bias) bias_grad.noalias() += gy;
        return weight.transpose() * gy;
    }

    MatX<T> backward(const MatX<T>& x, const MatX<T>& gy) {
        weight_grad.noalias() += gy * x.transpose();
        bias_grad.noalias() += gy.rowwise().sum();
        return weight.transpose() * gy;
    }

    MatX<T> backward_input(const MatX<T>& gy) const { return weight.transpose() * gy; }
};

// ---------------------------------------------------------------------------
// resampling

template <typename T>
FeatureMap<T> upsample2x_nearest(const FeatureMap<T>& x) {
    FeatureMap<T> y(x.channels, x.height * 2, x.width * 2);
    for (Index c = 0; c < x.channels; ++c)
        for (Index iy = 0; iy < x.height; ++iy)
            for (Index ix = 0; ix < x.width; ++ix) {
                const T v = x.data(c, iy * x.width + ix);
                const Index base = (2 * iy) * y.width + 2 * ix;
                y.data(c, base) = v;
                y.data(c, base + 1) = v;
                y.data(c, base + y.width) = v;
                y.data(c, base + y.width + 1) = v;
            }
    return y;
}

template <typename T>
FeatureMap<T> upsample2x_nearest_backward(const FeatureMap<T>& gy) {
    FeatureMap<T> gx(gy.channels, gy.height / 2, gy.width / 2);
    for (Index c = 0; c < gy.channels; ++c)
        for (Index iy = 0; iy < gx.height; ++iy)
            for (Index ix = 0; ix < gx.width; ++ix) {
                const Index base = (2 * iy) * gy.width + 2 * ix;
                gx.data(c, iy * gx.width + ix) = gy.data(c, base) + gy.data(c, base + 1) +
                                                 gy.data(c, base + gy.width) + gy.data(c, base + gy.width + 1);
            }
    return gx;
}

template <typename T>
VecX<T> global_avg_pool(const FeatureMap<T>& x) {
    return x.data.rowwise().mean();
}

template <typename T>
FeatureMap<T> global_avg_pool_backward(const VecX<T>& gy, Index channels, Index h, Index w) {
    FeatureMap<T> gx(channels, h, w);
    gx.data.colwise() = gy / T(h * w);
    return gx;
}

/// Stack b's channels under a's.
template <typename T>
FeatureMap<T> concat_channels(const FeatureMap<T>& a, const FeatureMap<T>& b) {
    if (a.height != b.height || a.width != b.width) throw ShapeError("concat_channels: spatial mismatch");
    FeatureMap<T> y(a.channels + b.channels, a.height, a.width);
    y.data.topRows(a.channels) = a.data;
    y.data.bottomRows(b.channels) = b.data;
    return y;
}

}  // namespace outfitgan::nn

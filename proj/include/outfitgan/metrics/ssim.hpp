#pragma once

#include <cmath>

#include "outfitgan/core/types.hpp"

namespace outfitgan::metrics {

/// 11-tap Gaussian window, sigma 1.5, normalized to sum 1.
template <typename T>
VecX<T> gaussian_window11() {
    VecX<T> g(11);
    const T inv = T(1) / (T(2) * T(1.5) * T(1.5));
    for (Index i = 0; i < 11; ++i) {
        const T d = T(i) - T(5);
        g[i] = std::exp(-d * d * inv);
    }
    return g / g.sum();
}

namespace detail {

/// One channel row of a FeatureMap as an H x W matrix.
template <typename T>
MatX<T> plane_of(const FeatureMap<T>& m, Index c) {
    MatX<T> out(m.height, m.width);
    for (Index y = 0; y < m.height; ++y)
        for (Index x = 0; x < m.width; ++x) out(y, x) = m.at(c, y, x);
    return out;
}

/// Separable valid-mode windowing: output (H-10) x (W-10).
template <typename T>
MatX<T> window_valid(const MatX<T>& img, const VecX<T>& g) {
    const Index k = g.size();
    MatX<T> horiz(img.rows(), img.cols() - k + 1);
    for (Index x = 0; x < horiz.cols(); ++x) horiz.col(x) = img.middleCols(x, k) * g;
    MatX<T> out(horiz.rows() - k + 1, horiz.cols());
    for (Index y = 0; y < out.rows(); ++y) out.row(y) = g.transpose() * horiz.middleRows(y, k);
    return out;
}

}  // namespace detail

/// Affine map from the working [-1,1] pixel range to SSIM's [0,1] domain.
template <typename T>
FeatureMap<T> to_unit_range(const FeatureMap<T>& x) {
    FeatureMap<T> out = x;
    out.data = (out.data.array() + T(1)) * T(0.5);
    return out;
}

/// Windowed structural similarity over [0,1] images: mean over valid 11x11
/// Gaussian windows and channels, constants C1=(0.01)^2 and C2=(0.03)^2.
template <typename T>
T ssim(const FeatureMap<T>& x, const FeatureMap<T>& y) {
    if (!x.same_shape(y)) throw ShapeError("ssim: image shape mismatch");
    if (x.height < 11 || x.width < 11) throw ShapeError("ssim: image smaller than the 11x11 window");
    const VecX<T> g = gaussian_window11<T>();
    const T c1 = T(0.01) * T(0.01);
    const T c2 = T(0.03) * T(0.03);

    T acc = T(0);
    for (Index c = 0; c < x.channels; ++c) {
        const MatX<T> px = detail::plane_of(x, c);
        const MatX<T> py = detail::plane_of(y, c);
        const MatX<T> mx = detail::window_valid(px, g);
        const MatX<T> my = detail::window_valid(py, g);
        const MatX<T> sxx = detail::window_valid<T>(px.cwiseProduct(px), g) - mx.cwiseProduct(mx);
        const MatX<T> syy = detail::window_valid<T>(py.cwiseProduct(py), g) - my.cwiseProduct(my);
        const MatX<T> sxy = detail::window_valid<T>(px.cwiseProduct(py), g) - mx.cwiseProduct(my);

        const auto num = (T(2) * mx.array() * my.array() + c1) * (T(2) * sxy.array() + c2);
        const auto den = (mx.array().square() + my.array().square() + c1) * (sxx.array() + syy.array() + c2);
        acc += (num / den).mean();
    }
    return acc / T(x.channels);
}

}  // namespace outfitgan::metrics

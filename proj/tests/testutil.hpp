#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <vector>

#include "outfitgan/core/rng.hpp"
#include "outfitgan/core/types.hpp"

namespace testutil {

using outfitgan::FeatureMap;
using outfitgan::Index;
using outfitgan::Rng;

/// Relative error against a central difference, minimized over a ladder of
/// step sizes. Tiny steps expose cancellation noise in near-cancelling sums
/// and large steps expose curvature, so a formula is accepted if any sensible
/// step reproduces it.
inline double fd_rel_err(const std::function<double(double)>& loss_at, double base, double analytic) {
    static constexpr double steps[] = {1e-5, 1e-4, 1e-3, 1e-7};
    double best = 1e300;
    for (const double h : steps) {
        const double fd = (loss_at(base + h) - loss_at(base - h)) / (2 * h);
        const double scale = std::max({std::abs(fd), std::abs(analytic), 1e-8});
        best = std::min(best, std::abs(fd - analytic) / scale);
    }
    return best;
}

/// Uniformly spread sample of k indices over [0, n).
inline std::vector<Index> probe_indices(Index n, Index k) {
    std::vector<Index> out;
    if (n <= k) {
        for (Index i = 0; i < n; ++i) out.push_back(i);
        return out;
    }
    for (Index i = 0; i < k; ++i) out.push_back(i * n / k);
    return out;
}

template <typename T>
FeatureMap<T> random_image(Rng& rng, Index channels, Index res, T scale = T(1)) {
    FeatureMap<T> x(channels, res, res);
    for (Index i = 0; i < x.data.size(); ++i) x.data.data()[i] = scale * T(rng.normal());
    return x;
}

}  // namespace testutil

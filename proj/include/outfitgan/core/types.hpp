#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <cstdint>
#include <string>

#include "outfitgan/core/errors.hpp"

namespace outfitgan {

template <typename T>
using MatX = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic>;
template <typename T>
using VecX = Eigen::Matrix<T, Eigen::Dynamic, 1>;
template <typename T>
using ArrX = Eigen::Array<T, Eigen::Dynamic, 1>;

using Index = Eigen::Index;

/// Dense C x H x W map. Row c holds channel c in row-major spatial order,
/// i.e. data(c, y * width + x).
template <typename T>
struct FeatureMap {
    Index channels = 0;
    Index height = 0;
    Index width = 0;
    MatX<T> data;  // channels x (height*width)

    FeatureMap() = default;
    FeatureMap(Index c, Index h, Index w) : channels(c), height(h), width(w) {
        data.setZero(c, h * w);
    }

    Index pixels() const { return height * width; }

    T& at(Index c, Index y, Index x) { return data(c, y * width + x); }
    T at(Index c, Index y, Index x) const { return data(c, y * width + x); }

    void set_zero() { data.setZero(); }

    bool same_shape(const FeatureMap& o) const {
        return channels == o.channels && height == o.height && width == o.width;
    }

    bool all_finite() const { return data.allFinite(); }

    template <typename U>
    FeatureMap<U> cast() const {
        FeatureMap<U> out;
        out.channels = channels;
        out.height = height;
        out.width = width;
        out.data = data.template cast<U>();
        return out;
    }
};

template <typename T>
FeatureMap<T> constant_map(Index c, Index h, Index w, T value) {
    FeatureMap<T> m(c, h, w);
    m.data.setConstant(value);
    return m;
}

inline bool is_power_of_two(Index v) { return v > 0 && (v & (v - 1)) == 0; }

inline int log2_exact(Index v) {
    if (!is_power_of_two(v)) throw ConfigError("value is not a power of two: " + std::to_string(v));
    int e = 0;
    while ((Index(1) << e) < v) ++e;
    return e;
}

}  // namespace outfitgan

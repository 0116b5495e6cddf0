#pragma once

#include <Eigen/Eigenvalues>

#include <vector>

#include "outfitgan/core/types.hpp"

namespace outfitgan::metrics {

/// Gaussian summary (mean, covariance, sample count) of a feature pool.
template <typename T>
struct FeatureStats {
    VecX<T> mu;
    MatX<T> sigma;
    Index n = 0;
};

namespace detail {

template <typename T>
void check_symmetric(const MatX<T>& m, const char* what) {
    if (m.rows() != m.cols()) throw ShapeError(std::string(what) + ": covariance must be square");
    const T scale = std::max(T(1), m.cwiseAbs().maxCoeff());
    if ((m - m.transpose()).cwiseAbs().maxCoeff() > T(1e-8) * scale)
        throw ConfigError(std::string(what) + ": covariance not symmetric");
}

/// Symmetric PSD square root; negative eigenvalues clipped to zero.
template <typename T>
MatX<T> psd_sqrt(const MatX<T>& m) {
    Eigen::SelfAdjointEigenSolver<MatX<T>> es(m);
    if (es.info() != Eigen::Success) throw NumericError("psd_sqrt: eigendecomposition failed");
    VecX<T> lam = es.eigenvalues().cwiseMax(T(0)).cwiseSqrt();
    return es.eigenvectors() * lam.asDiagonal() * es.eigenvectors().transpose();
}

}  // namespace detail

/// Fréchet distance between feature Gaussians:
/// ||mu_a - mu_b||^2 + Tr(Sigma_a + Sigma_b - 2 (Sigma_a Sigma_b)^{1/2}),
/// with the cross sqrt evaluated as sqrt(Sigma_a^{1/2} Sigma_b Sigma_a^{1/2}).
template <typename T>
T fid(const FeatureStats<T>& a, const FeatureStats<T>& b) {
    if (a.mu.size() != b.mu.size()) throw ShapeError("fid: feature dimension mismatch");
    detail::check_symmetric(a.sigma, "fid");
    detail::check_symmetric(b.sigma, "fid");

    const MatX<T> ra = detail::psd_sqrt(a.sigma);
    MatX<T> inner = ra * b.sigma * ra;
    inner = ((inner + inner.transpose()) * T(0.5)).eval();  // hygiene before eigensolve
    Eigen::SelfAdjointEigenSolver<MatX<T>> es(inner);
    if (es.info() != Eigen::Success) throw NumericError("fid: eigendecomposition failed");
    const T tr_cross = es.eigenvalues().cwiseMax(T(0)).cwiseSqrt().sum();

    return (a.mu - b.mu).squaredNorm() + a.sigma.trace() + b.sigma.trace() - T(2) * tr_cross;
}

/// Pooled mean and unbiased covariance of per-image feature vectors.
template <typename T, typename Net>
FeatureStats<T> feature_stats(const std::vector<FeatureMap<T>>& images, const Net& net) {
    if (images.size() < 2) throw ConfigError("feature_stats: need at least 2 images");
    std::vector<VecX<T>> feats;
    feats.reserve(images.size());
    for (const auto& img : images) feats.push_back(net.forward(img));

    FeatureStats<T> st;
    st.n = static_cast<Index>(feats.size());
    st.mu = VecX<T>::Zero(feats.front().size());
    for (const auto& f : feats) st.mu += f;
    st.mu /= T(st.n);
    st.sigma = MatX<T>::Zero(st.mu.size(), st.mu.size());
    for (const auto& f : feats) {
        const VecX<T> d = f - st.mu;
        st.sigma.noalias() += d * d.transpose();
    }
    st.sigma /= T(st.n - 1);
    return st;
}

}  // namespace outfitgan::metrics

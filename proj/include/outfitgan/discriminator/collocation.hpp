#pragma once

#include <vector>

#include "outfitgan/core/errors.hpp"
#include "outfitgan/core/params.hpp"
#include "outfitgan/core/rng.hpp"
#include "outfitgan/core/types.hpp"
#include "outfitgan/data/outfit.hpp"
#include "outfitgan/nn/layers.hpp"

namespace outfitgan::discriminator {

struct CollocationConfig {
    Index resolution = 64;
    Index base_channels = 16;
    Index max_channels = 128;
    Index embed_dim = 128;
    Index n_categories = 4;
};

/// Maps an item image into the shared compatibility space: a compact
/// strided CNN pooled to a feature vector, then a per-category linear map
/// (the one-hot category selects which matrix multiplies the feature).
template <typename T>
class CollocationDiscriminator {
public:
    explicit CollocationDiscriminator(const CollocationConfig& cfg) : cfg_(cfg) {
        if (!is_power_of_two(cfg.resolution) || cfg.resolution < 16)
            throw ConfigError("collocation: resolution must be a power of two >= 16");
        n_down_ = log2_exact(cfg.resolution) - 2;
        conv_.resize(static_cast<std::size_t>(n_down_));
        Index in = 3;
        for (Index s = 0; s < n_down_; ++s) {
            conv_[static_cast<std::size_t>(s)].configure(in, ch(s), 3, 2, 1);
            in = ch(s);
        }
        feat_dim_ = ch(n_down_ - 1);
        maps_.assign(static_cast<std::size_t>(cfg.n_categories), MatX<T>::Zero(cfg.embed_dim, feat_dim_));
        maps_grad_.assign(static_cast<std::size_t>(cfg.n_categories), MatX<T>::Zero(cfg.embed_dim, feat_dim_));
    }

    const CollocationConfig& config() const { return cfg_; }
    Index feat_dim() const { return feat_dim_; }

    void init(Rng& rng) {
        for (auto& c : conv_) c.init(rng);
        const T std = std::sqrt(T(1) / T(feat_dim_));
        for (auto& m : maps_)
            for (Index i = 0; i < m.size(); ++i) m.data()[i] = T(rng.normal()) * std;
    }

    void collect(ParamCollector<T>& pc) {
        for (std::size_t s = 0; s < conv_.size(); ++s)
            pc.scope("conv" + std::to_string(s), [&](ParamCollector<T>& sc) { conv_[s].collect(sc); });
        for (std::size_t k = 0; k < maps_.size(); ++k)
            pc.add("map" + std::to_string(k), maps_[k], maps_grad_[k]);
    }

    struct Trace {
        std::vector<typename nn::Conv2d<T>::Trace> tr;
        std::vector<FeatureMap<T>> pre;
        VecX<T> feat;  // pooled backbone feature F
        int category = 0;
    };

    /// c = T[category] * F(image).
    VecX<T> embed_item(const FeatureMap<T>& x, int category, Trace& tr) const {
        if (category < 0 || category >= cfg_.n_categories) throw ConfigError("collocation: unknown category");
        if (x.height != cfg_.resolution || x.channels != 3)
            throw ShapeError("collocation: input resolution/channel mismatch");
        tr.category = category;
        tr.tr.resize(static_cast<std::size_t>(n_down_));
        tr.pre.assign(static_cast<std::size_t>(n_down_), FeatureMap<T>(0, 0, 0));
        FeatureMap<T> h = x;
        for (Index s = 0; s < n_down_; ++s) {
            const auto si = static_cast<std::size_t>(s);
            tr.pre[si] = conv_[si].forward(h, tr.tr[si]);
            h = tr.pre[si];
            h.data = nn::leaky_relu(h.data, T(0.2));
        }
        tr.feat = nn::global_avg_pool(h);
        return maps_[static_cast<std::size_t>(category)] * tr.feat;
    }

    /// Push an embedding gradient back; returns the input-image gradient when
    /// requested (empty map otherwise).
    FeatureMap<T> backward(const Trace& tr, const VecX<T>& gc, bool accumulate = true, bool want_input_grad = false) {
        const auto k = static_cast<std::size_t>(tr.category);
        if (accumulate) maps_grad_[k].noalias() += gc * tr.feat.transpose();
        VecX<T> gfeat = maps_[k].transpose() * gc;
        const auto& top = tr.pre.back();
        FeatureMap<T> g = nn::global_avg_pool_backward(gfeat, top.channels, top.height, top.width);
        for (Index s = n_down_ - 1; s >= 0; --s) {
            const auto si = static_cast<std::size_t>(s);
            g.data = nn::leaky_relu_backward(tr.pre[si].data, g.data, T(0.2));
            if (s == 0 && !want_input_grad && !accumulate) break;
            g = accumulate ? conv_[si].backward(tr.tr[si], g) : conv_[si].backward_input(tr.tr[si], g);
        }
        return g;
    }

private:
    Index ch(Index stage) const { return std::min(cfg_.max_channels, cfg_.base_channels << stage); }

    CollocationConfig cfg_;
    Index n_down_ = 0;
    Index feat_dim_ = 0;
    std::vector<nn::Conv2d<T>> conv_;
    std::vector<MatX<T>> maps_, maps_grad_;
};

// -- embedding-space arithmetic ------------------------------------------

/// Exact arithmetic mean of the item embeddings.
template <typename T>
VecX<T> outfit_embedding(const std::vector<VecX<T>>& cs) {
    if (cs.empty()) throw ConfigError("outfit_embedding: empty item list");
    VecX<T> mean = VecX<T>::Zero(cs.front().size());
    for (const auto& c : cs) mean += c;
    return mean / T(cs.size());
}

template <typename T>
using ItemEmbeds = std::vector<VecX<T>>;

namespace detail {

/// Sum of squared distances to the outfit mean; adds sign*grad into gout.
template <typename T>
T spread_term(const ItemEmbeds<T>& items, T sign, ItemEmbeds<T>* gout) {
    const VecX<T> mean = outfit_embedding(items);
    T val = T(0);
    for (std::size_t i = 0; i < items.size(); ++i) {
        const VecX<T> d = items[i] - mean;
        val += d.squaredNorm();
        if (gout) (*gout)[i] += sign * T(2) * d;
    }
    return val;
}

/// Hinged spread: sum of max(0, m - d_i^2); inactive items contribute no grad.
template <typename T>
T spread_term_hinged(const ItemEmbeds<T>& items, T margin, ItemEmbeds<T>* gout) {
    const VecX<T> mean = outfit_embedding(items);
    const auto n = static_cast<T>(items.size());
    T val = T(0);
    for (std::size_t i = 0; i < items.size(); ++i) {
        const VecX<T> d = items[i] - mean;
        const T d2 = d.squaredNorm();
        if (d2 >= margin) continue;
        val += margin - d2;
        if (gout) {
            for (std::size_t j = 0; j < items.size(); ++j) (*gout)[j] += (T(2) / n) * d;
            (*gout)[i] -= T(2) * d;
        }
    }
    return val;
}

template <typename T>
void init_grads(const std::vector<ItemEmbeds<T>>& like, std::vector<ItemEmbeds<T>>* g) {
    if (!g) return;
    g->resize(like.size());
    for (std::size_t b = 0; b < like.size(); ++b) {
        (*g)[b].assign(like[b].size(), VecX<T>());
        for (std::size_t i = 0; i < like[b].size(); ++i) (*g)[b][i] = VecX<T>::Zero(like[b][i].size());
    }
}

template <typename T>
void scale_grads(std::vector<ItemEmbeds<T>>* g, T factor) {
    if (!g) return;
    for (auto& ob : *g)
        for (auto& v : ob) v *= factor;
}

}  // namespace detail

/// Contrastive objective over raw embeddings: compatible outfits pull their
/// items toward the outfit mean; incompatible outfits and the two positive
/// outfit means push apart (entering with negative sign). Batch-averaged.
/// margin > 0 swaps the unbounded negative terms for max(0, margin - d^2).
template <typename T>
T collocation_dis_loss(const std::vector<ItemEmbeds<T>>& pos1, const std::vector<ItemEmbeds<T>>& pos2,
                       const std::vector<ItemEmbeds<T>>& neg, T margin = T(0),
                       std::vector<ItemEmbeds<T>>* gpos1 = nullptr, std::vector<ItemEmbeds<T>>* gpos2 = nullptr,
                       std::vector<ItemEmbeds<T>>* gneg = nullptr) {
    if (pos1.empty() || pos1.size() != pos2.size() || pos1.size() != neg.size())
        throw ShapeError("collocation_dis_loss: batch size mismatch");
    detail::init_grads(pos1, gpos1);
    detail::init_grads(pos2, gpos2);
    detail::init_grads(neg, gneg);
    const T wb = T(1) / T(pos1.size());
    T loss = T(0);
    for (std::size_t b = 0; b < pos1.size(); ++b) {
        loss += detail::spread_term(pos1[b], T(1), gpos1 ? &(*gpos1)[b] : nullptr);
        if (margin > T(0))
            loss += detail::spread_term_hinged(neg[b], margin, gneg ? &(*gneg)[b] : nullptr);
        else
            loss -= detail::spread_term(neg[b], T(-1), gneg ? &(*gneg)[b] : nullptr);
        const VecX<T> d = outfit_embedding(pos1[b]) - outfit_embedding(pos2[b]);
        const T d2 = d.squaredNorm();
        const bool active = margin <= T(0) || d2 < margin;
        loss += margin > T(0) ? (active ? margin - d2 : T(0)) : -d2;
        if (active) {
            if (gpos1)
                for (auto& g : (*gpos1)[b]) g -= (T(2) / T(pos1[b].size())) * d;
            if (gpos2)
                for (auto& g : (*gpos2)[b]) g += (T(2) / T(pos2[b].size())) * d;
        }
    }
    loss *= wb;
    detail::scale_grads(gpos1, wb);
    detail::scale_grads(gpos2, wb);
    detail::scale_grads(gneg, wb);
    return loss;
}

/// Compatibility pull on a composited outfit against a shuffled negative;
/// the diversity term is absent. Batch-averaged.
template <typename T>
T collocation_g_loss(const std::vector<ItemEmbeds<T>>& mixed, const std::vector<ItemEmbeds<T>>& neg,
                     std::vector<ItemEmbeds<T>>* gmixed = nullptr, std::vector<ItemEmbeds<T>>* gneg = nullptr) {
    if (mixed.empty() || mixed.size() != neg.size()) throw ShapeError("collocation_g_loss: batch size mismatch");
    detail::init_grads(mixed, gmixed);
    detail::init_grads(neg, gneg);
    const T wb = T(1) / T(mixed.size());
    T loss = T(0);
    for (std::size_t b = 0; b < mixed.size(); ++b) {
        loss += detail::spread_term(mixed[b], T(1), gmixed ? &(*gmixed)[b] : nullptr);
        loss -= detail::spread_term(neg[b], T(-1), gneg ? &(*gneg)[b] : nullptr);
    }
    loss *= wb;
    detail::scale_grads(gmixed, wb);
    detail::scale_grads(gneg, wb);
    return loss;
}

/// Build an incompatible outfit by drawing each category slot from a random
/// batch member, rejecting draws that take every slot from one record.
inline data::OutfitRecord sample_negative_outfit(const std::vector<data::OutfitRecord>& batch, Rng& rng) {
    if (batch.size() < 2) throw SamplingError("negative sampling needs a batch of at least two outfits");
    const Index n = batch.front().size();
    std::vector<std::size_t> src(static_cast<std::size_t>(n));
    bool all_same = true;
    do {
        all_same = true;
        for (Index k = 0; k < n; ++k) {
            src[static_cast<std::size_t>(k)] = static_cast<std::size_t>(rng.uniform_index(batch.size()));
            if (src[static_cast<std::size_t>(k)] != src[0]) all_same = false;
        }
    } while (all_same);

    data::OutfitRecord out;
    for (Index k = 0; k < n; ++k) {
        const auto& donor = batch[src[static_cast<std::size_t>(k)]];
        // take the donor's item of category k, wherever it sits
        for (Index j = 0; j < donor.size(); ++j)
            if (donor.items[static_cast<std::size_t>(j)].category == static_cast<int>(k)) {
                out.items.push_back(donor.items[static_cast<std::size_t>(j)]);
                out.silhouettes.push_back(donor.silhouettes[static_cast<std::size_t>(j)]);
                break;
            }
    }
    if (out.size() != n) throw SamplingError("negative sampling: donor missing a category");
    return out;
}

}  // namespace outfitgan::discriminator

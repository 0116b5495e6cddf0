#pragma once

#include <array>
#include <vector>

#include "outfitgan/core/errors.hpp"
#include "outfitgan/core/params.hpp"
#include "outfitgan/core/rng.hpp"
#include "outfitgan/core/types.hpp"
#include "outfitgan/data/outfit.hpp"
#include "outfitgan/nn/layers.hpp"
#include "outfitgan/nn/lstm.hpp"

namespace outfitgan::extractor {

/// Number of per-layer style vectors a resolution-R generator consumes.
inline Index style_layer_count(Index resolution) { return 2 * log2_exact(resolution) - 2; }

/// Split K style layers across the three scales: first = last = ceil(5K/14),
/// middle = remainder. Yields (5,4,5) at K=14, (4,2,4) at K=10, (3,0,3) at K=6.
inline std::array<Index, 3> style_head_groups(Index k) {
    const Index first = (5 * k + 13) / 14;
    const Index middle = k - 2 * first;
    if (middle < 0) throw ConfigError("style head groups do not sum to layer count");
    return {first, middle, first};
}

struct ExtractorConfig {
    Index resolution = 64;
    Index n_categories = 4;
    Index d_v = 256;        // per-scale visual embedding width
    Index d_cat = 50;       // category embedding width per category slot
    Index hidden = 256;     // LSTM hidden size per direction
    Index mlp_layers = 4;
    Index mlp_width = 512;
    Index style_dim = 512;
    Index n_scales = 3;     // experimental stub; only 3 is implemented
    Index backbone_channels = 32;
};

/// Pyramid style extractor: a three-stage CNN whose per-scale side pipelines
/// embed each item, a learnable category table, one bidirectional LSTM per
/// scale running across the item sequence, and per-scale MLPs emitting the
/// item's K x style_dim style codes.
template <typename T>
class StyleExtractor {
public:
    explicit StyleExtractor(const ExtractorConfig& cfg) : cfg_(cfg) {
        if (cfg.n_scales != 3) throw ConfigError("extractor: only n_scales=3 is supported");
        if (!is_power_of_two(cfg.resolution) || cfg.resolution < 16)
            throw ConfigError("extractor: resolution must be a power of two >= 16");
        k_ = style_layer_count(cfg.resolution);
        groups_ = style_head_groups(k_);

        const Index bc = cfg.backbone_channels;
        const std::array<Index, 3> widths = {bc, 2 * bc, 4 * bc};
        Index in_ch = 3;
        for (int j = 0; j < 3; ++j) {
            stage_main_[j].configure(in_ch, widths[j], 3, 2, 1);
            stage_side_[j].configure(widths[j], widths[j], 3, 2, 1);
            lin_[j].configure(widths[j], cfg.d_v);
            in_ch = widths[j];
        }
        category_table_.setZero(cfg.n_categories, cfg.d_cat * cfg.n_categories);
        category_grad_.setZero(cfg.n_categories, cfg.d_cat * cfg.n_categories);

        const Index lstm_in = cfg.d_v + cfg.d_cat * cfg.n_categories;
        for (int j = 0; j < 3; ++j) lstm_[j].configure(lstm_in, cfg.hidden);

        for (int j = 0; j < 3; ++j) {
            if (groups_[static_cast<std::size_t>(j)] == 0) continue;  // no layers assigned to this scale
            auto& mlp = mlp_[j];
            mlp.trunk.resize(static_cast<std::size_t>(cfg.mlp_layers));
            Index in = 2 * cfg.hidden;
            for (auto& lay : mlp.trunk) {
                lay.configure(in, cfg.mlp_width);
                in = cfg.mlp_width;
            }
            mlp.head.configure(cfg.mlp_width, groups_[static_cast<std::size_t>(j)] * cfg.style_dim);
        }
    }

    const ExtractorConfig& config() const { return cfg_; }
    Index style_layers() const { return k_; }
    const std::array<Index, 3>& head_groups() const { return groups_; }

    void init(Rng& rng) {
        for (int j = 0; j < 3; ++j) {
            stage_main_[j].init(rng);
            stage_side_[j].init(rng);
            lin_[j].init(rng);
            lstm_[j].init(rng);
            if (groups_[static_cast<std::size_t>(j)] == 0) continue;
            for (auto& lay : mlp_[j].trunk) lay.init(rng);
            mlp_[j].head.init(rng);
        }
        for (Index i = 0; i < category_table_.size(); ++i)
            category_table_.data()[i] = T(rng.normal()) * T(0.5);
    }

    void collect(ParamCollector<T>& pc) {
        for (int j = 0; j < 3; ++j) {
            const std::string sj = std::to_string(j + 1);
            pc.scope("stage" + sj + ".main", [&](ParamCollector<T>& s) { stage_main_[j].collect(s); });
            pc.scope("stage" + sj + ".side", [&](ParamCollector<T>& s) { stage_side_[j].collect(s); });
            pc.scope("stage" + sj + ".lin", [&](ParamCollector<T>& s) { lin_[j].collect(s); });
            pc.scope("lstm" + sj, [&](ParamCollector<T>& s) { lstm_[j].collect(s); });
            if (groups_[static_cast<std::size_t>(j)] == 0) continue;
            pc.scope("mlp" + sj, [&](ParamCollector<T>& s) {
                for (std::size_t l = 0; l < mlp_[j].trunk.size(); ++l)
                    s.scope("trunk" + std::to_string(l), [&](ParamCollector<T>& s2) { mlp_[j].trunk[l].collect(s2); });
                s.scope("head", [&](ParamCollector<T>& s2) { mlp_[j].head.collect(s2); });
            });
        }
        pc.add("category_table", category_table_, category_grad_);
    }

    // -- traces ---------------------------------------------------------

    struct ItemTrace {
        bool given = false;
        std::array<typename nn::Conv2d<T>::Trace, 3> main_tr, side_tr;
        std::array<FeatureMap<T>, 3> main_pre{FeatureMap<T>(0, 0, 0), FeatureMap<T>(0, 0, 0), FeatureMap<T>(0, 0, 0)};
        std::array<FeatureMap<T>, 3> side_pre{FeatureMap<T>(0, 0, 0), FeatureMap<T>(0, 0, 0), FeatureMap<T>(0, 0, 0)};
        std::array<VecX<T>, 3> gap;  // linear-layer inputs
    };

    struct MlpTrace {
        std::vector<VecX<T>> in;   // input to each trunk layer
        std::vector<VecX<T>> pre;  // trunk pre-activations
        VecX<T> head_in;
    };

    struct Trace {
        std::vector<ItemTrace> items;
        std::vector<int> categories;
        std::array<typename nn::BiLstm<T>::Trace, 3> lstm;
        std::array<std::vector<MlpTrace>, 3> mlp;  // [scale][item]
    };

    // -- forward --------------------------------------------------------

    /// Per-scale visual embeddings V[i][j]. Non-given items are zero-masked:
    /// their V is forced to the zero vector (the backbone sees zero images,
    /// whose forced-zero output makes running it a no-op).
    std::vector<std::array<VecX<T>, 3>> extract_pyramid(const std::vector<FeatureMap<T>>& items,
                                                        const data::GivenMask& given, Trace& tr) const {
        const auto n = static_cast<Index>(items.size());
        tr.items.assign(static_cast<std::size_t>(n), ItemTrace{});
        std::vector<std::array<VecX<T>, 3>> v(static_cast<std::size_t>(n));
        for (Index i = 0; i < n; ++i) {
            auto& it = tr.items[static_cast<std::size_t>(i)];
            it.given = given.is_given(i);
            if (!it.given) {
                for (int j = 0; j < 3; ++j) v[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)] = VecX<T>::Zero(cfg_.d_v);
                continue;
            }
            const FeatureMap<T>& x = items[static_cast<std::size_t>(i)];
            if (x.height != cfg_.resolution || x.width != cfg_.resolution || x.channels != 3)
                throw ConfigError("extractor: item resolution does not match configured backbone");
            FeatureMap<T> f = x;
            for (int j = 0; j < 3; ++j) {
                it.main_pre[j] = stage_main_[j].forward(f, it.main_tr[j]);
                f = it.main_pre[j];
                f.data = nn::leaky_relu(f.data, T(0.2));
                it.side_pre[j] = stage_side_[j].forward(f, it.side_tr[j]);
                FeatureMap<T> s = it.side_pre[j];
                s.data = nn::leaky_relu(s.data, T(0.2));
                it.gap[j] = nn::global_avg_pool(s);
                v[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)] = lin_[j].forward(it.gap[j]);
            }
        }
        return v;
    }

    /// Bidirectional pass over the item sequence at one scale.
    std::vector<VecX<T>> run_bilstm(const std::vector<VecX<T>>& items_at_scale, Index scale,
                                    typename nn::BiLstm<T>::Trace& tr) const {
        return lstm_[scale].forward(items_at_scale, tr);
    }

    /// Assemble the K x style_dim code matrix per item from the three
    /// per-scale sequence outputs. Scale j's MLP fills head group j.
    std::vector<MatX<T>> map_styles(const std::vector<VecX<T>>& m1, const std::vector<VecX<T>>& m2,
                                    const std::vector<VecX<T>>& m3, Trace& tr) const {
        const std::array<const std::vector<VecX<T>>*, 3> m = {&m1, &m2, &m3};
        const auto n = static_cast<Index>(m1.size());
        std::vector<MatX<T>> s(static_cast<std::size_t>(n));
        for (auto& si : s) si.setZero(k_, cfg_.style_dim);

        Index row0 = 0;
        for (int j = 0; j < 3; ++j) {
            const Index g = groups_[static_cast<std::size_t>(j)];
            tr.mlp[j].assign(static_cast<std::size_t>(n), MlpTrace{});
            if (g == 0) continue;
            for (Index i = 0; i < n; ++i) {
                auto& mt = tr.mlp[j][static_cast<std::size_t>(i)];
                VecX<T> h = (*m[static_cast<std::size_t>(j)])[static_cast<std::size_t>(i)];
                for (const auto& lay : mlp_[j].trunk) {
                    mt.in.push_back(h);
                    VecX<T> pre = lay.forward(h);
                    mt.pre.push_back(pre);
                    h = pre.array().max(pre.array() * T(0.2)).matrix();
                }
                mt.head_in = h;
                VecX<T> out = mlp_[j].head.forward(h);
                for (Index r = 0; r < g; ++r)
                    s[static_cast<std::size_t>(i)].row(row0 + r) = out.segment(r * cfg_.style_dim, cfg_.style_dim).transpose();
            }
            row0 += g;
        }
        return s;
    }

    /// Full pipeline: pyramid features, category concatenation, per-scale
    /// sequence modeling, style assembly. Returns one K x style_dim matrix
    /// per item (including given ones).
    std::vector<MatX<T>> forward(const std::vector<FeatureMap<T>>& items, const std::vector<int>& categories,
                                 const data::GivenMask& given, Trace& tr) const {
        const auto n = static_cast<Index>(items.size());
        if (static_cast<Index>(categories.size()) != n || given.size() != n)
            throw ShapeError("extractor: item/category/given length mismatch");
        tr.categories = categories;

        auto v = extract_pyramid(items, given, tr);

        std::array<std::vector<VecX<T>>, 3> seq;
        for (int j = 0; j < 3; ++j) {
            seq[j].resize(static_cast<std::size_t>(n));
            for (Index i = 0; i < n; ++i) {
                const int cat = categories[static_cast<std::size_t>(i)];
                if (cat < 0 || cat >= cfg_.n_categories) throw ConfigError("extractor: category index out of range");
                VecX<T>& x = seq[j][static_cast<std::size_t>(i)];
                x.resize(cfg_.d_v + category_table_.cols());
                x << v[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)], category_table_.row(cat).transpose();
            }
        }

        std::array<std::vector<VecX<T>>, 3> m;
        for (int j = 0; j < 3; ++j) m[j] = run_bilstm(seq[j], j, tr.lstm[j]);
        return map_styles(m[0], m[1], m[2], tr);
    }

    /// Adapter over an outfit record (casts pixel data to T).
    std::vector<MatX<T>> forward(const data::OutfitRecord& rec, const data::GivenMask& given, Trace& tr) const {
        std::vector<FeatureMap<T>> items;
        std::vector<int> cats;
        for (const auto& it : rec.items) {
            items.push_back(it.pixels.template cast<T>());
            cats.push_back(it.category);
        }
        return forward(items, cats, given, tr);
    }

    // -- backward -------------------------------------------------------

    /// Accumulate parameter gradients from per-item style-code gradients.
    void backward(const Trace& tr, const std::vector<MatX<T>>& gs) {
        const auto n = static_cast<Index>(gs.size());
        const Index lstm_in = cfg_.d_v + category_table_.cols();

        // MLP heads and trunks, per scale, then BPTT, then the backbone.
        std::array<std::vector<VecX<T>>, 3> gm;
        Index row0 = 0;
        for (int j = 0; j < 3; ++j) {
            const Index g = groups_[static_cast<std::size_t>(j)];
            gm[j].assign(static_cast<std::size_t>(n), VecX<T>::Zero(2 * cfg_.hidden));
            if (g == 0) continue;
            for (Index i = 0; i < n; ++i) {
                const auto& mt = tr.mlp[j][static_cast<std::size_t>(i)];
                VecX<T> ghead(g * cfg_.style_dim);
                for (Index r = 0; r < g; ++r)
                    ghead.segment(r * cfg_.style_dim, cfg_.style_dim) =
                        gs[static_cast<std::size_t>(i)].row(row0 + r).transpose();
                VecX<T> gh = mlp_[j].head.backward(mt.head_in, ghead);
                for (Index l = static_cast<Index>(mlp_[j].trunk.size()) - 1; l >= 0; --l) {
                    const auto& pre = mt.pre[static_cast<std::size_t>(l)];
                    VecX<T> gpre = (pre.array() > T(0)).select(gh, gh * T(0.2));
                    gh = mlp_[j].trunk[static_cast<std::size_t>(l)].backward(mt.in[static_cast<std::size_t>(l)], gpre);
                }
                gm[j][static_cast<std::size_t>(i)] = gh;
            }
            row0 += g;
        }

        for (int j = 0; j < 3; ++j) {
            std::vector<VecX<T>> gseq = lstm_[j].backward(tr.lstm[j], gm[j]);
            for (Index i = 0; i < n; ++i) {
                const VecX<T>& gx = gseq[static_cast<std::size_t>(i)];
                if (static_cast<Index>(gx.size()) != lstm_in) throw ShapeError("extractor backward: lstm input grad size");
                category_grad_.row(tr.categories[static_cast<std::size_t>(i)]) += gx.tail(category_table_.cols()).transpose();
                const auto& it = tr.items[static_cast<std::size_t>(i)];
                if (!it.given) continue;  // V was forced to zero: no backbone gradient
                backward_backbone_scale(it, j, gx.head(cfg_.d_v));
            }
        }
    }

private:
    struct Mlp {
        std::vector<nn::Linear<T>> trunk;
        nn::Linear<T> head;
    };

    /// Push dV for one (item, scale) through side pipeline and main chain.
    void backward_backbone_scale(const ItemTrace& it, int scale, const VecX<T>& gv) {
        VecX<T> ggap = lin_[scale].backward(it.gap[scale], gv);
        FeatureMap<T> gside = nn::global_avg_pool_backward(ggap, it.side_pre[scale].channels,
                                                           it.side_pre[scale].height, it.side_pre[scale].width);
        gside.data = nn::leaky_relu_backward(it.side_pre[scale].data, gside.data, T(0.2));
        FeatureMap<T> gf = stage_side_[scale].backward(it.side_tr[scale], gside);
        // main chain back from this stage to the input
        for (int j = scale; j >= 0; --j) {
            gf.data = nn::leaky_relu_backward(it.main_pre[j].data, gf.data, T(0.2));
            gf = stage_main_[j].backward(it.main_tr[j], gf);
        }
    }

    ExtractorConfig cfg_;
    Index k_ = 0;
    std::array<Index, 3> groups_{};
    std::array<nn::Conv2d<T>, 3> stage_main_, stage_side_;
    std::array<nn::Linear<T>, 3> lin_;
    MatX<T> category_table_, category_grad_;
    std::array<nn::BiLstm<T>, 3> lstm_;
    std::array<Mlp, 3> mlp_;
};

}  // namespace outfitgan::extractor

#pragma once

#include <vector>

#include "outfitgan/core/params.hpp"
#include "outfitgan/core/rng.hpp"
#include "outfitgan/core/types.hpp"

namespace outfitgan::nn {

/// Single LSTM cell. Gates are packed (input, forget, cell, output) into one
/// 4H x (D+H) weight acting on [x ; h_prev].
template <typename T>
struct LstmCell {
    Index input_dim = 0, hidden = 0;
    MatX<T> weight;
    VecX<T> bias;
    MatX<T> weight_grad;
    VecX<T> bias_grad;

    struct StepTrace {
        VecX<T> xh;                    // [x ; h_prev]
        VecX<T> i, f, g, o;            // post-nonlinearity gates
        VecX<T> c_prev, tanh_c;
    };

    void configure(Index in, Index h) {
        input_dim = in;
        hidden = h;
        weight.setZero(4 * h, in + h);
        bias.setZero(4 * h);
        weight_grad.setZero(4 * h, in + h);
        bias_grad.setZero(4 * h);
    }

    void init(Rng& rng) {
        const T bound = T(1) / std::sqrt(T(hidden));
        for (Index i = 0; i < weight.size(); ++i) weight.data()[i] = T(rng.uniform(-bound, bound));
        for (Index i = 0; i < bias.size(); ++i) bias.data()[i] = T(rng.uniform(-bound, bound));
    }

    void collect(ParamCollector<T>& pc) {
        pc.add("weight", weight, weight_grad);
        pc.add("bias", bias, bias_grad);
    }

    /// One step; updates h and c in place and records the trace.
    void step(const VecX<T>& x, VecX<T>& h, VecX<T>& c, StepTrace& tr) const {
        tr.xh.resize(input_dim + hidden);
        tr.xh << x, h;
        VecX<T> z = weight * tr.xh + bias;
        const auto seg = [&](Index k) { return z.segment(k * hidden, hidden); };
        tr.i = seg(0).unaryExpr([](T v) { return sigmoid_scalar(v); });
        tr.f = seg(1).unaryExpr([](T v) { return sigmoid_scalar(v); });
        tr.g = seg(2).array().tanh().matrix();
        tr.o = seg(3).unaryExpr([](T v) { return sigmoid_scalar(v); });
        tr.c_prev = c;
        c = (tr.f.array() * c.array() + tr.i.array() * tr.g.array()).matrix();
        tr.tanh_c = c.array().tanh().matrix();
        h = (tr.o.array() * tr.tanh_c.array()).matrix();
    }

    /// Reverse one step of BPTT. gh/gc are gradients w.r.t. this step's h and c
    /// (accumulated); on return they hold gradients w.r.t. the previous step's
    /// h and c. Returns the gradient w.r.t. this step's input x.
    VecX<T> step_backward(const StepTrace& tr, VecX<T>& gh, VecX<T>& gc) {
        VecX<T> go = gh.array() * tr.tanh_c.array();
        gc.array() += gh.array() * tr.o.array() * (T(1) - tr.tanh_c.array().square());
        VecX<T> gi = gc.array() * tr.g.array();
        VecX<T> gg = gc.array() * tr.i.array();
        VecX<T> gf = gc.array() * tr.c_prev.array();

        VecX<T> gz(4 * hidden);
        gz.segment(0, hidden) = gi.array() * tr.i.array() * (T(1) - tr.i.array());
        gz.segment(hidden, hidden) = gf.array() * tr.f.array() * (T(1) - tr.f.array());
        gz.segment(2 * hidden, hidden) = gg.array() * (T(1) - tr.g.array().square());
        gz.segment(3 * hidden, hidden) = go.array() * tr.o.array() * (T(1) - tr.o.array());

        weight_grad.noalias() += gz * tr.xh.transpose();
        bias_grad.noalias() += gz;

        VecX<T> gxh = weight.transpose() * gz;
        gc = (gc.array() * tr.f.array()).matrix();
        gh = gxh.tail(hidden);
        return gxh.head(input_dim);
    }
};

/// Bidirectional LSTM over a short item sequence. Output per position is
/// [backward hidden ; forward hidden].
template <typename T>
struct BiLstm {
    LstmCell<T> fwd, bwd;

    struct Trace {
        std::vector<typename LstmCell<T>::StepTrace> fwd_steps, bwd_steps;
    };

    void configure(Index in, Index h) {
        fwd.configure(in, h);
        bwd.configure(in, h);
    }

    void init(Rng& rng) {
        fwd.init(rng);
        bwd.init(rng);
    }

    void collect(ParamCollector<T>& pc) {
        pc.scope("fwd", [&](ParamCollector<T>& s) { fwd.collect(s); });
        pc.scope("bwd", [&](ParamCollector<T>& s) { bwd.collect(s); });
    }

    Index out_dim() const { return 2 * fwd.hidden; }

    std::vector<VecX<T>> forward(const std::vector<VecX<T>>& xs, Trace& tr) const {
        const Index n = static_cast<Index>(xs.size());
        const Index h = fwd.hidden;
        tr.fwd_steps.resize(n);
        tr.bwd_steps.resize(n);

        std::vector<VecX<T>> hf(n), hb(n);
        VecX<T> hstate = VecX<T>::Zero(h), cstate = VecX<T>::Zero(h);
        for (Index t = 0; t < n; ++t) {
            fwd.step(xs[t], hstate, cstate, tr.fwd_steps[t]);
            hf[t] = hstate;
        }
        hstate.setZero();
        cstate.setZero();
        for (Index t = n - 1; t >= 0; --t) {
            bwd.step(xs[t], hstate, cstate, tr.bwd_steps[t]);
            hb[t] = hstate;
        }

        std::vector<VecX<T>> out(n);
        for (Index t = 0; t < n; ++t) {
            out[t].resize(2 * h);
            out[t] << hb[t], hf[t];
        }
        return out;
    }

    /// BPTT through both directions. gm[t] is the gradient w.r.t. the t-th
    /// output; returns the gradient w.r.t. each input.
    std::vector<VecX<T>> backward(const Trace& tr, const std::vector<VecX<T>>& gm) {
        const Index n = static_cast<Index>(gm.size());
        const Index h = fwd.hidden;
        std::vector<VecX<T>> gx(n);
        for (Index t = 0; t < n; ++t) gx[t] = VecX<T>::Zero(fwd.input_dim);

        VecX<T> gh = VecX<T>::Zero(h), gc = VecX<T>::Zero(h);
        for (Index t = n - 1; t >= 0; --t) {
            gh += gm[t].tail(h);
            gx[t] += fwd.step_backward(tr.fwd_steps[t], gh, gc);
        }
        gh.setZero();
        gc.setZero();
        for (Index t = 0; t < n; ++t) {
            gh += gm[t].head(h);
            gx[t] += bwd.step_backward(tr.bwd_steps[t], gh, gc);
        }
        return gx;
    }
};

}  // namespace outfitgan::nn

#pragma once

#include <cmath>
#include <iomanip>
#include <istream>
#include <limits>
#include <ostream>
#include <vector>

#include "outfitgan/core/errors.hpp"
#include "outfitgan/core/params.hpp"

namespace outfitgan::nn {

/// Bias-corrected Adam over a flat parameter list.
template <typename T>
class Adam {
public:
    T lr = T(0.002);
    T beta1 = T(0);
    T beta2 = T(0.99);
    T eps = T(1e-8);

    Adam() = default;
    Adam(T lr_, T b1, T b2) : lr(lr_), beta1(b1), beta2(b2) {}

    void attach(const ParamList<T>& params) {
        m_.clear();
        v_.clear();
        for (const auto& p : params) {
            m_.push_back(VecX<T>::Zero(p.size));
            v_.push_back(VecX<T>::Zero(p.size));
        }
        step_count_ = 0;
    }

    long step_count() const { return step_count_; }

    void step(const ParamList<T>& params) {
        if (m_.size() != params.size()) throw ConfigError("Adam: optimizer not attached to this parameter list");
        ++step_count_;
        const T bc1 = T(1) - std::pow(beta1, T(step_count_));
        const T bc2 = T(1) - std::pow(beta2, T(step_count_));
        for (std::size_t i = 0; i < params.size(); ++i) {
            const auto& p = params[i];
            Eigen::Map<VecX<T>> theta(p.value, p.size);
            Eigen::Map<const VecX<T>> g(p.grad, p.size);
            m_[i] = beta1 * m_[i] + (T(1) - beta1) * g;
            v_[i] = (beta2 * v_[i].array() + (T(1) - beta2) * g.array().square()).matrix();
            theta.array() -= lr * (m_[i].array() / bc1) / ((v_[i].array() / bc2).sqrt() + eps);
        }
    }

    void save(std::ostream& os, const ParamList<T>& params) const {
        os << "adam 1\n" << step_count_ << "\n";
        os << std::setprecision(std::numeric_limits<T>::max_digits10);
        os << lr << " " << beta1 << " " << beta2 << " " << eps << "\n";
        os << params.size() << "\n";
        for (std::size_t i = 0; i < params.size(); ++i) {
            os << params[i].name << " " << params[i].size << "\n";
            for (Index j = 0; j < params[i].size; ++j) os << m_[i][j] << (j + 1 == params[i].size ? "\n" : " ");
            for (Index j = 0; j < params[i].size; ++j) os << v_[i][j] << (j + 1 == params[i].size ? "\n" : " ");
        }
    }

    void load(std::istream& is, const ParamList<T>& params) {
        std::string magic;
        int version = 0;
        is >> magic >> version;
        if (magic != "adam" || version != 1) throw IoError("optimizer state: bad header");
        is >> step_count_;
        is >> lr >> beta1 >> beta2 >> eps;
        std::size_t n = 0;
        is >> n;
        if (n != params.size()) throw IoError("optimizer state: parameter count mismatch");
        m_.assign(n, {});
        v_.assign(n, {});
        for (std::size_t i = 0; i < n; ++i) {
            std::string name;
            Index size = 0;
            is >> name >> size;
            if (name != params[i].name || size != params[i].size)
                throw IoError("optimizer state: parameter layout mismatch at " + name);
            m_[i].resize(size);
            v_[i].resize(size);
            for (Index j = 0; j < size; ++j) is >> m_[i][j];
            for (Index j = 0; j < size; ++j) is >> v_[i][j];
        }
        if (!is) throw IoError("optimizer state: truncated stream");
    }

private:
    std::vector<VecX<T>> m_, v_;
    long step_count_ = 0;
};

}  // namespace outfitgan::nn

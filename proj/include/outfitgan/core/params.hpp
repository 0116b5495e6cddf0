#pragma once

#include <cstdint>
#include <cstring>
#include <string>
#include <vector>

#include "outfitgan/core/types.hpp"

namespace outfitgan {

/// Flat view of one learnable parameter block and its gradient buffer.
/// Pointers stay valid as long as the owning module is alive and its
/// matrices are not resized.
template <typename T>
struct ParamRef {
    std::string name;
    T* value = nullptr;
    T* grad = nullptr;
    Index size = 0;
};

template <typename T>
using ParamList = std::vector<ParamRef<T>>;

/// Collects ParamRefs from nested modules under dotted name prefixes.
template <typename T>
class ParamCollector {
  public:
    explicit ParamCollector(ParamList<T>& out) : out_(out) {}

    template <typename Derived, typename DerivedG>
    void add(const std::string& name, Eigen::MatrixBase<Derived>& value, Eigen::MatrixBase<DerivedG>& grad) {
        out_.push_back(ParamRef<T>{prefix_ + name, value.derived().data(), grad.derived().data(),
                                   value.derived().size()});
    }

    /// Run `fn` with `name.` appended to the current prefix.
    template <typename Fn>
    void scope(const std::string& name, Fn&& fn) {
        const std::string saved = prefix_;
        prefix_ += name + ".";
        fn(*this);
        prefix_ = saved;
    }

  private:
    ParamList<T>& out_;
    std::string prefix_;
};

template <typename T, typename Module>
ParamList<T> collect_params(Module& m) {
    ParamList<T> out;
    ParamCollector<T> pc(out);
    m.collect(pc);
    return out;
}

template <typename T>
Index total_param_count(const ParamList<T>& params) {
    Index n = 0;
    for (const auto& p : params) n += p.size;
    return n;
}

template <typename T>
void zero_grads(const ParamList<T>& params) {
    for (const auto& p : params) std::memset(p.grad, 0, sizeof(T) * static_cast<size_t>(p.size));
}

/// FNV-1a over raw bytes; used for parameter/state fingerprints.
inline std::uint64_t fnv1a(const void* data, std::size_t n, std::uint64_t h = 0xcbf29ce484222325ULL) {
    const auto* p = static_cast<const unsigned char*>(data);
    for (std::size_t i = 0; i < n; ++i) {
        h ^= p[i];
        h *= 0x100000001b3ULL;
    }
    return h;
}

inline std::uint64_t fnv1a(const std::string& s, std::uint64_t h = 0xcbf29ce484222325ULL) {
    return fnv1a(s.data(), s.size(), h);
}

/// Order-sensitive fingerprint of all parameter values (names + bytes).
template <typename T>
std::uint64_t param_fingerprint(const ParamList<T>& params) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (const auto& p : params) {
        h = fnv1a(p.name, h);
        h = fnv1a(p.value, sizeof(T) * static_cast<size_t>(p.size), h);
    }
    return h;
}

inline std::string hex64(std::uint64_t v) {
    static const char* digits = "0123456789abcdef";
    std::string s(16, '0');
    for (int i = 15; i >= 0; --i) {
        s[static_cast<size_t>(i)] = digits[v & 0xf];
        v >>= 4;
    }
    return s;
}

}  // namespace outfitgan

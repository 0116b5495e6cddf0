#pragma once

#include <sstream>
#include <string>
#include <vector>

#include "outfitgan/core/types.hpp"

namespace outfitgan::metrics {

/// Compatibility scores: one row per method, one column per outfit, all
/// methods scored on the same outfits.
struct ScoreTable {
    MatX<double> scores;

    Index methods() const { return scores.rows(); }
    Index outfits() const { return scores.cols(); }

    /// Builds from per-method score lists; ragged input is rejected.
    static ScoreTable from_rows(const std::vector<std::vector<double>>& rows) {
        if (rows.empty()) throw ShapeError("score table: no methods");
        const std::size_t n = rows.front().size();
        for (const auto& r : rows)
            if (r.size() != n) throw ShapeError("score table: ragged rows");
        ScoreTable t;
        t.scores.resize(static_cast<Index>(rows.size()), static_cast<Index>(n));
        for (std::size_t m = 0; m < rows.size(); ++m)
            for (std::size_t o = 0; o < n; ++o) t.scores(static_cast<Index>(m), static_cast<Index>(o)) = rows[m][o];
        return t;
    }

    /// Header row "method,outfit_0,..." plus one line per method.
    std::string to_csv(const std::vector<std::string>& method_names) const {
        if (static_cast<Index>(method_names.size()) != methods())
            throw ShapeError("score table: method name count mismatch");
        std::ostringstream os;
        os << "method";
        for (Index o = 0; o < outfits(); ++o) os << ",outfit_" << o;
        os << "\n";
        for (Index m = 0; m < methods(); ++m) {
            os << method_names[static_cast<std::size_t>(m)];
            for (Index o = 0; o < outfits(); ++o) os << "," << scores(m, o);
            os << "\n";
        }
        return os.str();
    }
};

/// Per-method count of outfits where it strictly beats every other method;
/// ties award no one.
inline std::vector<long> f2bt(const ScoreTable& t) {
    if (t.methods() < 2) throw ConfigError("f2bt: need at least 2 methods");
    if (t.outfits() < 1) throw ConfigError("f2bt: need at least 1 outfit");
    std::vector<long> wins(static_cast<std::size_t>(t.methods()), 0);
    for (Index o = 0; o < t.outfits(); ++o)
        for (Index m = 0; m < t.methods(); ++m) {
            bool beats_all = true;
            for (Index k = 0; k < t.methods() && beats_all; ++k)
                if (k != m && !(t.scores(m, o) > t.scores(k, o))) beats_all = false;
            if (beats_all) ++wins[static_cast<std::size_t>(m)];
        }
    return wins;
}

}  // namespace outfitgan::metrics

#include "outfitgan/config/config.hpp"

#include <fstream>
#include <sstream>

#include "outfitgan/core/errors.hpp"
#include "outfitgan/core/params.hpp"

namespace outfitgan {

namespace {

std::string trim(const std::string& s) {
    const auto a = s.find_first_not_of(" \t\r\n");
    if (a == std::string::npos) return "";
    const auto b = s.find_last_not_of(" \t\r\n");
    return s.substr(a, b - a + 1);
}

}  // namespace

Config Config::defaults() {
    Config c;
    auto& v = c.values_;
    v["data.resolution"] = "64";
    v["data.n_outfits"] = "200";
    v["data.n_categories"] = "4";
    v["data.seed"] = "7";
    v["data.split_ratio"] = "0.8";
    v["data.background_tolerance"] = "0.25";

    v["extractor.d_v"] = "256";
    v["extractor.d_cat"] = "50";
    v["extractor.hidden"] = "256";
    v["extractor.mlp_layers"] = "4";
    v["extractor.mlp_width"] = "512";
    v["extractor.style_dim"] = "512";
    v["extractor.n_scales"] = "3";  // experimental stub; only 3 is supported

    v["generator.base_channels"] = "16";
    v["generator.max_channels"] = "128";
    v["generator.resolution"] = "64";

    v["dis.channels"] = "16";
    v["dis.logit_clamp"] = "20";
    v["collocation.channels"] = "16";
    v["collocation.embed_dim"] = "128";
    v["collocation.margin"] = "0";  // 0 disables the optional hinge

    v["loss.perceptual_backend"] = "frozen_random";  // pretrained | frozen_random | off
    v["metrics.feature_backend"] = "frozen_random";  // pretrained | frozen_random

    v["train.batch_size"] = "4";
    v["train.n_iter"] = "2000";
    v["train.lr"] = "0.002";
    v["train.adam_beta1"] = "0";
    v["train.adam_beta2"] = "0.99";
    v["train.lambda1"] = "100";
    v["train.lambda2"] = "10";
    v["train.lambda3"] = "10";
    v["train.r1_every"] = "16";
    v["train.r1_gamma"] = "10";
    v["train.seed"] = "1";
    v["train.ckpt_every"] = "500";

    v["eval.mask_source"] = "real";  // real | random-pool
    v["eval.seed"] = "11";
    return c;
}

Config Config::load(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open config file: " + path);
    Config c = defaults();
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        const auto hash_pos = line.find('#');
        if (hash_pos != std::string::npos) line = line.substr(0, hash_pos);
        line = trim(line);
        if (line.empty()) continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos)
            throw ConfigError("config line " + std::to_string(lineno) + ": expected key=value");
        c.set(trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
    }
    return c;
}

void Config::set(const std::string& key, const std::string& value) {
    const auto it = values_.find(key);
    if (it == values_.end()) throw ConfigError("unknown config key: " + key);
    it->second = value;
}

const std::string& Config::get_str(const std::string& key) const {
    const auto it = values_.find(key);
    if (it == values_.end()) throw ConfigError("unknown config key: " + key);
    return it->second;
}

long Config::get_int(const std::string& key) const {
    const std::string& s = get_str(key);
    std::size_t pos = 0;
    long out = 0;
    try {
        out = std::stol(s, &pos);
    } catch (const std::exception&) {
        throw ConfigError("config key " + key + ": expected integer, got '" + s + "'");
    }
    if (pos != s.size()) throw ConfigError("config key " + key + ": expected integer, got '" + s + "'");
    return out;
}

double Config::get_real(const std::string& key) const {
    const std::string& s = get_str(key);
    std::size_t pos = 0;
    double out = 0;
    try {
        out = std::stod(s, &pos);
    } catch (const std::exception&) {
        throw ConfigError("config key " + key + ": expected number, got '" + s + "'");
    }
    if (pos != s.size()) throw ConfigError("config key " + key + ": expected number, got '" + s + "'");
    return out;
}

std::uint64_t Config::get_u64(const std::string& key) const {
    const std::string& s = get_str(key);
    std::size_t pos = 0;
    std::uint64_t out = 0;
    try {
        out = std::stoull(s, &pos);
    } catch (const std::exception&) {
        throw ConfigError("config key " + key + ": expected unsigned integer, got '" + s + "'");
    }
    if (pos != s.size()) throw ConfigError("config key " + key + ": expected unsigned integer, got '" + s + "'");
    return out;
}

std::string Config::dump() const {
    std::ostringstream os;
    for (const auto& [k, v] : values_) os << k << "=" << v << "\n";
    return os.str();
}

std::string Config::hash() const { return hex64(fnv1a(dump())); }

void Config::save(const std::string& path) const {
    std::ofstream out(path);
    if (!out) throw IoError("cannot write config file: " + path);
    out << dump();
}

}  // namespace outfitgan

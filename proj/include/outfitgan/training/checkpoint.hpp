#pragma once

#include <filesystem>
#include <fstream>
#include <iomanip>
#include <limits>
#include <string>
#include <vector>

#include "outfitgan/core/errors.hpp"
#include "outfitgan/core/params.hpp"
#include "outfitgan/nn/adam.hpp"

namespace outfitgan::training {

/// One named parameter set (and optionally its optimizer) inside a checkpoint.
template <typename T>
struct CheckpointGroup {
    std::string name;
    const ParamList<T>* params = nullptr;
    nn::Adam<T>* opt = nullptr;
};

struct CheckpointMeta {
    Index iteration = 0;
    std::string config_hash;
    std::string config_text;  // full resolved config; restored on load
    std::uint64_t seed = 0;
};

struct ManifestGroupInfo {
    std::string name;
    Index tensors = 0;
    Index values = 0;
    std::string fingerprint;
};

// implemented in checkpoint.cpp (filesystem + manifest plumbing)
std::filesystem::path checkpoint_temp_dir(const std::filesystem::path& final_dir);
void checkpoint_commit_dir(const std::filesystem::path& tmp, const std::filesystem::path& final_dir);
void write_manifest(const std::filesystem::path& file, const CheckpointMeta& meta,
                    const std::vector<ManifestGroupInfo>& groups);
CheckpointMeta read_manifest(const std::filesystem::path& file, std::vector<ManifestGroupInfo>& groups);

template <typename T>
void write_params_text(std::ostream& os, const ParamList<T>& params) {
    os << "outfitgan-params 1\n" << params.size() << "\n";
    os << std::setprecision(std::numeric_limits<T>::max_digits10);
    for (const auto& p : params) {
        os << p.name << " " << p.size << "\n";
        for (Index j = 0; j < p.size; ++j) os << p.value[j] << (j + 1 == p.size ? "\n" : " ");
    }
}

/// Parses into staging storage and validates the layout; the live parameters
/// are only touched after the whole stream parsed cleanly.
template <typename T>
void read_params_text(std::istream& is, const ParamList<T>& params) {
    std::string magic;
    int version = 0;
    is >> magic >> version;
    if (magic != "outfitgan-params" || version != 1) throw IoError("parameter file: bad header");
    std::size_t n = 0;
    is >> n;
    if (n != params.size()) throw IoError("parameter file: tensor count mismatch");
    std::vector<std::vector<T>> staged(n);
    for (std::size_t i = 0; i < n; ++i) {
        std::string name;
        Index size = 0;
        is >> name >> size;
        if (name != params[i].name || size != params[i].size)
            throw IoError("parameter file: layout mismatch at " + name);
        staged[i].resize(static_cast<std::size_t>(size));
        for (Index j = 0; j < size; ++j) is >> staged[i][static_cast<std::size_t>(j)];
    }
    if (!is) throw IoError("parameter file: truncated stream");
    for (std::size_t i = 0; i < n; ++i)
        std::copy(staged[i].begin(), staged[i].end(), params[i].value);
}

/// Writes `dir/` atomically (staged in a sibling temp directory, then
/// renamed): manifest.json, config.cfg, and per group <name>.params plus
/// <name>.adam for groups with an optimizer.
template <typename T>
void save_checkpoint(const std::filesystem::path& dir, const CheckpointMeta& meta,
                     const std::vector<CheckpointGroup<T>>& groups) {
    namespace fs = std::filesystem;
    const fs::path tmp = checkpoint_temp_dir(dir);
    std::vector<ManifestGroupInfo> infos;
    for (const auto& g : groups) {
        {
            std::ofstream os(tmp / (g.name + ".params"));
            if (!os) throw IoError("cannot write checkpoint file for " + g.name);
            write_params_text(os, *g.params);
            if (!os.flush()) throw IoError("short write on checkpoint file for " + g.name);
        }
        if (g.opt) {
            std::ofstream os(tmp / (g.name + ".adam"));
            if (!os) throw IoError("cannot write optimizer file for " + g.name);
            g.opt->save(os, *g.params);
            if (!os.flush()) throw IoError("short write on optimizer file for " + g.name);
        }
        infos.push_back({g.name, static_cast<Index>(g.params->size()), total_param_count(*g.params),
                         hex64(param_fingerprint(*g.params))});
    }
    if (!meta.config_text.empty()) {
        std::ofstream os(tmp / "config.cfg");
        os << meta.config_text;
        if (!os.flush()) throw IoError("short write on checkpoint config");
    }
    write_manifest(tmp / "manifest.json", meta, infos);
    checkpoint_commit_dir(tmp, dir);
}

/// Loads a checkpoint directory into the given groups. All files are parsed
/// and validated before any live state is mutated; a corrupt checkpoint
/// throws and leaves models and optimizers untouched. A non-empty
/// `expect_hash` must match the stored config hash unless `force`.
template <typename T>
CheckpointMeta load_checkpoint(const std::filesystem::path& dir, const std::vector<CheckpointGroup<T>>& groups,
                               const std::string& expect_hash = std::string(), bool force = false) {
    namespace fs = std::filesystem;
    std::vector<ManifestGroupInfo> infos;
    CheckpointMeta meta = read_manifest(dir / "manifest.json", infos);
    if (!expect_hash.empty() && meta.config_hash != expect_hash && !force)
        throw ConfigError("checkpoint config hash " + meta.config_hash + " does not match current config " +
                          expect_hash + " (use force to override)");
    if (infos.size() != groups.size()) throw IoError("checkpoint: group count mismatch");

    // Stage everything first so a corrupt file cannot leave partial state.
    std::vector<std::vector<std::vector<T>>> staged_params(groups.size());
    std::vector<nn::Adam<T>> staged_opts(groups.size());
    for (std::size_t gi = 0; gi < groups.size(); ++gi) {
        const auto& g = groups[gi];
        const ManifestGroupInfo* info = nullptr;
        for (const auto& cand : infos)
            if (cand.name == g.name) info = &cand;
        if (!info) throw IoError("checkpoint: manifest lacks group " + g.name);
        std::ifstream is(dir / (g.name + ".params"));
        if (!is) throw IoError("checkpoint: missing parameter file for " + g.name);
        std::string magic;
        int version = 0;
        is >> magic >> version;
        if (magic != "outfitgan-params" || version != 1) throw IoError("parameter file: bad header");
        std::size_t n = 0;
        is >> n;
        if (n != g.params->size()) throw IoError("parameter file: tensor count mismatch");
        staged_params[gi].resize(n);
        for (std::size_t i = 0; i < n; ++i) {
            std::string name;
            Index size = 0;
            is >> name >> size;
            if (name != (*g.params)[i].name || size != (*g.params)[i].size)
                throw IoError("parameter file: layout mismatch at " + name);
            staged_params[gi][i].resize(static_cast<std::size_t>(size));
            for (Index j = 0; j < size; ++j) is >> staged_params[gi][i][static_cast<std::size_t>(j)];
        }
        if (!is) throw IoError("parameter file: truncated stream");
        std::uint64_t h = 0xcbf29ce484222325ULL;
        for (std::size_t i = 0; i < n; ++i) {
            h = fnv1a((*g.params)[i].name, h);
            h = fnv1a(staged_params[gi][i].data(), sizeof(T) * staged_params[gi][i].size(), h);
        }
        if (hex64(h) != info->fingerprint)
            throw IoError("checkpoint: fingerprint mismatch for " + g.name + " (corrupt parameter file)");
        if (g.opt) {
            std::ifstream osr(dir / (g.name + ".adam"));
            if (!osr) throw IoError("checkpoint: missing optimizer file for " + g.name);
            staged_opts[gi] = *g.opt;
            staged_opts[gi].load(osr, *g.params);
        }
    }
    for (std::size_t gi = 0; gi < groups.size(); ++gi) {
        const auto& g = groups[gi];
        for (std::size_t i = 0; i < g.params->size(); ++i)
            std::copy(staged_params[gi][i].begin(), staged_params[gi][i].end(), (*g.params)[i].value);
        if (g.opt) *g.opt = std::move(staged_opts[gi]);
    }
    return meta;
}

}  // namespace outfitgan::training

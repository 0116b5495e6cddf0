#include "outfitgan/training/checkpoint.hpp"

#include <fstream>

#include <json.hpp>

namespace outfitgan::training {

namespace fs = std::filesystem;
using nlohmann::json;

fs::path checkpoint_temp_dir(const fs::path& final_dir) {
    std::error_code ec;
    const fs::path parent = final_dir.parent_path().empty() ? fs::path(".") : final_dir.parent_path();
    fs::create_directories(parent, ec);
    if (ec) throw IoError("cannot create checkpoint root " + parent.string() + ": " + ec.message());
    const fs::path tmp = parent / ("." + final_dir.filename().string() + ".tmp");
    fs::remove_all(tmp, ec);
    fs::create_directory(tmp, ec);
    if (ec) throw IoError("cannot create checkpoint staging dir " + tmp.string() + ": " + ec.message());
    return tmp;
}

void checkpoint_commit_dir(const fs::path& tmp, const fs::path& final_dir) {
    std::error_code ec;
    fs::remove_all(final_dir, ec);
    fs::rename(tmp, final_dir, ec);
    if (ec) throw IoError("cannot commit checkpoint to " + final_dir.string() + ": " + ec.message());
}

void write_manifest(const fs::path& file, const CheckpointMeta& meta, const std::vector<ManifestGroupInfo>& groups) {
    json j;
    j["format"] = "outfitgan-checkpoint-1";
    j["iteration"] = meta.iteration;
    j["config_hash"] = meta.config_hash;
    j["seed"] = meta.seed;
    json jg = json::object();
    for (const auto& g : groups)
        jg[g.name] = {{"tensors", g.tensors}, {"values", g.values}, {"fingerprint", g.fingerprint}};
    j["groups"] = jg;
    std::ofstream os(file);
    if (!os) throw IoError("cannot write manifest " + file.string());
    os << j.dump(2) << "\n";
    if (!os.flush()) throw IoError("short write on manifest " + file.string());
}

CheckpointMeta read_manifest(const fs::path& file, std::vector<ManifestGroupInfo>& groups) {
    std::ifstream is(file);
    if (!is) throw IoError("cannot open checkpoint manifest " + file.string());
    json j;
    try {
        is >> j;
    } catch (const json::exception& e) {
        throw IoError("corrupt checkpoint manifest " + file.string() + ": " + e.what());
    }
    CheckpointMeta meta;
    try {
        if (j.at("format").get<std::string>() != "outfitgan-checkpoint-1")
            throw IoError("unsupported checkpoint format in " + file.string());
        meta.iteration = j.at("iteration").get<Index>();
        meta.config_hash = j.at("config_hash").get<std::string>();
        meta.seed = j.at("seed").get<std::uint64_t>();
        groups.clear();
        for (const auto& [name, jg] : j.at("groups").items())
            groups.push_back({name, jg.at("tensors").get<Index>(), jg.at("values").get<Index>(),
                              jg.at("fingerprint").get<std::string>()});
    } catch (const json::exception& e) {
        throw IoError("corrupt checkpoint manifest " + file.string() + ": " + e.what());
    }
    const fs::path cfg = file.parent_path() / "config.cfg";
    if (fs::exists(cfg)) {
        std::ifstream cs(cfg);
        meta.config_text.assign(std::istreambuf_iterator<char>(cs), std::istreambuf_iterator<char>());
    }
    return meta;
}

}  // namespace outfitgan::training

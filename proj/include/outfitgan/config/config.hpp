#pragma once

#include <cstdint>
#include <map>
#include <string>

namespace outfitgan {

/// Flat dotted-key configuration. The key universe is fixed by defaults();
/// unknown keys in files or overrides are rejected so typos fail loudly.
class Config {
public:
    /// Full key set with desk-scale default values.
    static Config defaults();

    /// defaults() overlaid with `key = value` lines from a file
    /// ('#' comments and blank lines ignored).
    static Config load(const std::string& path);

    void set(const std::string& key, const std::string& value);

    const std::string& get_str(const std::string& key) const;
    long get_int(const std::string& key) const;
    double get_real(const std::string& key) const;
    std::uint64_t get_u64(const std::string& key) const;

    /// Sorted `key=value` lines; the canonical serialized form.
    std::string dump() const;

    /// FNV-1a hash of dump(), as a 16-digit hex string.
    std::string hash() const;

    void save(const std::string& path) const;

private:
    std::map<std::string, std::string> values_;
};

}  // namespace outfitgan

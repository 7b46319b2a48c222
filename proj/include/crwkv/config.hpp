#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

namespace crwkv {

// Flat key=value text config. '#' starts a comment; keys are
// case-sensitive; later assignments win.
class KvConfig {
public:
    KvConfig() = default;

    static KvConfig parse_file(const std::string& path);
    static KvConfig parse_string(const std::string& text);

    bool has(const std::string& key) const { return kv_.count(key) != 0; }

    std::string get_str(const std::string& key, const std::string& fallback) const;
    std::string require_str(const std::string& key) const;
    std::int64_t get_int(const std::string& key, std::int64_t fallback) const;
    double get_double(const std::string& key, double fallback) const;
    bool get_bool(const std::string& key, bool fallback) const;
    std::vector<std::int64_t> get_int_list(const std::string& key,
                                           const std::vector<std::int64_t>& fallback) const;

    void set(const std::string& key, const std::string& value) { kv_[key] = value; }

    // canonical serialization: sorted keys, one per line (hash input)
    std::string canonical() const;

    const std::map<std::string, std::string>& entries() const { return kv_; }

private:
    std::map<std::string, std::string> kv_;
};

// FNV-1a over the canonical form of the model-relevant keys
std::uint64_t config_hash(const std::string& canonical_text);

}  // namespace crwkv

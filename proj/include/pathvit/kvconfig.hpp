#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

namespace pathvit {

// Flat key = value text with dotted section keys ("model.depth = 4").
// Insertion order is preserved for round-tripping; hashing canonicalizes by
// sorted key so equivalent configs hash equal.
class KvConfig {
public:
    KvConfig() = default;

    static KvConfig parse_text(const std::string& text);
    static KvConfig parse_file(const std::string& path);

    bool has(const std::string& key) const;
    void set(const std::string& key, const std::string& value);

    // typed getters; the *_or forms return the fallback when the key is
    // missing or empty
    std::string get_string(const std::string& key) const;
    std::string get_string_or(const std::string& key, const std::string& fallback) const;
    std::int64_t get_int_or(const std::string& key, std::int64_t fallback) const;
    double get_double_or(const std::string& key, double fallback) const;
    bool get_bool_or(const std::string& key, bool fallback) const;
    std::vector<double> get_double_list_or(const std::string& key, std::vector<double> fallback) const;

    // "key=value" command-line override
    void apply_override(const std::string& assignment);

    std::string to_text() const;        // insertion order
    std::string canonical_text() const; // sorted by key
    std::string hash_hex() const;       // FNV-1a 64 of the canonical text

    const std::vector<std::pair<std::string, std::string>>& entries() const { return entries_; }

private:
    std::vector<std::pair<std::string, std::string>> entries_;
    std::map<std::string, std::size_t> index_;
};

std::uint64_t fnv1a64(const void* data, std::size_t len);

}  // namespace pathvit

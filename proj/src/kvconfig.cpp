#include "pathvit/kvconfig.hpp"

#include <algorithm>
#include <fstream>
#include <sstream>

#include "pathvit/errors.hpp"

namespace pathvit {

namespace {
std::string trim(const std::string& s) {
    const auto a = s.find_first_not_of(" \t\r");
    if (a == std::string::npos) return "";
    const auto b = s.find_last_not_of(" \t\r");
    return s.substr(a, b - a + 1);
}
}  // namespace

std::uint64_t fnv1a64(const void* data, std::size_t len) {
    std::uint64_t h = 1469598103934665603ULL;
    const auto* p = static_cast<const unsigned char*>(data);
    for (std::size_t i = 0; i < len; ++i) {
        h ^= p[i];
        h *= 1099511628211ULL;
    }
    return h;
}

KvConfig KvConfig::parse_text(const std::string& text) {
    KvConfig cfg;
    std::stringstream ss(text);
    std::string line;
    int lineno = 0;
    while (std::getline(ss, line)) {
        ++lineno;
        std::string t = trim(line);
        const auto hash = t.find('#');
        if (hash != std::string::npos) t = trim(t.substr(0, hash));
        if (t.empty()) continue;
        const auto eq = t.find('=');
        if (eq == std::string::npos) {
            throw ConfigError("config line " + std::to_string(lineno) + " is not 'key = value': " + line);
        }
        const std::string key = trim(t.substr(0, eq));
        if (key.empty()) throw ConfigError("config line " + std::to_string(lineno) + " has an empty key");
        cfg.set(key, trim(t.substr(eq + 1)));
    }
    return cfg;
}

KvConfig KvConfig::parse_file(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw IoError("cannot open config file: " + path);
    std::stringstream buf;
    buf << f.rdbuf();
    return parse_text(buf.str());
}

bool KvConfig::has(const std::string& key) const { return index_.count(key) > 0; }

void KvConfig::set(const std::string& key, const std::string& value) {
    auto it = index_.find(key);
    if (it != index_.end()) {
        entries_[it->second].second = value;
    } else {
        index_[key] = entries_.size();
        entries_.emplace_back(key, value);
    }
}

std::string KvConfig::get_string(const std::string& key) const {
    auto it = index_.find(key);
    if (it == index_.end()) throw ConfigError("missing config key '" + key + "'");
    return entries_[it->second].second;
}

std::string KvConfig::get_string_or(const std::string& key, const std::string& fallback) const {
    auto it = index_.find(key);
    if (it == index_.end() || entries_[it->second].second.empty()) return fallback;
    return entries_[it->second].second;
}

std::int64_t KvConfig::get_int_or(const std::string& key, std::int64_t fallback) const {
    const std::string s = get_string_or(key, "");
    if (s.empty()) return fallback;
    try {
        return std::stoll(s);
    } catch (const std::exception&) {
        throw ConfigError("config key '" + key + "' is not an integer: '" + s + "'");
    }
}

double KvConfig::get_double_or(const std::string& key, double fallback) const {
    const std::string s = get_string_or(key, "");
    if (s.empty()) return fallback;
    try {
        return std::stod(s);
    } catch (const std::exception&) {
        throw ConfigError("config key '" + key + "' is not a number: '" + s + "'");
    }
}

bool KvConfig::get_bool_or(const std::string& key, bool fallback) const {
    const std::string s = get_string_or(key, "");
    if (s.empty()) return fallback;
    if (s == "true" || s == "1" || s == "yes" || s == "on") return true;
    if (s == "false" || s == "0" || s == "no" || s == "off") return false;
    throw ConfigError("config key '" + key + "' is not a boolean: '" + s + "'");
}

std::vector<double> KvConfig::get_double_list_or(const std::string& key, std::vector<double> fallback) const {
    const std::string s = get_string_or(key, "");
    if (s.empty()) return fallback;
    std::vector<double> out;
    std::stringstream ss(s);
    std::string item;
    while (std::getline(ss, item, ',')) {
        try {
            out.push_back(std::stod(trim(item)));
        } catch (const std::exception&) {
            throw ConfigError("config key '" + key + "' has a non-numeric list item: '" + item + "'");
        }
    }
    return out;
}

void KvConfig::apply_override(const std::string& assignment) {
    const auto eq = assignment.find('=');
    if (eq == std::string::npos || eq == 0) {
        throw ConfigError("override must be key=value, got '" + assignment + "'");
    }
    set(trim(assignment.substr(0, eq)), trim(assignment.substr(eq + 1)));
}

std::string KvConfig::to_text() const {
    std::string out;
    for (const auto& [k, v] : entries_) out += k + " = " + v + "\n";
    return out;
}

std::string KvConfig::canonical_text() const {
    auto sorted = entries_;
    std::sort(sorted.begin(), sorted.end());
    std::string out;
    for (const auto& [k, v] : sorted) out += k + "=" + v + "\n";
    return out;
}

std::string KvConfig::hash_hex() const {
    const std::string canon = canonical_text();
    const std::uint64_t h = fnv1a64(canon.data(), canon.size());
    char buf[17];
    std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
    return std::string(buf);
}

}  // namespace pathvit

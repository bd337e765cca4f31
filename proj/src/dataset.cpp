#include "pathvit/dataset.hpp"

#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <sstream>

#include "pathvit/errors.hpp"

namespace fs = std::filesystem;

namespace pathvit {

namespace {

constexpr double kTwoPi = 6.283185307179586476925286766559;

std::vector<double> parse_double_list(const std::string& s) {
    std::vector<double> out;
    std::stringstream ss(s);
    std::string item;
    while (std::getline(ss, item, ',')) out.push_back(std::stod(item));
    return out;
}

std::vector<std::string> parse_string_list(const std::string& s) {
    std::vector<std::string> out;
    std::stringstream ss(s);
    std::string item;
    while (std::getline(ss, item, ',')) out.push_back(item);
    return out;
}

std::string trim(const std::string& s) {
    const auto a = s.find_first_not_of(" \t\r");
    if (a == std::string::npos) return "";
    const auto b = s.find_last_not_of(" \t\r");
    return s.substr(a, b - a + 1);
}

}  // namespace

Dataset Dataset::synthetic_gratings(const SyntheticSpec& spec) {
    if (spec.count <= 0 || spec.image_size <= 0) throw ConfigError("synthetic dataset needs positive extents");
    Dataset d;
    d.image_size_ = spec.image_size;
    d.channels_ = 1;
    d.num_classes_ = 2;
    d.mean_ = {0.0};
    d.stddev_ = {1.0};
    d.label_names_ = {"low_frequency", "high_frequency"};
    Rng base(spec.seed);
    const auto n = static_cast<std::size_t>(spec.image_size);
    for (int i = 0; i < spec.count; ++i) {
        Rng rng = base.stream(static_cast<std::uint64_t>(i));
        const int label = i % 2;
        const double freq = label == 0 ? spec.freq_lo : spec.freq_hi;
        const bool vertical = rng.uniform() < 0.5;  // vertical: stripes vary along x
        const double phase = rng.uniform(0.0, kTwoPi);
        const double amplitude = rng.uniform(0.8, 1.2);
        std::vector<float> px(n * n);
        for (std::size_t y = 0; y < n; ++y) {
            for (std::size_t x = 0; x < n; ++x) {
                const double coord = static_cast<double>(vertical ? x : y);
                double v = amplitude * std::cos(kTwoPi * freq * coord / static_cast<double>(n) + phase);
                if (spec.noise > 0) v += rng.normal(0.0, spec.noise);
                px[y * n + x] = static_cast<float>(v);
            }
        }
        d.pixels_.push_back(std::move(px));
        d.labels_.push_back(label);
    }
    return d;
}

Dataset Dataset::from_manifest(const std::string& manifest_path) {
    const DatasetManifest m = parse_manifest(manifest_path);
    Dataset d;
    d.image_size_ = m.image_size;
    d.channels_ = m.channels;
    d.num_classes_ = m.num_classes;
    d.mean_ = m.mean;
    d.stddev_ = m.stddev;
    d.label_names_ = m.label_names;
    for (const ManifestItem& item : m.items) {
        const fs::path p = fs::path(m.root) / item.file;
        std::error_code ec;
        const auto actual = fs::file_size(p, ec);
        if (ec) throw IoError("manifest sample missing: " + p.string());
        if (actual != item.bytes) {
            throw IoError("manifest sample " + p.string() + " has " + std::to_string(actual) +
                          " bytes, declared " + std::to_string(item.bytes));
        }
        TensorData td = read_tensor_file(p.string());
        Tensor<float> img = from_data<float>(td);
        if (img.rank() != 3 || img.extent(0) != static_cast<std::size_t>(m.image_size) ||
            img.extent(1) != static_cast<std::size_t>(m.image_size) ||
            img.extent(2) != static_cast<std::size_t>(m.channels)) {
            throw IoError("manifest sample " + p.string() + " has shape " + img.shape_string() +
                          ", expected " + std::to_string(m.image_size) + "x" + std::to_string(m.image_size) +
                          "x" + std::to_string(m.channels));
        }
        if (item.label < 0 || item.label >= m.num_classes) {
            throw IoError("manifest sample " + p.string() + " has label " + std::to_string(item.label) +
                          " outside [0, " + std::to_string(m.num_classes) + ")");
        }
        d.pixels_.emplace_back(img.data(), img.data() + img.size());
        d.labels_.push_back(item.label);
    }
    if (d.labels_.empty()) throw IoError("manifest lists no samples: " + manifest_path);
    return d;
}

std::vector<int> Dataset::shuffled_indices(std::uint64_t seed) const {
    std::vector<int> idx(labels_.size());
    std::iota(idx.begin(), idx.end(), 0);
    Rng rng(seed);
    rng.shuffle(idx.begin(), idx.end());
    return idx;
}

std::uint64_t Dataset::fingerprint(int first_n) const {
    std::uint64_t h = 1469598103934665603ULL;  // FNV-1a 64
    auto mix = [&h](const void* data, std::size_t len) {
        const auto* p = static_cast<const std::uint8_t*>(data);
        for (std::size_t i = 0; i < len; ++i) {
            h ^= p[i];
            h *= 1099511628211ULL;
        }
    };
    const int n = std::min<int>(first_n, size());
    for (int i = 0; i < n; ++i) {
        const std::int32_t label = labels_[static_cast<std::size_t>(i)];
        mix(&label, sizeof(label));
        const auto& px = pixels_[static_cast<std::size_t>(i)];
        mix(px.data(), px.size() * sizeof(float));
    }
    return h;
}

DatasetManifest parse_manifest(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw IoError("cannot open manifest: " + path);
    std::string line;
    if (!std::getline(f, line) || trim(line) != "pathvit-manifest v1") {
        throw IoError("manifest missing 'pathvit-manifest v1' header: " + path);
    }
    DatasetManifest m;
    m.root = fs::path(path).parent_path().string();
    if (m.root.empty()) m.root = ".";
    int lineno = 1;
    while (std::getline(f, line)) {
        ++lineno;
        const std::string t = trim(line);
        if (t.empty() || t[0] == '#') continue;
        const auto eq = t.find('=');
        if (eq == std::string::npos) {
            throw IoError("manifest line " + std::to_string(lineno) + " is not key = value");
        }
        const std::string key = trim(t.substr(0, eq));
        const std::string value = trim(t.substr(eq + 1));
        try {
            if (key == "image_size") m.image_size = std::stoi(value);
            else if (key == "channels") m.channels = std::stoi(value);
            else if (key == "classes") m.num_classes = std::stoi(value);
            else if (key == "mean") m.mean = parse_double_list(value);
            else if (key == "std") m.stddev = parse_double_list(value);
            else if (key == "labels") m.label_names = parse_string_list(value);
            else if (key == "split") m.split = value;
            else if (key == "sample") {
                std::stringstream ss(value);
                ManifestItem item;
                if (!(ss >> item.file >> item.label >> item.bytes)) {
                    throw IoError("manifest sample entry needs 'file label bytes'");
                }
                m.items.push_back(item);
            } else {
                throw IoError("unknown manifest key '" + key + "'");
            }
        } catch (const IoError&) {
            throw;
        } catch (const std::exception& e) {
            throw IoError("manifest line " + std::to_string(lineno) + ": " + e.what());
        }
    }
    if (m.image_size <= 0 || m.channels <= 0 || m.num_classes <= 0) {
        throw IoError("manifest missing image_size/channels/classes: " + path);
    }
    if (m.mean.size() != static_cast<std::size_t>(m.channels) ||
        m.stddev.size() != static_cast<std::size_t>(m.channels)) {
        throw IoError("manifest mean/std must list one value per channel: " + path);
    }
    for (double s : m.stddev) {
        if (s <= 0) throw IoError("manifest std values must be positive: " + path);
    }
    return m;
}

void write_manifest(const std::string& path, const DatasetManifest& m) {
    std::ofstream f(path, std::ios::trunc);
    if (!f) throw IoError("cannot write manifest: " + path);
    f << "pathvit-manifest v1\n";
    f << "image_size = " << m.image_size << "\n";
    f << "channels = " << m.channels << "\n";
    f << "classes = " << m.num_classes << "\n";
    auto join = [](const std::vector<double>& v) {
        std::string s;
        for (std::size_t i = 0; i < v.size(); ++i) {
            if (i) s += ',';
            std::ostringstream o;
            o << v[i];
            s += o.str();
        }
        return s;
    };
    f << "mean = " << join(m.mean) << "\n";
    f << "std = " << join(m.stddev) << "\n";
    if (!m.label_names.empty()) {
        f << "labels = ";
        for (std::size_t i = 0; i < m.label_names.size(); ++i) {
            if (i) f << ',';
            f << m.label_names[i];
        }
        f << "\n";
    }
    if (!m.split.empty()) f << "split = " << m.split << "\n";
    for (const ManifestItem& item : m.items) {
        f << "sample = " << item.file << ' ' << item.label << ' ' << item.bytes << "\n";
    }
}

}  // namespace pathvit

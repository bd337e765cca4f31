#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "pathvit/rng.hpp"
#include "pathvit/tensor.hpp"

namespace pathvit {

// Built-in generator: two classes of axis-aligned sinusoidal gratings that
// differ only in spatial frequency, so the task is decided in the frequency
// domain. Labels alternate deterministically; orientation, phase, amplitude
// and pixel noise are drawn per sample from the seed.
struct SyntheticSpec {
    int count = 5000;
    int image_size = 32;
    std::uint64_t seed = 7;
    double noise = 0.05;
    double freq_lo = 2.0;  // cycles per image, class 0
    double freq_hi = 6.0;  // cycles per image, class 1
};

struct ManifestItem {
    std::string file;  // relative to the manifest's directory
    int label = 0;
    std::uint64_t bytes = 0;  // declared file size, validated on load
};

struct DatasetManifest {
    std::string root;  // directory containing the manifest
    int image_size = 0;
    int channels = 0;
    int num_classes = 0;
    std::vector<double> mean, stddev;  // per channel
    std::vector<std::string> label_names;
    std::string split;
    std::vector<ManifestItem> items;
};

DatasetManifest parse_manifest(const std::string& path);
void write_manifest(const std::string& path, const DatasetManifest& m);

// In-memory labeled image set. Pixels are kept raw; normalization with the
// declared per-channel mean/std happens when an image tensor is produced.
class Dataset {
public:
    static Dataset synthetic_gratings(const SyntheticSpec& spec);
    static Dataset from_manifest(const std::string& manifest_path);

    int size() const { return static_cast<int>(labels_.size()); }
    int image_size() const { return image_size_; }
    int channels() const { return channels_; }
    int num_classes() const { return num_classes_; }
    int label(int i) const { return labels_.at(static_cast<std::size_t>(i)); }
    const std::vector<std::string>& label_names() const { return label_names_; }

    template <class T>
    Tensor<T> image(int i) const {
        const auto& px = pixels_.at(static_cast<std::size_t>(i));
        Tensor<T> img({static_cast<std::size_t>(image_size_), static_cast<std::size_t>(image_size_),
                       static_cast<std::size_t>(channels_)});
        for (std::size_t p = 0; p < px.size(); ++p) {
            const std::size_t c = p % static_cast<std::size_t>(channels_);
            img.at(p) = static_cast<T>((static_cast<double>(px[p]) - mean_[c]) / stddev_[c]);
        }
        return img;
    }

    template <class T>
    std::vector<Tensor<T>> images(int first, int count) const {
        std::vector<Tensor<T>> out;
        out.reserve(static_cast<std::size_t>(count));
        for (int i = first; i < first + count; ++i) out.push_back(image<T>(i));
        return out;
    }

    std::vector<int> labels(int first, int count) const {
        return std::vector<int>(labels_.begin() + first, labels_.begin() + first + count);
    }

    // Deterministic epoch order: same seed, same permutation.
    std::vector<int> shuffled_indices(std::uint64_t seed) const;

    // FNV-1a over the raw pixel bits and labels of the first n samples; the
    // fixture tests freeze this value.
    std::uint64_t fingerprint(int first_n) const;

    const std::vector<double>& mean() const { return mean_; }
    const std::vector<double>& stddev() const { return stddev_; }

private:
    int image_size_ = 0, channels_ = 0, num_classes_ = 0;
    std::vector<double> mean_, stddev_;
    std::vector<std::string> label_names_;
    std::vector<std::vector<float>> pixels_;  // H*W*C, channels fastest
    std::vector<int> labels_;
};

}  // namespace pathvit

#pragma once

#include <cmath>
#include <complex>
#include <string>
#include <vector>

#include "pathvit/path_ensemble.hpp"

namespace pathvit {

// ---------------------------------------------------------------------------
// Per-path scalar profiles (angle to the ensemble feature, l1 scale).
// ---------------------------------------------------------------------------

struct PathProfileEntry {
    std::vector<int> path_ids;
    double value = 0.0;
    bool defined = true;
};

struct PathProfile {
    std::string kind;  // "cosine_angle" or "l1_scale"
    std::vector<PathProfileEntry> entries;
    int samples = 1;
};

enum class ProfileReduce { classification_vector, full_feature };

namespace detail {

template <class T>
Tensor<T> profile_vector(const Tensor<T>& feature, const ModelConfig& cfg, ProfileReduce reduce) {
    if (reduce == ProfileReduce::classification_vector) return classification_vector(feature, cfg);
    return Tensor<T>({1, feature.size()}, std::vector<T>(feature.data(), feature.data() + feature.size()));
}

template <class T>
double l2_norm(const Tensor<T>& v) {
    double acc = 0;
    for (std::size_t i = 0; i < v.size(); ++i) {
        const double x = static_cast<double>(v.at(i));
        acc += x * x;
    }
    return std::sqrt(acc);
}

}  // namespace detail

// Angle in [0, pi] between each path's vector and the ensemble feature's.
// Zero-norm vectors yield an undefined (marked) entry rather than an error.
template <class T>
PathProfile cosine_profile(const PathSet<Tensor<T>>& paths, const Tensor<T>& x_hat, const ModelConfig& cfg,
                           ProfileReduce reduce = ProfileReduce::classification_vector) {
    PathProfile profile;
    profile.kind = "cosine_angle";
    const Tensor<T> xv = detail::profile_vector(x_hat, cfg, reduce);
    const double xn = detail::l2_norm(xv);
    for (const auto& e : paths.entries) {
        const Tensor<T> pv = detail::profile_vector(e.value, cfg, reduce);
        PathProfileEntry row;
        row.path_ids = e.path_ids;
        const double pn = detail::l2_norm(pv);
        if (pn == 0.0 || xn == 0.0) {
            row.defined = false;
        } else {
            double dot = 0;
            for (std::size_t i = 0; i < pv.size(); ++i)
                dot += static_cast<double>(pv.at(i)) * static_cast<double>(xv.at(i));
            const double c = std::min(1.0, std::max(-1.0, dot / (pn * xn)));
            row.value = std::acos(c);
        }
        profile.entries.push_back(std::move(row));
    }
    return profile;
}

// l1 norm of each path's vector.
template <class T>
PathProfile scale_profile(const PathSet<Tensor<T>>& paths, const ModelConfig& cfg,
                          ProfileReduce reduce = ProfileReduce::classification_vector) {
    PathProfile profile;
    profile.kind = "l1_scale";
    for (const auto& e : paths.entries) {
        const Tensor<T> pv = detail::profile_vector(e.value, cfg, reduce);
        double acc = 0;
        for (std::size_t i = 0; i < pv.size(); ++i) acc += std::abs(static_cast<double>(pv.at(i)));
        profile.entries.push_back(PathProfileEntry{e.path_ids, acc, true});
    }
    return profile;
}

// Averages per-sample profiles; undefined entries are excluded from the mean
// and stay undefined if no sample defined them.
class ProfileAccumulator {
public:
    void add(const PathProfile& p) {
        if (sums_.empty()) {
            kind_ = p.kind;
            ids_.reserve(p.entries.size());
            for (const auto& e : p.entries) ids_.push_back(e.path_ids);
            sums_.assign(p.entries.size(), 0.0);
            counts_.assign(p.entries.size(), 0);
        }
        if (p.entries.size() != sums_.size()) throw ConfigError("profile accumulator: entry count changed");
        for (std::size_t i = 0; i < p.entries.size(); ++i) {
            if (!p.entries[i].defined) continue;
            sums_[i] += p.entries[i].value;
            counts_[i] += 1;
        }
        ++samples_;
    }

    PathProfile mean() const {
        PathProfile out;
        out.kind = kind_;
        out.samples = samples_;
        for (std::size_t i = 0; i < sums_.size(); ++i) {
            PathProfileEntry e;
            e.path_ids = ids_[i];
            e.defined = counts_[i] > 0;
            e.value = e.defined ? sums_[i] / static_cast<double>(counts_[i]) : 0.0;
            out.entries.push_back(std::move(e));
        }
        return out;
    }

private:
    std::string kind_;
    std::vector<std::vector<int>> ids_;
    std::vector<double> sums_;
    std::vector<int> counts_;
    int samples_ = 0;
};

// ---------------------------------------------------------------------------
// Fourier spectrum of a token map.
// ---------------------------------------------------------------------------

// Relative log amplitude per radial frequency bin: log amplitude at the bin
// minus log amplitude at bin 0. Bin 0 is exactly 0 by construction; zero
// amplitudes report the configured floor.
struct SpectrumProfile {
    std::vector<double> relative_log_amplitude;  // size grid/2 + 1
    int grid = 0;
    int samples = 1;
    static constexpr double kLogFloor = -27.631021115928547;  // ln(1e-12)
};

// Direct-sum 2-D discrete Fourier transform over the (square) token grid,
// channel-mean magnitudes, integer radial binning. The class token row, when
// present, is excluded before reshaping.
template <class T>
SpectrumProfile fourier_profile(const Tensor<T>& feature, bool has_class_token) {
    Tensor<T> tokens = feature;
    if (has_class_token) {
        if (feature.rows() < 2) throw DimensionError("fourier_profile: nothing left after the class token");
        tokens = slice_rows(feature, 1, feature.rows() - 1);
    }
    const std::size_t n = tokens.rows();
    const auto g = static_cast<std::size_t>(std::llround(std::sqrt(static_cast<double>(n))));
    if (g * g != n) {
        throw DimensionError("fourier_profile: " + std::to_string(n) + " tokens do not form a square grid");
    }
    const std::size_t d = tokens.cols();
    const std::size_t bins = g / 2 + 1;

    // Channel-mean amplitude per frequency (u, v).
    std::vector<double> amp(g * g, 0.0);
    const double two_pi = 6.283185307179586476925286766559;
    for (std::size_t c = 0; c < d; ++c) {
        for (std::size_t u = 0; u < g; ++u) {
            for (std::size_t v = 0; v < g; ++v) {
                double re = 0, im = 0;
                for (std::size_t y = 0; y < g; ++y) {
                    for (std::size_t x = 0; x < g; ++x) {
                        const double val = static_cast<double>(tokens(y * g + x, c));
                        const double phase = -two_pi *
                                             (static_cast<double>(u * y) + static_cast<double>(v * x)) /
                                             static_cast<double>(g);
                        re += val * std::cos(phase);
                        im += val * std::sin(phase);
                    }
                }
                amp[u * g + v] += std::sqrt(re * re + im * im);
            }
        }
    }
    for (double& a : amp) a /= static_cast<double>(d);

    // Radial mean; frequencies past grid/2 (the corners) are dropped.
    std::vector<double> bin_sum(bins, 0.0);
    std::vector<int> bin_count(bins, 0);
    const auto half = static_cast<long long>(g) / 2;
    for (std::size_t u = 0; u < g; ++u) {
        for (std::size_t v = 0; v < g; ++v) {
            const long long cu = static_cast<long long>(u) <= half ? static_cast<long long>(u)
                                                                   : static_cast<long long>(u) - static_cast<long long>(g);
            const long long cv = static_cast<long long>(v) <= half ? static_cast<long long>(v)
                                                                   : static_cast<long long>(v) - static_cast<long long>(g);
            const double r = std::sqrt(static_cast<double>(cu * cu + cv * cv));
            const auto bin = static_cast<std::size_t>(std::llround(r));
            if (bin >= bins) continue;
            bin_sum[bin] += amp[u * g + v];
            bin_count[bin] += 1;
        }
    }

    SpectrumProfile out;
    out.grid = static_cast<int>(g);
    out.relative_log_amplitude.assign(bins, 0.0);
    const double a0 = bin_count[0] > 0 ? bin_sum[0] / bin_count[0] : 0.0;
    const double log0 = a0 > 0 ? std::log(a0) : SpectrumProfile::kLogFloor;
    for (std::size_t b = 1; b < bins; ++b) {
        const double ab = bin_count[b] > 0 ? bin_sum[b] / bin_count[b] : 0.0;
        out.relative_log_amplitude[b] = ab > 0 ? std::log(ab) - log0 : SpectrumProfile::kLogFloor;
    }
    return out;
}

class SpectrumAccumulator {
public:
    void add(const SpectrumProfile& s) {
        if (sums_.empty()) {
            grid_ = s.grid;
            sums_.assign(s.relative_log_amplitude.size(), 0.0);
        }
        if (s.relative_log_amplitude.size() != sums_.size()) {
            throw ConfigError("spectrum accumulator: bin count changed");
        }
        for (std::size_t i = 0; i < sums_.size(); ++i) sums_[i] += s.relative_log_amplitude[i];
        ++samples_;
    }

    SpectrumProfile mean() const {
        SpectrumProfile out;
        out.grid = grid_;
        out.samples = samples_;
        out.relative_log_amplitude.resize(sums_.size());
        for (std::size_t i = 0; i < sums_.size(); ++i)
            out.relative_log_amplitude[i] = samples_ ? sums_[i] / samples_ : 0.0;
        return out;
    }

private:
    int grid_ = 0;
    std::vector<double> sums_;
    int samples_ = 0;
};

// ---------------------------------------------------------------------------
// Path-ablation evaluation.
// ---------------------------------------------------------------------------

struct AblationRow {
    PathMask mask;
    double accuracy = 0.0;
    int correct = 0;
    int total = 0;
};

// Top-1 accuracy of the masked combine over a labeled set, one row per mask.
// The model is used as-is: no fine-tuning, deterministic sample order, argmax
// ties resolved to the lowest class index.
template <class T>
std::vector<AblationRow> path_ablation_eval(const ModelConfig& cfg, const ModelParams<Tensor<T>>& params,
                                            const std::vector<Tensor<T>>& images, const std::vector<int>& labels,
                                            const std::vector<PathMask>& masks,
                                            const std::optional<Tensor<T>>& scale_rows = std::nullopt) {
    if (images.size() != labels.size()) throw ConfigError("path_ablation_eval: images/labels size mismatch");
    if (images.empty()) throw EvalError("path_ablation_eval: empty evaluation set");
    if (masks.empty()) throw ConfigError("path_ablation_eval: no masks given");
    for (const PathMask& m : masks) m.validate();

    std::vector<AblationRow> rows;
    rows.reserve(masks.size());
    for (const PathMask& m : masks) rows.push_back(AblationRow{m, 0.0, 0, static_cast<int>(images.size())});

    // Hierarchical sets must keep every path separate so any mask applies.
    const DownsampleMode mode = cfg.hierarchical() ? DownsampleMode::per_path : DownsampleMode::synchronized;
    for (std::size_t s = 0; s < images.size(); ++s) {
        Tensor<T> x0 = patch_embed(images[s], cfg, params);
        PathSet<Tensor<T>> paths = decompose_paths(x0, cfg, params, mode);
        for (std::size_t mi = 0; mi < masks.size(); ++mi) {
            Tensor<T> x_hat = ensemble_combine(paths, masks[mi], scale_rows);
            Tensor<T> logits = classify(x_hat, cfg, params);
            if (static_cast<int>(argmax(logits)) == labels[s]) rows[mi].correct += 1;
        }
    }
    for (auto& r : rows) r.accuracy = static_cast<double>(r.correct) / static_cast<double>(r.total);
    return rows;
}

}  // namespace pathvit

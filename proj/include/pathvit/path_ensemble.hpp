#pragma once

#include <algorithm>
#include <optional>
#include <string>
#include <vector>

#include "pathvit/vit.hpp"

namespace pathvit {

// Which paths take part in the ensemble combine. Pruned paths still feed the
// running residual stream; the mask only affects the combine step.
struct PathMask {
    std::vector<bool> keep;

    static PathMask all(int n) { return PathMask{std::vector<bool>(static_cast<std::size_t>(n), true)}; }

    // "00111" keeps the last three of five paths; index 0 is the leftmost bit.
    static PathMask parse(const std::string& bits) {
        PathMask m;
        for (char c : bits) {
            if (c == '0')
                m.keep.push_back(false);
            else if (c == '1')
                m.keep.push_back(true);
            else
                throw ConfigError("path mask must be a string of 0/1, got '" + bits + "'");
        }
        m.validate();
        return m;
    }

    void validate() const {
        if (std::none_of(keep.begin(), keep.end(), [](bool b) { return b; })) {
            throw ConfigError("path mask keeps no path");
        }
    }

    std::size_t size() const { return keep.size(); }
    bool operator[](std::size_t i) const { return keep[i]; }

    std::string to_string() const {
        std::string s;
        for (bool b : keep) s += b ? '1' : '0';
        return s;
    }
};

enum class ScaleSchedule { log_linear, linear };

// Learnable per-path per-channel combine weights, initialized progressively
// from 1e-5 (shortest path) to 1.0 (longest). The log-linear schedule spaces
// the small scales multiplicatively; linear interpolation sits behind the
// schedule switch.
template <class T>
Tensor<T> init_ensemble_scale(int num_paths, int d, ScaleSchedule schedule = ScaleSchedule::log_linear) {
    if (num_paths < 2) throw ConfigError("ensemble scale needs at least two paths");
    if (d <= 0) throw ConfigError("ensemble scale needs a positive width");
    constexpr double kLo = 1e-5, kHi = 1.0;
    Tensor<T> lambda({static_cast<std::size_t>(num_paths), static_cast<std::size_t>(d)});
    for (int i = 0; i < num_paths; ++i) {
        const double t = static_cast<double>(i) / static_cast<double>(num_paths - 1);
        const double g = schedule == ScaleSchedule::log_linear
                             ? std::exp((1.0 - t) * std::log(kLo) + t * std::log(kHi))
                             : kLo + t * (kHi - kLo);
        for (int j = 0; j < d; ++j) lambda(static_cast<std::size_t>(i), static_cast<std::size_t>(j)) = static_cast<T>(g);
    }
    return lambda;
}

enum class DownsampleMode { synchronized, per_path };

// One additive term of the unrolled residual stream. Hierarchical stage
// boundaries can merge several original paths into one carried entry;
// path_ids records which.
template <class V>
struct PathEntry {
    V value;
    std::vector<int> path_ids;
    bool combinable = true;
};

template <class V>
struct PathSet {
    std::vector<PathEntry<V>> entries;
    int total_paths = 0;  // N + 1
    int grid = 0;         // token grid side at the current resolution
    int width = 0;
    DownsampleMode mode = DownsampleMode::synchronized;

    // Verification trace: the running stream after each path (pre-boundary)
    // and right after each stage boundary.
    std::vector<V> prefix_states;
    std::vector<V> boundary_states;
};

// f_i of the three-path parallel form: the attention output plus the FFN of
// (input + attention output). The attention activation is computed once and
// shared between both terms, matching the weight-shared parallel drawing.
template <class V>
V parallel_block(const V& x_prev, const BlockParams<V>& w, int num_heads, double eps) {
    V attn_out = mhsa(x_prev, w, num_heads, eps);
    return add(attn_out, ffn(add(x_prev, attn_out), w, eps));
}

namespace detail {

template <class V>
V sum_values(const std::vector<const V*>& parts) {
    V acc = *parts.front();
    for (std::size_t i = 1; i < parts.size(); ++i) acc = add(acc, *parts[i]);
    return acc;
}

// Eligibility of an entry under a mask: all-kept, all-pruned, or an error if
// the mask tries to split a merged prefix.
template <class V>
bool entry_kept(const PathEntry<V>& e, const PathMask& mask) {
    bool any = false, every = true;
    for (int id : e.path_ids) {
        const bool k = mask[static_cast<std::size_t>(id)];
        any = any || k;
        every = every && k;
    }
    if (any && !every) {
        throw ConfigError("mask splits a merged path prefix (paths " + std::to_string(e.path_ids.front()) +
                          ".." + std::to_string(e.path_ids.back()) + " were carried as one)");
    }
    return any;
}

}  // namespace detail

// Applies the stage-boundary downsampling to a live PathSet.
//   synchronized: every entry is summed into one carried path and the
//     downsample runs once on the sum; exactly equivalent to the cascade.
//   per_path: combine-eligible entries are downsampled independently (each
//     normalization computes its own statistics -- the asynchronous variant),
//     while pruned entries merge into a single carried aggregate so the extra
//     cost stays proportional to the surviving paths.
template <class V>
void downsample_stage(PathSet<V>& paths, const DownsampleParams<V>& w, double eps, DownsampleMode mode,
                      const PathMask& mask) {
    if (paths.entries.empty()) throw ConfigError("downsample_stage: empty path set");
    const int grid = paths.grid;
    if (grid < 2 || grid % 2 != 0 ||
        plain(paths.entries.front().value).rows() != static_cast<std::size_t>(grid) * static_cast<std::size_t>(grid)) {
        throw ConfigError("downsample_stage: not at a stage boundary (token grid " + std::to_string(grid) + ")");
    }

    std::vector<PathEntry<V>> next;
    if (mode == DownsampleMode::synchronized) {
        std::vector<const V*> all;
        std::vector<int> ids;
        for (const auto& e : paths.entries) {
            all.push_back(&e.value);
            ids.insert(ids.end(), e.path_ids.begin(), e.path_ids.end());
        }
        V carried = downsample_apply(detail::sum_values(all), w, grid, eps);
        next.push_back(PathEntry<V>{std::move(carried), std::move(ids), true});
    } else {
        std::vector<const V*> pruned;
        std::vector<int> pruned_ids;
        std::vector<PathEntry<V>> kept;
        for (auto& e : paths.entries) {
            if (detail::entry_kept(e, mask) && e.combinable) {
                kept.push_back(e);
            } else {
                pruned.push_back(&e.value);
                pruned_ids.insert(pruned_ids.end(), e.path_ids.begin(), e.path_ids.end());
            }
        }
        if (!pruned.empty()) {
            V agg = downsample_apply(detail::sum_values(pruned), w, grid, eps);
            next.push_back(PathEntry<V>{std::move(agg), std::move(pruned_ids), false});
        }
        for (auto& e : kept) {
            next.push_back(PathEntry<V>{downsample_apply(e.value, w, grid, eps), e.path_ids, true});
        }
    }
    paths.entries = std::move(next);
    paths.grid = grid / 2;
    paths.width *= 2;

    std::vector<const V*> all;
    for (const auto& e : paths.entries) all.push_back(&e.value);
    paths.boundary_states.push_back(detail::sum_values(all));
}

// Unrolls the residual stream into its additive paths: p_0 is x_0 and p_i is
// block i's contribution f_i applied to the running sum of p_0..p_{i-1}. One
// forward pass total; the running sum is exactly the cascade's intermediate.
// The mask matters only at hierarchical boundaries in per_path mode, where it
// decides which paths stay individually carried.
template <class V>
PathSet<V> decompose_paths(const V& x0, const ModelConfig& cfg, const ModelParams<V>& p,
                           DownsampleMode mode = DownsampleMode::synchronized,
                           std::optional<PathMask> mask_opt = std::nullopt) {
    const auto geo = cfg.stage_geometry();
    PathMask mask = mask_opt.value_or(PathMask::all(cfg.num_paths()));
    if (mask.size() != static_cast<std::size_t>(cfg.num_paths())) {
        throw ConfigError("mask length " + std::to_string(mask.size()) + " does not match " +
                          std::to_string(cfg.num_paths()) + " paths");
    }
    mask.validate();

    PathSet<V> ps;
    ps.total_paths = cfg.num_paths();
    ps.grid = cfg.grid_side();
    ps.width = cfg.embed_dim;
    ps.mode = mode;
    ps.entries.push_back(PathEntry<V>{x0, {0}, true});
    V stream = x0;
    ps.prefix_states.push_back(stream);

    int path_index = 1;
    std::size_t block = 0, ds = 0;
    for (const StageGeometry& g : geo) {
        for (int b = 0; b < g.blocks; ++b, ++block, ++path_index) {
            V f = parallel_block(stream, p.blocks[block], g.heads, cfg.eps);
            ps.entries.push_back(PathEntry<V>{f, {path_index}, true});
            stream = add(stream, f);
            ps.prefix_states.push_back(stream);
        }
        if (g.downsample_after) {
            downsample_stage(ps, p.downsamples[ds++], cfg.eps, mode, mask);
            stream = ps.boundary_states.back();
        }
    }
    return ps;
}

// x-hat: the masked (and optionally per-path scaled) sum of path outputs.
// Entries are accumulated in path order, so the full-mask unscaled combine
// reproduces the running stream bit for bit.
template <class V>
V ensemble_combine(const PathSet<V>& paths, const PathMask& mask,
                   const std::optional<V>& scale_rows = std::nullopt) {
    if (mask.size() != static_cast<std::size_t>(paths.total_paths)) {
        throw ConfigError("mask length " + std::to_string(mask.size()) + " does not match " +
                          std::to_string(paths.total_paths) + " paths");
    }
    mask.validate();
    if (scale_rows &&
        plain(*scale_rows).rows() != static_cast<std::size_t>(paths.total_paths)) {
        throw ConfigError("ensemble scale has " + std::to_string(plain(*scale_rows).rows()) +
                          " rows for " + std::to_string(paths.total_paths) + " paths");
    }

    std::optional<V> acc;
    for (const auto& e : paths.entries) {
        if (!detail::entry_kept(e, mask)) continue;
        if (!e.combinable) {
            throw ConfigError("paths " + std::to_string(e.path_ids.front()) + ".." +
                              std::to_string(e.path_ids.back()) +
                              " were merged as pruned during decomposition; decompose with the new mask");
        }
        V term = e.value;
        if (scale_rows) {
            if (e.path_ids.size() != 1) {
                throw ConfigError("per-path scaling cannot apply to a merged prefix; use per_path mode");
            }
            term = mul_rowvec(e.value,
                              slice_rows(*scale_rows, static_cast<std::size_t>(e.path_ids[0]), 1));
        }
        acc = acc ? add(*acc, term) : term;
    }
    if (!acc) throw ConfigError("mask keeps no combinable path");
    return *acc;
}

// ---------------------------------------------------------------------------
// Equivalence verification between the cascade and ensemble forms.
// ---------------------------------------------------------------------------

struct EquivalenceReport {
    int trials = 0;
    double tolerance = 0.0;
    double max_logit_deviation = 0.0;
    double max_prefix_deviation = 0.0;
    bool passed = false;
    std::string precision;
    bool hierarchical = false;
    std::vector<double> per_trial_logit_deviation;
};

// Runs random inputs through both forms (full mask, no scale) and reports the
// worst infinity-norm relative deviation of the logits and of every running
// prefix against the cascade intermediates. A failed check is a failing
// report, not an error.
template <class T>
EquivalenceReport verify_equivalence(const ModelConfig& cfg, const ModelParams<Tensor<T>>& params,
                                     int trials, double tolerance, Rng& rng) {
    if (trials < 1) throw ConfigError("verify_equivalence needs at least one trial");
    EquivalenceReport rep;
    rep.trials = trials;
    rep.tolerance = tolerance;
    rep.precision = precision_name(precision_of<T>());
    rep.hierarchical = cfg.hierarchical();

    for (int t = 0; t < trials; ++t) {
        Rng trial_rng = rng.stream(static_cast<std::uint64_t>(t) + 1);
        Tensor<T> image({static_cast<std::size_t>(cfg.image_size), static_cast<std::size_t>(cfg.image_size),
                         static_cast<std::size_t>(cfg.in_channels)});
        for (std::size_t i = 0; i < image.size(); ++i) image.at(i) = static_cast<T>(trial_rng.uniform(-1.0, 1.0));

        Tensor<T> x0 = patch_embed(image, cfg, params);
        CascadeTrace<Tensor<T>> cascade = cascade_forward(x0, cfg, params);
        PathSet<Tensor<T>> paths = decompose_paths(x0, cfg, params, DownsampleMode::synchronized);
        Tensor<T> x_hat = ensemble_combine(paths, PathMask::all(cfg.num_paths()));

        Tensor<T> logits_std = classify(cascade.output, cfg, params);
        Tensor<T> logits_ens = classify(x_hat, cfg, params);
        const double dev = rel_deviation(logits_std, logits_ens);
        rep.per_trial_logit_deviation.push_back(dev);
        rep.max_logit_deviation = std::max(rep.max_logit_deviation, dev);

        for (std::size_t i = 0; i < cascade.states.size() && i < paths.prefix_states.size(); ++i) {
            rep.max_prefix_deviation =
                std::max(rep.max_prefix_deviation, rel_deviation(cascade.states[i], paths.prefix_states[i]));
        }
        for (std::size_t i = 0; i < cascade.boundary_states.size() && i < paths.boundary_states.size(); ++i) {
            rep.max_prefix_deviation = std::max(
                rep.max_prefix_deviation, rel_deviation(cascade.boundary_states[i], paths.boundary_states[i]));
        }
    }
    rep.passed = rep.max_logit_deviation <= tolerance && rep.max_prefix_deviation <= tolerance;
    return rep;
}

}  // namespace pathvit

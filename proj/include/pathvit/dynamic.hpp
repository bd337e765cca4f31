#pragma once

#include <cstdint>
#include <vector>

#include "pathvit/flops.hpp"
#include "pathvit/path_ensemble.hpp"

namespace pathvit {

// Two-group early-exit configuration: the first `split` paths feed the early
// classifier through one scale group; the full path set feeds the fallback
// through the other.
struct DynamicConfig {
    int split = 0;           // 0: use the default rule below
    double threshold = 0.5;  // clamped into [0, 1]; exit when confidence >= threshold
    double early_loss_weight = 0.5;  // training: weight of the early exit's cross-entropy

    // Default split: 7 for the twelve-block layout the rule was tuned on,
    // otherwise ceil((N+1)/2) + 1, clamped into [1, N].
    int resolved_split(const ModelConfig& cfg) const {
        if (split > 0) return split;
        if (cfg.depth == 12) return 7;
        int k = (cfg.num_paths() + 1) / 2 + 1;
        if (k > cfg.depth) k = cfg.depth;
        if (k < 1) k = 1;
        return k;
    }

    double clamped_threshold() const { return std::min(1.0, std::max(0.0, threshold)); }

    void validate(const ModelConfig& cfg) const {
        if (cfg.hierarchical()) throw ConfigError("dynamic early exit supports non-hierarchical models only");
        if (cfg.depth < 1) throw ConfigError("dynamic early exit needs at least one block");
        const int k = resolved_split(cfg);
        if (k < 1 || k > cfg.depth) {
            throw ConfigError("dynamic split " + std::to_string(k) + " outside [1, depth]");
        }
        if (early_loss_weight < 0 || early_loss_weight > 1) {
            throw ConfigError("dynamic early_loss_weight must lie in [0, 1]");
        }
    }
};

// Initializes both scale groups progressively; a single-path early group is a
// unit row (there is nothing to interpolate).
template <class T>
void attach_dynamic_scales(ModelParams<Tensor<T>>& params, const ModelConfig& cfg, const DynamicConfig& dcfg,
                           ScaleSchedule schedule = ScaleSchedule::log_linear) {
    dcfg.validate(cfg);
    const int k = dcfg.resolved_split(cfg);
    const int d = cfg.final_width();
    params.early_scale = k >= 2 ? init_ensemble_scale<T>(k, d, schedule)
                                : Tensor<T>::full({1, static_cast<std::size_t>(d)}, T(1));
    params.full_scale = init_ensemble_scale<T>(cfg.num_paths(), d, schedule);
}

struct DynamicDecision {
    int predicted = -1;
    bool exited_early = false;
    std::uint64_t executed_flops = 0;
    double confidence = 0.0;  // max softmax of the early logits
    int predicted_full = -1;  // populated when the full pass ran
};

namespace detail {

// Scaled combine of entries [0, count) of a plain path list, in index order.
template <class T>
Tensor<T> combine_prefix(const std::vector<Tensor<T>>& paths, std::size_t count, const Tensor<T>& scale_rows) {
    Tensor<T> acc = mul_rowvec(paths[0], slice_rows(scale_rows, 0, 1));
    for (std::size_t i = 1; i < count; ++i) {
        acc = add(acc, mul_rowvec(paths[i], slice_rows(scale_rows, i, 1)));
    }
    return acc;
}

}  // namespace detail

// Early-exit inference for one image. Computes only the first k paths, exits
// on a confident early prediction, otherwise finishes the stack; the fallback
// prediction is arithmetic-identical to the full ensemble evaluation.
// `costs` must come from flops_count(cfg, dynamic_early, ..., k).
template <class T>
DynamicDecision dynamic_forward(const Tensor<T>& image, const ModelConfig& cfg,
                                const ModelParams<Tensor<T>>& params, const DynamicConfig& dcfg,
                                const FlopsReport& costs) {
    dcfg.validate(cfg);
    if (!params.early_scale || !params.full_scale) {
        throw ConfigError("dynamic_forward: model has no dynamic scale groups");
    }
    const int k = dcfg.resolved_split(cfg);
    if (plain(*params.early_scale).rows() != static_cast<std::size_t>(k)) {
        throw ConfigError("dynamic_forward: early scale rows do not match split " + std::to_string(k));
    }
    const double tau = dcfg.clamped_threshold();
    const auto geo = cfg.stage_geometry();
    const StageGeometry& g = geo.front();

    std::vector<Tensor<T>> paths;
    paths.reserve(static_cast<std::size_t>(cfg.num_paths()));
    Tensor<T> x0 = patch_embed(image, cfg, params);
    paths.push_back(x0);
    Tensor<T> stream = x0;
    for (int i = 1; i < k; ++i) {
        Tensor<T> f = parallel_block(stream, params.blocks[static_cast<std::size_t>(i - 1)], g.heads, cfg.eps);
        stream = add(stream, f);
        paths.push_back(std::move(f));
    }

    Tensor<T> x_hat1 = detail::combine_prefix(paths, static_cast<std::size_t>(k), *params.early_scale);
    Tensor<T> logits1 = classify(x_hat1, cfg, params);
    Tensor<T> probs = row_softmax(logits1);
    double confidence = 0;
    for (std::size_t j = 0; j < probs.size(); ++j)
        confidence = std::max(confidence, static_cast<double>(probs.at(j)));

    DynamicDecision out;
    out.confidence = confidence;
    if (confidence >= tau) {
        out.predicted = static_cast<int>(argmax(logits1));
        out.exited_early = true;
        out.executed_flops = costs.early_total;
        return out;
    }

    for (int i = k; i <= cfg.depth; ++i) {
        Tensor<T> f = parallel_block(stream, params.blocks[static_cast<std::size_t>(i - 1)], g.heads, cfg.eps);
        stream = add(stream, f);
        paths.push_back(std::move(f));
    }
    PathSet<Tensor<T>> ps;
    ps.total_paths = cfg.num_paths();
    ps.grid = cfg.grid_side();
    ps.width = cfg.embed_dim;
    for (int i = 0; i < cfg.num_paths(); ++i) {
        ps.entries.push_back(PathEntry<Tensor<T>>{paths[static_cast<std::size_t>(i)], {i}, true});
    }
    Tensor<T> x_hat2 = ensemble_combine(ps, PathMask::all(cfg.num_paths()), params.full_scale);
    Tensor<T> logits2 = classify(x_hat2, cfg, params);
    out.predicted = static_cast<int>(argmax(logits2));
    out.predicted_full = out.predicted;
    out.exited_early = false;
    out.executed_flops = costs.full_total;
    return out;
}

struct SweepPoint {
    double tau = 0.0;
    double accuracy = 0.0;
    double mean_flops = 0.0;
    double exit_rate = 0.0;
};

// Threshold sweep over a labeled set. Confidences and both predictions are
// computed once per sample; each tau is then a pure re-thresholding, exactly
// as if dynamic_forward had run per sample.
template <class T>
std::vector<SweepPoint> dynamic_sweep(const ModelConfig& cfg, const ModelParams<Tensor<T>>& params,
                                      const DynamicConfig& dcfg, const std::vector<Tensor<T>>& images,
                                      const std::vector<int>& labels, const std::vector<double>& taus) {
    if (images.size() != labels.size()) throw ConfigError("dynamic_sweep: images/labels size mismatch");
    if (images.empty()) throw EvalError("dynamic_sweep: empty evaluation set");
    const int k = dcfg.resolved_split(cfg);
    const FlopsReport costs = flops_count(cfg, FlopsMode::dynamic_early, std::nullopt, k);

    struct Probe {
        double confidence;
        int pred_early;
        int pred_full;
    };
    std::vector<Probe> probes;
    probes.reserve(images.size());
    DynamicConfig never_exit = dcfg;
    never_exit.threshold = 2.0;  // clamped to 1; forces the full pass unless confidence is exactly 1
    for (const auto& img : images) {
        DynamicDecision full = dynamic_forward(img, cfg, params, never_exit, costs);
        // Early prediction from the same forward: recompute cheaply.
        DynamicConfig always_exit = dcfg;
        always_exit.threshold = 0.0;
        DynamicDecision early = dynamic_forward(img, cfg, params, always_exit, costs);
        probes.push_back(Probe{early.confidence, early.predicted,
                               full.exited_early ? full.predicted : full.predicted_full});
    }

    std::vector<SweepPoint> points;
    for (double tau : taus) {
        const double t = std::min(1.0, std::max(0.0, tau));
        SweepPoint pt;
        pt.tau = tau;
        std::uint64_t flops_sum = 0;
        int correct = 0, exits = 0;
        for (std::size_t s = 0; s < probes.size(); ++s) {
            const bool exit_early = probes[s].confidence >= t;
            const int pred = exit_early ? probes[s].pred_early : probes[s].pred_full;
            flops_sum += exit_early ? costs.early_total : costs.full_total;
            exits += exit_early ? 1 : 0;
            correct += (pred == labels[s]) ? 1 : 0;
        }
        pt.accuracy = static_cast<double>(correct) / static_cast<double>(probes.size());
        pt.mean_flops = static_cast<double>(flops_sum) / static_cast<double>(probes.size());
        pt.exit_rate = static_cast<double>(exits) / static_cast<double>(probes.size());
        points.push_back(pt);
    }
    return points;
}

}  // namespace pathvit

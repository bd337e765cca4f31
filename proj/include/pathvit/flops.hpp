#pragma once

#include <cstdint>
#include <optional>
#include <vector>

#include "pathvit/model_config.hpp"
#include "pathvit/path_ensemble.hpp"

namespace pathvit {

enum class FlopsMode { standard, ensemble_full, ensemble_pruned, dynamic_early };

const char* flops_mode_name(FlopsMode m);
FlopsMode parse_flops_mode(const std::string& s);

// Counting conventions, declared in every report header. One multiply-
// accumulate is two FLOPs; LayerNorm, softmax and GELU are charged
// per element; pure elementwise additions (residual sums, unscaled path
// combines) are free, as in the usual analytic counters.
struct FlopsConventions {
    static constexpr std::uint64_t mac_flops = 2;
    static constexpr std::uint64_t layer_norm_per_element = 8;
    static constexpr std::uint64_t softmax_per_element = 5;
    static constexpr std::uint64_t gelu_per_element = 14;
    static constexpr std::uint64_t scaled_combine_per_element = 2;  // multiply + accumulate
};

struct FlopsReport {
    FlopsMode mode = FlopsMode::standard;
    std::uint64_t patch_embed = 0;
    std::vector<std::uint64_t> per_block;
    std::uint64_t blocks_total = 0;
    std::uint64_t downsample_standard = 0;  // one application per stage boundary
    std::uint64_t downsample_surplus = 0;   // extra applications for separately carried paths
    std::uint64_t combine = 0;              // scaled combines only; plain sums are free
    std::uint64_t classifier = 0;
    std::uint64_t total = 0;

    // Populated in dynamic_early mode: cost of the confident-exit prefix and
    // of the fallback full pass (which includes the failed early attempt).
    std::uint64_t early_total = 0;
    std::uint64_t full_total = 0;
};

// Analytic counts for the tiny closed-form components.
std::uint64_t flops_block(int tokens, int width, int mlp_hidden, int heads);
std::uint64_t flops_downsample(int grid, int width);
std::uint64_t flops_classifier(int width, int classes);

// Analytic model cost under the given evaluation strategy. The mask is used
// by ensemble_pruned (pruned paths merge into the carried aggregate at each
// boundary, so the per-boundary surplus is the number of surviving paths that
// must stay separate, plus one for the aggregate when any path was pruned,
// minus the one application the standard form performs anyway).
// dynamic_split is the early group size k for dynamic_early mode.
FlopsReport flops_count(const ModelConfig& cfg, FlopsMode mode,
                        const std::optional<PathMask>& mask = std::nullopt, int dynamic_split = 0);

}  // namespace pathvit

#include "pathvit/flops.hpp"

namespace pathvit {

const char* flops_mode_name(FlopsMode m) {
    switch (m) {
        case FlopsMode::standard: return "standard";
        case FlopsMode::ensemble_full: return "ensemble_full";
        case FlopsMode::ensemble_pruned: return "ensemble_pruned";
        case FlopsMode::dynamic_early: return "dynamic_early";
    }
    return "?";
}

FlopsMode parse_flops_mode(const std::string& s) {
    if (s == "standard") return FlopsMode::standard;
    if (s == "ensemble_full") return FlopsMode::ensemble_full;
    if (s == "ensemble_pruned") return FlopsMode::ensemble_pruned;
    if (s == "dynamic_early") return FlopsMode::dynamic_early;
    throw ConfigError("unknown flops mode '" + s + "'");
}

namespace {
using C = FlopsConventions;
using U = std::uint64_t;

U matmul_flops(U m, U k, U n) { return C::mac_flops * m * k * n; }
}  // namespace

std::uint64_t flops_block(int tokens, int width, int mlp_hidden, int heads) {
    const U t = static_cast<U>(tokens), d = static_cast<U>(width);
    const U m = static_cast<U>(mlp_hidden), h = static_cast<U>(heads);
    U f = 0;
    f += C::layer_norm_per_element * t * d;          // pre-attention norm
    f += 3 * matmul_flops(t, d, d);                  // q, k, v projections
    f += matmul_flops(t, d, t);                      // attention scores over all heads
    f += C::softmax_per_element * h * t * t;
    f += matmul_flops(t, t, d);                      // attention-weighted values
    f += matmul_flops(t, d, d);                      // output projection
    f += C::layer_norm_per_element * t * d;          // pre-FFN norm
    f += matmul_flops(t, d, m);
    f += C::gelu_per_element * t * m;
    f += matmul_flops(t, m, d);
    return f;
}

std::uint64_t flops_downsample(int grid, int width) {
    const U out_tokens = static_cast<U>(grid / 2) * static_cast<U>(grid / 2);
    const U w4 = 4 * static_cast<U>(width);
    return C::layer_norm_per_element * out_tokens * w4 + matmul_flops(out_tokens, w4, 2 * static_cast<U>(width));
}

std::uint64_t flops_classifier(int width, int classes) {
    const U d = static_cast<U>(width);
    return C::layer_norm_per_element * d + matmul_flops(1, d, static_cast<U>(classes));
}

namespace {

std::uint64_t scaled_combine_flops(int paths, int tokens, int width) {
    return C::scaled_combine_per_element * static_cast<U>(paths) * static_cast<U>(tokens) *
           static_cast<U>(width);
}

}  // namespace

FlopsReport flops_count(const ModelConfig& cfg, FlopsMode mode, const std::optional<PathMask>& mask_opt,
                        int dynamic_split) {
    cfg.validate();
    const auto geo = cfg.stage_geometry();
    FlopsReport rep;
    rep.mode = mode;

    rep.patch_embed = C::mac_flops * static_cast<U>(cfg.patch_tokens()) * static_cast<U>(cfg.patch_dim()) *
                      static_cast<U>(cfg.embed_dim);

    const bool cls = cfg.has_class_token();
    for (const StageGeometry& g : geo) {
        const int tokens = g.grid * g.grid + (cls ? 1 : 0);
        for (int b = 0; b < g.blocks; ++b) {
            rep.per_block.push_back(flops_block(tokens, g.width, cfg.mlp_hidden(g.width), g.heads));
            rep.blocks_total += rep.per_block.back();
        }
        if (g.downsample_after) rep.downsample_standard += flops_downsample(g.grid, g.width);
    }
    rep.classifier = flops_classifier(cfg.final_width(), cfg.num_classes);

    PathMask mask = mask_opt.value_or(PathMask::all(cfg.num_paths()));
    if (mode == FlopsMode::ensemble_pruned && mask.size() != static_cast<std::size_t>(cfg.num_paths())) {
        throw ConfigError("flops_count: mask length " + std::to_string(mask.size()) + " for " +
                          std::to_string(cfg.num_paths()) + " paths");
    }

    // Extra downsample applications needed to carry combine-eligible paths
    // separately across each boundary. The standard form already pays for one
    // application (the merged stream); pruned paths ride it as an aggregate.
    if (mode == FlopsMode::ensemble_full || mode == FlopsMode::ensemble_pruned) {
        int paths_born = 1;  // p_0
        for (const StageGeometry& g : geo) {
            paths_born += g.blocks;
            if (!g.downsample_after) continue;
            U eligible = 0, pruned = 0;
            for (int id = 0; id < paths_born; ++id) {
                if (mode == FlopsMode::ensemble_full || mask[static_cast<std::size_t>(id)])
                    ++eligible;
                else
                    ++pruned;
            }
            const U applications = eligible + (pruned > 0 ? 1 : 0);
            rep.downsample_surplus += (applications - 1) * flops_downsample(g.grid, g.width);
        }
    }

    rep.total = rep.patch_embed + rep.blocks_total + rep.downsample_standard + rep.downsample_surplus +
                rep.combine + rep.classifier;

    if (mode == FlopsMode::dynamic_early) {
        if (cfg.hierarchical()) {
            throw ConfigError("dynamic early exit supports non-hierarchical models only");
        }
        const int k = dynamic_split;
        if (k < 1 || k > cfg.depth) {
            throw ConfigError("dynamic split " + std::to_string(k) + " outside [1, depth]");
        }
        const int tokens = cfg.tokens();
        // Early pass: p_0..p_{k-1} need blocks 1..k-1.
        U early = rep.patch_embed;
        for (int b = 0; b < k - 1; ++b) early += rep.per_block[static_cast<std::size_t>(b)];
        early += scaled_combine_flops(k, tokens, cfg.embed_dim);
        early += rep.classifier;
        // Full pass includes the failed early attempt plus the remaining
        // blocks, the full scaled combine, and the second classification.
        U full = early;
        for (int b = k - 1; b < cfg.depth; ++b) full += rep.per_block[static_cast<std::size_t>(b)];
        full += scaled_combine_flops(cfg.num_paths(), tokens, cfg.embed_dim);
        full += rep.classifier;
        rep.early_total = early;
        rep.full_total = full;
        rep.total = full;
    }
    return rep;
}

}  // namespace pathvit

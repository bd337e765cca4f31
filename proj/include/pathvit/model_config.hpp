#pragma once

#include <string>
#include <vector>

#include "pathvit/errors.hpp"

namespace pathvit {

enum class TokenMode { class_token, average_pool };

const char* token_mode_name(TokenMode m);
TokenMode parse_token_mode(const std::string& s);

struct StageSpec {
    int blocks = 0;
    bool downsample = false;  // apply the merge layer after this stage
};

// Geometry of one stage: every block inside it shares these extents.
struct StageGeometry {
    int first_block = 0;   // 1-based block index of the stage's first block
    int blocks = 0;
    int width = 0;         // embedding width d_s
    int heads = 0;
    int grid = 0;          // token grid side (patch tokens are grid x grid)
    bool downsample_after = false;
};

// Full architectural description; both the cascade and the ensemble form are
// built from the same instance.
struct ModelConfig {
    int depth = 4;
    int embed_dim = 32;
    int num_heads = 4;
    double mlp_ratio = 4.0;
    int patch_size = 8;
    int image_size = 32;
    int in_channels = 1;
    int num_classes = 2;
    TokenMode token_mode = TokenMode::class_token;
    std::vector<StageSpec> stages;  // empty: plain non-hierarchical stack
    double eps = 1e-6;

    bool hierarchical() const { return !stages.empty(); }
    int num_paths() const { return depth + 1; }

    int grid_side() const { return image_size / patch_size; }
    int patch_tokens() const { return grid_side() * grid_side(); }
    int patch_dim() const { return patch_size * patch_size * in_channels; }
    bool has_class_token() const { return token_mode == TokenMode::class_token && !hierarchical(); }
    int tokens() const { return patch_tokens() + (has_class_token() ? 1 : 0); }
    int mlp_hidden(int width) const;

    // Per-stage extents; non-hierarchical models report a single stage.
    std::vector<StageGeometry> stage_geometry() const;
    const StageGeometry& stage_of_block(int block_1based, const std::vector<StageGeometry>& geo) const;
    int stage_index_of_path(int path_index) const;  // p_0 belongs to stage 0
    int final_width() const;
    int final_grid() const;
    int final_tokens() const;

    void validate() const;  // throws ConfigError with the offending field

    // Stage list syntax used in config files: "2d,2d,2" means two blocks then
    // downsample, twice, then two blocks without one.
    static std::vector<StageSpec> parse_stages(const std::string& text);
    std::string stages_string() const;
};

}  // namespace pathvit

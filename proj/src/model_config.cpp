#include "pathvit/model_config.hpp"

#include <cmath>
#include <sstream>

namespace pathvit {

const char* token_mode_name(TokenMode m) {
    return m == TokenMode::class_token ? "class_token" : "average_pool";
}

TokenMode parse_token_mode(const std::string& s) {
    if (s == "class_token") return TokenMode::class_token;
    if (s == "average_pool") return TokenMode::average_pool;
    throw ConfigError("unknown token_mode '" + s + "' (expected class_token or average_pool)");
}

int ModelConfig::mlp_hidden(int width) const {
    const double h = mlp_ratio * static_cast<double>(width);
    const int hidden = static_cast<int>(std::llround(h));
    if (hidden <= 0) throw ConfigError("mlp_ratio yields non-positive hidden width");
    return hidden;
}

std::vector<StageGeometry> ModelConfig::stage_geometry() const {
    std::vector<StageGeometry> geo;
    if (!hierarchical()) {
        geo.push_back({1, depth, embed_dim, num_heads, grid_side(), false});
        return geo;
    }
    int width = embed_dim;
    int heads = num_heads;
    int grid = grid_side();
    int next_block = 1;
    for (const StageSpec& s : stages) {
        geo.push_back({next_block, s.blocks, width, heads, grid, s.downsample});
        next_block += s.blocks;
        if (s.downsample) {
            width *= 2;
            heads *= 2;
            grid /= 2;
        }
    }
    return geo;
}

const StageGeometry& ModelConfig::stage_of_block(int block_1based, const std::vector<StageGeometry>& geo) const {
    for (const StageGeometry& g : geo) {
        if (block_1based >= g.first_block && block_1based < g.first_block + g.blocks) return g;
    }
    throw ConfigError("block index " + std::to_string(block_1based) + " outside the stage layout");
}

int ModelConfig::stage_index_of_path(int path_index) const {
    if (path_index == 0) return 0;
    const auto geo = stage_geometry();
    for (std::size_t s = 0; s < geo.size(); ++s) {
        if (path_index >= geo[s].first_block && path_index < geo[s].first_block + geo[s].blocks) {
            return static_cast<int>(s);
        }
    }
    throw ConfigError("path index " + std::to_string(path_index) + " outside the stage layout");
}

int ModelConfig::final_width() const { return stage_geometry().back().width; }

int ModelConfig::final_grid() const {
    const StageGeometry& last = stage_geometry().back();
    return last.downsample_after ? last.grid / 2 : last.grid;
}

int ModelConfig::final_tokens() const {
    const int g = final_grid();
    return g * g + (has_class_token() ? 1 : 0);
}

void ModelConfig::validate() const {
    if (depth < 0) throw ConfigError("depth must be non-negative");
    if (embed_dim <= 0) throw ConfigError("embed_dim must be positive");
    if (num_heads <= 0) throw ConfigError("num_heads must be positive");
    if (embed_dim % num_heads != 0) {
        throw ConfigError("embed_dim " + std::to_string(embed_dim) + " not divisible by num_heads " +
                          std::to_string(num_heads));
    }
    if (mlp_ratio <= 0) throw ConfigError("mlp_ratio must be positive");
    if (patch_size <= 0) throw ConfigError("patch_size must be positive");
    if (image_size <= 0 || image_size % patch_size != 0) {
        throw ConfigError("image_size " + std::to_string(image_size) + " not divisible by patch_size " +
                          std::to_string(patch_size));
    }
    if (in_channels <= 0) throw ConfigError("in_channels must be positive");
    if (num_classes <= 0) throw ConfigError("num_classes must be positive");
    if (eps <= 0) throw ConfigError("eps must be positive");
    if (hierarchical()) {
        if (token_mode == TokenMode::class_token) {
            throw ConfigError("hierarchical models require average_pool: a class token cannot be patch-merged");
        }
        int total = 0;
        int grid = grid_side();
        for (std::size_t s = 0; s < stages.size(); ++s) {
            if (stages[s].blocks <= 0) throw ConfigError("stage " + std::to_string(s) + " has no blocks");
            total += stages[s].blocks;
            if (stages[s].downsample) {
                if (grid % 2 != 0 || grid < 2) {
                    throw ConfigError("stage " + std::to_string(s) + " cannot downsample a " +
                                      std::to_string(grid) + "-wide token grid");
                }
                grid /= 2;
            }
        }
        if (total != depth) {
            throw ConfigError("stage blocks sum to " + std::to_string(total) + " but depth is " +
                              std::to_string(depth));
        }
        if (stages.back().downsample) {
            throw ConfigError("the last stage must not downsample (nothing follows it)");
        }
    }
}

std::vector<StageSpec> ModelConfig::parse_stages(const std::string& text) {
    std::vector<StageSpec> out;
    if (text.empty()) return out;
    std::stringstream ss(text);
    std::string item;
    while (std::getline(ss, item, ',')) {
        if (item.empty()) throw ConfigError("empty stage entry in '" + text + "'");
        StageSpec s;
        if (item.back() == 'd') {
            s.downsample = true;
            item.pop_back();
        }
        try {
            s.blocks = std::stoi(item);
        } catch (const std::exception&) {
            throw ConfigError("bad stage entry '" + item + "' in '" + text + "'");
        }
        out.push_back(s);
    }
    return out;
}

std::string ModelConfig::stages_string() const {
    std::string out;
    for (std::size_t i = 0; i < stages.size(); ++i) {
        if (i) out += ',';
        out += std::to_string(stages[i].blocks);
        if (stages[i].downsample) out += 'd';
    }
    return out;
}

}  // namespace pathvit

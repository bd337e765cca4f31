#pragma once

#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "pathvit/autodiff.hpp"
#include "pathvit/model_config.hpp"
#include "pathvit/rng.hpp"

namespace pathvit {

// ---------------------------------------------------------------------------
// Parameter containers. V is Tensor<T> for inference weights or Var<T> for a
// tape-bound view of the same weights.
// ---------------------------------------------------------------------------

template <class V>
struct BlockParams {
    V norm1_gamma, norm1_beta;
    V q_weight, q_bias, k_weight, k_bias, v_weight, v_bias;
    V proj_weight, proj_bias;
    V norm2_gamma, norm2_beta;
    V fc1_weight, fc1_bias, fc2_weight, fc2_bias;
};

template <class V>
struct DownsampleParams {
    V norm_gamma, norm_beta;   // over the 4d concatenated width
    V reduce_weight, reduce_bias;  // 4d -> 2d
};

template <class V>
struct ModelParams {
    V patch_weight, patch_bias;
    V pos_embed;
    std::optional<V> cls_token;
    std::vector<BlockParams<V>> blocks;
    std::vector<DownsampleParams<V>> downsamples;
    V head_norm_gamma, head_norm_beta;
    V head_weight, head_bias;
    std::optional<V> ensemble_scale;            // (N+1) x final width
    std::optional<V> early_scale, full_scale;   // dynamic-inference groups
};

// Single source of truth for parameter order and names; everything that
// walks parameters (init, optimizer, checkpoints, tape binding) goes
// through here.
template <class PA, class PB, class Fn>
void zip_params(PA& a, PB& b, Fn&& fn) {
    if (a.blocks.size() != b.blocks.size() || a.downsamples.size() != b.downsamples.size() ||
        a.cls_token.has_value() != b.cls_token.has_value() ||
        a.ensemble_scale.has_value() != b.ensemble_scale.has_value() ||
        a.early_scale.has_value() != b.early_scale.has_value() ||
        a.full_scale.has_value() != b.full_scale.has_value()) {
        throw ConfigError("parameter containers have different topology");
    }
    fn("patch.weight", a.patch_weight, b.patch_weight);
    fn("patch.bias", a.patch_bias, b.patch_bias);
    fn("pos_embed", a.pos_embed, b.pos_embed);
    if (a.cls_token) fn("cls_token", *a.cls_token, *b.cls_token);
    for (std::size_t i = 0; i < a.blocks.size(); ++i) {
        const std::string p = "blocks." + std::to_string(i) + ".";
        auto& x = a.blocks[i];
        auto& y = b.blocks[i];
        fn(p + "norm1.gamma", x.norm1_gamma, y.norm1_gamma);
        fn(p + "norm1.beta", x.norm1_beta, y.norm1_beta);
        fn(p + "q.weight", x.q_weight, y.q_weight);
        fn(p + "q.bias", x.q_bias, y.q_bias);
        fn(p + "k.weight", x.k_weight, y.k_weight);
        fn(p + "k.bias", x.k_bias, y.k_bias);
        fn(p + "v.weight", x.v_weight, y.v_weight);
        fn(p + "v.bias", x.v_bias, y.v_bias);
        fn(p + "proj.weight", x.proj_weight, y.proj_weight);
        fn(p + "proj.bias", x.proj_bias, y.proj_bias);
        fn(p + "norm2.gamma", x.norm2_gamma, y.norm2_gamma);
        fn(p + "norm2.beta", x.norm2_beta, y.norm2_beta);
        fn(p + "fc1.weight", x.fc1_weight, y.fc1_weight);
        fn(p + "fc1.bias", x.fc1_bias, y.fc1_bias);
        fn(p + "fc2.weight", x.fc2_weight, y.fc2_weight);
        fn(p + "fc2.bias", x.fc2_bias, y.fc2_bias);
    }
    for (std::size_t i = 0; i < a.downsamples.size(); ++i) {
        const std::string p = "downsample." + std::to_string(i) + ".";
        auto& x = a.downsamples[i];
        auto& y = b.downsamples[i];
        fn(p + "norm.gamma", x.norm_gamma, y.norm_gamma);
        fn(p + "norm.beta", x.norm_beta, y.norm_beta);
        fn(p + "reduce.weight", x.reduce_weight, y.reduce_weight);
        fn(p + "reduce.bias", x.reduce_bias, y.reduce_bias);
    }
    fn("head.norm.gamma", a.head_norm_gamma, b.head_norm_gamma);
    fn("head.norm.beta", a.head_norm_beta, b.head_norm_beta);
    fn("head.weight", a.head_weight, b.head_weight);
    fn("head.bias", a.head_bias, b.head_bias);
    if (a.ensemble_scale) fn("ensemble_scale", *a.ensemble_scale, *b.ensemble_scale);
    if (a.early_scale) fn("dynamic.early_scale", *a.early_scale, *b.early_scale);
    if (a.full_scale) fn("dynamic.full_scale", *a.full_scale, *b.full_scale);
}

template <class P, class Fn>
void visit_params(P& p, Fn&& fn) {
    zip_params(p, p, [&fn](const std::string& name, auto& x, auto&) { fn(name, x); });
}

template <class V>
std::vector<std::pair<std::string, V*>> param_entries(ModelParams<V>& p) {
    std::vector<std::pair<std::string, V*>> out;
    visit_params(p, [&out](const std::string& name, V& v) { out.emplace_back(name, &v); });
    return out;
}

template <class V>
std::vector<std::pair<std::string, const V*>> param_entries(const ModelParams<V>& p) {
    std::vector<std::pair<std::string, const V*>> out;
    visit_params(p, [&out](const std::string& name, const V& v) { out.emplace_back(name, &v); });
    return out;
}

// Mirrors the topology of `src` with default-constructed values of type B.
template <class B, class A>
ModelParams<B> make_shell(const ModelParams<A>& src) {
    ModelParams<B> out;
    out.blocks.resize(src.blocks.size());
    out.downsamples.resize(src.downsamples.size());
    if (src.cls_token) out.cls_token.emplace();
    if (src.ensemble_scale) out.ensemble_scale.emplace();
    if (src.early_scale) out.early_scale.emplace();
    if (src.full_scale) out.full_scale.emplace();
    return out;
}

// ---------------------------------------------------------------------------
// Initialization. Truncated normal (std 0.02) for projections and embeddings,
// zeros for biases, ones/zeros for the normalization affines.
// ---------------------------------------------------------------------------

template <class T>
ModelParams<Tensor<T>> init_params(const ModelConfig& cfg, Rng& rng) {
    cfg.validate();
    const auto geo = cfg.stage_geometry();
    ModelParams<Tensor<T>> p;

    auto trunc = [&rng](std::vector<std::size_t> shape) {
        Tensor<T> t(std::move(shape));
        for (std::size_t i = 0; i < t.size(); ++i) t.at(i) = static_cast<T>(rng.truncated_normal(0.02));
        return t;
    };
    auto zeros = [](std::vector<std::size_t> shape) { return Tensor<T>(std::move(shape)); };
    auto ones = [](std::vector<std::size_t> shape) { return Tensor<T>::full(std::move(shape), T(1)); };

    const auto d0 = static_cast<std::size_t>(cfg.embed_dim);
    p.patch_weight = trunc({static_cast<std::size_t>(cfg.patch_dim()), d0});
    p.patch_bias = zeros({d0});
    p.pos_embed = trunc({static_cast<std::size_t>(cfg.tokens()), d0});
    if (cfg.has_class_token()) p.cls_token = trunc({1, d0});

    for (const StageGeometry& g : geo) {
        const auto w = static_cast<std::size_t>(g.width);
        const auto m = static_cast<std::size_t>(cfg.mlp_hidden(g.width));
        for (int b = 0; b < g.blocks; ++b) {
            BlockParams<Tensor<T>> blk;
            blk.norm1_gamma = ones({w});
            blk.norm1_beta = zeros({w});
            blk.q_weight = trunc({w, w});
            blk.q_bias = zeros({w});
            blk.k_weight = trunc({w, w});
            blk.k_bias = zeros({w});
            blk.v_weight = trunc({w, w});
            blk.v_bias = zeros({w});
            blk.proj_weight = trunc({w, w});
            blk.proj_bias = zeros({w});
            blk.norm2_gamma = ones({w});
            blk.norm2_beta = zeros({w});
            blk.fc1_weight = trunc({w, m});
            blk.fc1_bias = zeros({m});
            blk.fc2_weight = trunc({m, w});
            blk.fc2_bias = zeros({w});
            p.blocks.push_back(std::move(blk));
        }
        if (g.downsample_after) {
            const std::size_t w4 = 4 * w;
            DownsampleParams<Tensor<T>> ds;
            ds.norm_gamma = ones({w4});
            ds.norm_beta = zeros({w4});
            ds.reduce_weight = trunc({w4, 2 * w});
            ds.reduce_bias = zeros({2 * w});
            p.downsamples.push_back(std::move(ds));
        }
    }

    const auto df = static_cast<std::size_t>(cfg.final_width());
    p.head_norm_gamma = ones({df});
    p.head_norm_beta = zeros({df});
    p.head_weight = trunc({df, static_cast<std::size_t>(cfg.num_classes)});
    p.head_bias = zeros({static_cast<std::size_t>(cfg.num_classes)});
    return p;
}

// Checks every tensor extent against the config; throws naming the offender.
template <class T>
void validate_shapes(const ModelParams<Tensor<T>>& params, const ModelConfig& cfg) {
    Rng throwaway(0);
    auto reference = init_params<T>(cfg, throwaway);
    if (params.ensemble_scale) {
        reference.ensemble_scale =
            Tensor<T>({static_cast<std::size_t>(cfg.num_paths()), static_cast<std::size_t>(cfg.final_width())});
    }
    if (params.early_scale) {
        reference.early_scale = Tensor<T>(
            {plain(*params.early_scale).rows(), static_cast<std::size_t>(cfg.final_width())});
    }
    if (params.full_scale) {
        reference.full_scale =
            Tensor<T>({static_cast<std::size_t>(cfg.num_paths()), static_cast<std::size_t>(cfg.final_width())});
    }
    zip_params(params, reference, [](const std::string& name, const Tensor<T>& got, const Tensor<T>& want) {
        if (got.shape() != want.shape()) {
            throw ConfigError("parameter '" + name + "' has shape " + got.shape_string() + ", expected " +
                              want.shape_string());
        }
    });
}

// Registers every host tensor as a tape leaf, in enumeration order.
template <class T>
ModelParams<Var<T>> bind_params(Tape<T>& tape, const ModelParams<Tensor<T>>& host) {
    auto bound = make_shell<Var<T>>(host);
    zip_params(host, bound, [&tape](const std::string&, const Tensor<T>& h, Var<T>& v) {
        v = tape.leaf(h);
    });
    return bound;
}

// ---------------------------------------------------------------------------
// Forward functions, shared verbatim between the cascade and ensemble forms.
// ---------------------------------------------------------------------------

// Cuts the image into non-overlapping patches, row-major over the grid, then
// row-major within the patch, channels fastest.
template <class T>
Tensor<T> extract_patches(const Tensor<T>& image, const ModelConfig& cfg) {
    if (image.rank() != 3 || image.extent(0) != static_cast<std::size_t>(cfg.image_size) ||
        image.extent(1) != static_cast<std::size_t>(cfg.image_size) ||
        image.extent(2) != static_cast<std::size_t>(cfg.in_channels)) {
        throw DimensionError("patch_embed: image " + image.shape_string() + " does not match configured " +
                             std::to_string(cfg.image_size) + "x" + std::to_string(cfg.image_size) + "x" +
                             std::to_string(cfg.in_channels));
    }
    const std::size_t ps = static_cast<std::size_t>(cfg.patch_size);
    const std::size_t grid = static_cast<std::size_t>(cfg.grid_side());
    const std::size_t ch = static_cast<std::size_t>(cfg.in_channels);
    const std::size_t w = static_cast<std::size_t>(cfg.image_size);
    Tensor<T> patches({grid * grid, ps * ps * ch});
    for (std::size_t gy = 0; gy < grid; ++gy)
        for (std::size_t gx = 0; gx < grid; ++gx) {
            const std::size_t row = gy * grid + gx;
            std::size_t k = 0;
            for (std::size_t py = 0; py < ps; ++py)
                for (std::size_t px = 0; px < ps; ++px)
                    for (std::size_t c = 0; c < ch; ++c) {
                        const std::size_t y = gy * ps + py, x = gx * ps + px;
                        patches(row, k++) = image.at((y * w + x) * ch + c);
                    }
        }
    return patches;
}

// Produces x_0: projected patches plus positional embeddings, with the class
// token prepended when configured.
template <class V>
V patch_embed(const Tensor<typename value_traits<V>::scalar>& image, const ModelConfig& cfg,
              const ModelParams<V>& p) {
    V patches = lift(p.patch_weight, extract_patches(image, cfg));
    V emb = add_rowvec(matmul(patches, p.patch_weight), p.patch_bias);
    if (cfg.has_class_token()) emb = concat_rows<typename value_traits<V>::scalar>({*p.cls_token, emb});
    return add(emb, p.pos_embed);
}

// Pre-norm multi-head self-attention sub-layer, without the residual.
template <class V>
V mhsa(const V& x, const BlockParams<V>& w, int num_heads, double eps) {
    const std::size_t d = plain(x).cols();
    if (d % static_cast<std::size_t>(num_heads) != 0) {
        throw DimensionError("mhsa: width " + std::to_string(d) + " not divisible by " +
                             std::to_string(num_heads) + " heads");
    }
    const std::size_t dk = d / static_cast<std::size_t>(num_heads);
    V xn = layer_norm(x, w.norm1_gamma, w.norm1_beta, eps);
    V q = add_rowvec(matmul(xn, w.q_weight), w.q_bias);
    V k = add_rowvec(matmul(xn, w.k_weight), w.k_bias);
    V v = add_rowvec(matmul(xn, w.v_weight), w.v_bias);
    std::vector<V> heads;
    heads.reserve(static_cast<std::size_t>(num_heads));
    const double inv_scale = 1.0 / std::sqrt(static_cast<double>(dk));
    for (int h = 0; h < num_heads; ++h) {
        V qh = slice_cols(q, static_cast<std::size_t>(h) * dk, dk);
        V kh = slice_cols(k, static_cast<std::size_t>(h) * dk, dk);
        V vh = slice_cols(v, static_cast<std::size_t>(h) * dk, dk);
        V attn = row_softmax(scale(matmul_nt(qh, kh), inv_scale));
        heads.push_back(matmul(attn, vh));
    }
    return add_rowvec(matmul(concat_cols(heads), w.proj_weight), w.proj_bias);
}

// Pre-norm feed-forward sub-layer, without the residual.
template <class V>
V ffn(const V& x, const BlockParams<V>& w, double eps) {
    V xn = layer_norm(x, w.norm2_gamma, w.norm2_beta, eps);
    V h = gelu(add_rowvec(matmul(xn, w.fc1_weight), w.fc1_bias));
    return add_rowvec(matmul(h, w.fc2_weight), w.fc2_bias);
}

// Patch-merge downsampling: 2x2 neighborhood concat, LayerNorm, 4d -> 2d.
template <class V>
V downsample_apply(const V& x, const DownsampleParams<V>& w, int grid, double eps) {
    V merged = patch_merge(x, static_cast<std::size_t>(grid));
    V normed = layer_norm(merged, w.norm_gamma, w.norm_beta, eps);
    return add_rowvec(matmul(normed, w.reduce_weight), w.reduce_bias);
}

template <class V>
struct CascadeTrace {
    V output;                       // x_N after the last stage
    std::vector<V> states;          // x_0..x_N at their native stage geometry
    std::vector<V> boundary_states; // carried value right after each downsample
};

// The conventional sequential form: residual attention then residual FFN,
// iterated over every block, with stage downsampling in between.
template <class V>
CascadeTrace<V> cascade_forward(const V& x0, const ModelConfig& cfg, const ModelParams<V>& p) {
    const auto geo = cfg.stage_geometry();
    if (p.blocks.size() != static_cast<std::size_t>(cfg.depth)) {
        throw ConfigError("cascade_forward: " + std::to_string(p.blocks.size()) + " blocks for depth " +
                          std::to_string(cfg.depth));
    }
    CascadeTrace<V> tr;
    V x = x0;
    tr.states.push_back(x);
    std::size_t block = 0, ds = 0;
    for (const StageGeometry& g : geo) {
        for (int b = 0; b < g.blocks; ++b, ++block) {
            V attn_out = mhsa(x, p.blocks[block], g.heads, cfg.eps);
            V mid = add(x, attn_out);
            x = add(mid, ffn(mid, p.blocks[block], cfg.eps));
            tr.states.push_back(x);
        }
        if (g.downsample_after) {
            x = downsample_apply(x, p.downsamples[ds++], g.grid, cfg.eps);
            tr.boundary_states.push_back(x);
        }
    }
    tr.output = x;
    return tr;
}

// Pools the ensemble feature, applies the final LayerNorm, then the linear
// classifier. With frozen_head the classifier parameters receive no gradient.
template <class V>
V classify(const V& x_hat, const ModelConfig& cfg, const ModelParams<V>& p, bool frozen_head = false) {
    V pooled = cfg.has_class_token() ? slice_rows(x_hat, 0, 1) : mean_rows(x_hat);
    V gamma = frozen_head ? detach(p.head_norm_gamma) : p.head_norm_gamma;
    V beta = frozen_head ? detach(p.head_norm_beta) : p.head_norm_beta;
    V weight = frozen_head ? detach(p.head_weight) : p.head_weight;
    V bias = frozen_head ? detach(p.head_bias) : p.head_bias;
    V normed = layer_norm(pooled, gamma, beta, cfg.eps);
    return add_rowvec(matmul(normed, weight), bias);
}

// The pooled pre-norm vector the profiles operate on.
template <class T>
Tensor<T> classification_vector(const Tensor<T>& feature, const ModelConfig& cfg) {
    return cfg.has_class_token() ? slice_rows(feature, 0, 1) : mean_rows(feature);
}

}  // namespace pathvit

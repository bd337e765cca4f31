#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "pathvit/vit.hpp"
#include "support/oracles.hpp"

using namespace pathvit;

namespace {

ModelConfig tiny_config() {
    ModelConfig cfg;
    cfg.depth = 4;
    cfg.embed_dim = 32;
    cfg.num_heads = 4;
    cfg.mlp_ratio = 4.0;
    cfg.patch_size = 8;
    cfg.image_size = 32;
    cfg.in_channels = 1;
    cfg.num_classes = 2;
    return cfg;
}

template <class T>
Tensor<T> random_image(const ModelConfig& cfg, Rng& rng) {
    return oracle::random_tensor<T>({static_cast<std::size_t>(cfg.image_size),
                                     static_cast<std::size_t>(cfg.image_size),
                                     static_cast<std::size_t>(cfg.in_channels)},
                                    rng);
}

// Zeroes every sub-layer weight, bias and norm affine so each block's
// contribution is exactly the zero function.
template <class T>
void zero_sublayers(ModelParams<Tensor<T>>& p) {
    for (auto& b : p.blocks) {
        for (Tensor<T>* t : {&b.norm1_gamma, &b.norm1_beta, &b.q_weight, &b.q_bias, &b.k_weight, &b.k_bias,
                             &b.v_weight, &b.v_bias, &b.proj_weight, &b.proj_bias, &b.norm2_gamma,
                             &b.norm2_beta, &b.fc1_weight, &b.fc1_bias, &b.fc2_weight, &b.fc2_bias}) {
            *t = Tensor<T>(t->shape());
        }
    }
}

}  // namespace

TEST_CASE("model config validation") {
    ModelConfig cfg = tiny_config();
    CHECK_NOTHROW(cfg.validate());
    cfg.num_heads = 3;
    CHECK_THROWS_AS(cfg.validate(), ConfigError);
    cfg = tiny_config();
    cfg.image_size = 33;
    CHECK_THROWS_AS(cfg.validate(), ConfigError);
    cfg = tiny_config();
    cfg.stages = {{2, true}, {2, false}};
    CHECK_THROWS_AS(cfg.validate(), ConfigError);  // class token in a hierarchical model
    cfg.token_mode = TokenMode::average_pool;
    CHECK_NOTHROW(cfg.validate());
    cfg.stages = {{2, true}, {3, false}};
    CHECK_THROWS_AS(cfg.validate(), ConfigError);  // blocks do not sum to depth
    cfg = tiny_config();
    cfg.token_mode = TokenMode::average_pool;
    cfg.stages = {{2, false}, {2, true}};
    CHECK_THROWS_AS(cfg.validate(), ConfigError);  // trailing downsample
}

TEST_CASE("stage geometry doubles width and heads, halves the grid") {
    ModelConfig cfg = tiny_config();
    cfg.depth = 6;
    cfg.embed_dim = 16;
    cfg.num_heads = 2;
    cfg.token_mode = TokenMode::average_pool;
    cfg.stages = {{2, true}, {2, true}, {2, false}};
    cfg.validate();
    const auto geo = cfg.stage_geometry();
    REQUIRE(geo.size() == 3);
    CHECK(geo[0].width == 16);
    CHECK(geo[1].width == 32);
    CHECK(geo[2].width == 64);
    CHECK(geo[0].grid == 4);
    CHECK(geo[1].grid == 2);
    CHECK(geo[2].grid == 1);
    CHECK(geo[2].heads == 8);
    CHECK(cfg.final_width() == 64);
    CHECK(cfg.final_tokens() == 1);
    CHECK(cfg.stage_index_of_path(0) == 0);
    CHECK(cfg.stage_index_of_path(2) == 0);
    CHECK(cfg.stage_index_of_path(3) == 1);
    CHECK(cfg.stage_index_of_path(6) == 2);
}

TEST_CASE("patch_embed token counts") {
    ModelConfig cfg = tiny_config();
    cfg.image_size = 16;
    cfg.patch_size = 16;
    cfg.embed_dim = 8;
    cfg.num_heads = 2;
    Rng rng(1);
    auto params = init_params<double>(cfg, rng);
    Tensor<double> img = random_image<double>(cfg, rng);
    Tensor<double> x0 = patch_embed(img, cfg, params);
    CHECK(x0.rows() == 2);  // class token + one patch
    CHECK(x0.cols() == 8);

    ModelConfig cfg2 = tiny_config();
    cfg2.token_mode = TokenMode::average_pool;
    Rng rng2(2);
    auto params2 = init_params<double>(cfg2, rng2);
    Tensor<double> x0b = patch_embed(random_image<double>(cfg2, rng2), cfg2, params2);
    CHECK(x0b.rows() == 16);

    Tensor<double> wrong({8, 8, 1});
    CHECK_THROWS_AS(patch_embed(wrong, cfg2, params2), DimensionError);
}

TEST_CASE("patch_embed with zero image and zero projection returns the positional embedding") {
    ModelConfig cfg = tiny_config();
    Rng rng(3);
    auto params = init_params<double>(cfg, rng);
    params.patch_weight = Tensor<double>(params.patch_weight.shape());
    params.patch_bias = Tensor<double>(params.patch_bias.shape());
    *params.cls_token = Tensor<double>(params.cls_token->shape());
    Tensor<double> img({32, 32, 1});
    Tensor<double> x0 = patch_embed(img, cfg, params);
    CHECK(x0.same_shape(params.pos_embed));
    for (std::size_t i = 0; i < x0.size(); ++i) CHECK(x0.at(i) == params.pos_embed.at(i));
}

TEST_CASE("mhsa singleton token equals projection of its value vector") {
    ModelConfig cfg = tiny_config();
    cfg.embed_dim = 8;
    cfg.num_heads = 2;
    Rng rng(4);
    auto params = init_params<double>(cfg, rng);
    const auto& w = params.blocks[0];
    Tensor<double> x = oracle::random_tensor<double>({1, 8}, rng);

    Tensor<double> got = mhsa(x, w, cfg.num_heads, cfg.eps);

    // softmax over a single key is [1], so attention passes the value through.
    Tensor<double> xn = layer_norm(x, w.norm1_gamma, w.norm1_beta, cfg.eps);
    Tensor<double> v = add_rowvec(matmul(xn, w.v_weight), w.v_bias);
    Tensor<double> want = add_rowvec(matmul(v, w.proj_weight), w.proj_bias);
    CHECK(rel_deviation(got, want) <= 1e-12);
}

TEST_CASE("mhsa permutation symmetry for identical tokens") {
    ModelConfig cfg = tiny_config();
    cfg.embed_dim = 8;
    cfg.num_heads = 2;
    Rng rng(5);
    auto params = init_params<double>(cfg, rng);
    Tensor<double> row = oracle::random_tensor<double>({1, 8}, rng);
    Tensor<double> x({2, 8});
    for (std::size_t j = 0; j < 8; ++j) {
        x(0, j) = row.at(j);
        x(1, j) = row.at(j);
    }
    Tensor<double> out = mhsa(x, params.blocks[0], cfg.num_heads, cfg.eps);
    for (std::size_t j = 0; j < 8; ++j) CHECK(out(0, j) == doctest::Approx(out(1, j)).epsilon(1e-14));
}

TEST_CASE("mhsa matches an independent per-head loop oracle") {
    ModelConfig cfg = tiny_config();
    cfg.embed_dim = 4;
    cfg.num_heads = 2;
    Rng rng(6);
    auto params = init_params<double>(cfg, rng);
    const auto& w = params.blocks[0];
    Tensor<double> x = oracle::random_tensor<double>({3, 4}, rng);

    Tensor<double> got = mhsa(x, w, 2, cfg.eps);

    Tensor<double> xn = layer_norm(x, w.norm1_gamma, w.norm1_beta, cfg.eps);
    Tensor<double> q = add_rowvec(oracle::matmul_triple_loop(xn, w.q_weight), w.q_bias);
    Tensor<double> k = add_rowvec(oracle::matmul_triple_loop(xn, w.k_weight), w.k_bias);
    Tensor<double> v = add_rowvec(oracle::matmul_triple_loop(xn, w.v_weight), w.v_bias);
    std::vector<Tensor<double>> heads;
    for (int h = 0; h < 2; ++h) {
        heads.push_back(oracle::attention_head_loop(slice_cols(q, 2 * h, 2), slice_cols(k, 2 * h, 2),
                                                    slice_cols(v, 2 * h, 2)));
    }
    Tensor<double> want =
        add_rowvec(oracle::matmul_triple_loop(concat_cols(heads), w.proj_weight), w.proj_bias);
    CHECK(rel_deviation(got, want) <= 1e-10);
}

TEST_CASE("ffn constant output when the up-projection is zero") {
    ModelConfig cfg = tiny_config();
    cfg.embed_dim = 8;
    cfg.num_heads = 2;
    Rng rng(7);
    auto params = init_params<double>(cfg, rng);
    auto& w = params.blocks[0];
    w.fc1_weight = Tensor<double>(w.fc1_weight.shape());
    w.fc1_bias = Tensor<double>(w.fc1_bias.shape());
    w.fc2_bias = oracle::random_tensor<double>(w.fc2_bias.shape(), rng);
    Tensor<double> x = oracle::random_tensor<double>({5, 8}, rng);
    Tensor<double> out = ffn(x, w, cfg.eps);
    for (std::size_t i = 0; i < out.rows(); ++i)
        for (std::size_t j = 0; j < out.cols(); ++j) CHECK(out(i, j) == w.fc2_bias.at(j));
}

TEST_CASE("ffn is a tokenwise map and matches the primitive composition") {
    ModelConfig cfg = tiny_config();
    cfg.embed_dim = 8;
    cfg.num_heads = 2;
    Rng rng(8);
    auto params = init_params<double>(cfg, rng);
    const auto& w = params.blocks[1];

    Tensor<double> row = oracle::random_tensor<double>({1, 8}, rng);
    Tensor<double> x({3, 8});
    for (std::size_t i = 0; i < 3; ++i)
        for (std::size_t j = 0; j < 8; ++j) x(i, j) = row.at(j);
    Tensor<double> same = ffn(x, w, cfg.eps);
    for (std::size_t j = 0; j < 8; ++j) {
        CHECK(same(0, j) == same(1, j));
        CHECK(same(1, j) == same(2, j));
    }

    Tensor<double> rnd = oracle::random_tensor<double>({4, 8}, rng);
    Tensor<double> got = ffn(rnd, w, cfg.eps);
    Tensor<double> want = add_rowvec(
        matmul(gelu(add_rowvec(matmul(layer_norm(rnd, w.norm2_gamma, w.norm2_beta, cfg.eps), w.fc1_weight),
                               w.fc1_bias)),
               w.fc2_weight),
        w.fc2_bias);
    CHECK(rel_deviation(got, want) <= 1e-12);
}

TEST_CASE("cascade with zero depth returns the embedding unchanged") {
    ModelConfig cfg = tiny_config();
    cfg.depth = 0;
    Rng rng(9);
    auto params = init_params<double>(cfg, rng);
    Tensor<double> x0 = patch_embed(random_image<double>(cfg, rng), cfg, params);
    auto tr = cascade_forward(x0, cfg, params);
    CHECK(tr.states.size() == 1);
    for (std::size_t i = 0; i < x0.size(); ++i) CHECK(tr.output.at(i) == x0.at(i));
}

TEST_CASE("one-block cascade expands to the three-term identity") {
    ModelConfig cfg = tiny_config();
    cfg.depth = 1;
    Rng rng(10);
    auto params = init_params<double>(cfg, rng);
    Tensor<double> x0 = patch_embed(random_image<double>(cfg, rng), cfg, params);
    auto tr = cascade_forward(x0, cfg, params);

    Tensor<double> m = mhsa(x0, params.blocks[0], cfg.num_heads, cfg.eps);
    Tensor<double> f = ffn(add(x0, m), params.blocks[0], cfg.eps);
    Tensor<double> want = add(add(x0, m), f);
    for (std::size_t i = 0; i < want.size(); ++i) CHECK(tr.output.at(i) == want.at(i));
}

TEST_CASE("residual identity dominates when every sub-layer is zeroed") {
    ModelConfig cfg = tiny_config();
    Rng rng(11);
    auto params = init_params<double>(cfg, rng);
    zero_sublayers(params);
    Tensor<double> x0 = patch_embed(random_image<double>(cfg, rng), cfg, params);
    auto tr = cascade_forward(x0, cfg, params);
    for (std::size_t i = 0; i < x0.size(); ++i) CHECK(tr.output.at(i) == x0.at(i));  // bitwise
}

TEST_CASE("per-layer contribution identity") {
    ModelConfig cfg = tiny_config();
    Rng rng(12);
    auto params = init_params<double>(cfg, rng);
    Tensor<double> x0 = patch_embed(random_image<double>(cfg, rng), cfg, params);
    auto tr = cascade_forward(x0, cfg, params);
    for (int i = 1; i <= cfg.depth; ++i) {
        const Tensor<double>& prev = tr.states[static_cast<std::size_t>(i - 1)];
        Tensor<double> diff = sub(tr.states[static_cast<std::size_t>(i)], prev);
        Tensor<double> m = mhsa(prev, params.blocks[static_cast<std::size_t>(i - 1)], cfg.num_heads, cfg.eps);
        Tensor<double> want = add(m, ffn(add(prev, m), params.blocks[static_cast<std::size_t>(i - 1)], cfg.eps));
        CHECK(rel_deviation(diff, want) <= 1e-12);
    }
}

TEST_CASE("classify edge cases") {
    ModelConfig cfg = tiny_config();
    Rng rng(13);
    auto params = init_params<double>(cfg, rng);
    Tensor<double> feature = oracle::random_tensor<double>({static_cast<std::size_t>(cfg.tokens()), 32}, rng);

    SUBCASE("zero weight yields the bias") {
        params.head_weight = Tensor<double>(params.head_weight.shape());
        params.head_bias = Tensor<double>({2}, {0.25, -0.5});
        Tensor<double> logits = classify(feature, cfg, params);
        CHECK(logits(0, 0) == 0.25);
        CHECK(logits(0, 1) == -0.5);
    }

    SUBCASE("antisymmetric weights give logits symmetric about the bias") {
        for (std::size_t i = 0; i < params.head_weight.rows(); ++i) {
            params.head_weight(i, 1) = -params.head_weight(i, 0);
        }
        params.head_bias = Tensor<double>({2}, {0.1, 0.1});
        Tensor<double> logits = classify(feature, cfg, params);
        CHECK(std::abs((logits(0, 0) - 0.1) + (logits(0, 1) - 0.1)) <= 1e-12);
    }

    SUBCASE("matches the norm-then-linear composition") {
        Tensor<double> pooled = slice_rows(feature, 0, 1);
        Tensor<double> want = add_rowvec(
            matmul(layer_norm(pooled, params.head_norm_gamma, params.head_norm_beta, cfg.eps),
                   params.head_weight),
            params.head_bias);
        CHECK(rel_deviation(classify(feature, cfg, params), want) <= 1e-12);
    }

    SUBCASE("invariant to non-class-token rows in class_token mode") {
        Tensor<double> altered = feature;
        for (std::size_t i = 1; i < altered.rows(); ++i)
            for (std::size_t j = 0; j < altered.cols(); ++j) altered(i, j) += 17.0;
        Tensor<double> a = classify(feature, cfg, params);
        Tensor<double> b = classify(altered, cfg, params);
        for (std::size_t i = 0; i < a.size(); ++i) CHECK(a.at(i) == b.at(i));
    }
}

TEST_CASE("parameter enumeration is stable and shapes validate") {
    ModelConfig cfg = tiny_config();
    Rng rng(14);
    auto params = init_params<double>(cfg, rng);
    CHECK_NOTHROW(validate_shapes(params, cfg));
    auto entries = param_entries(params);
    CHECK(entries.size() == 3 + 1 + 16 * 4 + 4);  // embeddings+cls, blocks, head
    CHECK(entries.front().first == "patch.weight");
    CHECK(entries.back().first == "head.bias");

    params.blocks[2].fc1_weight = Tensor<double>({3, 3});
    CHECK_THROWS_WITH_AS(validate_shapes(params, cfg),
                         doctest::Contains("blocks.2.fc1.weight"), ConfigError);
}

TEST_CASE("same seed reproduces identical initialization") {
    ModelConfig cfg = tiny_config();
    Rng a(77), b(77);
    auto pa = init_params<float>(cfg, a);
    auto pb = init_params<float>(cfg, b);
    auto ea = param_entries(pa);
    auto eb = param_entries(pb);
    REQUIRE(ea.size() == eb.size());
    for (std::size_t i = 0; i < ea.size(); ++i) {
        const Tensor<float>&x = *ea[i].second, &y = *eb[i].second;
        REQUIRE(x.size() == y.size());
        for (std::size_t j = 0; j < x.size(); ++j) CHECK(x.at(j) == y.at(j));
    }
}

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "pathvit/distill.hpp"
#include "pathvit/gradcheck.hpp"
#include "pathvit/train.hpp"
#include "support/oracles.hpp"

using namespace pathvit;

namespace {

// ln(2) - 0.5*ln(3): KL([0.5,0.5] || [0.75,0.25])
constexpr double kKlHalfVsThreeQuarters = 0.1438410362258904;

ModelConfig tiny_config(int depth = 4, int dim = 16) {
    ModelConfig cfg;
    cfg.depth = depth;
    cfg.embed_dim = dim;
    cfg.num_heads = 2;
    cfg.patch_size = 8;
    cfg.image_size = 16;
    cfg.in_channels = 1;
    cfg.num_classes = 2;
    return cfg;
}

template <class T>
PathSet<Tensor<T>> decompose_random(const ModelConfig& cfg, const ModelParams<Tensor<T>>& params, Rng& rng) {
    Tensor<T> img = oracle::random_tensor<T>({static_cast<std::size_t>(cfg.image_size),
                                              static_cast<std::size_t>(cfg.image_size), 1},
                                             rng);
    return decompose_paths(patch_embed(img, cfg, params), cfg, params);
}

}  // namespace

TEST_CASE("kl of temperature-softened logits matches the closed form") {
    Tensor<double> student({1, 2}, {0.0, 0.0});
    Tensor<double> teacher({1, 2}, {std::log(3.0), 0.0});
    Tensor<double> loss = detail::kl_rows_from_logits(student, teacher, 1.0);
    CHECK(oracle::rel_err(loss.at(0), kKlHalfVsThreeQuarters) <= 1e-12);

    // softening both by the same temperature leaves symmetric logits alone
    Tensor<double> same = detail::kl_rows_from_logits(student, student, 2.5);
    CHECK(same.at(0) == 0.0);
}

TEST_CASE("logit distillation loss semantics") {
    ModelConfig cfg = tiny_config();
    Rng rng(1);
    auto params = init_params<double>(cfg, rng);
    PathSet<Tensor<double>> paths = decompose_random(cfg, params, rng);
    const Tensor<double>& p2 = paths.entries[2].value;
    const Tensor<double>& p4 = paths.entries[4].value;

    Tensor<double> zero = logit_distill_loss(p2, p2, cfg, params, 1.0);
    CHECK(zero.at(0) == 0.0);

    Tensor<double> loss = logit_distill_loss(p2, p4, cfg, params, 1.0);
    CHECK(loss.at(0) >= 0.0);

    Tensor<double> warm = logit_distill_loss(p2, p4, cfg, params, 4.0);
    CHECK(warm.at(0) >= 0.0);

    Tensor<double> bad = Tensor<double>::full(p2.shape(), std::numeric_limits<double>::infinity());
    CHECK_THROWS_AS(logit_distill_loss(bad, p4, cfg, params, 1.0), EvalError);
    CHECK_THROWS_AS(logit_distill_loss(p2, p4, cfg, params, 0.0), ConfigError);
}

TEST_CASE("relation matrix structure") {
    Tensor<double> single({1, 4}, {1.0, -2.0, 0.5, 3.0});
    Tensor<double> r1 = relation_matrix(single);
    CHECK(r1.rows() == 1);
    CHECK(r1(0, 0) == 1.0);

    // two orthogonal tokens of equal norm: symmetric with equal diagonals
    Tensor<double> ortho({2, 2}, {2.0, 0.0, 0.0, 2.0});
    Tensor<double> r2 = relation_matrix(ortho);
    CHECK(r2(0, 0) == doctest::Approx(r2(1, 1)).epsilon(1e-14));
    CHECK(r2(0, 1) == doctest::Approx(r2(1, 0)).epsilon(1e-14));
    const double norm_sq = 4.0 / std::sqrt(2.0);  // |p|^2 / sqrt(d)
    const auto want = oracle::softmax_direct<double>({norm_sq, 0.0});
    CHECK(oracle::rel_err(r2(0, 0), want[0]) <= 1e-12);

    Rng rng(2);
    Tensor<double> p = oracle::random_tensor<double>({3, 4}, rng);
    Tensor<double> r = relation_matrix(p);
    for (std::size_t i = 0; i < 3; ++i) {
        double sum = 0;
        for (std::size_t j = 0; j < 3; ++j) sum += r(i, j);
        CHECK(std::abs(sum - 1.0) <= 1e-10);
        // direct formula oracle
        for (std::size_t j = 0; j < 3; ++j) {
            std::vector<double> scores(3);
            for (std::size_t jj = 0; jj < 3; ++jj) {
                double dot = 0;
                for (std::size_t c = 0; c < 4; ++c) dot += p(i, c) * p(jj, c);
                scores[jj] = dot / 2.0;  // sqrt(4)
            }
            const auto srow = oracle::softmax_direct(scores);
            CHECK(oracle::rel_err(r(i, j), srow[j]) <= 1e-12);
        }
    }

    // temperature stays inside the softmax: rows remain distributions
    Tensor<double> rt = relation_matrix(p, 3.0);
    for (std::size_t i = 0; i < 3; ++i) {
        double sum = 0;
        for (std::size_t j = 0; j < 3; ++j) sum += rt(i, j);
        CHECK(std::abs(sum - 1.0) <= 1e-10);
    }
}

TEST_CASE("hidden-state loss matches the closed-form scalar") {
    // student relations are uniform; teacher rows are [0.75,0.25] / [0.25,0.75]
    Tensor<double> p_s({2, 1}, {0.0, 0.0});
    const double a = std::sqrt(std::log(3.0) / 2.0);
    Tensor<double> p_t({2, 1}, {a, -a});
    Tensor<double> loss = hidden_state_loss(p_s, p_t, 1.0);
    CHECK(oracle::rel_err(loss.at(0), kKlHalfVsThreeQuarters) <= 1e-12);

    Tensor<double> zero = hidden_state_loss(p_t, p_t, 1.0);
    CHECK(zero.at(0) == 0.0);

    Rng rng(3);
    Tensor<double> x = oracle::random_tensor<double>({4, 3}, rng);
    Tensor<double> y = oracle::random_tensor<double>({4, 3}, rng);
    CHECK(hidden_state_loss(x, y, 1.0).at(0) >= 0.0);
    CHECK_THROWS_AS(hidden_state_loss(x, oracle::random_tensor<double>({5, 3}, rng), 1.0), DimensionError);
}

TEST_CASE("distill config validation") {
    ModelConfig cfg = tiny_config(4);
    DistillConfig d;
    d.delta = 2;
    d.start = 2;
    CHECK_NOTHROW(d.validate(cfg));
    CHECK(d.num_pairs(cfg.depth) == 1);

    d.start = 3;
    CHECK_THROWS_AS(d.validate(cfg), ConfigError);  // 3 + 2 > 4

    d.start = 1;
    d.alpha = {1.0, 0.5, 0.25};
    CHECK_THROWS_AS(d.validate(cfg), ConfigError);  // 2 pairs, 3 weights
    d.alpha = {1.0, -0.5};
    CHECK_THROWS_AS(d.validate(cfg), ConfigError);  // negative weight
    d.alpha = {1.0, 0.5};
    CHECK_NOTHROW(d.validate(cfg));

    ModelConfig hier;
    hier.depth = 6;
    hier.embed_dim = 16;
    hier.num_heads = 2;
    hier.patch_size = 8;
    hier.image_size = 32;
    hier.token_mode = TokenMode::average_pool;
    hier.stages = {{2, true}, {2, true}, {2, false}};
    DistillConfig cross;
    cross.delta = 2;
    cross.start = 1;  // pairs (1,3), (2,4) cross stage boundaries
    CHECK_THROWS_AS(cross.validate(hier), ConfigError);
    DistillConfig inside;
    inside.delta = 1;
    inside.start = 5;  // (5, 6) lives in the final stage
    CHECK_NOTHROW(inside.validate(hier));
}

TEST_CASE("total loss counts the right pairs and matches the pairwise sum") {
    ModelConfig cfg = tiny_config(12, 16);
    cfg.image_size = 16;
    Rng rng(4);
    auto params = init_params<double>(cfg, rng);
    PathSet<Tensor<double>> paths = decompose_random(cfg, params, rng);

    DistillConfig d;
    d.delta = 2;
    d.start = 5;
    Tensor<double> total = total_kd_loss(paths, cfg, params, d);

    double want = 0;
    int pairs = 0;
    for (int i = 5; i + 2 <= 12; ++i) {
        const Tensor<double>& ps = paths.entries[static_cast<std::size_t>(i)].value;
        const Tensor<double>& pt = paths.entries[static_cast<std::size_t>(i + 2)].value;
        want += logit_distill_loss(ps, pt, cfg, params, d.temperature).at(0);
        want += hidden_state_loss(ps, pt, d.temperature).at(0);
        ++pairs;
    }
    CHECK(pairs == 6);
    CHECK(oracle::rel_err(total.at(0), want) <= 1e-12);

    DistillConfig silent = d;
    silent.alpha = {0.0};
    silent.beta = {0.0};
    CHECK(total_kd_loss(paths, cfg, params, silent).at(0) == 0.0);

    DistillConfig one_pair;
    one_pair.delta = 2;
    one_pair.start = 2;
    ModelConfig cfg4 = tiny_config(4, 16);
    Rng rng4(5);
    auto params4 = init_params<double>(cfg4, rng4);
    PathSet<Tensor<double>> paths4 = decompose_random(cfg4, params4, rng4);
    Tensor<double> t4 = total_kd_loss(paths4, cfg4, params4, one_pair);
    Tensor<double> direct =
        add(logit_distill_loss(paths4.entries[2].value, paths4.entries[4].value, cfg4, params4, 1.0),
            hidden_state_loss(paths4.entries[2].value, paths4.entries[4].value, 1.0));
    CHECK(oracle::rel_err(t4.at(0), direct.at(0)) <= 1e-12);
}

TEST_CASE("zero gap: a shared tensor across all paths gives zero loss") {
    ModelConfig cfg = tiny_config(4, 16);
    Rng rng(6);
    auto params = init_params<double>(cfg, rng);
    Tensor<double> shared = oracle::random_tensor<double>({static_cast<std::size_t>(cfg.tokens()), 16}, rng);
    PathSet<Tensor<double>> paths;
    paths.total_paths = cfg.num_paths();
    for (int i = 0; i <= cfg.depth; ++i) paths.entries.push_back(PathEntry<Tensor<double>>{shared, {i}, true});
    DistillConfig d;
    d.delta = 2;
    d.start = 1;
    CHECK(total_kd_loss(paths, cfg, params, d).at(0) == 0.0);
}

TEST_CASE("gradient isolation: classifier and teacher-exclusive blocks get zero gradient") {
    ModelConfig cfg = tiny_config(4, 16);
    Rng rng(7);
    auto host = init_params<double>(cfg, rng);

    Tape<double> tape;
    auto bound = bind_params(tape, host);
    Tensor<double> img = oracle::random_tensor<double>({16, 16, 1}, rng);
    Var<double> x0 = patch_embed(img, cfg, bound);
    PathSet<Var<double>> paths = decompose_paths(x0, cfg, bound);
    DistillConfig d;
    d.delta = 2;
    d.start = 1;  // students p1, p2; teachers p3, p4; blocks 3 and 4 are teacher-only
    Var<double> loss = total_kd_loss(paths, cfg, bound, d);
    CHECK(plain(loss).at(0) > 0.0);
    tape.backward(loss);

    auto l1_norm = [&](const Tensor<double>& g) {
        double n = 0;
        for (std::size_t i = 0; i < g.size(); ++i) n += std::abs(g.at(i));
        return n;
    };
    CHECK(l1_norm(tape.grad(bound.head_weight)) == 0.0);
    CHECK(l1_norm(tape.grad(bound.head_bias)) == 0.0);
    CHECK(l1_norm(tape.grad(bound.head_norm_gamma)) == 0.0);
    CHECK(l1_norm(tape.grad(bound.head_norm_beta)) == 0.0);
    CHECK(l1_norm(tape.grad(bound.blocks[2].q_weight)) == 0.0);
    CHECK(l1_norm(tape.grad(bound.blocks[3].fc1_weight)) == 0.0);
    CHECK(l1_norm(tape.grad(bound.blocks[0].q_weight)) > 0.0);
    CHECK(l1_norm(tape.grad(bound.blocks[1].fc1_weight)) > 0.0);
    CHECK(l1_norm(tape.grad(bound.patch_weight)) > 0.0);
}

TEST_CASE("distillation gradients match finite differences") {
    ModelConfig cfg = tiny_config(3, 8);
    cfg.num_heads = 2;
    Rng rng(8);
    auto host = init_params<double>(cfg, rng);
    Tensor<double> img = oracle::random_tensor<double>({16, 16, 1}, rng);
    DistillConfig d;
    d.delta = 1;
    d.start = 1;

    auto loss_fn = [&]() {
        Tape<double> tape;
        auto bound = bind_params(tape, host);
        Var<double> x0 = patch_embed(img, cfg, bound);
        PathSet<Var<double>> paths = decompose_paths(x0, cfg, bound);
        return static_cast<double>(plain(total_kd_loss(paths, cfg, bound, d)).at(0));
    };

    Tape<double> tape;
    auto bound = bind_params(tape, host);
    Var<double> x0 = patch_embed(img, cfg, bound);
    PathSet<Var<double>> paths = decompose_paths(x0, cfg, bound);
    Var<double> loss = total_kd_loss(paths, cfg, bound, d);
    tape.backward(loss);

    Rng pick(9);
    for (Tensor<double>* param : {&host.blocks[0].v_weight, &host.blocks[1].fc2_weight, &host.patch_weight}) {
        Tape<double> fresh;  // gradients against the same host values
        auto b2 = bind_params(fresh, host);
        Var<double> fx0 = patch_embed(img, cfg, b2);
        Var<double> floss = total_kd_loss(decompose_paths(fx0, cfg, b2), cfg, b2, d);
        fresh.backward(floss);

        std::vector<std::size_t> idx;
        for (int k = 0; k < 10; ++k) idx.push_back(pick.uniform_index(param->size()));
        Tensor<double> fd = finite_difference_gradient(loss_fn, *param, 1e-5, idx);

        const Tensor<double>* grad = nullptr;
        if (param == &host.blocks[0].v_weight) grad = &fresh.grad(b2.blocks[0].v_weight);
        if (param == &host.blocks[1].fc2_weight) grad = &fresh.grad(b2.blocks[1].fc2_weight);
        if (param == &host.patch_weight) grad = &fresh.grad(b2.patch_weight);
        for (std::size_t k = 0; k < idx.size(); ++k) {
            CHECK(grad_rel_error(grad->at(idx[k]), fd.at(k)) <= 1e-3);
        }
    }
}

#pragma once

#include <string>
#include <vector>

#include "pathvit/path_ensemble.hpp"

namespace pathvit {

// Teacher-student pairing over paths: each student p_i (i = start .. N-delta)
// learns from the deeper path p_{i+delta}.
struct DistillConfig {
    int delta = 2;
    int start = 1;
    double temperature = 1.0;
    std::vector<double> alpha;  // logit-loss weights: empty = 1, one value = broadcast
    std::vector<double> beta;   // relation-loss weights, same convention
    bool relations_include_class_token = true;

    int num_pairs(int depth) const { return depth - delta - start + 1; }

    double alpha_for(int pair) const { return weight_for(alpha, pair); }
    double beta_for(int pair) const { return weight_for(beta, pair); }

    void validate(const ModelConfig& cfg) const {
        if (delta < 1) throw ConfigError("distill: delta must be at least 1");
        if (start < 0) throw ConfigError("distill: start path must be non-negative");
        if (temperature <= 0) throw ConfigError("distill: temperature must be positive");
        if (start + delta > cfg.depth) {
            throw ConfigError("distill: start " + std::to_string(start) + " + delta " + std::to_string(delta) +
                              " exceeds depth " + std::to_string(cfg.depth));
        }
        const int pairs = num_pairs(cfg.depth);
        check_weights(alpha, pairs, "alpha");
        check_weights(beta, pairs, "beta");
        if (cfg.hierarchical()) {
            // Earlier-stage path values are consumed by boundary merging and
            // have the wrong width for the shared classifier, so every pair
            // must live in the last stage.
            const int last_stage = static_cast<int>(cfg.stages.size()) - 1;
            for (int i = start; i + delta <= cfg.depth; ++i) {
                if (cfg.stage_index_of_path(i) != last_stage ||
                    cfg.stage_index_of_path(i + delta) != last_stage) {
                    throw ConfigError("distill: pair (" + std::to_string(i) + ", " +
                                      std::to_string(i + delta) +
                                      ") crosses a stage boundary; hierarchical distillation requires "
                                      "pairs inside the final stage");
                }
            }
        }
    }

private:
    static double weight_for(const std::vector<double>& w, int pair) {
        if (w.empty()) return 1.0;
        if (w.size() == 1) return w[0];
        return w[static_cast<std::size_t>(pair)];
    }

    static void check_weights(const std::vector<double>& w, int pairs, const char* name) {
        if (!w.empty() && w.size() != 1 && w.size() != static_cast<std::size_t>(pairs)) {
            throw ConfigError(std::string("distill: ") + name + " has " + std::to_string(w.size()) +
                              " weights for " + std::to_string(pairs) + " pairs");
        }
        for (double x : w) {
            if (x < 0) throw ConfigError(std::string("distill: ") + name + " weights must be non-negative");
        }
    }
};

namespace detail {

// Mean over rows of KL(softmax(s/T) || softmax(t/T)). The caller detaches the
// teacher operand.
template <class V>
V kl_rows_from_logits(const V& student_logits, const V& teacher_logits, double temperature) {
    if (!plain(student_logits).all_finite() || !plain(teacher_logits).all_finite()) {
        throw EvalError("distillation: non-finite logits");
    }
    V s = scale(student_logits, 1.0 / temperature);
    V t = scale(teacher_logits, 1.0 / temperature);
    V p = row_softmax(s);
    V diff = sub(row_log_softmax(s), row_log_softmax(t));
    const double rows = static_cast<double>(plain(student_logits).rows());
    return scale(sum_all(mul(p, diff)), 1.0 / rows);
}

template <class V>
V strip_class_token(const V& p, const ModelConfig& cfg, const DistillConfig& dcfg) {
    if (!dcfg.relations_include_class_token && cfg.has_class_token()) {
        const std::size_t rows = plain(p).rows();
        return slice_rows(p, 1, rows - 1);
    }
    return p;
}

}  // namespace detail

// Prediction-logit distillation: KL between the temperature-softened shared
// classifier outputs of the student and the (gradient-detached) teacher path.
// The classifier parameters receive no gradient from this loss.
template <class V>
V logit_distill_loss(const V& p_student, const V& p_teacher, const ModelConfig& cfg,
                     const ModelParams<V>& params, double temperature) {
    if (temperature <= 0) throw ConfigError("logit_distill_loss: temperature must be positive");
    if (!plain(p_student).same_shape(plain(p_teacher))) {
        throw DimensionError("logit_distill_loss: student " + plain(p_student).shape_string() +
                             " vs teacher " + plain(p_teacher).shape_string());
    }
    V student_logits = classify(p_student, cfg, params, /*frozen_head=*/true);
    V teacher_logits = classify(detach(p_teacher), cfg, params, /*frozen_head=*/true);
    return detail::kl_rows_from_logits(student_logits, teacher_logits, temperature);
}

// Row-stochastic token-relation matrix softmax(p p^T / (sqrt(d) T)). The
// temperature sits inside the softmax so each row stays a distribution.
template <class V>
V relation_matrix(const V& p, double temperature = 1.0) {
    const std::size_t d = plain(p).cols();
    if (d < 1) throw DimensionError("relation_matrix: empty feature");
    const double denom = std::sqrt(static_cast<double>(d)) * temperature;
    return row_softmax(scale(matmul_nt(p, p), 1.0 / denom));
}

// Hidden-state relation distillation: mean over token rows of KL between the
// student's and the detached teacher's relation rows.
template <class V>
V hidden_state_loss(const V& p_student, const V& p_teacher, double temperature) {
    if (temperature <= 0) throw ConfigError("hidden_state_loss: temperature must be positive");
    const auto& ps = plain(p_student);
    const auto& pt = plain(p_teacher);
    if (ps.rows() != pt.rows()) {
        throw DimensionError("hidden_state_loss: token counts differ, " + ps.shape_string() + " vs " +
                             pt.shape_string());
    }
    const double denom_s = std::sqrt(static_cast<double>(ps.cols())) * temperature;
    const double denom_t = std::sqrt(static_cast<double>(pt.cols())) * temperature;
    V s_scores = scale(matmul_nt(p_student, p_student), 1.0 / denom_s);
    V teacher = detach(p_teacher);
    V t_scores = scale(matmul_nt(teacher, teacher), 1.0 / denom_t);
    V p = row_softmax(s_scores);
    V diff = sub(row_log_softmax(s_scores), row_log_softmax(t_scores));
    const double rows = static_cast<double>(ps.rows());
    return scale(sum_all(mul(p, diff)), 1.0 / rows);
}

namespace detail {

template <class V>
const V& path_value(const PathSet<V>& paths, int path_id) {
    for (const auto& e : paths.entries) {
        if (e.path_ids.size() == 1 && e.path_ids[0] == path_id) return e.value;
    }
    throw ConfigError("path " + std::to_string(path_id) + " is not individually available in this path set");
}

}  // namespace detail

// The combined objective: sum over students i = start .. N-delta of
// alpha_i * logit loss + beta_i * relation loss against teacher p_{i+delta}.
// Teachers are always the deeper path and are gradient-detached.
template <class V>
V total_kd_loss(const PathSet<V>& paths, const ModelConfig& cfg, const ModelParams<V>& params,
                const DistillConfig& dcfg) {
    dcfg.validate(cfg);
    std::optional<V> total;
    for (int i = dcfg.start; i + dcfg.delta <= cfg.depth; ++i) {
        const int pair = i - dcfg.start;
        const double a = dcfg.alpha_for(pair);
        const double b = dcfg.beta_for(pair);
        if (a == 0.0 && b == 0.0) continue;
        const V& p_s = detail::path_value(paths, i);
        const V& p_t = detail::path_value(paths, i + dcfg.delta);
        if (a != 0.0) {
            V term = scale(logit_distill_loss(p_s, p_t, cfg, params, dcfg.temperature), a);
            total = total ? add(*total, term) : term;
        }
        if (b != 0.0) {
            V rs = detail::strip_class_token(p_s, cfg, dcfg);
            V rt = detail::strip_class_token(p_t, cfg, dcfg);
            V term = scale(hidden_state_loss(rs, rt, dcfg.temperature), b);
            total = total ? add(*total, term) : term;
        }
    }
    if (!total) {
        return lift(paths.entries.front().value,
                    Tensor<typename value_traits<V>::scalar>::scalar(0));
    }
    return *total;
}

}  // namespace pathvit

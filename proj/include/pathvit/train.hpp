#pragma once

#include <optional>
#include <string>
#include <thread>
#include <vector>

#include "pathvit/checkpoint.hpp"
#include "pathvit/dataset.hpp"
#include "pathvit/distill.hpp"
#include "pathvit/dynamic.hpp"
#include "pathvit/kvconfig.hpp"

namespace pathvit {

enum class OptimizerKind { adamw, sgd_momentum };

const char* optimizer_name(OptimizerKind k);
OptimizerKind parse_optimizer(const std::string& s);

struct TrainConfig {
    int epochs = 20;
    int batch_size = 64;
    double lr = 1e-3;
    double weight_decay = 0.05;
    OptimizerKind optimizer = OptimizerKind::adamw;
    std::uint64_t seed = 42;
    double ce_weight = 1.0;
    double kd_weight = 0.0;
    int warmup_steps = 0;
    double target_accuracy = 0.0;  // early stop once reached; 0 disables
    std::optional<DistillConfig> distill;
    std::optional<PathMask> mask;
    bool ensemble_scale = false;
    ScaleSchedule scale_schedule = ScaleSchedule::log_linear;
    std::optional<DynamicConfig> dynamic;
    Precision precision = Precision::single;

    void validate(const ModelConfig& cfg) const {
        if (epochs < 0) throw ConfigError("train: epochs must be non-negative");
        if (batch_size < 1) throw ConfigError("train: batch_size must be positive");
        if (lr < 0) throw ConfigError("train: learning rate must be non-negative");
        if (weight_decay < 0) throw ConfigError("train: weight decay must be non-negative");
        if (ce_weight < 0 || kd_weight < 0) throw ConfigError("train: loss weights must be non-negative");
        if (warmup_steps < 0) throw ConfigError("train: warmup_steps must be non-negative");
        if (mask) {
            mask->validate();
            if (mask->size() != static_cast<std::size_t>(cfg.num_paths())) {
                throw ConfigError("train: mask length " + std::to_string(mask->size()) + " for " +
                                  std::to_string(cfg.num_paths()) + " paths");
            }
        }
        if (distill) distill->validate(cfg);
        if (dynamic) {
            dynamic->validate(cfg);
            if (ensemble_scale) {
                throw ConfigError("train: dynamic mode carries its own scale groups; disable ensemble_scale");
            }
        }
        if (kd_weight > 0 && !distill) throw ConfigError("train: kd_weight set but distillation not configured");
    }
};

// ---------------------------------------------------------------------------
// Optimizers. Decoupled weight decay applies to rank-2 ".weight" projections
// only; biases, norm affines, embeddings and ensemble scales are not decayed.
// ---------------------------------------------------------------------------

inline bool decay_applies(const std::string& name, std::size_t rank) {
    return rank == 2 && name.size() > 7 && name.compare(name.size() - 7, 7, ".weight") == 0;
}

template <class T>
class Optimizer {
public:
    Optimizer(OptimizerKind kind, std::vector<std::pair<std::string, Tensor<T>*>> params, double lr,
              double weight_decay)
        : kind_(kind), params_(std::move(params)), base_lr_(lr), weight_decay_(weight_decay) {
        slot_a_.reserve(params_.size());
        slot_b_.reserve(params_.size());
        for (auto& [name, p] : params_) {
            (void)name;
            slot_a_.emplace_back(p->shape());
            slot_b_.emplace_back(p->shape());
        }
    }

    // Applies one update from the gradients accumulated on `tape` for the
    // bound views (same order as the parameter list).
    void step(Tape<T>& tape, const std::vector<Var<T>>& bound, double lr) {
        if (bound.size() != params_.size()) throw ConfigError("optimizer: bound parameter count mismatch");
        ++step_count_;
        const double bc1 = 1.0 - std::pow(0.9, static_cast<double>(step_count_));
        const double bc2 = 1.0 - std::pow(0.999, static_cast<double>(step_count_));
        for (std::size_t k = 0; k < params_.size(); ++k) {
            Tensor<T>& p = *params_[k].second;
            const Tensor<T>& g = tape.grad(bound[k]);
            const bool decay = decay_applies(params_[k].first, p.rank());
            if (kind_ == OptimizerKind::adamw) {
                Tensor<T>& m = slot_a_[k];
                Tensor<T>& v = slot_b_[k];
                for (std::size_t i = 0; i < p.size(); ++i) {
                    const double gi = static_cast<double>(g.at(i));
                    const double mi = 0.9 * static_cast<double>(m.at(i)) + 0.1 * gi;
                    const double vi = 0.999 * static_cast<double>(v.at(i)) + 0.001 * gi * gi;
                    m.at(i) = static_cast<T>(mi);
                    v.at(i) = static_cast<T>(vi);
                    const double mhat = mi / bc1;
                    const double vhat = vi / bc2;
                    double update = mhat / (std::sqrt(vhat) + 1e-8);
                    if (decay) update += weight_decay_ * static_cast<double>(p.at(i));
                    p.at(i) = static_cast<T>(static_cast<double>(p.at(i)) - lr * update);
                }
            } else {
                Tensor<T>& vel = slot_a_[k];
                for (std::size_t i = 0; i < p.size(); ++i) {
                    double gi = static_cast<double>(g.at(i));
                    if (decay) gi += weight_decay_ * static_cast<double>(p.at(i));
                    const double vi = 0.9 * static_cast<double>(vel.at(i)) + gi;
                    vel.at(i) = static_cast<T>(vi);
                    p.at(i) = static_cast<T>(static_cast<double>(p.at(i)) - lr * vi);
                }
            }
        }
    }

    std::int64_t step_count() const { return step_count_; }
    OptimizerKind kind() const { return kind_; }

    // State tensors for checkpointing, in parameter order.
    std::vector<std::pair<std::string, const Tensor<T>*>> state() const {
        std::vector<std::pair<std::string, const Tensor<T>*>> out;
        const char* a = kind_ == OptimizerKind::adamw ? "opt.m." : "opt.vel.";
        for (std::size_t k = 0; k < params_.size(); ++k) {
            out.emplace_back(a + params_[k].first, &slot_a_[k]);
        }
        if (kind_ == OptimizerKind::adamw) {
            for (std::size_t k = 0; k < params_.size(); ++k) {
                out.emplace_back("opt.v." + params_[k].first, &slot_b_[k]);
            }
        }
        return out;
    }

private:
    OptimizerKind kind_;
    std::vector<std::pair<std::string, Tensor<T>*>> params_;
    double base_lr_;
    double weight_decay_;
    std::vector<Tensor<T>> slot_a_, slot_b_;  // adam m/v, or sgd velocity in a
    std::int64_t step_count_ = 0;
};

// Linear warmup into a cosine decay to zero.
inline double lr_at_step(double base_lr, std::int64_t step, std::int64_t total_steps, int warmup_steps) {
    if (warmup_steps > 0 && step < warmup_steps) {
        return base_lr * static_cast<double>(step + 1) / static_cast<double>(warmup_steps);
    }
    const auto remaining = static_cast<double>(total_steps - warmup_steps);
    if (remaining <= 0) return base_lr;
    const double t = static_cast<double>(step - warmup_steps) / remaining;
    return base_lr * 0.5 * (1.0 + std::cos(3.14159265358979323846 * std::min(1.0, t)));
}

// ---------------------------------------------------------------------------
// Losses and the loop.
// ---------------------------------------------------------------------------

template <class V>
V cross_entropy_loss(const V& logits, int label) {
    const std::size_t c = plain(logits).cols();
    if (label < 0 || static_cast<std::size_t>(label) >= c) {
        throw ConfigError("cross entropy: label " + std::to_string(label) + " outside [0, " +
                          std::to_string(c) + ")");
    }
    Tensor<typename value_traits<V>::scalar> pick({1, c});
    pick(0, static_cast<std::size_t>(label)) = -1;
    V logp = row_log_softmax(logits);
    return sum_all(mul(logp, lift(logits, std::move(pick))));
}

struct EpochMetrics {
    int epoch = 0;
    double loss = 0.0;
    double accuracy = 0.0;
};

template <class T>
struct TrainResult {
    ModelParams<Tensor<T>> params;
    std::vector<EpochMetrics> curve;
    int epochs_run = 0;
    bool reached_target = false;
    std::int64_t steps = 0;
};

// Deterministic single-worker loop: fixed shuffles per (seed, epoch), fixed
// reduction order, one tape per batch. Aborts with the step index on a
// non-finite loss.
template <class T>
TrainResult<T> train_model(const ModelConfig& mcfg, const TrainConfig& tcfg, const Dataset& data) {
    mcfg.validate();
    tcfg.validate(mcfg);
    if (data.size() == 0) throw EvalError("train: empty dataset");
    if (data.num_classes() != mcfg.num_classes) {
        throw ConfigError("train: dataset has " + std::to_string(data.num_classes()) + " classes, model " +
                          std::to_string(mcfg.num_classes));
    }

    Rng rng(tcfg.seed);
    TrainResult<T> result;
    result.params = init_params<T>(mcfg, rng);
    if (tcfg.ensemble_scale) {
        result.params.ensemble_scale =
            init_ensemble_scale<T>(mcfg.num_paths(), mcfg.final_width(), tcfg.scale_schedule);
    }
    if (tcfg.dynamic) attach_dynamic_scales(result.params, mcfg, *tcfg.dynamic, tcfg.scale_schedule);

    auto entries = param_entries(result.params);
    Optimizer<T> opt(tcfg.optimizer, entries, tcfg.lr, tcfg.weight_decay);

    const PathMask mask = tcfg.mask.value_or(PathMask::all(mcfg.num_paths()));
    const bool scaled = tcfg.ensemble_scale;
    const DownsampleMode mode = mcfg.hierarchical() && (tcfg.mask.has_value() || scaled || tcfg.dynamic)
                                    ? DownsampleMode::per_path
                                    : DownsampleMode::synchronized;
    const int dynamic_k = tcfg.dynamic ? tcfg.dynamic->resolved_split(mcfg) : 0;

    const auto steps_per_epoch =
        static_cast<std::int64_t>((data.size() + tcfg.batch_size - 1) / tcfg.batch_size);
    const std::int64_t total_steps = steps_per_epoch * tcfg.epochs;
    std::int64_t step = 0;

    for (int epoch = 0; epoch < tcfg.epochs; ++epoch) {
        const std::vector<int> order = data.shuffled_indices(rng.stream(1000 + static_cast<std::uint64_t>(epoch)).next_u64());
        double loss_sum = 0;
        int correct = 0;

        for (int start = 0; start < data.size(); start += tcfg.batch_size) {
            const int count = std::min(tcfg.batch_size, data.size() - start);
            Tape<T> tape;
            auto bound = bind_params(tape, result.params);
            std::vector<Var<T>> bound_vars;
            for (auto& [name, v] : param_entries(bound)) {
                (void)name;
                bound_vars.push_back(*v);
            }

            std::optional<Var<T>> batch_loss;
            for (int bi = 0; bi < count; ++bi) {
                const int idx = order[static_cast<std::size_t>(start + bi)];
                const Tensor<T> image = data.image<T>(idx);
                const int label = data.label(idx);

                Var<T> x0 = patch_embed(image, mcfg, bound);
                PathSet<Var<T>> paths = decompose_paths(x0, mcfg, bound, mode, mask);

                Var<T> sample_loss{};
                Var<T> final_logits{};
                if (tcfg.dynamic) {
                    std::optional<Var<T>> early;
                    for (int i = 0; i < dynamic_k; ++i) {
                        Var<T> term = mul_rowvec(paths.entries[static_cast<std::size_t>(i)].value,
                                                 slice_rows(*bound.early_scale, static_cast<std::size_t>(i), 1));
                        early = early ? add(*early, term) : term;
                    }
                    Var<T> logits1 = classify(*early, mcfg, bound);
                    Var<T> x_hat2 = ensemble_combine(paths, mask, bound.full_scale);
                    Var<T> logits2 = classify(x_hat2, mcfg, bound);
                    const double w = tcfg.dynamic->early_loss_weight;
                    sample_loss = add(scale(cross_entropy_loss(logits1, label), tcfg.ce_weight * w),
                                      scale(cross_entropy_loss(logits2, label), tcfg.ce_weight * (1.0 - w)));
                    final_logits = logits2;
                } else {
                    Var<T> x_hat = ensemble_combine(paths, mask, bound.ensemble_scale);
                    Var<T> logits = classify(x_hat, mcfg, bound);
                    sample_loss = scale(cross_entropy_loss(logits, label), tcfg.ce_weight);
                    final_logits = logits;
                }
                if (tcfg.distill && tcfg.kd_weight > 0) {
                    sample_loss =
                        add(sample_loss, scale(total_kd_loss(paths, mcfg, bound, *tcfg.distill), tcfg.kd_weight));
                }
                batch_loss = batch_loss ? add(*batch_loss, sample_loss) : sample_loss;
                if (static_cast<int>(argmax(plain(final_logits))) == label) ++correct;
            }

            Var<T> loss = scale(*batch_loss, 1.0 / static_cast<double>(count));
            const double loss_value = static_cast<double>(plain(loss).at(0));
            if (!std::isfinite(loss_value)) {
                throw DivergenceError("training diverged: non-finite loss at step " + std::to_string(step) +
                                      " (epoch " + std::to_string(epoch) + ")");
            }
            tape.backward(loss);
            opt.step(tape, bound_vars, lr_at_step(tcfg.lr, step, total_steps, tcfg.warmup_steps));
            loss_sum += loss_value * count;
            ++step;
        }

        EpochMetrics m;
        m.epoch = epoch;
        m.loss = loss_sum / static_cast<double>(data.size());
        m.accuracy = static_cast<double>(correct) / static_cast<double>(data.size());
        result.curve.push_back(m);
        result.epochs_run = epoch + 1;
        if (tcfg.target_accuracy > 0 && m.accuracy >= tcfg.target_accuracy) {
            result.reached_target = true;
            break;
        }
    }
    result.steps = step;
    if (tcfg.target_accuracy > 0 && !result.curve.empty()) {
        result.reached_target =
            result.reached_target || result.curve.back().accuracy >= tcfg.target_accuracy;
    }
    return result;
}

// ---------------------------------------------------------------------------
// Evaluation.
// ---------------------------------------------------------------------------

struct EvalResult {
    double accuracy = 0.0;
    int correct = 0;
    int total = 0;
    std::vector<int> per_class_correct;
    std::vector<int> per_class_total;
};

// Top-1 accuracy under the given combine settings. Sample-parallel with a
// fixed-order reduction: per-sample predictions land in preallocated slots,
// so any worker count yields the single-worker result.
template <class T>
EvalResult evaluate(const ModelConfig& cfg, const ModelParams<Tensor<T>>& params, const Dataset& data,
                    const std::optional<PathMask>& mask_opt = std::nullopt, bool use_scale = false,
                    int workers = 1) {
    if (data.size() == 0) throw EvalError("evaluate: empty dataset");
    const PathMask mask = mask_opt.value_or(PathMask::all(cfg.num_paths()));
    if (use_scale && !params.ensemble_scale) throw ConfigError("evaluate: model has no ensemble scale");
    const DownsampleMode mode = cfg.hierarchical() && (mask_opt.has_value() || use_scale)
                                    ? DownsampleMode::per_path
                                    : DownsampleMode::synchronized;

    std::vector<int> predictions(static_cast<std::size_t>(data.size()), -1);
    auto worker = [&](int begin, int end) {
        for (int i = begin; i < end; ++i) {
            const Tensor<T> image = data.image<T>(i);
            Tensor<T> x0 = patch_embed(image, cfg, params);
            PathSet<Tensor<T>> paths = decompose_paths(x0, cfg, params, mode, mask);
            const std::optional<Tensor<T>> no_scale;
            Tensor<T> x_hat = ensemble_combine(paths, mask, use_scale ? params.ensemble_scale : no_scale);
            predictions[static_cast<std::size_t>(i)] = static_cast<int>(argmax(classify(x_hat, cfg, params)));
        }
    };
    const int n = data.size();
    if (workers <= 1) {
        worker(0, n);
    } else {
        std::vector<std::thread> pool;
        const int chunk = (n + workers - 1) / workers;
        for (int w = 0; w < workers; ++w) {
            const int begin = w * chunk, end = std::min(n, begin + chunk);
            if (begin >= end) break;
            pool.emplace_back(worker, begin, end);
        }
        for (auto& t : pool) t.join();
    }

    EvalResult r;
    r.total = n;
    r.per_class_correct.assign(static_cast<std::size_t>(data.num_classes()), 0);
    r.per_class_total.assign(static_cast<std::size_t>(data.num_classes()), 0);
    for (int i = 0; i < n; ++i) {
        const int label = data.label(i);
        r.per_class_total[static_cast<std::size_t>(label)] += 1;
        if (predictions[static_cast<std::size_t>(i)] == label) {
            r.correct += 1;
            r.per_class_correct[static_cast<std::size_t>(label)] += 1;
        }
    }
    r.accuracy = static_cast<double>(r.correct) / static_cast<double>(r.total);
    return r;
}

// Cascade-form evaluation, used to cross-check the full-mask ensemble.
template <class T>
EvalResult evaluate_standard_form(const ModelConfig& cfg, const ModelParams<Tensor<T>>& params,
                                  const Dataset& data) {
    if (data.size() == 0) throw EvalError("evaluate: empty dataset");
    EvalResult r;
    r.total = data.size();
    r.per_class_correct.assign(static_cast<std::size_t>(data.num_classes()), 0);
    r.per_class_total.assign(static_cast<std::size_t>(data.num_classes()), 0);
    for (int i = 0; i < data.size(); ++i) {
        const Tensor<T> image = data.image<T>(i);
        Tensor<T> x0 = patch_embed(image, cfg, params);
        CascadeTrace<Tensor<T>> tr = cascade_forward(x0, cfg, params);
        const int pred = static_cast<int>(argmax(classify(tr.output, cfg, params)));
        const int label = data.label(i);
        r.per_class_total[static_cast<std::size_t>(label)] += 1;
        if (pred == label) {
            r.correct += 1;
            r.per_class_correct[static_cast<std::size_t>(label)] += 1;
        }
    }
    r.accuracy = static_cast<double>(r.correct) / static_cast<double>(r.total);
    return r;
}

}  // namespace pathvit

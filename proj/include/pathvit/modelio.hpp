#pragma once

#include <string>

#include "pathvit/checkpoint.hpp"
#include "pathvit/kvconfig.hpp"
#include "pathvit/train.hpp"

namespace pathvit {

// Config text <-> structs (shared by checkpoints and the CLI).
void model_config_to_kv(const ModelConfig& cfg, KvConfig& kv);
ModelConfig model_config_from_kv(const KvConfig& kv);
TrainConfig train_config_from_kv(const KvConfig& kv, const ModelConfig& cfg);
SyntheticSpec synthetic_spec_from_kv(const KvConfig& kv);

// ---------------------------------------------------------------------------
// Checkpoint assembly. Tensor order is the parameter enumeration order, then
// optimizer state, then metadata tensors; re-saving a loaded checkpoint is
// byte-identical.
// ---------------------------------------------------------------------------

template <class T>
Checkpoint make_checkpoint(const ModelConfig& cfg, const ModelParams<Tensor<T>>& params, KvConfig meta,
                           const Optimizer<T>* opt = nullptr,
                           const std::vector<EpochMetrics>* curve = nullptr) {
    Checkpoint ckpt;
    KvConfig kv;
    model_config_to_kv(cfg, kv);
    kv.set("meta.precision", precision_name(precision_of<T>()));
    if (opt) {
        kv.set("meta.optimizer", optimizer_name(opt->kind()));
        kv.set("meta.opt_step", std::to_string(opt->step_count()));
    }
    for (const auto& [k, v] : meta.entries()) kv.set(k, v);
    ckpt.config_text = kv.to_text();

    for (auto& [name, tensor] : param_entries(params)) {
        ckpt.tensors.emplace_back(name, to_data(*tensor));
    }
    if (opt) {
        for (auto& [name, tensor] : opt->state()) ckpt.tensors.emplace_back(name, to_data(*tensor));
    }
    if (curve && !curve->empty()) {
        Tensor<double> c({curve->size(), 3});
        for (std::size_t i = 0; i < curve->size(); ++i) {
            c(i, 0) = static_cast<double>((*curve)[i].epoch);
            c(i, 1) = (*curve)[i].loss;
            c(i, 2) = (*curve)[i].accuracy;
        }
        ckpt.tensors.emplace_back("meta.loss_curve", to_data(c));
    }
    return ckpt;
}

ModelConfig model_config_from_checkpoint(const Checkpoint& ckpt);

// Rebuilds the weights, matching by name and validating every extent against
// a freshly initialized reference of the same configuration.
template <class T>
ModelParams<Tensor<T>> params_from_checkpoint(const Checkpoint& ckpt, const ModelConfig& cfg) {
    Rng rng(0);
    ModelParams<Tensor<T>> params = init_params<T>(cfg, rng);
    const KvConfig kv = KvConfig::parse_text(ckpt.config_text);
    if (ckpt.find("ensemble_scale")) params.ensemble_scale = Tensor<T>({1, 1});
    if (ckpt.find("dynamic.early_scale")) params.early_scale = Tensor<T>({1, 1});
    if (ckpt.find("dynamic.full_scale")) params.full_scale = Tensor<T>({1, 1});

    visit_params(params, [&ckpt, &cfg](const std::string& name, Tensor<T>& dst) {
        const TensorData* td = ckpt.find(name);
        if (!td) throw EvalError("checkpoint is missing tensor '" + name + "'");
        Tensor<T> loaded = from_data<T>(*td);
        const bool scale_tensor = name == "ensemble_scale" || name == "dynamic.early_scale" ||
                                  name == "dynamic.full_scale";
        if (!scale_tensor && loaded.shape() != dst.shape()) {
            throw EvalError("checkpoint tensor '" + name + "' has shape " + loaded.shape_string() +
                            ", model expects " + dst.shape_string());
        }
        if (scale_tensor &&
            (loaded.rank() != 2 || loaded.cols() != static_cast<std::size_t>(cfg.final_width()))) {
            throw EvalError("checkpoint tensor '" + name + "' has shape " + loaded.shape_string() +
                            ", expected rows x " + std::to_string(cfg.final_width()));
        }
        dst = std::move(loaded);
    });
    return params;
}

}  // namespace pathvit

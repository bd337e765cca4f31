#include "pathvit/modelio.hpp"

#include <sstream>

namespace pathvit {

const char* optimizer_name(OptimizerKind k) {
    return k == OptimizerKind::adamw ? "adamw" : "sgd_momentum";
}

OptimizerKind parse_optimizer(const std::string& s) {
    if (s == "adamw") return OptimizerKind::adamw;
    if (s == "sgd_momentum") return OptimizerKind::sgd_momentum;
    throw ConfigError("unknown optimizer '" + s + "' (expected adamw or sgd_momentum)");
}

void model_config_to_kv(const ModelConfig& cfg, KvConfig& kv) {
    kv.set("model.depth", std::to_string(cfg.depth));
    kv.set("model.embed_dim", std::to_string(cfg.embed_dim));
    kv.set("model.num_heads", std::to_string(cfg.num_heads));
    {
        std::ostringstream o;
        o << cfg.mlp_ratio;
        kv.set("model.mlp_ratio", o.str());
    }
    kv.set("model.patch_size", std::to_string(cfg.patch_size));
    kv.set("model.image_size", std::to_string(cfg.image_size));
    kv.set("model.in_channels", std::to_string(cfg.in_channels));
    kv.set("model.num_classes", std::to_string(cfg.num_classes));
    kv.set("model.token_mode", token_mode_name(cfg.token_mode));
    kv.set("model.stages", cfg.stages_string());
    {
        std::ostringstream o;
        o << cfg.eps;
        kv.set("model.eps", o.str());
    }
}

ModelConfig model_config_from_kv(const KvConfig& kv) {
    ModelConfig cfg;
    cfg.depth = static_cast<int>(kv.get_int_or("model.depth", cfg.depth));
    cfg.embed_dim = static_cast<int>(kv.get_int_or("model.embed_dim", cfg.embed_dim));
    cfg.num_heads = static_cast<int>(kv.get_int_or("model.num_heads", cfg.num_heads));
    cfg.mlp_ratio = kv.get_double_or("model.mlp_ratio", cfg.mlp_ratio);
    cfg.patch_size = static_cast<int>(kv.get_int_or("model.patch_size", cfg.patch_size));
    cfg.image_size = static_cast<int>(kv.get_int_or("model.image_size", cfg.image_size));
    cfg.in_channels = static_cast<int>(kv.get_int_or("model.in_channels", cfg.in_channels));
    cfg.num_classes = static_cast<int>(kv.get_int_or("model.num_classes", cfg.num_classes));
    cfg.token_mode = parse_token_mode(kv.get_string_or("model.token_mode", token_mode_name(cfg.token_mode)));
    cfg.stages = ModelConfig::parse_stages(kv.get_string_or("model.stages", ""));
    cfg.eps = kv.get_double_or("model.eps", cfg.eps);
    cfg.validate();
    return cfg;
}

TrainConfig train_config_from_kv(const KvConfig& kv, const ModelConfig& cfg) {
    TrainConfig t;
    t.epochs = static_cast<int>(kv.get_int_or("train.epochs", t.epochs));
    t.batch_size = static_cast<int>(kv.get_int_or("train.batch_size", t.batch_size));
    t.lr = kv.get_double_or("train.lr", t.lr);
    t.weight_decay = kv.get_double_or("train.weight_decay", t.weight_decay);
    t.optimizer = parse_optimizer(kv.get_string_or("train.optimizer", "adamw"));
    t.seed = static_cast<std::uint64_t>(kv.get_int_or("train.seed", 42));
    t.ce_weight = kv.get_double_or("train.ce_weight", t.ce_weight);
    t.kd_weight = kv.get_double_or("train.kd_weight", t.kd_weight);
    t.warmup_steps = static_cast<int>(kv.get_int_or("train.warmup_steps", t.warmup_steps));
    t.target_accuracy = kv.get_double_or("train.target_accuracy", t.target_accuracy);
    const std::string mask = kv.get_string_or("train.mask", "");
    if (!mask.empty()) t.mask = PathMask::parse(mask);
    t.ensemble_scale = kv.get_bool_or("train.ensemble_scale", false);
    const std::string schedule = kv.get_string_or("train.scale_init", "log_linear");
    if (schedule == "log_linear") {
        t.scale_schedule = ScaleSchedule::log_linear;
    } else if (schedule == "linear") {
        t.scale_schedule = ScaleSchedule::linear;
    } else {
        throw ConfigError("train.scale_init must be log_linear or linear, got '" + schedule + "'");
    }
    const std::string prec = kv.get_string_or("train.precision", "single");
    if (prec == "single") {
        t.precision = Precision::single;
    } else if (prec == "double") {
        t.precision = Precision::fp64;
    } else {
        throw ConfigError("train.precision must be single or double, got '" + prec + "'");
    }

    if (kv.get_bool_or("distill.enabled", false)) {
        DistillConfig d;
        d.delta = static_cast<int>(kv.get_int_or("distill.delta", d.delta));
        d.start = static_cast<int>(kv.get_int_or("distill.start", d.start));
        d.temperature = kv.get_double_or("distill.temperature", d.temperature);
        d.alpha = kv.get_double_list_or("distill.alpha", {});
        d.beta = kv.get_double_list_or("distill.beta", {});
        d.relations_include_class_token = kv.get_bool_or("distill.relations_include_class_token", true);
        t.distill = d;
        if (!kv.has("train.kd_weight")) t.kd_weight = 1.0;
    }
    if (kv.get_bool_or("dynamic.enabled", false)) {
        DynamicConfig d;
        d.split = static_cast<int>(kv.get_int_or("dynamic.split", 0));
        d.threshold = kv.get_double_or("dynamic.threshold", d.threshold);
        d.early_loss_weight = kv.get_double_or("dynamic.early_loss_weight", d.early_loss_weight);
        t.dynamic = d;
    }
    t.validate(cfg);
    return t;
}

SyntheticSpec synthetic_spec_from_kv(const KvConfig& kv) {
    SyntheticSpec s;
    s.count = static_cast<int>(kv.get_int_or("data.samples", s.count));
    s.image_size = static_cast<int>(kv.get_int_or("data.image_size", s.image_size));
    s.seed = static_cast<std::uint64_t>(kv.get_int_or("data.seed", 7));
    s.noise = kv.get_double_or("data.noise", s.noise);
    s.freq_lo = kv.get_double_or("data.freq_lo", s.freq_lo);
    s.freq_hi = kv.get_double_or("data.freq_hi", s.freq_hi);
    return s;
}

ModelConfig model_config_from_checkpoint(const Checkpoint& ckpt) {
    return model_config_from_kv(KvConfig::parse_text(ckpt.config_text));
}

}  // namespace pathvit

#pragma once
// Run configuration: a preset ("desk" or "paper") plus optional JSON
// overrides. Parsing is strict — any key the schema does not define is a
// BadConfig error naming the offending path, so typos never silently fall
// back to defaults. One top-level seed feeds every random stream.

#include <json.hpp>

#include <string>

#include "xda/config.hpp"
#include "xda/corpus.hpp"
#include "xda/errors.hpp"
#include "xda/masking.hpp"
#include "xda/synth.hpp"

namespace xda {

struct RunConfig {
    std::string preset = "desk";
    uint64_t seed = 1;
    unsigned threads = 0; // 0 = hardware concurrency
    std::string out_dir = "runs/out";
    bool f64 = false;
    double threshold = -1.0; // <0 = plain argmax
    ModelConfig model = ModelConfig::desk();
    TrainPlan pretrain_plan = TrainPlan::pretrain_desk();
    TrainPlan finetune_plan = TrainPlan::finetune_desk();
    MaskConfig mask;
    SplitConfig split;
    SynthConfig synth;

    static RunConfig with_preset(const std::string& name) {
        RunConfig rc;
        rc.preset = name;
        if (name == "desk") {
            rc.model = ModelConfig::desk();
            rc.pretrain_plan = TrainPlan::pretrain_desk();
            rc.finetune_plan = TrainPlan::finetune_desk();
        } else if (name == "paper") {
            rc.model = ModelConfig::paper();
            rc.pretrain_plan = TrainPlan::pretrain_paper();
            rc.finetune_plan = TrainPlan::finetune_paper();
        } else {
            throw BadConfig("unknown preset '" + name + "' (expected desk or paper)");
        }
        return rc;
    }

    // Push the single top-level seed into every seeded component.
    void finalize() {
        pretrain_plan.seed = seed;
        finetune_plan.seed = seed;
        synth.seed = seed;
        split.seed = seed;
        model.validate();
        pretrain_plan.validate();
        finetune_plan.validate();
        synth.validate();
    }

    void apply_json(const nlohmann::json& j);
    nlohmann::json to_json() const;
};

namespace detail {

class StrictObject {
public:
    StrictObject(const nlohmann::json& j, std::string path) : path_(std::move(path)) {
        if (!j.is_object()) throw BadConfig("config node '" + path_ + "' must be an object");
        rest_ = j;
    }
    ~StrictObject() = default;

    template <class T>
    void take(const char* key, T& out) {
        auto it = rest_.find(key);
        if (it == rest_.end()) return;
        try {
            out = it->template get<T>();
        } catch (const nlohmann::json::exception&) {
            throw BadConfig("config key '" + path_ + key + "' has the wrong type");
        }
        rest_.erase(it);
    }

    bool take_node(const char* key, nlohmann::json& out) {
        auto it = rest_.find(key);
        if (it == rest_.end()) return false;
        out = *it;
        rest_.erase(it);
        return true;
    }

    void finish() const {
        if (!rest_.empty())
            throw BadConfig("unknown config key '" + path_ + rest_.begin().key() + "'");
    }

private:
    nlohmann::json rest_;
    std::string path_;
};

inline void plan_from_json(const nlohmann::json& j, const std::string& path, TrainPlan& p) {
    StrictObject o(j, path);
    o.take("batch_size", p.batch_size);
    o.take("update_frequency", p.update_frequency);
    o.take("epochs", p.epochs);
    o.take("lr", p.lr);
    o.take("warmup_start", p.warmup_start);
    o.take("dropout", p.dropout);
    o.take("weight_decay", p.weight_decay);
    o.take("beta1", p.beta1);
    o.take("beta2", p.beta2);
    o.take("adam_eps", p.adam_eps);
    o.finish();
}

inline nlohmann::json plan_to_json(const TrainPlan& p) {
    return {{"batch_size", p.batch_size},
            {"update_frequency", p.update_frequency},
            {"epochs", p.epochs},
            {"lr", p.lr},
            {"warmup_start", p.warmup_start},
            {"dropout", p.dropout},
            {"weight_decay", p.weight_decay},
            {"beta1", p.beta1},
            {"beta2", p.beta2},
            {"adam_eps", p.adam_eps}};
}

} // namespace detail

inline void RunConfig::apply_json(const nlohmann::json& j) {
    detail::StrictObject o(j, "");
    std::string preset_name = preset;
    o.take("preset", preset_name);
    if (preset_name != preset) *this = with_preset(preset_name);

    o.take("seed", seed);
    o.take("threads", threads);
    o.take("out_dir", out_dir);
    o.take("f64", f64);
    o.take("threshold", threshold);

    nlohmann::json node;
    if (o.take_node("model", node)) {
        detail::StrictObject m(node, "model.");
        m.take("layers", model.layers);
        m.take("heads", model.heads);
        m.take("d_emb", model.d_emb);
        m.take("d_ff", model.d_ff);
        m.take("seq_len", model.seq_len);
        m.take("mlm_targets", model.mlm_targets);
        m.take("num_classes", model.num_classes);
        m.take("ln_eps", model.ln_eps);
        std::string scale = to_string(model.scale);
        m.take("attn_scale", scale);
        model.scale = attn_scale_from_string(scale);
        m.finish();
    }
    if (o.take_node("pretrain", node)) detail::plan_from_json(node, "pretrain.", pretrain_plan);
    if (o.take_node("finetune", node)) detail::plan_from_json(node, "finetune.", finetune_plan);
    if (o.take_node("mask", node)) {
        detail::StrictObject m(node, "mask.");
        m.take("rate", mask.rate);
        m.take("mask_token_frac", mask.mask_token_frac);
        m.finish();
        if (mask.rate < 0 || mask.rate > 1 || mask.mask_token_frac < 0 || mask.mask_token_frac > 1)
            throw BadConfig("mask rates must lie in [0,1]");
    }
    if (o.take_node("split", node)) {
        detail::StrictObject m(node, "split.");
        m.take("pretrain_frac", split.pretrain_frac);
        m.take("val_frac", split.val_frac);
        m.take("train_frac", split.train_frac);
        m.finish();
    }
    if (o.take_node("synth", node)) {
        detail::StrictObject m(node, "synth.");
        m.take("num_binaries", synth.num_binaries);
        m.take("funcs_min", synth.funcs_min);
        m.take("funcs_max", synth.funcs_max);
        m.take("body_min", synth.body_min);
        m.take("body_max", synth.body_max);
        m.take("pad_min", synth.pad_min);
        m.take("pad_max", synth.pad_max);
        m.take("frameless_prob", synth.frameless_prob);
        m.take("alloc_prob", synth.alloc_prob);
        m.take("dup_prob", synth.dup_prob);
        m.take("jump_table_prob", synth.jump_table_prob);
        m.take("jt_entries_min", synth.jt_entries_min);
        m.take("jt_entries_max", synth.jt_entries_max);
        m.finish();
    }
    o.finish();
    finalize();
}

inline nlohmann::json RunConfig::to_json() const {
    return {{"preset", preset},
            {"seed", seed},
            {"threads", threads},
            {"out_dir", out_dir},
            {"f64", f64},
            {"threshold", threshold},
            {"model",
             {{"layers", model.layers},
              {"heads", model.heads},
              {"d_emb", model.d_emb},
              {"d_ff", model.d_ff},
              {"seq_len", model.seq_len},
              {"mlm_targets", model.mlm_targets},
              {"num_classes", model.num_classes},
              {"ln_eps", model.ln_eps},
              {"attn_scale", to_string(model.scale)}}},
            {"pretrain", detail::plan_to_json(pretrain_plan)},
            {"finetune", detail::plan_to_json(finetune_plan)},
            {"mask", {{"rate", mask.rate}, {"mask_token_frac", mask.mask_token_frac}}},
            {"split",
             {{"pretrain_frac", split.pretrain_frac},
              {"val_frac", split.val_frac},
              {"train_frac", split.train_frac}}},
            {"synth",
             {{"num_binaries", synth.num_binaries},
              {"funcs_min", synth.funcs_min},
              {"funcs_max", synth.funcs_max},
              {"body_min", synth.body_min},
              {"body_max", synth.body_max},
              {"pad_min", synth.pad_min},
              {"pad_max", synth.pad_max},
              {"frameless_prob", synth.frameless_prob},
              {"alloc_prob", synth.alloc_prob},
              {"dup_prob", synth.dup_prob},
              {"jump_table_prob", synth.jump_table_prob},
              {"jt_entries_min", synth.jt_entries_min},
              {"jt_entries_max", synth.jt_entries_max}}}};
}

} // namespace xda

#pragma once
// Architecture and training-plan configuration, with the two built-in
// presets: `desk` (laptop-scale, used by the acceptance runs) and `paper`
// (the full-scale reference configuration).

#include <cstdint>
#include <string>

#include "xda/errors.hpp"

namespace xda {

// How attention scores are scaled before softmax. The reference description
// divides by sqrt(d_emb); the conventional per-head variant divides by
// sqrt(d_emb/heads). Both are supported; paper_d_emb is the default.
enum class AttnScale : uint8_t { paper_d_emb = 0, per_head = 1 };

inline const char* to_string(AttnScale s) {
    return s == AttnScale::paper_d_emb ? "paper_d_emb" : "per_head";
}
inline AttnScale attn_scale_from_string(std::string_view s) {
    if (s == "paper_d_emb") return AttnScale::paper_d_emb;
    if (s == "per_head") return AttnScale::per_head;
    throw BadConfig("unknown attention scale '" + std::string(s) + "'");
}

struct ModelConfig {
    uint32_t layers = 4;
    uint32_t heads = 4;
    uint32_t d_emb = 64;
    uint32_t d_ff = 256;
    uint32_t seq_len = 512;
    uint32_t vocab = 261;        // 256 bytes + 5 reserved tokens
    uint32_t mlm_targets = 256;  // masked-byte head width; 261 also supported
    uint32_t num_classes = 3;    // {S,E,N} or {B,C,D}
    AttnScale scale = AttnScale::paper_d_emb;
    double ln_eps = 1e-5;

    static ModelConfig desk() { return {}; }

    static ModelConfig paper() {
        ModelConfig c;
        c.layers = 12;
        c.heads = 12;
        c.d_emb = 768;
        c.d_ff = 3072;
        return c;
    }

    uint32_t head_dim() const { return d_emb / heads; }

    void validate() const {
        if (!layers || !heads || !d_emb || !d_ff || !seq_len)
            throw BadConfig("model dimensions must all be positive");
        if (d_emb % heads != 0)
            throw BadConfig("d_emb " + std::to_string(d_emb) + " not divisible by heads " +
                            std::to_string(heads));
        if (vocab != 261) throw BadConfig("vocabulary is fixed at 261 tokens");
        if (mlm_targets != 256 && mlm_targets != 261)
            throw BadConfig("mlm_targets must be 256 (bytes) or 261 (full vocabulary)");
        if (num_classes < 2 || num_classes > 8) throw BadConfig("num_classes out of range");
        if (!(ln_eps > 0)) throw BadConfig("ln_eps must be positive");
    }

    // Closed-form trainable-parameter count; kept in sync with the tensor
    // shapes by an exact equality test against the instantiated model.
    uint64_t param_count(bool include_cls_head = true, bool include_mlm_head = true) const {
        const uint64_t d = d_emb, ff = d_ff, dh = head_dim();
        uint64_t n = 0;
        n += static_cast<uint64_t>(vocab) * d; // byte embedding
        n += static_cast<uint64_t>(seq_len) * d; // position embedding
        n += 2 * d * ff + ff + ff * d + d;     // combiner FF over [byte||pos]
        uint64_t per_layer = 0;
        per_layer += 3 * heads * (d * dh + dh); // per-head affine q,k,v
        per_layer += d * ff + ff + ff * d + d;  // f_out
        per_layer += 4 * d;                     // two layer norms
        n += static_cast<uint64_t>(layers) * per_layer;
        if (include_mlm_head) n += d * d + d + d * mlm_targets + mlm_targets;
        if (include_cls_head) n += d * d + d * num_classes; // bias-free
        return n;
    }
};

struct TrainPlan {
    uint32_t batch_size = 8;
    uint32_t update_frequency = 16; // batches accumulated per optimizer step
    uint32_t epochs = 10;
    double lr = 1e-4;
    double warmup_start = 1e-7; // linear warmup across the first epoch's steps
    double dropout = 0.1;
    double weight_decay = 1e-2;
    double beta1 = 0.9, beta2 = 0.98;
    double adam_eps = 1e-6;
    uint64_t seed = 1;

    void validate() const {
        if (!batch_size || !update_frequency || !epochs)
            throw BadConfig("batch_size, update_frequency and epochs must be positive");
        if (!(lr > 0) || !(warmup_start > 0)) throw BadConfig("learning rates must be positive");
        if (dropout < 0 || dropout >= 1) throw BadConfig("dropout must lie in [0,1)");
        if (beta1 < 0 || beta1 >= 1 || beta2 < 0 || beta2 >= 1)
            throw BadConfig("adam betas must lie in [0,1)");
    }

    // Reference-scale plans.
    static TrainPlan pretrain_paper() { return {}; }
    static TrainPlan finetune_paper() {
        TrainPlan p;
        p.update_frequency = 4;
        p.epochs = 30;
        p.lr = 1e-5;
        p.dropout = 0.0;
        return p;
    }

    // Desk-scale plans: a few hundred training sequences need more optimizer
    // steps per epoch and a larger step size than the reference scale.
    // Values frozen after tuning against the acceptance thresholds.
    // Desk plans step once per sequence: on a corpus of a few thousand short
    // sequences the model needs the extra optimizer steps to converge inside
    // ten epochs, and empirically the higher-throughput variants (larger
    // windows, or lr 2e-3 to compensate) stall before the loss cliff where
    // the copy circuits form.
    static TrainPlan pretrain_desk() {
        TrainPlan p;
        p.batch_size = 1;
        p.update_frequency = 1;
        p.epochs = 10;
        p.lr = 1e-3;
        return p;
    }
    static TrainPlan finetune_desk() {
        TrainPlan p;
        p.batch_size = 1;
        p.update_frequency = 1;
        p.epochs = 10;
        p.lr = 1e-3;
        p.dropout = 0.0;
        return p;
    }
};

} // namespace xda

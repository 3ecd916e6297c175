#pragma once
// Training loops. One optimizer step consumes a window of
// batch_size * update_frequency sequences; the window gradient is the mean
// of per-sequence gradients, each computed into its own buffer and summed in
// sequence order. Two consequences, both load-bearing: configurations with
// the same window size produce bitwise-identical runs regardless of how the
// window is partitioned, and the thread count never changes results.
//
// The learning rate warms up linearly across the first epoch's steps, then
// stays at the target. Validation runs at every epoch end; the best
// checkpoint (lowest perplexity / highest F1) is the one persisted.

#include <cstdio>
#include <filesystem>
#include <limits>
#include <string>
#include <vector>

#include "xda/backward.hpp"
#include "xda/checkpoint.hpp"
#include "xda/corpus.hpp"
#include "xda/labels.hpp"
#include "xda/loss.hpp"
#include "xda/masking.hpp"
#include "xda/metrics.hpp"
#include "xda/model.hpp"
#include "xda/optim.hpp"
#include "xda/parallel.hpp"
#include "xda/util.hpp"

namespace xda {

struct TrainLogRow {
    uint32_t epoch = 0;
    uint64_t step = 0;
    double lr = 0, loss = 0;
    double val = 0;
    bool has_val = false;
};

inline std::string trainlog_to_tsv(const std::vector<TrainLogRow>& rows, const char* val_name) {
    std::string out = "# xda-trainlog v1\tcolumns=epoch,step,lr,loss," + std::string(val_name) + "\n";
    for (const auto& r : rows) {
        out += std::to_string(r.epoch) + "\t" + std::to_string(r.step) + "\t" + format_f(r.lr) +
               "\t" + format_f(r.loss) + "\t" + (r.has_val ? format_f(r.val) : std::string("-")) +
               "\n";
    }
    return out;
}

// ---- shared accumulation machinery --------------------------------------

namespace detail {

// Computes per-item gradients into per-index slab buffers and folds them
// into `master` in item order. `work(i, grads)` returns the item's loss.
template <class T, class Work>
inline double accumulate_window(ModelParameters<T>& master, const ModelConfig& cfg, size_t count,
                                unsigned threads, Work&& work) {
    const size_t slots = std::max<size_t>(1, std::min<size_t>(threads, count));
    std::vector<ModelParameters<T>> slab;
    slab.reserve(slots);
    for (size_t s = 0; s < slots; ++s) slab.push_back(ModelParameters<T>::make(cfg));
    std::vector<double> losses(count, 0.0);

    for (size_t base = 0; base < count; base += slots) {
        const size_t chunk = std::min(slots, count - base);
        parallel_for(chunk, threads, [&](size_t j) {
            slab[j].set_zero();
            losses[base + j] = work(base + j, slab[j]);
        });
        for (size_t j = 0; j < chunk; ++j) master.add_scaled(slab[j], T(1));
    }
    double total = 0;
    for (double l : losses) total += l;
    return count ? total / static_cast<double>(count) : 0.0;
}

} // namespace detail

// ---- masked-byte evaluation (perplexity) ---------------------------------

// Validation corruption always uses epoch key 0, so the validation task is
// identical across epochs and perplexities are comparable.
template <class T>
inline double eval_ppl(ModelParameters<T>& params, const std::vector<const SequenceRecord*>& seqs,
                       const MaskConfig& mask_cfg, uint64_t seed, unsigned threads,
                       uint64_t* clamped_out = nullptr) {
    if (seqs.empty()) throw EmptySplit("perplexity evaluation over an empty sequence set");
    struct Partial {
        double sum_log2 = 0;
        uint64_t n = 0, clamped = 0;
    };
    std::vector<Partial> parts(seqs.size());
    parallel_for(seqs.size(), threads, [&](size_t i) {
        const SequenceRecord* rec = seqs[i];
        TokenSeq ts = encode(rec->bytes, static_cast<uint32_t>(rec->bytes.size()));
        MaskedSequence ms = make_masked(ts, mask_cfg, seed, /*epoch=*/0, rec->id);
        if (ms.positions.empty()) return;
        ForwardOptions opt;
        Mat<T> e = encoder_forward(params, ms.input.ids, ms.input.n_real, opt);
        Mat<T> logits = mlm_forward(params, e, ms.positions);
        Mat<T> probs = softmax_rows(logits);
        for (Eigen::Index r = 0; r < probs.rows(); ++r) {
            double p = static_cast<double>(probs(r, ms.targets[static_cast<size_t>(r)]));
            if (p < PplAccumulator::kClamp) {
                p = PplAccumulator::kClamp;
                ++parts[i].clamped;
            }
            parts[i].sum_log2 += std::log2(p);
            ++parts[i].n;
        }
    });
    PplAccumulator acc;
    double sum = 0;
    uint64_t n = 0, clamped = 0;
    for (const auto& p : parts) {
        sum += p.sum_log2;
        n += p.n;
        clamped += p.clamped;
    }
    if (clamped_out) *clamped_out = clamped;
    if (n == 0) throw AllIgnored("no maskable positions in evaluation set");
    return std::pow(2.0, -sum / static_cast<double>(n));
}

// ---- pretraining ----------------------------------------------------------

struct PretrainResult {
    double best_val_ppl = 0;
    uint32_t best_epoch = 0;
    uint64_t skipped_sequences = 0; // too short to receive any mask
    uint64_t val_clamped = 0;
    std::vector<TrainLogRow> log;
    std::filesystem::path best_checkpoint;
};

template <class T>
PretrainResult pretrain(ModelParameters<T>& params, const Corpus& corpus, const MaskConfig& mask_cfg,
                        const TrainPlan& plan, const std::filesystem::path& out_dir,
                        unsigned threads = 1, bool quiet = true) {
    plan.validate();
    params.cfg.validate();
    auto train_seqs = corpus.of_split(Split::pretrain);
    auto val_seqs = corpus.of_split(Split::validation);
    if (train_seqs.empty()) throw EmptySplit("pretrain split is empty");
    if (val_seqs.empty()) throw EmptySplit("validation split is empty");

    const size_t window = static_cast<size_t>(plan.batch_size) * plan.update_frequency;
    const uint64_t steps_per_epoch = (train_seqs.size() + window - 1) / window;
    Schedule sched{plan.warmup_start, plan.lr, steps_per_epoch};
    AdamW<T> opt(params.cfg, plan);
    ModelParameters<T> grads = ModelParameters<T>::make(params.cfg);

    PretrainResult result;
    result.best_val_ppl = std::numeric_limits<double>::infinity();
    result.best_checkpoint = out_dir / "pretrain_best.ckpt";

    for (uint32_t epoch = 0; epoch < plan.epochs; ++epoch) {
        std::vector<size_t> order(train_seqs.size());
        for (size_t i = 0; i < order.size(); ++i) order[i] = i;
        Rng shuffle_rng = Rng::derive(plan.seed, Stream::shuffle, epoch);
        shuffle_rng.shuffle(order);

        double epoch_loss_sum = 0;
        uint64_t epoch_loss_n = 0;
        for (size_t w0 = 0; w0 < order.size(); w0 += window) {
            const size_t w1 = std::min(order.size(), w0 + window);
            // Corrupt first; sequences too short to mask contribute nothing.
            std::vector<std::pair<const SequenceRecord*, MaskedSequence>> items;
            for (size_t k = w0; k < w1; ++k) {
                const SequenceRecord* rec = train_seqs[order[k]];
                TokenSeq ts = encode(rec->bytes, static_cast<uint32_t>(rec->bytes.size()));
                MaskedSequence ms = make_masked(ts, mask_cfg, plan.seed, epoch, rec->id);
                if (ms.positions.empty()) {
                    ++result.skipped_sequences;
                    continue;
                }
                items.emplace_back(rec, std::move(ms));
            }
            if (items.empty()) continue;
            const T inv_w = T(1) / static_cast<T>(items.size());

            grads.set_zero();
            const double loss = detail::accumulate_window<T>(
                grads, params.cfg, items.size(), threads, [&](size_t i, ModelParameters<T>& g) {
                    const auto& [rec, ms] = items[i];
                    ForwardOptions fo;
                    fo.training = true;
                    fo.dropout = plan.dropout;
                    fo.seed = plan.seed;
                    fo.epoch = epoch;
                    fo.sequence = rec->id;
                    Trace<T> tr;
                    Mat<T> e = encoder_forward(params, ms.input.ids, ms.input.n_real, fo, &tr);
                    Mat<T> logits = mlm_forward(params, e, ms.positions, &tr);
                    std::vector<uint16_t> targets(ms.targets.begin(), ms.targets.end());
                    Mat<T> dlogits;
                    const T l = cross_entropy(logits, targets, &dlogits);
                    dlogits *= inv_w;
                    mlm_backward(params, tr, dlogits, g);
                    return static_cast<double>(l);
                });

            const double lr = sched.lr(opt.steps_taken());
            opt.step(params, grads, lr);
            result.log.push_back({epoch + 1, opt.steps_taken(), lr, loss, 0, false});
            epoch_loss_sum += loss * static_cast<double>(items.size());
            epoch_loss_n += items.size();
        }

        uint64_t clamped = 0;
        const double ppl = eval_ppl(params, val_seqs, mask_cfg, plan.seed, threads, &clamped);
        result.val_clamped += clamped;
        result.log.push_back({epoch + 1, opt.steps_taken(), sched.lr(opt.steps_taken()),
                              epoch_loss_n ? epoch_loss_sum / static_cast<double>(epoch_loss_n) : 0.0,
                              ppl, true});
        const bool best = ppl < result.best_val_ppl;
        if (best) {
            result.best_val_ppl = ppl;
            result.best_epoch = epoch + 1;
            CheckpointMeta meta{epoch + 1, ppl, plan.seed, TaskKind::pretrain};
            save_checkpoint(result.best_checkpoint, params, meta);
        }
        if (!quiet)
            std::fprintf(stderr, "pretrain epoch %u/%u  loss %.4f  val_ppl %.4f%s\n", epoch + 1,
                         plan.epochs, epoch_loss_n ? epoch_loss_sum / epoch_loss_n : 0.0, ppl,
                         best ? "  (best)" : "");
    }
    write_file_text(out_dir / "pretrain_log.tsv", trainlog_to_tsv(result.log, "val_ppl"));
    return result;
}

// ---- labeled sequences ----------------------------------------------------

struct LabeledSeq {
    const SequenceRecord* rec = nullptr;
    std::vector<uint8_t> classes; // one per byte; cls::IGNORE excluded from loss
};

// Slices per-section gold classes onto each sequence of a split.
inline std::vector<LabeledSeq> build_labeled_seqs(const Corpus& corpus, Split split,
                                                  const LabelStore& store, TaskKind task,
                                                  LabelFlags* flags = nullptr) {
    const bool func_task = task == TaskKind::function_bounds;
    std::map<std::pair<std::string, std::string>, std::vector<uint8_t>> cache;
    std::map<std::pair<std::string, std::string>, uint64_t> section_len;
    for (const auto& r : corpus.sequences) {
        auto key = std::make_pair(r.binary_id, r.section);
        auto& len = section_len[key];
        len = std::max(len, r.start + r.bytes.size());
    }
    std::vector<LabeledSeq> out;
    for (const auto& r : corpus.sequences) {
        if (r.split != split) continue;
        auto key = std::make_pair(r.binary_id, r.section);
        auto it = cache.find(key);
        if (it == cache.end()) {
            auto sit = store.find(key);
            if (sit == store.end())
                throw LabelMisalignment("no labels for binary '" + r.binary_id + "' section '" +
                                        r.section + "'");
            it = cache.emplace(key, section_classes(sit->second, section_len[key], func_task, flags))
                     .first;
        }
        const auto& sec_classes = it->second;
        if (r.start + r.bytes.size() > sec_classes.size())
            throw LabelMisalignment("sequence extends past labeled section for '" + r.binary_id + "'");
        LabeledSeq ls;
        ls.rec = &r;
        ls.classes.assign(sec_classes.begin() + static_cast<ptrdiff_t>(r.start),
                          sec_classes.begin() + static_cast<ptrdiff_t>(r.start + r.bytes.size()));
        out.push_back(std::move(ls));
    }
    return out;
}

inline std::set<uint8_t> positive_classes(TaskKind task) {
    if (task == TaskKind::function_bounds) return {cls::S, cls::E};
    return {cls::B};
}

// ---- classification inference and evaluation ------------------------------

template <class T>
inline Mat<T> predict_probs(ModelParameters<T>& params, const std::vector<uint8_t>& bytes) {
    TokenSeq ts = encode(bytes, static_cast<uint32_t>(bytes.size()));
    ForwardOptions opt;
    Mat<T> e = encoder_forward(params, ts.ids, ts.n_real, opt);
    return softmax_rows(cls_forward(params, e));
}

template <class T>
inline Prf1 eval_cls_f1(ModelParameters<T>& params, const std::vector<LabeledSeq>& seqs,
                        const std::set<uint8_t>& positives, unsigned threads) {
    std::vector<Prf1> parts(seqs.size());
    parallel_for(seqs.size(), threads, [&](size_t i) {
        Mat<T> probs = predict_probs(params, seqs[i].rec->bytes);
        std::vector<uint8_t> pred(seqs[i].classes.size());
        for (size_t k = 0; k < pred.size(); ++k) {
            Eigen::Index arg = 0;
            probs.row(static_cast<Eigen::Index>(k)).maxCoeff(&arg);
            pred[k] = static_cast<uint8_t>(arg);
        }
        parts[i] = prf1_bytes(pred, seqs[i].classes, positives);
    });
    Prf1 total;
    for (const auto& p : parts) total.merge(p);
    return total;
}

// ---- finetuning ------------------------------------------------------------

struct FinetuneResult {
    double best_val_f1 = 0;
    uint32_t best_epoch = 0;
    std::vector<TrainLogRow> log;
    std::filesystem::path best_checkpoint;
};

template <class T>
FinetuneResult finetune(ModelParameters<T>& params, const Corpus& corpus, const LabelStore& store,
                        TaskKind task, const TrainPlan& plan, const std::filesystem::path& out_dir,
                        unsigned threads = 1, bool quiet = true) {
    plan.validate();
    params.cfg.validate();
    if (task == TaskKind::pretrain) throw BadConfig("finetune task must be func or insn");
    auto train = build_labeled_seqs(corpus, Split::train, store, task);
    auto val = build_labeled_seqs(corpus, Split::validation, store, task);
    if (train.empty()) throw EmptySplit("train split is empty");
    if (val.empty()) throw EmptySplit("validation split is empty");
    const std::set<uint8_t> positives = positive_classes(task);

    const size_t window = static_cast<size_t>(plan.batch_size) * plan.update_frequency;
    const uint64_t steps_per_epoch = (train.size() + window - 1) / window;
    Schedule sched{plan.warmup_start, plan.lr, steps_per_epoch};
    AdamW<T> opt(params.cfg, plan);
    ModelParameters<T> grads = ModelParameters<T>::make(params.cfg);

    FinetuneResult result;
    result.best_val_f1 = -1.0;
    result.best_checkpoint =
        out_dir / (std::string(to_string(task)) + "_best.ckpt");

    for (uint32_t epoch = 0; epoch < plan.epochs; ++epoch) {
        std::vector<size_t> order(train.size());
        for (size_t i = 0; i < order.size(); ++i) order[i] = i;
        Rng shuffle_rng = Rng::derive(plan.seed, Stream::shuffle, epoch);
        shuffle_rng.shuffle(order);

        double epoch_loss_sum = 0;
        uint64_t epoch_loss_n = 0;
        for (size_t w0 = 0; w0 < order.size(); w0 += window) {
            const size_t w1 = std::min(order.size(), w0 + window);
            std::vector<const LabeledSeq*> items;
            for (size_t k = w0; k < w1; ++k) {
                const LabeledSeq* ls = &train[order[k]];
                bool any = false;
                for (uint8_t c : ls->classes) any = any || c != cls::IGNORE;
                if (any) items.push_back(ls);
            }
            if (items.empty()) continue;
            const T inv_w = T(1) / static_cast<T>(items.size());

            grads.set_zero();
            const double loss = detail::accumulate_window<T>(
                grads, params.cfg, items.size(), threads, [&](size_t i, ModelParameters<T>& g) {
                    const LabeledSeq& ls = *items[i];
                    TokenSeq ts = encode(ls.rec->bytes, static_cast<uint32_t>(ls.rec->bytes.size()));
                    ForwardOptions fo;
                    fo.training = true;
                    fo.dropout = plan.dropout;
                    fo.seed = plan.seed;
                    fo.epoch = epoch;
                    fo.sequence = ls.rec->id;
                    Trace<T> tr;
                    Mat<T> e = encoder_forward(params, ts.ids, ts.n_real, fo, &tr);
                    Mat<T> logits = cls_forward(params, e, &tr);

                    std::vector<Eigen::Index> rows;
                    std::vector<uint16_t> targets;
                    for (size_t k = 0; k < ls.classes.size(); ++k) {
                        if (ls.classes[k] == cls::IGNORE) continue;
                        rows.push_back(static_cast<Eigen::Index>(k));
                        targets.push_back(ls.classes[k]);
                    }
                    Mat<T> sub(static_cast<Eigen::Index>(rows.size()), logits.cols());
                    for (size_t k = 0; k < rows.size(); ++k) sub.row(k) = logits.row(rows[k]);
                    Mat<T> dsub;
                    const T l = cross_entropy(sub, targets, &dsub);
                    Mat<T> dlogits = Mat<T>::Zero(logits.rows(), logits.cols());
                    for (size_t k = 0; k < rows.size(); ++k) dlogits.row(rows[k]) = dsub.row(k) * inv_w;
                    cls_backward(params, tr, dlogits, g);
                    return static_cast<double>(l);
                });

            const double lr = sched.lr(opt.steps_taken());
            opt.step(params, grads, lr);
            result.log.push_back({epoch + 1, opt.steps_taken(), lr, loss, 0, false});
            epoch_loss_sum += loss * static_cast<double>(items.size());
            epoch_loss_n += items.size();
        }

        const Prf1 v = eval_cls_f1(params, val, positives, threads);
        const double f1 = v.f1();
        result.log.push_back({epoch + 1, opt.steps_taken(), sched.lr(opt.steps_taken()),
                              epoch_loss_n ? epoch_loss_sum / static_cast<double>(epoch_loss_n) : 0.0,
                              f1, true});
        const bool best = f1 > result.best_val_f1;
        if (best) {
            result.best_val_f1 = f1;
            result.best_epoch = epoch + 1;
            CheckpointMeta meta{epoch + 1, f1, plan.seed, task};
            save_checkpoint(result.best_checkpoint, params, meta);
        }
        if (!quiet)
            std::fprintf(stderr, "finetune[%s] epoch %u/%u  loss %.4f  val_f1 %.4f%s\n",
                         to_string(task), epoch + 1, plan.epochs,
                         epoch_loss_n ? epoch_loss_sum / epoch_loss_n : 0.0, f1, best ? "  (best)" : "");
    }
    write_file_text(out_dir / (std::string(to_string(task)) + "_log.tsv"),
                    trainlog_to_tsv(result.log, "val_f1"));
    return result;
}

} // namespace xda

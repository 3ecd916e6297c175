#pragma once
// Inference over corpus splits: per-byte class probabilities, the decision
// threshold rule, the prediction sidecar format, stitching sequence windows
// back into sections, and the evaluation report.
//
// Threshold rule: the argmax class wins; when the argmax is a positive
// (boundary) class and a threshold tau is set, it is kept only if its
// probability strictly exceeds tau, otherwise the position falls back to the
// task's non-boundary class. tau unset reduces to pure argmax; tau = 1.0
// suppresses every boundary.

#include <json.hpp>

#include <cstdint>
#include <filesystem>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "xda/corpus.hpp"
#include "xda/labels.hpp"
#include "xda/metrics.hpp"
#include "xda/train.hpp"

namespace xda {

inline uint8_t fallback_class(TaskKind task) {
    return task == TaskKind::function_bounds ? cls::N : cls::C;
}

// Decide one position from its probability row.
template <class T>
inline uint8_t decide(const Mat<T>& probs, Eigen::Index row, const std::set<uint8_t>& positives,
                      double tau, uint8_t fallback) {
    Eigen::Index arg = 0;
    probs.row(row).maxCoeff(&arg);
    uint8_t c = static_cast<uint8_t>(arg);
    if (tau >= 0.0 && positives.count(c) &&
        !(static_cast<double>(probs(row, arg)) > tau))
        c = fallback;
    return c;
}

struct SeqPrediction {
    const SequenceRecord* rec = nullptr;
    Mat<float> probs;            // [len, num_classes]
    std::vector<uint8_t> classes; // thresholded decision per byte
};

template <class T>
inline std::vector<SeqPrediction> predict_split(ModelParameters<T>& params, const Corpus& corpus,
                                                Split split, TaskKind task, double tau,
                                                unsigned threads) {
    auto seqs = corpus.of_split(split);
    if (seqs.empty())
        throw EmptySplit(std::string("no sequences in split '") + to_string(split) + "'");
    const std::set<uint8_t> positives = positive_classes(task);
    const uint8_t fb = fallback_class(task);
    std::vector<SeqPrediction> out(seqs.size());
    parallel_for(seqs.size(), threads, [&](size_t i) {
        Mat<T> probs = predict_probs(params, seqs[i]->bytes);
        SeqPrediction sp;
        sp.rec = seqs[i];
        sp.probs = probs.template cast<float>();
        sp.classes.resize(static_cast<size_t>(probs.rows()));
        for (Eigen::Index r = 0; r < probs.rows(); ++r)
            sp.classes[static_cast<size_t>(r)] = decide(probs, r, positives, tau, fb);
        out[i] = std::move(sp);
    });
    return out;
}

// ---- sidecar -------------------------------------------------------------
// # xda-predictions v1\ttask=func\tclasses=S,E,N
// binary\tsection\toffset\tpred\tp<c0>\tp<c1>\tp<c2>

inline const char* class_names(TaskKind task) {
    return task == TaskKind::function_bounds ? "S,E,N" : "B,C,D";
}

inline char class_letter(TaskKind task, uint8_t c) {
    const char* names = task == TaskKind::function_bounds ? "SEN" : "BCD";
    return c < 3 ? names[c] : '?';
}

inline std::string predictions_to_tsv(const std::vector<SeqPrediction>& preds, TaskKind task) {
    std::string out = "# xda-predictions v1\ttask=" + std::string(to_string(task)) +
                      "\tclasses=" + class_names(task) + "\n";
    for (const auto& sp : preds) {
        for (size_t k = 0; k < sp.classes.size(); ++k) {
            out += sp.rec->binary_id + "\t" + sp.rec->section + "\t" +
                   std::to_string(sp.rec->start + k) + "\t";
            out += class_letter(task, sp.classes[k]);
            for (Eigen::Index c = 0; c < sp.probs.cols(); ++c)
                out += "\t" + format_f(static_cast<double>(sp.probs(static_cast<Eigen::Index>(k), c)));
            out += "\n";
        }
    }
    return out;
}

// Reassemble per-section class vectors from windowed predictions.
inline std::map<std::pair<std::string, std::string>, std::vector<uint8_t>> stitch_sections(
    const std::vector<SeqPrediction>& preds) {
    std::map<std::pair<std::string, std::string>, std::vector<uint8_t>> out;
    for (const auto& sp : preds) {
        auto key = std::make_pair(sp.rec->binary_id, sp.rec->section);
        auto& v = out[key];
        const size_t need = sp.rec->start + sp.classes.size();
        if (v.size() < need) v.resize(need, cls::IGNORE);
        for (size_t k = 0; k < sp.classes.size(); ++k) v[sp.rec->start + k] = sp.classes[k];
    }
    return out;
}

// ---- evaluation report -----------------------------------------------------

struct TaskReport {
    TaskKind task = TaskKind::function_bounds;
    double threshold = -1;
    Prf1 byte_pooled;
    std::map<uint8_t, Prf1> byte_per_class;
    Prf1 spans;          // exact span matches (functions or instructions)
    double auc = 0;
    bool auc_defined = false;
    PairFlags pair_flags; // irregular predicted label grammar, counted
    uint64_t positions = 0;
};

template <class T>
TaskReport evaluate_task(ModelParameters<T>& params, const Corpus& corpus, Split split,
                         const LabelStore& store, TaskKind task, double tau, unsigned threads) {
    auto preds = predict_split(params, corpus, split, task, tau, threads);
    auto gold_seqs = build_labeled_seqs(corpus, split, store, task);
    if (gold_seqs.size() != preds.size())
        throw LengthMismatch("prediction/gold sequence count mismatch");

    TaskReport rep;
    rep.task = task;
    rep.threshold = tau;
    const std::set<uint8_t> positives = positive_classes(task);

    std::vector<double> scores;
    std::vector<uint8_t> roc_labels;
    for (size_t i = 0; i < preds.size(); ++i) {
        const auto& pred = preds[i];
        const auto& gold = gold_seqs[i];
        if (pred.classes.size() != gold.classes.size())
            throw LengthMismatch("prediction/gold length mismatch in sequence " +
                                 std::to_string(pred.rec->id));
        rep.byte_pooled.merge(prf1_bytes(pred.classes, gold.classes, positives));
        for (uint8_t c : positives)
            rep.byte_per_class[c].merge(prf1_bytes(pred.classes, gold.classes, {c}));
        for (size_t k = 0; k < pred.classes.size(); ++k) {
            if (gold.classes[k] == cls::IGNORE) continue;
            double s = 0;
            for (uint8_t c : positives) s += static_cast<double>(pred.probs(static_cast<Eigen::Index>(k), c));
            scores.push_back(s);
            roc_labels.push_back(positives.count(gold.classes[k]) ? 1 : 0);
            ++rep.positions;
        }
    }

    // Span-level: stitch windows into sections, pair/segment both sides.
    auto stitched = stitch_sections(preds);
    std::map<std::pair<std::string, std::string>, std::vector<uint8_t>> gold_sections;
    for (size_t i = 0; i < gold_seqs.size(); ++i) {
        auto key = std::make_pair(gold_seqs[i].rec->binary_id, gold_seqs[i].rec->section);
        auto& v = gold_sections[key];
        const size_t need = gold_seqs[i].rec->start + gold_seqs[i].classes.size();
        if (v.size() < need) v.resize(need, cls::IGNORE);
        for (size_t k = 0; k < gold_seqs[i].classes.size(); ++k)
            v[gold_seqs[i].rec->start + k] = gold_seqs[i].classes[k];
    }
    for (const auto& [key, pred_classes] : stitched) {
        const auto& gold_classes = gold_sections.at(key);
        if (task == TaskKind::function_bounds) {
            auto p = pairs_from_labels(pred_classes, &rep.pair_flags);
            PairFlags gf;
            auto g = pairs_from_labels(gold_classes, &gf);
            rep.spans.merge(prf1_spans(p, g));
        } else {
            auto p = spans_from_insn_labels(pred_classes);
            auto g = spans_from_insn_labels(gold_classes);
            rep.spans.merge(prf1_spans(p.instructions, g.instructions));
        }
    }

    try {
        rep.auc = roc_curve(scores, roc_labels).auc;
        rep.auc_defined = true;
    } catch (const DegenerateGold&) {
        rep.auc_defined = false;
    }
    return rep;
}

inline nlohmann::json prf1_json(const Prf1& p) {
    return {{"tp", p.tp},        {"fp", p.fp},       {"fn", p.fn},
            {"precision", p.precision()}, {"recall", p.recall()}, {"f1", p.f1()}};
}

inline nlohmann::json report_json(const TaskReport& rep) {
    nlohmann::json per_class;
    for (const auto& [c, v] : rep.byte_per_class)
        per_class[std::string(1, class_letter(rep.task, c))] = prf1_json(v);
    nlohmann::json j{{"task", to_string(rep.task)},
                     {"threshold", rep.threshold},
                     {"positions", rep.positions},
                     {"byte", prf1_json(rep.byte_pooled)},
                     {"byte_per_class", per_class},
                     {"spans", prf1_json(rep.spans)},
                     {"pair_flags",
                      {{"implicit_close", rep.pair_flags.implicit_close},
                       {"stray_end", rep.pair_flags.stray_end},
                       {"open_at_end", rep.pair_flags.open_at_end}}}};
    if (rep.auc_defined)
        j["auc"] = rep.auc;
    else
        j["auc"] = nullptr;
    return j;
}

} // namespace xda

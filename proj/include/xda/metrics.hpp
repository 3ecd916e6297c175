#pragma once
// Evaluation metrics. Precision/recall/F1 are micro-averaged over the
// positive classes (S and E for functions, B for instructions); divisions by
// zero yield 0 by definition. The ROC sweep walks unique score thresholds
// from high to low, grouping ties, and integrates with the trapezoid rule.

#include <algorithm>
#include <cstdint>
#include <limits>
#include <set>
#include <string>
#include <vector>

#include "xda/errors.hpp"

namespace xda {

struct Prf1 {
    uint64_t tp = 0, fp = 0, fn = 0;

    double precision() const { return tp + fp ? static_cast<double>(tp) / static_cast<double>(tp + fp) : 0.0; }
    double recall() const { return tp + fn ? static_cast<double>(tp) / static_cast<double>(tp + fn) : 0.0; }
    double f1() const {
        const double p = precision(), r = recall();
        return p + r > 0 ? 2.0 * p * r / (p + r) : 0.0;
    }
    void merge(const Prf1& o) {
        tp += o.tp;
        fp += o.fp;
        fn += o.fn;
    }
};

// Byte-level counts over positive classes. IGNORE-labeled gold positions are
// excluded entirely.
inline Prf1 prf1_bytes(const std::vector<uint8_t>& pred, const std::vector<uint8_t>& gold,
                       const std::set<uint8_t>& positives) {
    if (pred.size() != gold.size())
        throw LengthMismatch("prediction length " + std::to_string(pred.size()) +
                             " vs gold length " + std::to_string(gold.size()));
    Prf1 out;
    for (size_t i = 0; i < pred.size(); ++i) {
        if (gold[i] == 255) continue; // IGNORE
        const bool gp = positives.count(gold[i]) != 0;
        const bool pp = positives.count(pred[i]) != 0;
        if (pp && gp && pred[i] == gold[i]) ++out.tp;
        else if (pp && (!gp || pred[i] != gold[i])) ++out.fp;
        if (gp && pred[i] != gold[i]) ++out.fn;
    }
    return out;
}

// Exact-span matching (same start and end): used for pair-level reporting.
inline Prf1 prf1_spans(const std::vector<std::pair<uint32_t, uint32_t>>& pred,
                       const std::vector<std::pair<uint32_t, uint32_t>>& gold) {
    std::set<std::pair<uint32_t, uint32_t>> gs(gold.begin(), gold.end());
    Prf1 out;
    for (const auto& s : pred) {
        if (gs.count(s)) ++out.tp;
        else ++out.fp;
    }
    out.fn = gold.size() - out.tp;
    return out;
}

struct RocPoint {
    double fpr = 0, tpr = 0, threshold = 0;
};

struct RocCurve {
    std::vector<RocPoint> points;
    double auc = 0;
};

// scores[i] is the model's positive-class score for item i; labels[i] is the
// gold positive flag. Ties share one sweep step. All-positive or
// all-negative gold is DegenerateGold — there is no curve to draw.
inline RocCurve roc_curve(const std::vector<double>& scores, const std::vector<uint8_t>& labels) {
    if (scores.size() != labels.size())
        throw LengthMismatch("scores (" + std::to_string(scores.size()) + ") vs labels (" +
                             std::to_string(labels.size()) + ")");
    uint64_t pos = 0, neg = 0;
    for (uint8_t l : labels) (l ? pos : neg)++;
    if (pos == 0 || neg == 0)
        throw DegenerateGold("ROC needs both classes present; have " + std::to_string(pos) +
                             " positives and " + std::to_string(neg) + " negatives");

    std::vector<size_t> order(scores.size());
    for (size_t i = 0; i < order.size(); ++i) order[i] = i;
    std::stable_sort(order.begin(), order.end(),
                     [&](size_t a, size_t b) { return scores[a] > scores[b]; });

    RocCurve out;
    out.points.push_back({0.0, 0.0, std::numeric_limits<double>::infinity()});
    uint64_t tp = 0, fp = 0;
    size_t i = 0;
    while (i < order.size()) {
        const double s = scores[order[i]];
        while (i < order.size() && scores[order[i]] == s) {
            (labels[order[i]] ? tp : fp)++;
            ++i;
        }
        out.points.push_back({static_cast<double>(fp) / static_cast<double>(neg),
                              static_cast<double>(tp) / static_cast<double>(pos), s});
    }
    double auc = 0;
    for (size_t k = 1; k < out.points.size(); ++k) {
        const auto& a = out.points[k - 1];
        const auto& b = out.points[k];
        auc += (b.fpr - a.fpr) * (a.tpr + b.tpr) * 0.5;
    }
    out.auc = auc;
    return out;
}

} // namespace xda

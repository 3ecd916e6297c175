#pragma once
// Cross-entropy in natural log with mean normalization over contributing
// positions, plus the base-2 perplexity accumulator used for evaluation.
// Probabilities below 1e-12 are clamped (and counted) rather than allowed to
// produce infinities.

#include <cmath>
#include <cstdint>
#include <vector>

#include "xda/errors.hpp"
#include "xda/tensor.hpp"

namespace xda {

// Mean cross-entropy over all rows; each row's target is an index into its
// columns. Optionally emits d(loss)/d(logits) for the same mean reduction.
template <class T>
T cross_entropy(const Mat<T>& logits, const std::vector<uint16_t>& targets, Mat<T>* dlogits = nullptr) {
    const Eigen::Index n = logits.rows(), c = logits.cols();
    if (n == 0) throw AllIgnored("cross-entropy over zero positions");
    if (static_cast<Eigen::Index>(targets.size()) != n)
        throw LengthMismatch("targets (" + std::to_string(targets.size()) + ") vs logits rows (" +
                             std::to_string(n) + ")");
    if (dlogits) dlogits->resize(n, c);
    T total = T(0);
    const T inv_n = T(1) / static_cast<T>(n);
    for (Eigen::Index i = 0; i < n; ++i) {
        const uint16_t t = targets[static_cast<size_t>(i)];
        if (static_cast<Eigen::Index>(t) >= c)
            throw LengthMismatch("target class " + std::to_string(t) + " outside " +
                                 std::to_string(c) + " logits");
        T mx = logits.row(i).maxCoeff();
        T sum = T(0);
        for (Eigen::Index j = 0; j < c; ++j) sum += std::exp(logits(i, j) - mx);
        const T logz = std::log(sum) + mx;
        total += logz - logits(i, t);
        if (dlogits) {
            for (Eigen::Index j = 0; j < c; ++j)
                (*dlogits)(i, j) = std::exp(logits(i, j) - logz) * inv_n;
            (*dlogits)(i, t) -= inv_n;
        }
    }
    return total * inv_n;
}

// Row-wise stable softmax for evaluation-side probability readout.
template <class T>
Mat<T> softmax_rows(const Mat<T>& logits) {
    Mat<T> p = logits;
    for (Eigen::Index i = 0; i < p.rows(); ++i) {
        const T mx = p.row(i).maxCoeff();
        T sum = T(0);
        for (Eigen::Index j = 0; j < p.cols(); ++j) {
            p(i, j) = std::exp(p(i, j) - mx);
            sum += p(i, j);
        }
        p.row(i) /= sum;
    }
    return p;
}

// Perplexity = 2^( -(1/N) * sum log2 p(target) ). A model that always
// assigns probability 1 scores exactly 1; uniform byte guessing scores
// exactly 256.
class PplAccumulator {
public:
    static constexpr double kClamp = 1e-12;

    void add(double prob_of_target) {
        if (prob_of_target < kClamp) {
            prob_of_target = kClamp;
            ++clamped_;
        }
        sum_log2_ += std::log2(prob_of_target);
        ++count_;
    }

    double value() const {
        if (count_ == 0) throw AllIgnored("perplexity over zero predictions");
        return std::pow(2.0, -sum_log2_ / static_cast<double>(count_));
    }

    uint64_t count() const { return count_; }
    uint64_t clamped() const { return clamped_; } // probabilities that hit the floor

private:
    double sum_log2_ = 0.0;
    uint64_t count_ = 0;
    uint64_t clamped_ = 0;
};

} // namespace xda

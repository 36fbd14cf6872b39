#pragma once

#include <array>
#include <cstdint>
#include <vector>

#include "adprog/data_model.hpp"

namespace adprog {

// 3x3 contingency counts: rows = true class, columns = predicted class.
struct ConfusionMatrix {
    std::array<std::array<std::int64_t, 3>, 3> counts{};

    void add(Diagnosis truth, Diagnosis pred) {
        ++counts[static_cast<std::size_t>(severity(truth))]
                [static_cast<std::size_t>(severity(pred))];
    }
    std::int64_t at(int t, int p) const {
        return counts[static_cast<std::size_t>(t)][static_cast<std::size_t>(p)];
    }
    std::int64_t total() const;
    std::int64_t row_total(int t) const;
    std::int64_t col_total(int p) const;
};

// Metric with a degeneracy flag: a zero denominator yields value 0 and
// degenerate=true instead of a fault, so small per-group tables always render.
struct MetricValue {
    double value = 0.0;
    bool degenerate = false;
};

MetricValue sensitivity(const ConfusionMatrix& cm, int cls);   // TP/(TP+FN)
MetricValue specificity(const ConfusionMatrix& cm, int cls);   // TN/(TN+FP)
// Balanced classification accuracy: mean over classes of (Sens+Spec)/2.
MetricValue bca(const ConfusionMatrix& cm);
// Unweighted mean of per-class F1 (a class with an undefined F1 contributes 0).
MetricValue macro_f1(const ConfusionMatrix& cm);
MetricValue accuracy(const ConfusionMatrix& cm);

// Multiclass AUC: average over unordered class pairs {i,j} of
// (A(i|j) + A(j|i))/2, where A(i|j) is the rank AUC (midranks for ties) of
// the class-i probability restricted to samples of classes i and j. Pairs
// with an absent class are skipped and the divisor adjusted (degenerate set
// when any pair was skipped; value 0 and degenerate when none remain).
MetricValue mauc(const std::vector<std::array<double, 3>>& probs,
                 const std::vector<Diagnosis>& labels);

// Argmax with ties broken toward the lower severity class.
Diagnosis argmax_class(const std::array<double, 3>& probs);

}  // namespace adprog

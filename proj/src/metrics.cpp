#include "adprog/metrics.hpp"

#include <algorithm>

#include "adprog/errors.hpp"

namespace adprog {

std::int64_t ConfusionMatrix::total() const {
    std::int64_t n = 0;
    for (const auto& row : counts)
        for (auto c : row) n += c;
    return n;
}

std::int64_t ConfusionMatrix::row_total(int t) const {
    std::int64_t n = 0;
    for (auto c : counts[static_cast<std::size_t>(t)]) n += c;
    return n;
}

std::int64_t ConfusionMatrix::col_total(int p) const {
    std::int64_t n = 0;
    for (const auto& row : counts) n += row[static_cast<std::size_t>(p)];
    return n;
}

MetricValue sensitivity(const ConfusionMatrix& cm, int cls) {
    const std::int64_t tp = cm.at(cls, cls);
    const std::int64_t denom = cm.row_total(cls);  // TP + FN
    if (denom == 0) return {0.0, true};
    return {static_cast<double>(tp) / static_cast<double>(denom), false};
}

MetricValue specificity(const ConfusionMatrix& cm, int cls) {
    // TN = everything that is neither in the class's row nor column.
    const std::int64_t fp = cm.col_total(cls) - cm.at(cls, cls);
    const std::int64_t tn = cm.total() - cm.row_total(cls) - fp;
    const std::int64_t denom = tn + fp;
    if (denom == 0) return {0.0, true};
    return {static_cast<double>(tn) / static_cast<double>(denom), false};
}

MetricValue bca(const ConfusionMatrix& cm) {
    MetricValue out;
    double sum = 0.0;
    for (int c = 0; c < 3; ++c) {
        const MetricValue sens = sensitivity(cm, c);
        const MetricValue spec = specificity(cm, c);
        out.degenerate = out.degenerate || sens.degenerate || spec.degenerate;
        sum += (sens.value + spec.value) / 2.0;
    }
    out.value = sum / 3.0;
    return out;
}

MetricValue macro_f1(const ConfusionMatrix& cm) {
    MetricValue out;
    double sum = 0.0;
    for (int c = 0; c < 3; ++c) {
        const std::int64_t tp = cm.at(c, c);
        const std::int64_t denom = cm.row_total(c) + cm.col_total(c);  // 2TP+FP+FN
        if (denom == 0) {
            out.degenerate = true;
            continue;  // contributes 0
        }
        sum += 2.0 * static_cast<double>(tp) / static_cast<double>(denom);
    }
    out.value = sum / 3.0;
    return out;
}

MetricValue accuracy(const ConfusionMatrix& cm) {
    const std::int64_t n = cm.total();
    if (n == 0) return {0.0, true};
    std::int64_t diag = 0;
    for (int c = 0; c < 3; ++c) diag += cm.at(c, c);
    return {static_cast<double>(diag) / static_cast<double>(n), false};
}

namespace {

// Rank AUC of class i against class j using the class-i probability as the
// score. Midranks resolve ties.
double pairwise_auc(const std::vector<std::array<double, 3>>& probs,
                    const std::vector<Diagnosis>& labels, int i, int j) {
    struct Scored {
        double score;
        bool is_i;
    };
    std::vector<Scored> pool;
    for (std::size_t s = 0; s < labels.size(); ++s) {
        const int cls = severity(labels[s]);
        if (cls == i) pool.push_back({probs[s][static_cast<std::size_t>(i)], true});
        else if (cls == j) pool.push_back({probs[s][static_cast<std::size_t>(i)], false});
    }
    std::sort(pool.begin(), pool.end(),
              [](const Scored& a, const Scored& b) { return a.score < b.score; });
    double rank_sum_i = 0.0;
    std::int64_t n_i = 0, n_j = 0;
    std::size_t k = 0;
    while (k < pool.size()) {
        std::size_t e = k;
        while (e + 1 < pool.size() && pool[e + 1].score == pool[k].score) ++e;
        // Positions k..e share the midrank (1-based ranks).
        const double midrank = (static_cast<double>(k + 1) + static_cast<double>(e + 1)) / 2.0;
        for (std::size_t t = k; t <= e; ++t) {
            if (pool[t].is_i) {
                rank_sum_i += midrank;
                ++n_i;
            } else {
                ++n_j;
            }
        }
        k = e + 1;
    }
    return (rank_sum_i - static_cast<double>(n_i) * static_cast<double>(n_i + 1) / 2.0) /
           (static_cast<double>(n_i) * static_cast<double>(n_j));
}

}  // namespace

MetricValue mauc(const std::vector<std::array<double, 3>>& probs,
                 const std::vector<Diagnosis>& labels) {
    if (probs.size() != labels.size())
        throw ContractError("mauc: probability and label counts differ");
    std::array<std::int64_t, 3> class_count{};
    for (auto l : labels) ++class_count[static_cast<std::size_t>(severity(l))];

    MetricValue out;
    double sum = 0.0;
    int pairs = 0;
    for (int i = 0; i < 3; ++i) {
        for (int j = i + 1; j < 3; ++j) {
            if (class_count[static_cast<std::size_t>(i)] == 0 ||
                class_count[static_cast<std::size_t>(j)] == 0) {
                out.degenerate = true;  // pair skipped, divisor adjusted
                continue;
            }
            sum += (pairwise_auc(probs, labels, i, j) + pairwise_auc(probs, labels, j, i)) / 2.0;
            ++pairs;
        }
    }
    if (pairs == 0) return {0.0, true};
    out.value = sum / static_cast<double>(pairs);
    return out;
}

Diagnosis argmax_class(const std::array<double, 3>& probs) {
    int best = 0;
    for (int c = 1; c < 3; ++c)
        if (probs[static_cast<std::size_t>(c)] > probs[static_cast<std::size_t>(best)]) best = c;
    return static_cast<Diagnosis>(best);
}

}  // namespace adprog

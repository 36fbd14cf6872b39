#pragma once

#include <array>
#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "adprog/metrics.hpp"
#include "adprog/trainer.hpp"

namespace adprog {

enum class SubsetKind { Overall, Stable, Converter };

const char* to_string(SubsetKind s);

// Sequence lengths run 2..9 visits, so group labels run 1..8.
inline constexpr int kMaxGroup = 8;

// Metrics of one (subset, group) cell. group 0 pools all groups. A cell with
// no sequences is flagged absent rather than reported as zeros.
struct MetricRow {
    SubsetKind subset = SubsetKind::Overall;
    int group = 0;
    std::int64_t n = 0;
    bool absent = false;
    ConfusionMatrix cm;
    MetricValue mauc_v, bca_v, macro_f1_v, accuracy_v;
    std::array<MetricValue, 3> sens{};
    std::array<MetricValue, 3> spec{};
};

struct Prediction {
    int seq_id = -1;
    SequenceLabel label = SequenceLabel::stable;
    int group = 0;
    Diagnosis truth = Diagnosis::CN;
    Diagnosis pred = Diagnosis::CN;
    std::array<double, 3> probs{};
};

// One fold's evaluation: a single prediction set feeds every subset and
// group breakdown (3 subsets x (pooled + groups 1..8) rows).
struct FoldEval {
    int fold_index = 0;
    std::vector<Prediction> predictions;
    std::vector<MetricRow> rows;
};

FoldEval evaluate_predictions(int fold_index, const std::vector<EncodedSeq>& seqs,
                              const std::vector<SeqMeta>& meta,
                              const std::vector<std::array<double, 3>>& probs);

// Predicts on the fold's test split, then breaks the results down.
FoldEval evaluate_fold(const TrainedModel& m, const FoldData& fold);

// Stability baseline: probability one on the last input visit's diagnosis —
// always right on stable sequences, always wrong on converters.
std::vector<std::array<double, 3>> stability_probs(const std::vector<EncodedSeq>& seqs);

const MetricRow* find_row(const FoldEval& ev, SubsetKind subset, int group);

// Plain mean and sample standard deviation (n-1; 0 when n < 2) of the stored
// fold values.
struct Aggregate {
    double mean = 0.0;
    double stddev = 0.0;
    int n = 0;
};

Aggregate aggregate(const std::vector<double>& xs);

struct CvRun {
    std::vector<FoldEval> folds;
};

// Called once per finished fold, before its model is discarded.
using FoldCallback = std::function<void(const TrainedModel&, const FoldData&, const FoldEval&)>;

// Full cross-validation: prepare, train, and evaluate every fold.
CvRun run_cv(const std::vector<VisitSequence>& sequences, const std::vector<DatasetSplit>& folds,
             const TrainConfig& cfg, const ChannelMask& mask, const FoldCallback& on_fold = {});

// Per-fold values of one metric ("bca", "mauc", "macro_f1", "accuracy") in
// one cell, for cross-model statistical tests. Absent cells are skipped.
std::vector<double> fold_values(const CvRun& run, SubsetKind subset, int group,
                                const std::string& metric);

}  // namespace adprog

#pragma once

#include <string>
#include <vector>

#include "adprog/evaluate.hpp"

namespace adprog {

enum class AblationKind { RemoveCategory, IsolateCategory, HistoryLastK };

const char* to_string(AblationKind k);

struct AblationSpec {
    AblationKind kind = AblationKind::RemoveCategory;
    FeatureCategory category = FeatureCategory::Cognitive;  // category kinds only
    int k = 0;                                              // history kind only, >= 1

    std::string detail() const;  // "cognitive" | "mri" | "biomarker" | "k=2"
    std::string name() const;    // "remove_cognitive", "isolate_mri", "history_last_2"
};

// Channel mask a spec trains and evaluates with. Diagnosis and time channels
// are always retained; history truncation keeps every feature channel.
ChannelMask mask_for(const AblationSpec& spec);

// Keeps the most recent k input visits plus the target visit, recomputing
// the group label and the months-to-target channel. Sequences with at most
// k input visits pass through unchanged; the target visit, the label, and
// the sequence id are never altered.
VisitSequence truncate_history(const VisitSequence& seq, int k);
std::vector<VisitSequence> truncate_all(const std::vector<VisitSequence>& seqs, int k);

// 100 x (ablated - baseline)/baseline; faults unless baseline > 0.
double pct_change(double ablated, double baseline);

// The full suite: remove each category, isolate each category, and history
// truncation at k = 1, 2, 4.
std::vector<AblationSpec> default_ablations();

struct AblationRow {
    AblationSpec spec;
    double mean_bca = 0.0;
    double std_bca = 0.0;
    double pct_vs_baseline = 0.0;
};

struct AblationReport {
    double baseline_mean_bca = 0.0;
    double baseline_std_bca = 0.0;
    CvRun baseline;
    std::vector<AblationRow> rows;
    std::vector<CvRun> runs;  // aligned with rows
};

// One full cross-validation run per spec, plus the all-channel baseline, on
// the same fold assignment throughout so percent changes isolate the
// ablation's effect. BCA is taken from the pooled overall cell of each fold.
AblationReport run_ablation_suite(const std::vector<VisitSequence>& sequences,
                                  const std::vector<DatasetSplit>& folds, const TrainConfig& cfg,
                                  const std::vector<AblationSpec>& specs,
                                  const FoldCallback& on_fold = {});

}  // namespace adprog

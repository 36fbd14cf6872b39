#include "adprog/ablation.hpp"

#include <algorithm>
#include <utility>

#include "adprog/errors.hpp"
#include "adprog/preprocess.hpp"

namespace adprog {

const char* to_string(AblationKind k) {
    switch (k) {
        case AblationKind::RemoveCategory: return "remove_category";
        case AblationKind::IsolateCategory: return "isolate_category";
        case AblationKind::HistoryLastK: return "history_last_k";
    }
    return "?";
}

namespace {

std::string lower_category(FeatureCategory c) {
    switch (c) {
        case FeatureCategory::Cognitive: return "cognitive";
        case FeatureCategory::MRI: return "mri";
        case FeatureCategory::Biomarker: return "biomarker";
    }
    return "?";
}

}  // namespace

std::string AblationSpec::detail() const {
    if (kind == AblationKind::HistoryLastK) return "k=" + std::to_string(k);
    return lower_category(category);
}

std::string AblationSpec::name() const {
    switch (kind) {
        case AblationKind::RemoveCategory: return "remove_" + lower_category(category);
        case AblationKind::IsolateCategory: return "isolate_" + lower_category(category);
        case AblationKind::HistoryLastK: return "history_last_" + std::to_string(k);
    }
    return "?";
}

ChannelMask mask_for(const AblationSpec& spec) {
    switch (spec.kind) {
        case AblationKind::RemoveCategory: return ChannelMask::without(spec.category);
        case AblationKind::IsolateCategory: return ChannelMask::only(spec.category);
        case AblationKind::HistoryLastK: return ChannelMask::all();
    }
    throw ContractError("unknown ablation kind");
}

VisitSequence truncate_history(const VisitSequence& seq, int k) {
    if (k < 1) throw ContractError("history truncation requires k >= 1");
    const auto n_inputs = static_cast<int>(seq.visits.size()) - 1;
    if (n_inputs <= k) return seq;

    VisitSequence out = seq;
    out.visits.assign(seq.visits.end() - (k + 1), seq.visits.end());
    out.group = static_cast<int>(out.visits.size()) - 1;
    add_months_to_final(out.visits);
    return out;
}

std::vector<VisitSequence> truncate_all(const std::vector<VisitSequence>& seqs, int k) {
    std::vector<VisitSequence> out;
    out.reserve(seqs.size());
    for (const auto& s : seqs) out.push_back(truncate_history(s, k));
    return out;
}

double pct_change(double ablated, double baseline) {
    if (!(baseline > 0.0)) throw ContractError("percent change requires a positive baseline");
    return 100.0 * (ablated - baseline) / baseline;
}

std::vector<AblationSpec> default_ablations() {
    std::vector<AblationSpec> specs;
    for (const auto c : {FeatureCategory::Cognitive, FeatureCategory::MRI,
                         FeatureCategory::Biomarker})
        specs.push_back(AblationSpec{AblationKind::RemoveCategory, c, 0});
    for (const auto c : {FeatureCategory::Cognitive, FeatureCategory::MRI,
                         FeatureCategory::Biomarker})
        specs.push_back(AblationSpec{AblationKind::IsolateCategory, c, 0});
    for (const int k : {1, 2, 4})
        specs.push_back(AblationSpec{AblationKind::HistoryLastK, FeatureCategory::Cognitive, k});
    return specs;
}

namespace {

Aggregate overall_bca(const CvRun& run) {
    return aggregate(fold_values(run, SubsetKind::Overall, 0, "bca"));
}

}  // namespace

AblationReport run_ablation_suite(const std::vector<VisitSequence>& sequences,
                                  const std::vector<DatasetSplit>& folds, const TrainConfig& cfg,
                                  const std::vector<AblationSpec>& specs,
                                  const FoldCallback& on_fold) {
    AblationReport report;
    report.baseline = run_cv(sequences, folds, cfg, ChannelMask::all(), on_fold);
    const auto base = overall_bca(report.baseline);
    report.baseline_mean_bca = base.mean;
    report.baseline_std_bca = base.stddev;

    for (const auto& spec : specs) {
        const auto mask = mask_for(spec);
        CvRun run = spec.kind == AblationKind::HistoryLastK
                        ? run_cv(truncate_all(sequences, spec.k), folds, cfg, mask, on_fold)
                        : run_cv(sequences, folds, cfg, mask, on_fold);
        const auto agg = overall_bca(run);
        AblationRow row;
        row.spec = spec;
        row.mean_bca = agg.mean;
        row.std_bca = agg.stddev;
        row.pct_vs_baseline = pct_change(agg.mean, report.baseline_mean_bca);
        report.rows.push_back(row);
        report.runs.push_back(std::move(run));
    }
    return report;
}

}  // namespace adprog

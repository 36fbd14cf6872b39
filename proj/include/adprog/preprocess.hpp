#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "adprog/data_model.hpp"

namespace adprog {

// What the cleaning pass removed, for the preprocess report.
struct CleanReport {
    std::int64_t dropped_single_visit_subjects = 0;
    std::int64_t dropped_reverter_subjects = 0;
    std::int64_t truncated_multi_converters = 0;
    std::int64_t dropped_missing_dx_visits = 0;
};

// Cleaning pipeline, applied in order:
//   1. drop subjects with a single visit;
//   2. drop every subject whose observed diagnosis sequence ever decreases
//      in severity (reverters) — missing-diagnosis visits are invisible to
//      this test;
//   3. when the observed sequence increases severity more than once, keep
//      only the visits up to and including the first conversion visit;
//   4. drop visits whose diagnosis is missing;
//   then step 1 runs again, since step 4 can shrink a subject to one visit.
// Output: every history has >= 2 visits, no missing diagnosis, severity
// non-decreasing with at most one increase. Idempotent.
std::pair<std::vector<SubjectHistory>, CleanReport> clean(std::vector<SubjectHistory> cohort);

// Sets months_to_final on every visit: the month distance to the last visit
// of this span (the last visit gets 0). Requires >= 2 visits.
void add_months_to_final(std::vector<VisitRecord>& visits);

// Per-feature z-scoring statistics, fit on a training split only.
struct NormStats {
    std::array<double, kFeatureCount> mean{};
    std::array<double, kFeatureCount> std{};  // population std; 1 when degenerate
};

NormStats fit_norm(const std::vector<SubjectHistory>& train);
// v -> (v - mean)/std on present values; missing cells stay missing.
void apply_norm(std::vector<SubjectHistory>& cohort, const NormStats& stats);
// Exact inverse of apply_norm on present values.
void unapply_norm(std::vector<SubjectHistory>& cohort, const NormStats& stats);

// Bootstrap imputation used to train the model filler: forward-fill within
// the subject, then fall back to the training mean for cells with no prior
// observation.
void bootstrap_fill(std::vector<SubjectHistory>& cohort, const NormStats& stats);

// One-step-ahead feature predictor — the trained filler behind model_fill.
// Implementations live with the models; preprocessing only needs this view.
class FeaturePredictor {
public:
    virtual ~FeaturePredictor() = default;
    virtual bool trained() const = 0;
    // Predicts the feature vector of h.visits[upto] from the (complete)
    // visits [0, upto). upto >= 1.
    virtual std::array<double, kFeatureCount> predict_next(const SubjectHistory& h,
                                                           std::size_t upto) const = 0;
};

// Two-stage imputation: first-visit gaps take the training mean; later gaps
// take the filler's one-step-ahead prediction given all earlier (already
// filled) visits. Observed values are never altered. Faults when the filler
// reports itself untrained.
void model_fill(std::vector<SubjectHistory>& cohort, const FeaturePredictor& filler,
                const NormStats& fallback);

}  // namespace adprog

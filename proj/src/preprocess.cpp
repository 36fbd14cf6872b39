#include "adprog/preprocess.hpp"

#include <cmath>

#include "adprog/errors.hpp"

namespace adprog {

namespace {

// Indices of visits with an observed diagnosis, in visit order.
std::vector<std::size_t> observed_dx(const SubjectHistory& h) {
    std::vector<std::size_t> idx;
    for (std::size_t i = 0; i < h.visits.size(); ++i)
        if (h.visits[i].diagnosis) idx.push_back(i);
    return idx;
}

}  // namespace

std::pair<std::vector<SubjectHistory>, CleanReport> clean(std::vector<SubjectHistory> cohort) {
    CleanReport report;
    std::vector<SubjectHistory> out;
    out.reserve(cohort.size());

    for (auto& h : cohort) {
        // step 1: single-visit subjects
        if (h.visits.size() < 2) {
            ++report.dropped_single_visit_subjects;
            continue;
        }
        // step 2: reverters, judged on observed diagnoses only
        const auto obs = observed_dx(h);
        bool reverts = false;
        int increases = 0;
        for (std::size_t k = 1; k < obs.size(); ++k) {
            const int prev = severity(*h.visits[obs[k - 1]].diagnosis);
            const int cur = severity(*h.visits[obs[k]].diagnosis);
            if (cur < prev) reverts = true;
            if (cur > prev) ++increases;
        }
        if (reverts) {
            ++report.dropped_reverter_subjects;
            continue;
        }
        // step 3: more than one conversion -> truncate at the first
        if (increases > 1) {
            std::size_t first_conversion = 0;
            for (std::size_t k = 1; k < obs.size(); ++k) {
                if (severity(*h.visits[obs[k]].diagnosis) >
                    severity(*h.visits[obs[k - 1]].diagnosis)) {
                    first_conversion = obs[k];
                    break;
                }
            }
            h.visits.resize(first_conversion + 1);
            ++report.truncated_multi_converters;
        }
        // step 4: visits without a diagnosis
        std::vector<VisitRecord> kept;
        kept.reserve(h.visits.size());
        for (auto& v : h.visits) {
            if (v.diagnosis)
                kept.push_back(std::move(v));
            else
                ++report.dropped_missing_dx_visits;
        }
        h.visits = std::move(kept);
        // step 1 again: step 4 may have shrunk the history
        if (h.visits.size() < 2) {
            ++report.dropped_single_visit_subjects;
            continue;
        }
        out.push_back(std::move(h));
    }
    return {std::move(out), report};
}

void add_months_to_final(std::vector<VisitRecord>& visits) {
    if (visits.size() < 2)
        throw ContractError("months_to_final needs at least 2 visits");
    const int last = visits.back().exam_month;
    for (auto& v : visits) v.months_to_final = static_cast<double>(last - v.exam_month);
}

NormStats fit_norm(const std::vector<SubjectHistory>& train) {
    NormStats stats;
    std::array<double, kFeatureCount> sum{};
    std::array<double, kFeatureCount> sumsq{};
    std::array<std::int64_t, kFeatureCount> count{};
    for (const auto& h : train) {
        for (const auto& v : h.visits) {
            for (int f = 0; f < kFeatureCount; ++f) {
                const auto val = v.feature(f);
                if (!val) continue;
                sum[static_cast<std::size_t>(f)] += *val;
                sumsq[static_cast<std::size_t>(f)] += *val * *val;
                ++count[static_cast<std::size_t>(f)];
            }
        }
    }
    for (int f = 0; f < kFeatureCount; ++f) {
        const auto i = static_cast<std::size_t>(f);
        if (count[i] == 0) {
            stats.mean[i] = 0.0;
            stats.std[i] = 1.0;
            continue;
        }
        stats.mean[i] = sum[i] / static_cast<double>(count[i]);
        const double var =
            sumsq[i] / static_cast<double>(count[i]) - stats.mean[i] * stats.mean[i];
        stats.std[i] = var > 0.0 ? std::sqrt(var) : 1.0;
    }
    return stats;
}

void apply_norm(std::vector<SubjectHistory>& cohort, const NormStats& stats) {
    for (auto& h : cohort)
        for (auto& v : h.visits)
            for (int f = 0; f < kFeatureCount; ++f) {
                const auto i = static_cast<std::size_t>(f);
                if (auto val = v.feature(f))
                    v.set_feature(f, (*val - stats.mean[i]) / stats.std[i]);
            }
}

void unapply_norm(std::vector<SubjectHistory>& cohort, const NormStats& stats) {
    for (auto& h : cohort)
        for (auto& v : h.visits)
            for (int f = 0; f < kFeatureCount; ++f) {
                const auto i = static_cast<std::size_t>(f);
                if (auto val = v.feature(f)) v.set_feature(f, *val * stats.std[i] + stats.mean[i]);
            }
}

void bootstrap_fill(std::vector<SubjectHistory>& cohort, const NormStats& stats) {
    for (auto& h : cohort) {
        std::array<std::optional<double>, kFeatureCount> last{};
        for (auto& v : h.visits) {
            for (int f = 0; f < kFeatureCount; ++f) {
                const auto i = static_cast<std::size_t>(f);
                if (auto val = v.feature(f)) {
                    last[i] = *val;
                } else {
                    v.set_feature(f, last[i] ? *last[i] : stats.mean[i]);
                }
            }
        }
    }
}

void model_fill(std::vector<SubjectHistory>& cohort, const FeaturePredictor& filler,
                const NormStats& fallback) {
    if (!filler.trained())
        throw NumericalError("model filling requires a trained filler");
    for (auto& h : cohort) {
        for (std::size_t t = 0; t < h.visits.size(); ++t) {
            std::vector<int> missing;
            for (int f = 0; f < kFeatureCount; ++f)
                if (!h.visits[t].feature(f)) missing.push_back(f);
            if (missing.empty()) continue;
            if (t == 0) {
                for (int f : missing)
                    h.visits[t].set_feature(f, fallback.mean[static_cast<std::size_t>(f)]);
            } else {
                // Earlier visits are already complete (observed or filled),
                // so the one-step-ahead prediction is well defined.
                const auto pred = filler.predict_next(h, t);
                for (int f : missing)
                    h.visits[t].set_feature(f, pred[static_cast<std::size_t>(f)]);
            }
        }
    }
}

}  // namespace adprog

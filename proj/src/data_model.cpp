#include "adprog/data_model.hpp"

#include <unordered_map>

namespace adprog {

const char* to_string(Diagnosis d) {
    switch (d) {
        case Diagnosis::CN: return "CN";
        case Diagnosis::MCI: return "MCI";
        case Diagnosis::AD: return "AD";
    }
    return "?";
}

std::optional<Diagnosis> parse_diagnosis(const std::string& s) {
    if (s == "CN" || s == "NL") return Diagnosis::CN;
    if (s == "MCI") return Diagnosis::MCI;
    if (s == "AD" || s == "Dementia") return Diagnosis::AD;
    return std::nullopt;
}

const char* to_string(FeatureCategory c) {
    switch (c) {
        case FeatureCategory::Cognitive: return "Cognitive";
        case FeatureCategory::MRI: return "MRI";
        case FeatureCategory::Biomarker: return "Biomarker";
    }
    return "?";
}

const std::array<FeatureSpec, kFeatureCount>& feature_table() {
    using FC = FeatureCategory;
    // Means, stds and missingness rates sized to published Alzheimer's
    // cohort summaries so synthetic data lands in clinically plausible
    // ranges.
    static const std::array<FeatureSpec, kFeatureCount> table = {{
        {"CDRSB", FC::Cognitive, 1.83, 2.29, 0.2964, +1},
        {"ADAS11", FC::Cognitive, 10.74, 7.76, 0.3005, +1},
        {"ADAS13", FC::Cognitive, 16.62, 10.68, 0.3072, +1},
        {"MMSE", FC::Cognitive, 26.92, 3.5, 0.2988, -1},
        {"RAVLT_immediate", FC::Cognitive, 35.08, 13.24, 0.3067, -1},
        {"RAVLT_learning", FC::Cognitive, 4.14, 2.81, 0.3067, -1},
        {"RAVLT_forgetting", FC::Cognitive, 4.26, 2.55, 0.3088, +1},
        {"RAVLT_perc_forgetting", FC::Cognitive, 58.73, 37.57, 0.3143, +1},
        {"MOCA", FC::Cognitive, 23.52, 4.18, 0.6101, -1},
        {"FAQ", FC::Cognitive, 4.65, 6.96, 0.2940, +1},
        {"Ventricles", FC::MRI, 42119.98, 23274.12, 0.4156, +1},
        {"Hippocampus", FC::MRI, 6684.54, 1224.13, 0.4661, -1},
        {"WholeBrain", FC::MRI, 1010781.21, 111280.94, 0.3965, -1},
        {"Entorhinal", FC::MRI, 3455.9, 801.46, 0.4922, -1},
        {"Fusiform", FC::MRI, 17117.41, 2798.63, 0.4922, -1},
        {"MidTemp", FC::MRI, 19206.76, 3098.07, 0.4922, -1},
        {"ICV", FC::MRI, 1534699.07, 164732.93, 0.3757, +1},
        {"FDG", FC::Biomarker, 1.21, 0.16, 0.7369, -1},
        {"AV45", FC::Biomarker, 1.19, 0.22, 0.8338, +1},
        {"ABETA", FC::Biomarker, 1052.48, 502.57, 0.8140, -1},
        {"TAU", FC::Biomarker, 288.67, 105.95, 0.8145, +1},
        {"PTAU", FC::Biomarker, 27.59, 11.7, 0.8138, +1},
    }};
    return table;
}

int feature_index(const std::string& key) {
    static const std::unordered_map<std::string, int> index = [] {
        std::unordered_map<std::string, int> m;
        const auto& t = feature_table();
        for (int i = 0; i < kFeatureCount; ++i) m[t[i].key] = i;
        return m;
    }();
    auto it = index.find(key);
    return it == index.end() ? -1 : it->second;
}

std::vector<int> feature_indices_of(FeatureCategory c) {
    std::vector<int> out;
    const auto& t = feature_table();
    for (int i = 0; i < kFeatureCount; ++i) {
        if (t[i].category == c) out.push_back(i);
    }
    return out;
}

FeatureMap empty_feature_map() {
    FeatureMap m;
    for (const auto& f : feature_table()) m[f.key] = std::nullopt;
    return m;
}

std::optional<double> VisitRecord::feature(int id) const {
    auto it = features.find(feature_table()[id].key);
    return it == features.end() ? std::nullopt : it->second;
}

void VisitRecord::set_feature(int id, std::optional<double> v) {
    features[feature_table()[id].key] = v;
}

ValidationResult validate_history(const SubjectHistory& h) {
    ValidationResult r;
    if (h.visits.empty()) {
        r.violations.push_back("history has no visits");
        return r;
    }
    int prev_month = 0;
    bool first = true;
    for (const auto& v : h.visits) {
        if (v.subject_id != h.subject_id) {
            r.violations.push_back("visit subject_id mismatch: " + v.subject_id +
                                   " != " + h.subject_id);
        }
        if (!first) {
            if (v.exam_month == prev_month) {
                r.violations.push_back("duplicate exam_month " + std::to_string(v.exam_month) +
                                       " in subject " + h.subject_id);
            } else if (v.exam_month < prev_month) {
                r.violations.push_back("exam_month not increasing at month " +
                                       std::to_string(v.exam_month) + " in subject " +
                                       h.subject_id);
            }
        }
        if (v.features.size() != static_cast<std::size_t>(kFeatureCount)) {
            r.violations.push_back("feature key set mismatch in subject " + h.subject_id +
                                   " at month " + std::to_string(v.exam_month));
        } else {
            for (const auto& f : feature_table()) {
                if (v.features.find(f.key) == v.features.end()) {
                    r.violations.push_back("feature key set mismatch in subject " + h.subject_id +
                                           " at month " + std::to_string(v.exam_month));
                    break;
                }
            }
        }
        if (v.months_to_final && *v.months_to_final < 0.0) {
            r.violations.push_back("negative months_to_final in subject " + h.subject_id);
        }
        prev_month = v.exam_month;
        first = false;
    }
    return r;
}

}  // namespace adprog

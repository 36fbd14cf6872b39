#pragma once

#include <array>
#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace adprog {

// Three-class clinical diagnosis with a fixed ordinal severity CN < MCI < AD.
enum class Diagnosis : int { CN = 0, MCI = 1, AD = 2 };

inline int severity(Diagnosis d) { return static_cast<int>(d); }

const char* to_string(Diagnosis d);

// Parses "CN", "MCI", "AD" plus the legacy TADPOLE spellings "NL" (-> CN) and
// "Dementia" (-> AD). Returns nullopt for anything else, including "".
std::optional<Diagnosis> parse_diagnosis(const std::string& s);

enum class FeatureCategory { Cognitive, MRI, Biomarker };

const char* to_string(FeatureCategory c);

struct FeatureSpec {
    std::string key;
    FeatureCategory category;
    double population_mean;
    double population_std;
    double missingness_target;  // in [0, 1)
    // +1 when larger values indicate more severe disease, -1 otherwise.
    // Drives the direction of the planted signal in synthetic cohorts.
    int severity_direction;
};

inline constexpr int kFeatureCount = 22;

// Canonical feature table (TADPOLE column names), fixed order. Index into
// this array is the feature id used throughout.
const std::array<FeatureSpec, kFeatureCount>& feature_table();

// Index of a canonical key, or -1 if unknown.
int feature_index(const std::string& key);

std::vector<int> feature_indices_of(FeatureCategory c);

// key -> value; a key with nullopt value is a missing measurement. A record
// is well formed when its key set is exactly the 22 canonical keys;
// validate_history reports any deviation.
using FeatureMap = std::map<std::string, std::optional<double>>;

// All 22 canonical keys, every value missing.
FeatureMap empty_feature_map();

// One clinical visit.
struct VisitRecord {
    std::string subject_id;
    int exam_month = 0;  // integer months since an epoch
    std::optional<Diagnosis> diagnosis;
    FeatureMap features = empty_feature_map();
    std::optional<double> months_to_final;  // derived by preprocessing

    std::optional<double> feature(int id) const;
    void set_feature(int id, std::optional<double> v);
};

struct SubjectHistory {
    std::string subject_id;
    std::vector<VisitRecord> visits;  // sorted by exam_month
};

struct ValidationResult {
    std::vector<std::string> violations;
    bool ok() const { return violations.empty(); }
};

// Checks every SubjectHistory invariant and returns all violations found.
// Violations are data, not faults: nothing throws here.
ValidationResult validate_history(const SubjectHistory& h);

}  // namespace adprog

#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "adprog/data_model.hpp"

namespace adprog {

// Synthetic cohort recipe. Generation is a pure function of this struct:
// the same config always yields a byte-identical cohort.
struct SynthConfig {
    int n_subjects = 400;
    double converter_fraction = 0.25;
    // Of the converters, this share converts CN->MCI; the rest MCI->AD.
    double cn_to_mci_fraction_of_converters = 0.3;
    int visit_interval_months = 6;
    // When set, gaps are drawn from {6, 12, 18} months instead of the fixed
    // interval (total span still capped at the 72-month rollout horizon).
    bool gap_jitter = false;
    int max_visits = 9;
    // Per-feature missingness override; features not listed use the
    // population table's rate. Values in [0, 1).
    std::map<std::string, double> missingness;
    // 0 disables the planted class signal; 1 is the calibrated default.
    double signal_strength = 1.0;
    std::uint64_t rng_seed = 42;
};

// Throws ConfigError when a field is out of range.
void validate(const SynthConfig& cfg);

// Reads a cohort CSV: columns RID, EXAMDATE (YYYY-MM-DD), DX, then the 22
// canonical feature keys. Empty or unparseable cells become missing values.
// Missing required columns and duplicate (subject, date) rows are fatal.
std::vector<SubjectHistory> load_csv(const std::string& path);

// Writes the same format load_csv reads. Comment lines ('#'-prefixed) go
// before the header.
void write_cohort_csv(const std::string& path, const std::vector<SubjectHistory>& cohort,
                      const std::vector<std::string>& comments = {});

// Generates a cohort with a planted, learnable progression signal:
//  - exactly round(n_subjects * converter_fraction) subjects convert, once,
//    at a random visit index >= 2; converters never revert;
//  - cognitive features carry a class-conditional mean shift (scaled by
//    signal_strength) plus a drift toward the post-conversion mean over the
//    two visits before conversion; MRI/biomarker features are uninformative
//    subject-level noise;
//  - every feature cell is masked i.i.d. at its missingness rate; the
//    diagnosis is never masked here (see corrupt_diagnoses).
std::vector<SubjectHistory> generate_synthetic(const SynthConfig& cfg);

// Masks exactly floor(fraction * total_visits) diagnosis values, chosen
// uniformly at random, deterministically per seed.
std::vector<SubjectHistory> corrupt_diagnoses(std::vector<SubjectHistory> cohort,
                                              double fraction, std::uint64_t seed);

}  // namespace adprog

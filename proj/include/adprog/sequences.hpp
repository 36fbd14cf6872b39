#pragma once

#include <array>
#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "adprog/data_model.hpp"

namespace adprog {

enum class SequenceLabel { stable, converter };

const char* to_string(SequenceLabel l);

enum class ConversionKind { CN_to_MCI = 0, CN_to_AD = 1, MCI_to_AD = 2 };

const char* to_string(ConversionKind k);

// One training/evaluation unit: n+1 visits of one subject. The last visit is
// the prediction target; the first n visits are the model input. group = n.
struct VisitSequence {
    int seq_id = -1;  // dense index, stable across the whole run
    std::string subject_id;
    std::vector<VisitRecord> visits;
    SequenceLabel label = SequenceLabel::stable;
    std::optional<ConversionKind> conversion_kind;
    int group = 0;  // visits.size() - 1
    Diagnosis target_dx = Diagnosis::CN;
};

// Builds exactly one sequence per cleaned subject: the prefix ending at the
// first conversion visit when the subject converts, the full history
// otherwise. Sequences longer than 9 visits keep their most recent 9, so
// groups range over 1..8. months_to_final is derived here, relative to each
// sequence's own last visit.
std::vector<VisitSequence> extract_sequences(const std::vector<SubjectHistory>& cleaned);

// Equalizes stable and converter counts within every group by discarding
// uniformly-random stable sequences. Groups with more converters than stable
// sequences are left as they are; converters are never removed. seq_ids are
// preserved (not renumbered).
std::vector<VisitSequence> balance(std::vector<VisitSequence> sequences, std::uint64_t seed);

struct DatasetSplit {
    int fold_index = 0;
    std::vector<int> train;  // seq_ids, ascending
    std::vector<int> test;   // seq_ids, ascending
};

// Group-stratified k-fold split: within every group each fold's test share
// is floor(count/k) or ceil(count/k); folds are disjoint and cover all
// sequences. Groups smaller than k contribute to some folds' test sets and
// never to two.
std::vector<DatasetSplit> stratified_kfold(const std::vector<VisitSequence>& sequences, int k,
                                           std::uint64_t seed);

struct SequenceCounts {
    std::int64_t stable_total = 0;
    std::int64_t converter_total = 0;
    // group -> {stable, converter} counts
    std::map<int, std::array<std::int64_t, 2>> by_group;
    // indexed by ConversionKind
    std::array<std::int64_t, 3> by_kind{};
};

SequenceCounts count_summary(const std::vector<VisitSequence>& sequences);

}  // namespace adprog

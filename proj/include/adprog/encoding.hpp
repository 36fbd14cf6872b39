#pragma once

#include <vector>

#include "adprog/data_model.hpp"
#include "adprog/sequences.hpp"

namespace adprog {

// Monthly rollout horizon; also normalizes the time channel.
inline constexpr double kHorizonMonths = 72.0;

// Which of the 22 feature channels a model consumes. Ablations shrink this
// set; the diagnosis one-hot and time channels are always present.
struct ChannelMask {
    std::vector<int> kept;  // canonical feature ids, ascending

    static ChannelMask all();
    static ChannelMask only(FeatureCategory c);
    static ChannelMask without(FeatureCategory c);

    int n_features() const { return static_cast<int>(kept.size()); }
    // 3 one-hot diagnosis channels + kept features + 1 time channel
    int input_dim() const { return 3 + n_features() + 1; }
};

// A sequence flattened to model-ready arrays. Inputs are the first n visits;
// the last visit is the prediction target. Produced from cleaned, filled,
// normalized sequences — every kept feature must be present.
struct EncodedSeq {
    int seq_id = -1;
    // Per input visit: month offset from the first visit.
    std::vector<int> month_offsets;
    // Per input visit: [one-hot DX(3), kept features, (T - month)/horizon].
    std::vector<std::vector<double>> inputs;
    // Per visit 1..n (prediction targets at observed months, final included):
    // diagnosis index and kept-feature vector.
    std::vector<int> target_dx;
    std::vector<std::vector<double>> target_features;
    // 1.0 where the target feature counts toward the training loss. All ones
    // for ordinary sequences; the imputation model masks to originally
    // observed cells.
    std::vector<std::vector<double>> target_feature_mask;
    // Target month offset from the first visit (= months to cover).
    int target_month = 0;
    Diagnosis final_dx = Diagnosis::CN;
};

// Faults when a kept feature or months_to_final is missing on any visit.
EncodedSeq encode_sequence(const VisitSequence& seq, const ChannelMask& mask);

// Treats a whole history as one sequence (last visit = target). When
// `observed` is given (one flag row per visit, canonical feature order) the
// target mask keeps only originally-observed cells; otherwise all ones.
EncodedSeq encode_history(const SubjectHistory& h, const ChannelMask& mask,
                          const std::vector<std::array<bool, kFeatureCount>>* observed = nullptr);

// Inputs = visits [0, upto), target month = visit `upto`'s month. No loss
// targets; used for one-step-ahead feature prediction.
EncodedSeq encode_history_prefix(const SubjectHistory& h, std::size_t upto,
                                 const ChannelMask& mask);

std::vector<double> one_hot_dx(Diagnosis d);

}  // namespace adprog

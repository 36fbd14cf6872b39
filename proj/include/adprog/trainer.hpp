#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "adprog/encoding.hpp"
#include "adprog/preprocess.hpp"
#include "adprog/rnn.hpp"
#include "adprog/sequences.hpp"
#include "adprog/transformer.hpp"

namespace adprog {

enum class ModelKind { LSTM, GRU, MinRnn, Transformer };

const char* to_string(ModelKind k);
std::optional<ModelKind> parse_model_kind(const std::string& s);

// Settings for the feature filler: the small recurrent net behind
// model-based imputation, always trained over every feature channel.
struct FillerConfig {
    int hidden_dim = 16;
    int epochs = 5;
    double lr = 5e-3;
};

struct TrainConfig {
    ModelKind model = ModelKind::MinRnn;
    int hidden_dim = 64;            // recurrent models
    TransformerConfig transformer;  // attention classifier dimensions
    double lr = 1e-3;
    int batch_size = 32;  // attention minibatches; recurrent models step per sequence
    int max_epochs = 40;
    int patience = 10;  // early-stopping epochs without validation BCA improvement
    double clip_norm = 5.0;
    FillerConfig filler;
    std::uint64_t seed = 42;

    void validate() const;  // ConfigError on out-of-range settings
};

struct SeqMeta {
    int seq_id = -1;
    SequenceLabel label = SequenceLabel::stable;
    int group = 0;
};

// One cross-validation fold, fully prepared for training: normalized,
// imputed, encoded. `val` is a group-stratified tenth of the training split,
// used for early stopping and model selection only.
struct FoldData {
    int fold_index = 0;
    std::vector<EncodedSeq> train, val, test;
    std::vector<SeqMeta> train_meta, val_meta, test_meta;
    NormStats norm;  // fit on the training split, in raw feature space
};

// Trains the feature filler on bootstrap-filled training histories.
// `observed` marks the cells that were measured (not imputed); only those
// contribute to the feature loss. Histories spanning more than the rollout
// horizon are skipped.
RnnFiller train_filler(const std::vector<SubjectHistory>& boot,
                       const std::vector<std::vector<std::array<bool, kFeatureCount>>>& observed,
                       const FillerConfig& cfg, std::uint64_t seed);

// Leak-free fold preparation. Normalization statistics and the feature
// filler are fit on the training split only, then applied to all three
// splits; the validation tenth is carved out of the training split first.
FoldData prepare_fold(const std::vector<VisitSequence>& sequences, const DatasetSplit& split,
                      const ChannelMask& mask, const TrainConfig& cfg);

struct EpochLog {
    int epoch = 0;  // 1-based
    double train_loss = 0.0;
    double val_bca = 0.0;  // NaN when the fold has no validation sequences
};

struct TrainedModel {
    ModelKind kind = ModelKind::MinRnn;
    ChannelMask mask;
    RnnModel rnn;         // valid when kind != Transformer
    TransformerModel tf;  // valid when kind == Transformer
    int fold_index = -1;
    int best_epoch = -1;       // 1-based epoch the returned weights come from
    double best_val_bca = 0.0; // NaN when no validation set was available
    std::vector<EpochLog> log;
};

// Core loop: Adam over shuffled training sequences, validation BCA after
// every epoch, early stop after `patience` epochs without improvement,
// weights restored from the best epoch. Faults with NumericalError when the
// loss stops being finite.
TrainedModel train_on(const FoldData& fold, const TrainConfig& cfg, const ChannelMask& mask);

// prepare_fold + train_on.
TrainedModel train_fold(const std::vector<VisitSequence>& sequences, const DatasetSplit& split,
                        const TrainConfig& cfg, const ChannelMask& mask);

// Class probabilities at each sequence's target month (eval mode).
std::vector<std::array<double, 3>> model_predict(const TrainedModel& m,
                                                 const std::vector<EncodedSeq>& seqs);

struct GridPoint {
    double lr = 0.0;
    int dim = 0;  // hidden width (recurrent) or feed-forward width (attention)
    double mean_val_bca = 0.0;
};

struct GridSearchResult {
    std::vector<GridPoint> points;
    TrainConfig best;
};

// Trains every (lr, dim) candidate on the given folds and ranks by mean
// validation BCA; ties keep the earliest candidate in grid order. Folds are
// prepared once and shared across candidates.
GridSearchResult grid_search(const std::vector<VisitSequence>& sequences,
                             const std::vector<DatasetSplit>& folds, const TrainConfig& base,
                             const ChannelMask& mask, const std::vector<double>& lrs,
                             const std::vector<int>& dims);

// Checkpoint round trip. The manifest's config line records the model kind,
// channel mask, and dimensions, so load_model rebuilds a ready TrainedModel.
void save_model(const std::string& path, const TrainedModel& m);
TrainedModel load_model(const std::string& path);

}  // namespace adprog

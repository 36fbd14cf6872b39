#pragma once

#include <array>
#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "adprog/encoding.hpp"
#include "adprog/optim.hpp"
#include "adprog/preprocess.hpp"
#include "adprog/tape.hpp"

namespace adprog {

enum class CellKind { LSTM, GRU, MinRnn };

const char* to_string(CellKind k);
std::optional<CellKind> parse_cell_kind(const std::string& s);

struct RnnConfig {
    CellKind cell = CellKind::MinRnn;
    int hidden_dim = 64;
    int n_features = kFeatureCount;  // kept feature channels (see ChannelMask)

    // Visit vector: one-hot diagnosis (3) + features + time-to-target channel.
    int input_dim() const { return 3 + n_features + 1; }
    // Head output: diagnosis logits (3) + next-visit feature predictions.
    int output_dim() const { return 3 + n_features; }
};

struct RnnModel {
    RnnConfig cfg;
    num::ParamStore params;
};

// Glorot-initialized weights, zero biases (LSTM forget-gate bias starts at 1).
RnnModel init_rnn(const RnnConfig& cfg, std::uint64_t seed);

// Closed-form trainable-parameter count for a configuration.
std::int64_t rnn_param_count(const RnnConfig& cfg);

struct RnnState {
    num::Var h;
    num::Var c;  // LSTM only; invalid handle otherwise
};

RnnState rnn_initial_state(num::Tape& tape, const RnnConfig& cfg);

// One recurrence step: consumes a (1, input_dim) visit vector, returns the
// (1, output_dim) prediction for the next month and the new state.
std::pair<num::Var, RnnState> cell_step(num::Tape& tape, const RnnConfig& cfg,
                                        const std::map<std::string, num::Var>& p, num::Var x,
                                        RnnState s);

// How a rollout consumed its monthly grid.
struct RolloutTrace {
    int total_steps = 0;     // months stepped (first to target month)
    int observed_inputs = 0; // steps fed an actual visit vector
    int feedback_inputs = 0; // steps fed the model's own previous prediction
};

struct RolloutOutputs {
    // One (1, output_dim) prediction per target visit, in target order; the
    // last entry is the prediction at the target month.
    std::vector<num::Var> visit_preds;
    num::Var final_pred;
};

// Unrolls the cell month by month from the first visit to the target month.
// Months with an observed visit use it as input (when use_observations is
// set); every other month feeds back the previous prediction, with the
// diagnosis slice passed through softmax and the time channel recomputed.
RolloutOutputs rnn_rollout(num::Tape& tape, const RnnConfig& cfg,
                           const std::map<std::string, num::Var>& p, const EncodedSeq& e,
                           bool use_observations, RolloutTrace* trace = nullptr);

// Mean diagnosis cross-entropy plus mean per-visit feature MSE over the
// target visits. Feature terms honor e.target_feature_mask.
num::Var rnn_rollout_loss(num::Tape& tape, const RnnConfig& cfg, const EncodedSeq& e,
                          const RolloutOutputs& out);

// Inference: class probabilities at the target month.
std::array<double, 3> rnn_predict_proba(const RnnModel& model, const EncodedSeq& e,
                                        bool use_observations = true,
                                        RolloutTrace* trace = nullptr);

// One-step-ahead feature predictor backed by a recurrent model over all
// feature channels; drives model-based imputation.
class RnnFiller : public FeaturePredictor {
public:
    explicit RnnFiller(RnnModel model) : model_(std::move(model)) {}

    bool trained() const override { return trained_; }
    void mark_trained() { trained_ = true; }

    std::array<double, kFeatureCount> predict_next(const SubjectHistory& h,
                                                   std::size_t upto) const override;

    RnnModel& model() { return model_; }
    const RnnModel& model() const { return model_; }

private:
    RnnModel model_;
    bool trained_ = false;
};

}  // namespace adprog

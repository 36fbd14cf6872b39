#pragma once

#include <array>
#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "adprog/encoding.hpp"
#include "adprog/optim.hpp"
#include "adprog/tape.hpp"

namespace adprog {

struct TransformerConfig {
    int n_encoder_layers = 4;
    int n_decoder_layers = 8;
    int n_heads = 4;
    int d_model = 256;
    int d_ffn = 512;
    double dropout = 0.1;
    int max_seq_len = 8;  // input visits per sequence (last visit is the target)
    int n_features = kFeatureCount;

    int input_dim() const { return 3 + n_features + 1; }
    void validate() const;
};

struct TransformerModel {
    TransformerConfig cfg;
    num::ParamStore params;
};

TransformerModel init_transformer(const TransformerConfig& cfg, std::uint64_t seed);

// Host-side batch: zero-padded visit vectors plus a sinusoidal encoding of
// each visit's months-to-target (the classifier attends by time, not by
// visit index).
struct TransformerBatch {
    std::int64_t b = 0;
    std::int64_t t = 0;
    num::Tensor tokens;    // (B, T, input_dim)
    num::Tensor time_enc;  // (B, T, d_model)
    std::vector<int> lengths;
    std::vector<int> final_dx;  // severity of the diagnosis at the target month
    std::vector<std::int64_t> seq_ids;
};

TransformerBatch make_transformer_batch(const std::vector<EncodedSeq>& seqs,
                                        const TransformerConfig& cfg);

// Attention probabilities captured during a forward pass (values, per layer).
struct AttnTrace {
    std::vector<num::Tensor> encoder_self;  // (B, heads, T, T)
    std::vector<num::Tensor> decoder_cross; // (B, heads, 1, T)
};

// Full forward pass: causal masked encoder over the visit tokens, single
// learned-query decoder, linear head. Returns (B, 3) diagnosis logits.
num::Var transformer_logits(num::Tape& tape, const TransformerConfig& cfg,
                            const std::map<std::string, num::Var>& p,
                            const TransformerBatch& batch, bool train,
                            std::uint64_t dropout_seed, std::int64_t training_step,
                            AttnTrace* trace = nullptr);

// Mean cross-entropy of the batch's final-diagnosis targets.
num::Var transformer_loss(num::Tape& tape, num::Var logits, const std::vector<int>& final_dx);

// Inference: per-sequence class probabilities (eval mode, no dropout).
std::vector<std::array<double, 3>> transformer_predict_proba(const TransformerModel& model,
                                                             const std::vector<EncodedSeq>& seqs);

}  // namespace adprog

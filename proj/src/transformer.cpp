#include "adprog/transformer.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <memory>

#include "adprog/errors.hpp"
#include "adprog/rng.hpp"

namespace adprog {

using num::Tape;
using num::Tensor;
using num::Var;

void TransformerConfig::validate() const {
    if (n_encoder_layers <= 0 || n_decoder_layers <= 0)
        throw ConfigError("transformer: layer counts must be positive");
    if (n_heads <= 0 || d_model <= 0 || d_ffn <= 0)
        throw ConfigError("transformer: dimensions must be positive");
    if (d_model % n_heads != 0) throw ConfigError("transformer: d_model must divide by n_heads");
    if (dropout < 0.0 || dropout >= 1.0) throw ConfigError("transformer: dropout must be in [0,1)");
    if (max_seq_len <= 0) throw ConfigError("transformer: max_seq_len must be positive");
    if (n_features < 0) throw ConfigError("transformer: n_features must be >= 0");
}

namespace {

void add_attn_params(num::ParamStore& ps, Rng& rng, const std::string& prefix, int d) {
    for (const char* w : {"wq", "wk", "wv", "wo"})
        ps.add(prefix + w, num::init_glorot(rng, {d, d}, d, d));
    for (const char* b : {"bq", "bk", "bv", "bo"}) ps.add(prefix + b, Tensor::zeros({d}));
}

void add_ln_params(num::ParamStore& ps, const std::string& prefix, int d) {
    ps.add(prefix + "g", Tensor::full({d}, 1.0));
    ps.add(prefix + "b", Tensor::zeros({d}));
}

void add_ffn_params(num::ParamStore& ps, Rng& rng, const std::string& prefix, int d, int f) {
    ps.add(prefix + "w1", num::init_glorot(rng, {d, f}, d, f));
    ps.add(prefix + "b1", Tensor::zeros({f}));
    ps.add(prefix + "w2", num::init_glorot(rng, {f, d}, f, d));
    ps.add(prefix + "b2", Tensor::zeros({d}));
}

}  // namespace

TransformerModel init_transformer(const TransformerConfig& cfg, std::uint64_t seed) {
    cfg.validate();
    TransformerModel m;
    m.cfg = cfg;
    Rng rng(seed);
    const int d = cfg.d_model;
    m.params.add("embed_w", num::init_glorot(rng, {cfg.input_dim(), d}, cfg.input_dim(), d));
    m.params.add("embed_b", Tensor::zeros({d}));
    for (int l = 0; l < cfg.n_encoder_layers; ++l) {
        const std::string pre = "enc" + std::to_string(l) + ".";
        add_ln_params(m.params, pre + "ln1_", d);
        add_attn_params(m.params, rng, pre, d);
        add_ln_params(m.params, pre + "ln2_", d);
        add_ffn_params(m.params, rng, pre + "ffn_", d, cfg.d_ffn);
    }
    add_ln_params(m.params, "enc_ln_", d);
    m.params.add("query", num::init_glorot(rng, {1, d}, 1, d));
    for (int l = 0; l < cfg.n_decoder_layers; ++l) {
        const std::string pre = "dec" + std::to_string(l) + ".";
        add_ln_params(m.params, pre + "ln1_", d);
        add_attn_params(m.params, rng, pre + "self_", d);
        add_ln_params(m.params, pre + "ln2_", d);
        add_attn_params(m.params, rng, pre + "cross_", d);
        add_ln_params(m.params, pre + "ln3_", d);
        add_ffn_params(m.params, rng, pre + "ffn_", d, cfg.d_ffn);
    }
    add_ln_params(m.params, "dec_ln_", d);
    m.params.add("head_w", num::init_glorot(rng, {d, 3}, d, 3));
    m.params.add("head_b", Tensor::zeros({3}));
    return m;
}

TransformerBatch make_transformer_batch(const std::vector<EncodedSeq>& seqs,
                                        const TransformerConfig& cfg) {
    if (seqs.empty()) throw ContractError("transformer batch: no sequences");
    TransformerBatch batch;
    batch.b = static_cast<std::int64_t>(seqs.size());
    std::int64_t t = 0;
    for (const auto& e : seqs) {
        if (e.inputs.empty()) throw ContractError("transformer batch: sequence has no inputs");
        if (static_cast<int>(e.inputs.front().size()) != cfg.input_dim())
            throw ContractError("transformer batch: input width does not match configuration");
        if (static_cast<int>(e.inputs.size()) > cfg.max_seq_len)
            throw ContractError("transformer batch: sequence longer than max_seq_len");
        t = std::max(t, static_cast<std::int64_t>(e.inputs.size()));
    }
    batch.t = t;
    const std::int64_t din = cfg.input_dim();
    const std::int64_t d = cfg.d_model;
    batch.tokens = Tensor::zeros({batch.b, t, din});
    batch.time_enc = Tensor::zeros({batch.b, t, d});
    for (std::int64_t s = 0; s < batch.b; ++s) {
        const auto& e = seqs[static_cast<std::size_t>(s)];
        batch.lengths.push_back(static_cast<int>(e.inputs.size()));
        batch.final_dx.push_back(severity(e.final_dx));
        batch.seq_ids.push_back(e.seq_id);
        for (std::size_t j = 0; j < e.inputs.size(); ++j) {
            const std::int64_t row = (s * t + static_cast<std::int64_t>(j)) * din;
            for (std::int64_t c = 0; c < din; ++c) batch.tokens[row + c] = e.inputs[j][c];
            // Sinusoidal encoding of months remaining to the target month.
            const double months = static_cast<double>(e.target_month - e.month_offsets[j]);
            const std::int64_t base = (s * t + static_cast<std::int64_t>(j)) * d;
            for (std::int64_t i = 0; i < d; i += 2) {
                const double freq = std::pow(10000.0, -static_cast<double>(i) / d);
                batch.time_enc[base + i] = std::sin(months * freq);
                if (i + 1 < d) batch.time_enc[base + i + 1] = std::cos(months * freq);
            }
        }
    }
    return batch;
}

namespace {

struct DropoutCtx {
    double p = 0.0;
    bool train = false;
    std::uint64_t seed = 0;
    std::int64_t step = 0;
    std::uint64_t next_site = 0;

    Var apply(Tape& tape, Var x) {
        return tape.dropout(x, p, train, seed, next_site++,
                            static_cast<std::uint64_t>(step));
    }
};

// (B, Tq, D) -> (B, heads, Tq, dk)
Var split_heads(Tape& tape, Var x, std::int64_t b, std::int64_t tq, std::int64_t heads,
                std::int64_t dk) {
    return tape.transpose(tape.reshape(x, {b, tq, heads, dk}), 1, 2);
}

Var multi_head_attention(Tape& tape, const TransformerConfig& cfg,
                         const std::map<std::string, Var>& p, const std::string& prefix, Var q_in,
                         Var kv_in, std::int64_t b, std::int64_t tq, std::int64_t tk,
                         std::shared_ptr<const std::vector<std::uint8_t>> mask, DropoutCtx& drop,
                         std::vector<Tensor>* probs_out) {
    const std::int64_t d = cfg.d_model;
    const std::int64_t heads = cfg.n_heads;
    const std::int64_t dk = d / heads;
    Var q = tape.add(tape.matmul(q_in, p.at(prefix + "wq")), p.at(prefix + "bq"));
    Var k = tape.add(tape.matmul(kv_in, p.at(prefix + "wk")), p.at(prefix + "bk"));
    Var v = tape.add(tape.matmul(kv_in, p.at(prefix + "wv")), p.at(prefix + "bv"));
    Var qh = split_heads(tape, q, b, tq, heads, dk);
    Var kh = split_heads(tape, k, b, tk, heads, dk);
    Var vh = split_heads(tape, v, b, tk, heads, dk);
    Var scores = tape.scale(tape.matmul(qh, tape.transpose(kh, 2, 3)),
                            1.0 / std::sqrt(static_cast<double>(dk)));
    if (mask)
        scores = tape.masked_fill(scores, std::move(mask),
                                  -std::numeric_limits<double>::infinity());
    Var probs = tape.softmax(scores, 3);
    if (probs_out) probs_out->push_back(tape.value(probs));
    probs = drop.apply(tape, probs);
    Var ctx = tape.reshape(tape.transpose(tape.matmul(probs, vh), 1, 2), {b, tq, d});
    return tape.add(tape.matmul(ctx, p.at(prefix + "wo")), p.at(prefix + "bo"));
}

Var ffn_block(Tape& tape, const std::map<std::string, Var>& p, const std::string& prefix, Var x) {
    Var h = tape.relu(tape.add(tape.matmul(x, p.at(prefix + "w1")), p.at(prefix + "b1")));
    return tape.add(tape.matmul(h, p.at(prefix + "w2")), p.at(prefix + "b2"));
}

}  // namespace

Var transformer_logits(Tape& tape, const TransformerConfig& cfg,
                       const std::map<std::string, Var>& p, const TransformerBatch& batch,
                       bool train, std::uint64_t dropout_seed, std::int64_t training_step,
                       AttnTrace* trace) {
    cfg.validate();
    const std::int64_t b = batch.b;
    const std::int64_t t = batch.t;
    const std::int64_t heads = cfg.n_heads;
    DropoutCtx drop{cfg.dropout, train, dropout_seed, training_step, 0};

    // Attention masks: nonzero entries are blocked. The encoder combines a
    // causal restriction (a visit sees only itself and earlier visits) with
    // sequence-length padding; the decoder's single query sees valid visits.
    auto self_mask = std::make_shared<std::vector<std::uint8_t>>(
        static_cast<std::size_t>(b * heads * t * t), std::uint8_t{0});
    auto cross_mask = std::make_shared<std::vector<std::uint8_t>>(
        static_cast<std::size_t>(b * heads * t), std::uint8_t{0});
    for (std::int64_t s = 0; s < b; ++s) {
        const auto len = static_cast<std::int64_t>(batch.lengths[static_cast<std::size_t>(s)]);
        for (std::int64_t h = 0; h < heads; ++h) {
            for (std::int64_t i = 0; i < t; ++i)
                for (std::int64_t j = 0; j < t; ++j)
                    if (j > i || j >= len)
                        (*self_mask)[static_cast<std::size_t>(((s * heads + h) * t + i) * t + j)] =
                            1;
            for (std::int64_t j = 0; j < t; ++j)
                if (j >= len)
                    (*cross_mask)[static_cast<std::size_t>((s * heads + h) * t + j)] = 1;
        }
    }

    Var tokens = tape.leaf(batch.tokens);
    Var x = tape.add(tape.add(tape.matmul(tokens, p.at("embed_w")), p.at("embed_b")),
                     tape.leaf(batch.time_enc));
    x = drop.apply(tape, x);

    for (int l = 0; l < cfg.n_encoder_layers; ++l) {
        const std::string pre = "enc" + std::to_string(l) + ".";
        Var h1 = tape.layer_norm(x, p.at(pre + "ln1_g"), p.at(pre + "ln1_b"));
        Var attn = multi_head_attention(tape, cfg, p, pre, h1, h1, b, t, t, self_mask, drop,
                                        trace ? &trace->encoder_self : nullptr);
        x = tape.add(x, drop.apply(tape, attn));
        Var h2 = tape.layer_norm(x, p.at(pre + "ln2_g"), p.at(pre + "ln2_b"));
        x = tape.add(x, drop.apply(tape, ffn_block(tape, p, pre + "ffn_", h2)));
    }
    Var enc_out = tape.layer_norm(x, p.at("enc_ln_g"), p.at("enc_ln_b"));

    Var y = tape.expand_leading(p.at("query"), b);  // (B, 1, d_model)
    for (int l = 0; l < cfg.n_decoder_layers; ++l) {
        const std::string pre = "dec" + std::to_string(l) + ".";
        Var h1 = tape.layer_norm(y, p.at(pre + "ln1_g"), p.at(pre + "ln1_b"));
        Var self_attn = multi_head_attention(tape, cfg, p, pre + "self_", h1, h1, b, 1, 1, nullptr,
                                             drop, nullptr);
        y = tape.add(y, drop.apply(tape, self_attn));
        Var h2 = tape.layer_norm(y, p.at(pre + "ln2_g"), p.at(pre + "ln2_b"));
        Var cross = multi_head_attention(tape, cfg, p, pre + "cross_", h2, enc_out, b, 1, t,
                                         cross_mask, drop,
                                         trace ? &trace->decoder_cross : nullptr);
        y = tape.add(y, drop.apply(tape, cross));
        Var h3 = tape.layer_norm(y, p.at(pre + "ln3_g"), p.at(pre + "ln3_b"));
        y = tape.add(y, drop.apply(tape, ffn_block(tape, p, pre + "ffn_", h3)));
    }
    y = tape.layer_norm(y, p.at("dec_ln_g"), p.at("dec_ln_b"));
    y = tape.reshape(y, {b, cfg.d_model});
    return tape.add(tape.matmul(y, p.at("head_w")), p.at("head_b"));
}

Var transformer_loss(Tape& tape, Var logits, const std::vector<int>& final_dx) {
    const auto& shape = tape.value(logits).shape();
    if (shape.size() != 2 || shape[1] != 3)
        throw ContractError("transformer loss: logits must be (batch, 3)");
    if (shape[0] != static_cast<std::int64_t>(final_dx.size()))
        throw ContractError("transformer loss: target count does not match batch");
    const std::int64_t bsz = shape[0];
    Tensor onehot = Tensor::zeros({bsz, 3});
    for (std::int64_t i = 0; i < bsz; ++i)
        onehot[i * 3 + final_dx[static_cast<std::size_t>(i)]] = 1.0;
    Var log_probs = tape.log_softmax(logits, 1);
    Var picked = tape.mul(log_probs, tape.leaf(std::move(onehot)));
    return tape.scale(tape.sum(picked), -1.0 / static_cast<double>(bsz));
}

std::vector<std::array<double, 3>> transformer_predict_proba(const TransformerModel& model,
                                                             const std::vector<EncodedSeq>& seqs) {
    TransformerBatch batch = make_transformer_batch(seqs, model.cfg);
    Tape tape;
    auto bound = num::bind_params(tape, model.params);
    Var logits = transformer_logits(tape, model.cfg, bound, batch, /*train=*/false, 0, 0);
    Var probs = tape.softmax(logits, 1);
    const Tensor& v = tape.value(probs);
    std::vector<std::array<double, 3>> out;
    out.reserve(seqs.size());
    for (std::int64_t i = 0; i < batch.b; ++i)
        out.push_back({v[i * 3], v[i * 3 + 1], v[i * 3 + 2]});
    return out;
}

}  // namespace adprog

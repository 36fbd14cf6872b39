#include "adprog/rnn.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "adprog/errors.hpp"
#include "adprog/rng.hpp"

namespace adprog {

using num::Tape;
using num::Tensor;
using num::Var;

const char* to_string(CellKind k) {
    switch (k) {
        case CellKind::LSTM: return "lstm";
        case CellKind::GRU: return "gru";
        case CellKind::MinRnn: return "minrnn";
    }
    return "?";
}

std::optional<CellKind> parse_cell_kind(const std::string& s) {
    if (s == "lstm") return CellKind::LSTM;
    if (s == "gru") return CellKind::GRU;
    if (s == "minrnn") return CellKind::MinRnn;
    return std::nullopt;
}

RnnModel init_rnn(const RnnConfig& cfg, std::uint64_t seed) {
    if (cfg.hidden_dim <= 0) throw ConfigError("rnn: hidden_dim must be positive");
    if (cfg.n_features < 0) throw ConfigError("rnn: n_features must be >= 0");
    RnnModel m;
    m.cfg = cfg;
    Rng rng(seed);
    const std::int64_t d = cfg.input_dim();
    const std::int64_t h = cfg.hidden_dim;
    const std::int64_t o = cfg.output_dim();
    auto mat = [&rng](std::int64_t rows, std::int64_t cols) {
        return num::init_glorot(rng, {rows, cols}, rows, cols);
    };
    switch (cfg.cell) {
        case CellKind::LSTM: {
            m.params.add("wx", mat(d, 4 * h));
            m.params.add("wh", mat(h, 4 * h));
            Tensor b = Tensor::zeros({4 * h});
            for (std::int64_t i = h; i < 2 * h; ++i) b[i] = 1.0;  // forget gate open
            m.params.add("b", std::move(b));
            break;
        }
        case CellKind::GRU:
            m.params.add("wx", mat(d, 3 * h));
            m.params.add("wh", mat(h, 3 * h));
            m.params.add("b", Tensor::zeros({3 * h}));
            break;
        case CellKind::MinRnn:
            m.params.add("w_z", mat(d, h));
            m.params.add("u_h", mat(h, h));
            m.params.add("u_z", mat(h, h));
            m.params.add("b_u", Tensor::zeros({h}));
            break;
    }
    m.params.add("w_out", mat(h, o));
    m.params.add("b_out", Tensor::zeros({o}));
    return m;
}

std::int64_t rnn_param_count(const RnnConfig& cfg) {
    const std::int64_t d = cfg.input_dim();
    const std::int64_t h = cfg.hidden_dim;
    const std::int64_t o = cfg.output_dim();
    std::int64_t core = 0;
    switch (cfg.cell) {
        case CellKind::LSTM: core = d * 4 * h + h * 4 * h + 4 * h; break;
        case CellKind::GRU: core = d * 3 * h + h * 3 * h + 3 * h; break;
        case CellKind::MinRnn: core = d * h + h * h + h * h + h; break;
    }
    return core + h * o + o;
}

RnnState rnn_initial_state(Tape& tape, const RnnConfig& cfg) {
    RnnState s;
    s.h = tape.leaf(Tensor::zeros({1, cfg.hidden_dim}));
    if (cfg.cell == CellKind::LSTM) s.c = tape.leaf(Tensor::zeros({1, cfg.hidden_dim}));
    return s;
}

std::pair<Var, RnnState> cell_step(Tape& tape, const RnnConfig& cfg,
                                   const std::map<std::string, Var>& p, Var x, RnnState s) {
    const std::int64_t h = cfg.hidden_dim;
    RnnState next;
    switch (cfg.cell) {
        case CellKind::LSTM: {
            Var pre = tape.add(tape.add(tape.matmul(x, p.at("wx")), tape.matmul(s.h, p.at("wh"))),
                               p.at("b"));
            Var i = tape.sigmoid(tape.slice(pre, 1, 0, h));
            Var f = tape.sigmoid(tape.slice(pre, 1, h, h));
            Var g = tape.tanh(tape.slice(pre, 1, 2 * h, h));
            Var o = tape.sigmoid(tape.slice(pre, 1, 3 * h, h));
            next.c = tape.add(tape.mul(f, s.c), tape.mul(i, g));
            next.h = tape.mul(o, tape.tanh(next.c));
            break;
        }
        case CellKind::GRU: {
            Var gx = tape.add(tape.matmul(x, p.at("wx")), p.at("b"));
            Var gh = tape.matmul(s.h, p.at("wh"));
            Var r = tape.sigmoid(tape.add(tape.slice(gx, 1, 0, h), tape.slice(gh, 1, 0, h)));
            Var z = tape.sigmoid(tape.add(tape.slice(gx, 1, h, h), tape.slice(gh, 1, h, h)));
            Var n = tape.tanh(
                tape.add(tape.slice(gx, 1, 2 * h, h), tape.mul(r, tape.slice(gh, 1, 2 * h, h))));
            // h' = (1-z)*n + z*h, written as n + z*(h - n)
            next.h = tape.add(n, tape.mul(z, tape.sub(s.h, n)));
            break;
        }
        case CellKind::MinRnn: {
            Var z = tape.tanh(tape.matmul(x, p.at("w_z")));
            Var u = tape.sigmoid(tape.add(
                tape.add(tape.matmul(s.h, p.at("u_h")), tape.matmul(z, p.at("u_z"))), p.at("b_u")));
            // h' = u*h + (1-u)*z, written as z + u*(h - z)
            next.h = tape.add(z, tape.mul(u, tape.sub(s.h, z)));
            break;
        }
    }
    Var out = tape.add(tape.matmul(next.h, p.at("w_out")), p.at("b_out"));
    return {out, next};
}

namespace {

Var feedback_input(Tape& tape, const RnnConfig& cfg, Var prev_pred, int months_to_target) {
    Var dx_probs = tape.softmax(tape.slice(prev_pred, 1, 0, 3), 1);
    std::vector<Var> parts{dx_probs};
    if (cfg.n_features > 0) parts.push_back(tape.slice(prev_pred, 1, 3, cfg.n_features));
    parts.push_back(tape.leaf(
        Tensor({1, 1}, {static_cast<double>(months_to_target) / kHorizonMonths})));
    return tape.concat(parts, 1);
}

}  // namespace

RolloutOutputs rnn_rollout(Tape& tape, const RnnConfig& cfg,
                           const std::map<std::string, Var>& p, const EncodedSeq& e,
                           bool use_observations, RolloutTrace* trace) {
    if (e.inputs.empty()) throw ContractError("rollout: sequence has no input visits");
    if (static_cast<int>(e.inputs.front().size()) != cfg.input_dim())
        throw ContractError("rollout: input width does not match model configuration");
    if (e.target_month <= e.month_offsets.front())
        throw ContractError("rollout: target month not after the first visit");
    if (static_cast<double>(e.target_month) > kHorizonMonths)
        throw ContractError("rollout: sequence spans more than the 72-month horizon");

    std::map<int, std::size_t> visit_at_month;
    for (std::size_t j = 0; j < e.month_offsets.size(); ++j)
        visit_at_month[e.month_offsets[j]] = j;

    RolloutTrace local;
    RnnState state = rnn_initial_state(tape, cfg);
    Var prev_pred;  // prediction for the month about to be consumed
    std::map<int, Var> pred_at_month;

    const int start = e.month_offsets.front();
    for (int m = start; m < e.target_month; ++m) {
        Var x;
        const auto it = visit_at_month.find(m);
        if (m == start || (use_observations && it != visit_at_month.end())) {
            x = tape.leaf(Tensor({1, cfg.input_dim()}, e.inputs[it->second]));
            ++local.observed_inputs;
        } else {
            x = feedback_input(tape, cfg, prev_pred, e.target_month - m);
            ++local.feedback_inputs;
        }
        auto [out, next] = cell_step(tape, cfg, p, x, state);
        state = next;
        prev_pred = out;
        pred_at_month[m + 1] = out;
        ++local.total_steps;
    }

    RolloutOutputs out;
    for (std::size_t j = 1; j < e.month_offsets.size(); ++j)
        out.visit_preds.push_back(pred_at_month.at(e.month_offsets[j]));
    out.visit_preds.push_back(pred_at_month.at(e.target_month));
    out.final_pred = out.visit_preds.back();
    if (trace) *trace = local;
    return out;
}

Var rnn_rollout_loss(Tape& tape, const RnnConfig& cfg, const EncodedSeq& e,
                     const RolloutOutputs& out) {
    if (e.target_dx.size() != out.visit_preds.size())
        throw ContractError("rollout loss: target/prediction count mismatch");
    const std::size_t n = e.target_dx.size();
    if (n == 0) throw ContractError("rollout loss: no target visits");

    Var ce_sum;
    Var mse_sum;
    bool any_mse = false;
    for (std::size_t j = 0; j < n; ++j) {
        Var pred = out.visit_preds[j];
        Var log_probs = tape.log_softmax(tape.slice(pred, 1, 0, 3), 1);
        Tensor onehot = Tensor::zeros({1, 3});
        onehot[e.target_dx[j]] = 1.0;
        Var ce = tape.scale(tape.sum(tape.mul(log_probs, tape.leaf(std::move(onehot)))), -1.0);
        ce_sum = ce_sum.valid() ? tape.add(ce_sum, ce) : ce;

        if (cfg.n_features == 0) continue;
        const auto& mask = e.target_feature_mask[j];
        const double active = std::accumulate(mask.begin(), mask.end(), 0.0);
        if (active <= 0.0) continue;
        Var target = tape.leaf(Tensor({1, cfg.n_features}, e.target_features[j]));
        Var diff = tape.sub(tape.slice(pred, 1, 3, cfg.n_features), target);
        Var sq = tape.mul(diff, diff);
        Var masked = tape.mul(sq, tape.leaf(Tensor({1, cfg.n_features}, mask)));
        Var mse = tape.scale(tape.sum(masked), 1.0 / active);
        mse_sum = mse_sum.valid() ? tape.add(mse_sum, mse) : mse;
        any_mse = true;
    }
    Var loss = tape.scale(ce_sum, 1.0 / static_cast<double>(n));
    if (any_mse) loss = tape.add(loss, tape.scale(mse_sum, 1.0 / static_cast<double>(n)));
    return loss;
}

std::array<double, 3> rnn_predict_proba(const RnnModel& model, const EncodedSeq& e,
                                        bool use_observations, RolloutTrace* trace) {
    Tape tape;
    auto bound = num::bind_params(tape, model.params);
    auto out = rnn_rollout(tape, model.cfg, bound, e, use_observations, trace);
    Var probs = tape.softmax(tape.slice(out.final_pred, 1, 0, 3), 1);
    const Tensor& t = tape.value(probs);
    return {t[0], t[1], t[2]};
}

std::array<double, kFeatureCount> RnnFiller::predict_next(const SubjectHistory& h,
                                                          std::size_t upto) const {
    if (model_.cfg.n_features != kFeatureCount)
        throw ContractError("filler: imputation model must cover every feature channel");
    EncodedSeq e = encode_history_prefix(h, upto, ChannelMask::all());
    Tape tape;
    auto bound = num::bind_params(tape, model_.params);
    auto out = rnn_rollout(tape, model_.cfg, bound, e, /*use_observations=*/true, nullptr);
    const Tensor& pred = tape.value(out.final_pred);
    std::array<double, kFeatureCount> feats{};
    for (int f = 0; f < kFeatureCount; ++f) feats[static_cast<std::size_t>(f)] = pred[3 + f];
    return feats;
}

}  // namespace adprog

// Recurrent cells, monthly rollout, and the attention classifier: gradient
// checks against central finite differences, structural traces, masking and
// permutation properties, and closed-form parameter counts.
#include <doctest.h>

#include <algorithm>
#include <array>
#include <cmath>
#include <functional>
#include <map>
#include <string>
#include <vector>

#include "adprog/encoding.hpp"
#include "adprog/errors.hpp"
#include "adprog/metrics.hpp"
#include "adprog/optim.hpp"
#include "adprog/rng.hpp"
#include "adprog/rnn.hpp"
#include "adprog/sequences.hpp"
#include "adprog/transformer.hpp"

using namespace adprog;
using num::ParamStore;
using num::Tape;
using num::Tensor;
using num::Var;

namespace {

// Hand-built encoded sequence: diagnosis one-hot + n_features synthetic
// values + time channel, at the given month offsets.
EncodedSeq make_encoded(const std::vector<int>& months, const std::vector<int>& dxs,
                        int n_features) {
    REQUIRE(months.size() == dxs.size());
    REQUIRE(months.size() >= 2);
    EncodedSeq e;
    e.target_month = months.back() - months.front();
    const std::size_t n = months.size() - 1;
    for (std::size_t j = 0; j < n; ++j) {
        std::vector<double> x(3, 0.0);
        x[static_cast<std::size_t>(dxs[j])] = 1.0;
        for (int f = 0; f < n_features; ++f)
            x.push_back(0.1 * (f + 1) + 0.05 * static_cast<double>(j) - 0.2);
        x.push_back(static_cast<double>(months.back() - months[j]) / kHorizonMonths);
        e.inputs.push_back(std::move(x));
        e.month_offsets.push_back(months[j] - months.front());
    }
    for (std::size_t j = 1; j <= n; ++j) {
        e.target_dx.push_back(dxs[j]);
        std::vector<double> feats;
        for (int f = 0; f < n_features; ++f)
            feats.push_back(0.1 * (f + 1) + 0.05 * static_cast<double>(j) - 0.15);
        e.target_features.push_back(feats);
        e.target_feature_mask.push_back(std::vector<double>(feats.size(), 1.0));
    }
    e.final_dx = dxs.back() == 0 ? Diagnosis::CN : (dxs.back() == 1 ? Diagnosis::MCI : Diagnosis::AD);
    return e;
}

// Finite-difference gradient check of a scalar loss built from a ParamStore.
// `entries_per_tensor` = 0 checks every entry.
void gradcheck_store(ParamStore& store,
                     const std::function<Var(Tape&, const std::map<std::string, Var>&)>& build,
                     double tol, int entries_per_tensor = 0) {
    auto eval = [&]() {
        Tape t;
        auto b = num::bind_params(t, store);
        return t.value(build(t, b))[0];
    };
    Tape tape;
    auto bound = num::bind_params(tape, store);
    Var loss = build(tape, bound);
    REQUIRE(tape.value(loss).numel() == 1);
    tape.backward(loss);

    const double eps = 1e-5;
    Rng pick(9001);
    for (const auto& name : store.names()) {
        Tensor& t = store.at(name);
        const Tensor& g = tape.grad(bound.at(name));
        std::vector<std::int64_t> idx;
        if (entries_per_tensor <= 0 || t.numel() <= entries_per_tensor) {
            for (std::int64_t i = 0; i < t.numel(); ++i) idx.push_back(i);
        } else {
            for (int k = 0; k < entries_per_tensor; ++k)
                idx.push_back(static_cast<std::int64_t>(
                    pick.next_below(static_cast<std::uint64_t>(t.numel()))));
        }
        for (std::int64_t i : idx) {
            const double keep = t[i];
            t[i] = keep + eps;
            const double fp = eval();
            t[i] = keep - eps;
            const double fm = eval();
            t[i] = keep;
            const double fd = (fp - fm) / (2.0 * eps);
            const double ad = g[i];
            const double rel = std::abs(ad - fd) / std::max({std::abs(ad), std::abs(fd), 1e-3});
            if (rel >= tol) {
                CAPTURE(name);
                CAPTURE(i);
                CAPTURE(ad);
                CAPTURE(fd);
            }
            CHECK(rel < tol);
        }
    }
}

std::array<double, 3> softmax3(const double* v) {
    const double m = std::max({v[0], v[1], v[2]});
    const double e0 = std::exp(v[0] - m), e1 = std::exp(v[1] - m), e2 = std::exp(v[2] - m);
    const double s = e0 + e1 + e2;
    return {e0 / s, e1 / s, e2 / s};
}

VisitRecord full_visit(const std::string& id, int month, Diagnosis dx, double base) {
    VisitRecord v;
    v.subject_id = id;
    v.exam_month = month;
    v.diagnosis = dx;
    for (int f = 0; f < kFeatureCount; ++f) v.set_feature(f, base + 0.01 * f);
    return v;
}

}  // namespace

// ---------------------------------------------------------------------------
// Encoding
// ---------------------------------------------------------------------------

TEST_CASE("sequence encoding lays out diagnosis, features, and time channel") {
    VisitSequence seq;
    seq.visits = {full_visit("s", 0, Diagnosis::CN, 1.0), full_visit("s", 6, Diagnosis::MCI, 2.0),
                  full_visit("s", 18, Diagnosis::MCI, 3.0)};
    add_months_to_final(seq.visits);
    seq.target_dx = Diagnosis::MCI;
    const auto e = encode_sequence(seq, ChannelMask::all());
    REQUIRE(e.inputs.size() == 2);
    REQUIRE(e.target_dx.size() == 2);
    CHECK(e.target_month == 18);
    CHECK(e.month_offsets == std::vector<int>{0, 6});
    CHECK(e.inputs[0].size() == 26);
    CHECK(e.inputs[0][0] == 1.0);  // CN one-hot
    CHECK(e.inputs[0][3] == doctest::Approx(1.0));
    CHECK(e.inputs[0][25] == doctest::Approx(18.0 / 72.0));
    CHECK(e.inputs[1][1] == 1.0);  // MCI one-hot
    CHECK(e.inputs[1][25] == doctest::Approx(12.0 / 72.0));
    CHECK(e.target_dx == std::vector<int>{1, 1});
    CHECK(e.target_features[1][0] == doctest::Approx(3.0));
    CHECK(e.target_feature_mask[0] == std::vector<double>(22, 1.0));

    ChannelMask cog = ChannelMask::only(FeatureCategory::Cognitive);
    const auto ec = encode_sequence(seq, cog);
    CHECK(ec.inputs[0].size() == 3 + 10 + 1);

    VisitSequence missing = seq;
    missing.visits[1].set_feature(4, std::nullopt);
    CHECK_THROWS_AS(encode_sequence(missing, ChannelMask::all()), ContractError);
}

TEST_CASE("history encoding derives its own time channel and honors the observation mask") {
    SubjectHistory h;
    h.subject_id = "s";
    h.visits = {full_visit("s", 10, Diagnosis::CN, 0.5), full_visit("s", 16, Diagnosis::CN, 0.6),
                full_visit("s", 28, Diagnosis::MCI, 0.7)};
    const auto e = encode_history(h, ChannelMask::all());
    REQUIRE(e.inputs.size() == 2);
    CHECK(e.target_month == 18);
    CHECK(e.inputs[0][25] == doctest::Approx(18.0 / 72.0));
    CHECK(e.inputs[1][25] == doctest::Approx(12.0 / 72.0));
    CHECK(e.target_feature_mask[0] == std::vector<double>(22, 1.0));

    std::vector<std::array<bool, kFeatureCount>> observed(
        3, [] { std::array<bool, kFeatureCount> a{}; a.fill(true); return a; }());
    observed[1][3] = false;
    observed[2][0] = false;
    const auto em = encode_history(h, ChannelMask::all(), &observed);
    CHECK(em.target_feature_mask[0][3] == 0.0);
    CHECK(em.target_feature_mask[0][4] == 1.0);
    CHECK(em.target_feature_mask[1][0] == 0.0);

    // Prefix encoding re-anchors the time channel on the prediction target.
    const auto ep = encode_history_prefix(h, 1, ChannelMask::all());
    REQUIRE(ep.inputs.size() == 1);
    CHECK(ep.target_month == 6);
    CHECK(ep.inputs[0][25] == doctest::Approx(6.0 / 72.0));
    CHECK_THROWS_AS(encode_history_prefix(h, 0, ChannelMask::all()), ContractError);
    CHECK_THROWS_AS(encode_history_prefix(h, 3, ChannelMask::all()), ContractError);
}

// ---------------------------------------------------------------------------
// Recurrent cells
// ---------------------------------------------------------------------------

TEST_CASE("parameter counts match the closed forms for every cell") {
    for (const CellKind kind : {CellKind::LSTM, CellKind::GRU, CellKind::MinRnn}) {
        for (const int hidden : {4, 32}) {
            for (const int nf : {22, 10}) {
                RnnConfig cfg;
                cfg.cell = kind;
                cfg.hidden_dim = hidden;
                cfg.n_features = nf;
                const RnnModel m = init_rnn(cfg, 11);
                CHECK(m.params.count_params() == rnn_param_count(cfg));
            }
        }
    }
    // Spot value: LSTM h=8, 22 features -> d=26, o=25.
    RnnConfig cfg;
    cfg.cell = CellKind::LSTM;
    cfg.hidden_dim = 8;
    CHECK(rnn_param_count(cfg) == 26 * 32 + 8 * 32 + 32 + 8 * 25 + 25);
}

TEST_CASE("saturated update gate freezes the hidden state") {
    RnnConfig cfg;
    cfg.cell = CellKind::MinRnn;
    cfg.hidden_dim = 4;
    cfg.n_features = 2;
    RnnModel m = init_rnn(cfg, 3);
    Tensor& bu = m.params.at("b_u");
    for (std::int64_t i = 0; i < bu.numel(); ++i) bu[i] = 50.0;  // u -> 1

    Tape tape;
    auto bound = num::bind_params(tape, m.params);
    RnnState s;
    s.h = tape.leaf(Tensor({1, 4}, {0.3, -0.2, 0.7, 0.1}));
    Var x = tape.leaf(Tensor({1, 6}, {1, 0, 0, 0.5, -0.5, 0.1}));
    auto [out, next] = cell_step(tape, cfg, bound, x, s);
    const Tensor& h0 = tape.value(s.h);
    const Tensor& h1 = tape.value(next.h);
    for (std::int64_t i = 0; i < 4; ++i) CHECK(std::abs(h1[i] - h0[i]) < 1e-12);
}

TEST_CASE("suppressed update gate reduces the gated cell to its candidate state") {
    RnnConfig cfg;
    cfg.cell = CellKind::GRU;
    cfg.hidden_dim = 3;
    cfg.n_features = 1;
    RnnModel m = init_rnn(cfg, 5);
    Tensor& b = m.params.at("b");
    for (int i = 3; i < 6; ++i) b[i] = -50.0;  // update gate -> 0

    const std::vector<double> xv{0.0, 1.0, 0.0, 0.4, 0.05};
    const std::vector<double> hv{0.2, -0.3, 0.5};
    Tape tape;
    auto bound = num::bind_params(tape, m.params);
    RnnState s;
    s.h = tape.leaf(Tensor({1, 3}, hv));
    auto [out, next] = cell_step(tape, cfg, bound, tape.leaf(Tensor({1, 5}, xv)), s);

    // Host-side candidate-state oracle from the raw weights.
    const Tensor& wx = m.params.at("wx");
    const Tensor& wh = m.params.at("wh");
    auto gx = [&](int k) {
        double v = b[k];
        for (int i = 0; i < 5; ++i) v += xv[static_cast<std::size_t>(i)] * wx[i * 9 + k];
        return v;
    };
    auto gh = [&](int k) {
        double v = 0.0;
        for (int j = 0; j < 3; ++j) v += hv[static_cast<std::size_t>(j)] * wh[j * 9 + k];
        return v;
    };
    const Tensor& h1 = tape.value(next.h);
    for (int k = 0; k < 3; ++k) {
        const double r = 1.0 / (1.0 + std::exp(-(gx(k) + gh(k))));
        const double cand = std::tanh(gx(6 + k) + r * gh(6 + k));
        CHECK(h1[k] == doctest::Approx(cand).epsilon(1e-9));
    }
}

TEST_CASE("all three cells pass finite-difference checks through 3 unrolled steps") {
    const EncodedSeq e = make_encoded({0, 1, 3}, {0, 1, 1}, 2);
    for (const CellKind kind : {CellKind::LSTM, CellKind::GRU, CellKind::MinRnn}) {
        RnnConfig cfg;
        cfg.cell = kind;
        cfg.hidden_dim = 4;
        cfg.n_features = 2;
        RnnModel m = init_rnn(cfg, 17 + static_cast<int>(kind));
        gradcheck_store(
            m.params,
            [&](Tape& t, const std::map<std::string, Var>& b) {
                return rnn_rollout_loss(t, cfg, e,
                                        rnn_rollout(t, cfg, b, e, /*use_observations=*/true));
            },
            1e-4);
    }
}

// ---------------------------------------------------------------------------
// Monthly rollout
// ---------------------------------------------------------------------------

TEST_CASE("rollout consumes one step per month and feeds back between visits") {
    RnnConfig cfg;
    cfg.cell = CellKind::MinRnn;
    cfg.hidden_dim = 8;
    cfg.n_features = 4;
    const RnnModel m = init_rnn(cfg, 23);

    RolloutTrace trace;
    const auto probs = rnn_predict_proba(m, make_encoded({0, 6}, {0, 1}, 4), true, &trace);
    CHECK(trace.total_steps == 6);
    CHECK(trace.observed_inputs == 1);
    CHECK(trace.feedback_inputs == 5);
    CHECK(probs[0] + probs[1] + probs[2] == doctest::Approx(1.0).epsilon(1e-9));

    // Consecutive months: every step has an observation.
    RolloutTrace dense;
    rnn_predict_proba(m, make_encoded({0, 1, 2, 3}, {0, 0, 1, 1}, 4), true, &dense);
    CHECK(dense.total_steps == 3);
    CHECK(dense.observed_inputs == 3);
    CHECK(dense.feedback_inputs == 0);

    // Free-running mode ignores every observation after the first visit.
    RolloutTrace free_run;
    rnn_predict_proba(m, make_encoded({0, 6, 12}, {0, 1, 1}, 4), false, &free_run);
    CHECK(free_run.total_steps == 12);
    CHECK(free_run.observed_inputs == 1);
    CHECK(free_run.feedback_inputs == 11);

    CHECK_THROWS_AS(rnn_predict_proba(m, make_encoded({0, 80}, {0, 1}, 4), true, nullptr),
                    ContractError);
}

TEST_CASE("rollout is causal: a later visit never changes an earlier prediction") {
    RnnConfig cfg;
    cfg.cell = CellKind::GRU;
    cfg.hidden_dim = 6;
    cfg.n_features = 3;
    const RnnModel m = init_rnn(cfg, 29);
    const EncodedSeq base = make_encoded({0, 6, 12}, {0, 1, 2}, 3);
    EncodedSeq bumped = base;
    bumped.inputs[1][4] += 0.75;  // perturb the month-6 visit

    Tape t1, t2;
    auto b1 = num::bind_params(t1, m.params);
    auto b2 = num::bind_params(t2, m.params);
    const auto o1 = rnn_rollout(t1, cfg, b1, base, true);
    const auto o2 = rnn_rollout(t2, cfg, b2, bumped, true);
    REQUIRE(o1.visit_preds.size() == 2);
    const Tensor& p6_a = t1.value(o1.visit_preds[0]);
    const Tensor& p6_b = t2.value(o2.visit_preds[0]);
    for (std::int64_t i = 0; i < p6_a.numel(); ++i) CHECK(p6_a[i] == p6_b[i]);
    const Tensor& p12_a = t1.value(o1.visit_preds[1]);
    const Tensor& p12_b = t2.value(o2.visit_preds[1]);
    double diff = 0.0;
    for (std::int64_t i = 0; i < p12_a.numel(); ++i) diff += std::abs(p12_a[i] - p12_b[i]);
    CHECK(diff > 1e-9);
}

TEST_CASE("rollout loss equals the hand cross-entropy when features are masked out") {
    RnnConfig cfg;
    cfg.cell = CellKind::LSTM;
    cfg.hidden_dim = 5;
    cfg.n_features = 3;
    const RnnModel m = init_rnn(cfg, 31);
    EncodedSeq e = make_encoded({0, 6, 12}, {0, 1, 2}, 3);

    EncodedSeq ce_only = e;
    for (auto& row : ce_only.target_feature_mask) std::fill(row.begin(), row.end(), 0.0);

    Tape tape;
    auto bound = num::bind_params(tape, m.params);
    const auto out = rnn_rollout(tape, cfg, bound, ce_only, true);
    const Var loss = rnn_rollout_loss(tape, cfg, ce_only, out);

    double ce = 0.0;
    for (std::size_t j = 0; j < out.visit_preds.size(); ++j) {
        const Tensor& pred = tape.value(out.visit_preds[j]);
        const auto p = softmax3(pred.data());
        ce += -std::log(p[static_cast<std::size_t>(ce_only.target_dx[j])]);
    }
    ce /= static_cast<double>(out.visit_preds.size());
    CHECK(tape.value(loss)[0] == doctest::Approx(ce).epsilon(1e-9));

    // Adding the feature error term can only increase the loss.
    Tape tape2;
    auto bound2 = num::bind_params(tape2, m.params);
    const auto out2 = rnn_rollout(tape2, cfg, bound2, e, true);
    const Var full = rnn_rollout_loss(tape2, cfg, e, out2);
    CHECK(tape2.value(full)[0] >= tape.value(loss)[0] - 1e-12);
}

TEST_CASE("imputation predictor wraps the recurrent model") {
    RnnConfig cfg;
    cfg.cell = CellKind::MinRnn;
    cfg.hidden_dim = 8;
    RnnFiller filler(init_rnn(cfg, 37));
    CHECK_FALSE(filler.trained());
    filler.mark_trained();
    CHECK(filler.trained());

    SubjectHistory h;
    h.subject_id = "s";
    h.visits = {full_visit("s", 0, Diagnosis::CN, 0.1), full_visit("s", 6, Diagnosis::CN, 0.2),
                full_visit("s", 12, Diagnosis::MCI, 0.3)};
    h.visits[2].set_feature(7, std::nullopt);  // the target visit may be incomplete

    const auto p1 = filler.predict_next(h, 2);
    const auto p2 = filler.predict_next(h, 2);
    for (int f = 0; f < kFeatureCount; ++f) {
        CHECK(std::isfinite(p1[static_cast<std::size_t>(f)]));
        CHECK(p1[static_cast<std::size_t>(f)] == p2[static_cast<std::size_t>(f)]);
    }

    RnnConfig narrow = cfg;
    narrow.n_features = 5;
    RnnFiller bad(init_rnn(narrow, 38));
    bad.mark_trained();
    CHECK_THROWS_AS(bad.predict_next(h, 2), ContractError);
}

// ---------------------------------------------------------------------------
// Attention classifier
// ---------------------------------------------------------------------------

namespace {

TransformerConfig tiny_tf(int d_model = 16, int heads = 2, int enc = 1, int dec = 1, int ffn = 24,
                          int nf = 4) {
    TransformerConfig cfg;
    cfg.n_encoder_layers = enc;
    cfg.n_decoder_layers = dec;
    cfg.n_heads = heads;
    cfg.d_model = d_model;
    cfg.d_ffn = ffn;
    cfg.dropout = 0.0;
    cfg.max_seq_len = 8;
    cfg.n_features = nf;
    return cfg;
}

std::int64_t tf_param_oracle(const TransformerConfig& c) {
    const std::int64_t d = c.d_model, f = c.d_ffn, din = c.input_dim();
    const std::int64_t attn = 4 * (d * d + d);
    const std::int64_t ln = 2 * d;
    const std::int64_t ffn = d * f + f + f * d + d;
    std::int64_t n = din * d + d;  // input projection
    n += c.n_encoder_layers * (ln + attn + ln + ffn);
    n += ln;  // final encoder norm
    n += d;   // learned decoder query
    n += c.n_decoder_layers * (ln + attn + ln + attn + ln + ffn);
    n += ln;  // final decoder norm
    n += d * 3 + 3;
    return n;
}

}  // namespace

TEST_CASE("attention classifier parameter count matches the closed form") {
    const TransformerConfig small = tiny_tf();
    CHECK(init_transformer(small, 1).params.count_params() == tf_param_oracle(small));

    TransformerConfig defaults;  // published layer/head/width configuration
    const std::int64_t count = init_transformer(defaults, 2).params.count_params();
    CHECK(count == tf_param_oracle(defaults));
    CHECK(count == 8443651);
    MESSAGE("default attention classifier parameter count: ", count);
}

TEST_CASE("batch construction pads and encodes time as sinusoids of months remaining") {
    const TransformerConfig cfg = tiny_tf();
    const auto e1 = make_encoded({0, 6}, {0, 1}, 4);
    const auto e2 = make_encoded({0, 6, 12, 24}, {0, 0, 1, 1}, 4);
    const auto batch = make_transformer_batch({e1, e2}, cfg);
    CHECK(batch.b == 2);
    CHECK(batch.t == 3);
    CHECK(batch.lengths == std::vector<int>{1, 3});
    CHECK(batch.final_dx == std::vector<int>{1, 1});
    // Sequence 1, visit 0: 6 months to target; lowest frequency is 1.
    const std::int64_t d = cfg.d_model;
    CHECK(batch.time_enc[0] == doctest::Approx(std::sin(6.0)));
    CHECK(batch.time_enc[1] == doctest::Approx(std::cos(6.0)));
    // Padded positions carry zero tokens and zero time encoding.
    for (std::int64_t c = 0; c < cfg.input_dim(); ++c)
        CHECK(batch.tokens[(0 * 3 + 1) * cfg.input_dim() + c] == 0.0);
    for (std::int64_t c = 0; c < d; ++c) CHECK(batch.time_enc[(0 * 3 + 2) * d + c] == 0.0);
    CHECK(batch.tokens[(1 * 3 + 2) * cfg.input_dim() + 1] == 1.0);  // MCI one-hot, seq 2 visit 2

    TransformerConfig strict = cfg;
    strict.max_seq_len = 2;
    CHECK_THROWS_AS(make_transformer_batch({e2}, strict), ContractError);
    CHECK_THROWS_AS(make_transformer_batch({}, cfg), ContractError);
}

TEST_CASE("eval-mode forward is deterministic; dropout only acts in training mode") {
    TransformerConfig cfg = tiny_tf();
    cfg.dropout = 0.5;
    const TransformerModel m = init_transformer(cfg, 7);
    const auto batch = make_transformer_batch({make_encoded({0, 6, 12}, {0, 1, 1}, 4)}, cfg);

    auto forward = [&](bool train, std::int64_t step) {
        Tape tape;
        auto bound = num::bind_params(tape, m.params);
        Var logits = transformer_logits(tape, cfg, bound, batch, train, 99, step);
        const Tensor& v = tape.value(logits);
        return std::vector<double>(v.data(), v.data() + v.numel());
    };
    CHECK(forward(false, 0) == forward(false, 5));  // eval ignores the step counter
    CHECK(forward(true, 0) == forward(true, 0));    // deterministic given (seed, step)
    CHECK(forward(true, 0) != forward(true, 1));    // fresh masks every step
    CHECK(forward(true, 0) != forward(false, 0));
}

TEST_CASE("swapping two visits together with their times changes the logits") {
    const TransformerConfig cfg = tiny_tf();
    const TransformerModel m = init_transformer(cfg, 13);
    EncodedSeq a = make_encoded({0, 6, 12}, {0, 1, 2}, 4);
    a.inputs[0][3] = 0.9;  // make the two visits clearly distinct
    a.inputs[1][3] = -0.9;
    EncodedSeq b = a;
    std::swap(b.inputs[0], b.inputs[1]);
    std::swap(b.month_offsets[0], b.month_offsets[1]);

    const auto pa = transformer_predict_proba(m, {a});
    const auto pb = transformer_predict_proba(m, {b});
    const double diff = std::abs(pa[0][0] - pb[0][0]) + std::abs(pa[0][1] - pb[0][1]) +
                        std::abs(pa[0][2] - pb[0][2]);
    CHECK(diff > 1e-6);
}

TEST_CASE("padding a batch never changes another sequence's logits") {
    const TransformerConfig cfg = tiny_tf();
    const TransformerModel m = init_transformer(cfg, 19);
    const auto short_seq = make_encoded({0, 6, 12}, {0, 1, 1}, 4);
    const auto long_seq = make_encoded({0, 6, 12, 18, 30, 42}, {0, 0, 0, 1, 1, 2}, 4);

    const auto alone = transformer_predict_proba(m, {short_seq});
    const auto padded = transformer_predict_proba(m, {short_seq, long_seq});
    for (int c = 0; c < 3; ++c)
        CHECK(std::abs(alone[0][static_cast<std::size_t>(c)] -
                       padded[0][static_cast<std::size_t>(c)]) < 1e-5);
}

TEST_CASE("attention rows are stochastic over unmasked positions only") {
    const TransformerConfig cfg = tiny_tf(16, 2, 2, 2, 24, 4);
    const TransformerModel m = init_transformer(cfg, 41);
    const auto batch = make_transformer_batch(
        {make_encoded({0, 6, 12}, {0, 1, 1}, 4), make_encoded({0, 6, 12, 18, 24}, {0, 0, 1, 1, 2}, 4)},
        cfg);
    Tape tape;
    auto bound = num::bind_params(tape, m.params);
    AttnTrace trace;
    transformer_logits(tape, cfg, bound, batch, false, 0, 0, &trace);
    REQUIRE(trace.encoder_self.size() == 2);
    REQUIRE(trace.decoder_cross.size() == 2);

    const std::int64_t t = batch.t;
    for (const Tensor& layer : trace.encoder_self) {
        REQUIRE(layer.shape() == std::vector<std::int64_t>{2, 2, t, t});
        for (std::int64_t s = 0; s < 2; ++s) {
            const auto len = static_cast<std::int64_t>(batch.lengths[static_cast<std::size_t>(s)]);
            for (std::int64_t h = 0; h < 2; ++h)
                for (std::int64_t i = 0; i < len; ++i) {
                    double sum = 0.0;
                    for (std::int64_t j = 0; j < t; ++j) {
                        const double v = layer[((s * 2 + h) * t + i) * t + j];
                        if (j > i || j >= len) CHECK(v == 0.0);
                        sum += v;
                    }
                    CHECK(sum == doctest::Approx(1.0).epsilon(1e-9));
                }
        }
    }
    for (const Tensor& layer : trace.decoder_cross) {
        REQUIRE(layer.shape() == std::vector<std::int64_t>{2, 2, 1, t});
        for (std::int64_t s = 0; s < 2; ++s) {
            const auto len = static_cast<std::int64_t>(batch.lengths[static_cast<std::size_t>(s)]);
            for (std::int64_t h = 0; h < 2; ++h) {
                double sum = 0.0;
                for (std::int64_t j = 0; j < t; ++j) {
                    const double v = layer[(s * 2 + h) * t + j];
                    if (j >= len) CHECK(v == 0.0);
                    sum += v;
                }
                CHECK(sum == doctest::Approx(1.0).epsilon(1e-9));
            }
        }
    }
}

TEST_CASE("full attention classifier passes the finite-difference check on a 2-visit input") {
    const TransformerConfig cfg = tiny_tf(8, 2, 1, 1, 12, 3);
    TransformerModel m = init_transformer(cfg, 43);
    const auto batch = make_transformer_batch(
        {make_encoded({0, 6}, {0, 1}, 3), make_encoded({0, 6, 12}, {0, 1, 2}, 3)}, cfg);
    gradcheck_store(
        m.params,
        [&](Tape& t, const std::map<std::string, Var>& b) {
            return transformer_loss(t, transformer_logits(t, cfg, b, batch, false, 0, 0),
                                    batch.final_dx);
        },
        1e-3, /*entries_per_tensor=*/6);
}

TEST_CASE("classifier batch loss equals the hand cross-entropy") {
    Tape tape;
    Var logits = tape.leaf(Tensor({2, 3}, {1.0, 0.0, 0.0, 0.0, 2.0, 0.0}), true);
    const Var loss = transformer_loss(tape, logits, {0, 1});
    const double ce0 = -std::log(std::exp(1.0) / (std::exp(1.0) + 2.0));
    const double ce1 = -std::log(std::exp(2.0) / (std::exp(2.0) + 2.0));
    CHECK(tape.value(loss)[0] == doctest::Approx((ce0 + ce1) / 2.0).epsilon(1e-12));
    CHECK_THROWS_AS(transformer_loss(tape, logits, {0}), ContractError);
}

TEST_CASE("probability outputs are normalized and tie-break toward lower severity") {
    const TransformerConfig cfg = tiny_tf();
    const TransformerModel m = init_transformer(cfg, 47);
    const auto probs =
        transformer_predict_proba(m, {make_encoded({0, 6}, {0, 1}, 4)});
    CHECK(probs[0][0] + probs[0][1] + probs[0][2] == doctest::Approx(1.0).epsilon(1e-9));
    CHECK(argmax_class({0.25, 0.25, 0.25}) == Diagnosis::CN);
}

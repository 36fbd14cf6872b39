#include "adprog/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <set>
#include <utility>

#include "adprog/checkpoint.hpp"
#include "adprog/errors.hpp"
#include "adprog/metrics.hpp"
#include "adprog/rng.hpp"
#include "json.hpp"

namespace adprog {

using num::ParamStore;
using num::Tape;
using num::Var;

const char* to_string(ModelKind k) {
    switch (k) {
        case ModelKind::LSTM: return "lstm";
        case ModelKind::GRU: return "gru";
        case ModelKind::MinRnn: return "minrnn";
        case ModelKind::Transformer: return "transformer";
    }
    return "?";
}

std::optional<ModelKind> parse_model_kind(const std::string& s) {
    if (s == "lstm") return ModelKind::LSTM;
    if (s == "gru") return ModelKind::GRU;
    if (s == "minrnn") return ModelKind::MinRnn;
    if (s == "transformer") return ModelKind::Transformer;
    return std::nullopt;
}

namespace {

CellKind cell_of(ModelKind k) {
    switch (k) {
        case ModelKind::LSTM: return CellKind::LSTM;
        case ModelKind::GRU: return CellKind::GRU;
        case ModelKind::MinRnn: return CellKind::MinRnn;
        case ModelKind::Transformer: break;
    }
    throw ContractError("trainer: the attention classifier has no recurrent cell");
}

std::uint64_t fold_seed(const TrainConfig& cfg, int fold_index, const char* stage) {
    return stage_seed(cfg.seed, "fold" + std::to_string(fold_index) + "." + stage);
}

SubjectHistory to_history(const VisitSequence& s) { return SubjectHistory{s.subject_id, s.visits}; }

NormStats unit_stats() {
    NormStats unit;
    unit.mean.fill(0.0);
    unit.std.fill(1.0);
    return unit;
}

void check_finite(double loss, const char* what, int fold_index, int epoch) {
    if (std::isfinite(loss)) return;
    throw NumericalError(std::string(what) + " loss is not finite (fold " +
                         std::to_string(fold_index) + ", epoch " + std::to_string(epoch) + ")");
}

// Validation BCA for early stopping; NaN when there is nothing to validate.
double val_score(const TrainedModel& m, const std::vector<EncodedSeq>& val) {
    if (val.empty()) return std::numeric_limits<double>::quiet_NaN();
    const auto probs = model_predict(m, val);
    ConfusionMatrix cm;
    for (std::size_t i = 0; i < val.size(); ++i)
        cm.add(val[i].final_dx, argmax_class(probs[i]));
    return bca(cm).value;
}

}  // namespace

void TrainConfig::validate() const {
    if (hidden_dim < 1) throw ConfigError("train: hidden_dim must be >= 1");
    if (!(lr >= 0.0) || !std::isfinite(lr)) throw ConfigError("train: lr must be finite and >= 0");
    if (batch_size < 1) throw ConfigError("train: batch_size must be >= 1");
    if (max_epochs < 1) throw ConfigError("train: max_epochs must be >= 1");
    if (patience < 0) throw ConfigError("train: patience must be >= 0");
    if (clip_norm < 0.0) throw ConfigError("train: clip_norm must be >= 0");
    if (filler.hidden_dim < 1) throw ConfigError("train: filler hidden_dim must be >= 1");
    if (filler.epochs < 0) throw ConfigError("train: filler epochs must be >= 0");
    if (!(filler.lr >= 0.0)) throw ConfigError("train: filler lr must be >= 0");
    if (model == ModelKind::Transformer) transformer.validate();
}

RnnFiller train_filler(const std::vector<SubjectHistory>& boot,
                       const std::vector<std::vector<std::array<bool, kFeatureCount>>>& observed,
                       const FillerConfig& cfg, std::uint64_t seed) {
    if (boot.size() != observed.size())
        throw ContractError("filler: one observation mask row set per history required");
    RnnConfig rc;
    rc.cell = CellKind::MinRnn;
    rc.hidden_dim = cfg.hidden_dim;
    rc.n_features = kFeatureCount;
    RnnFiller filler(init_rnn(rc, stage_seed(seed, "init")));

    // Encode once; inputs never change across epochs. Histories the rollout
    // cannot cover (span beyond the horizon) are left out.
    std::vector<EncodedSeq> enc;
    for (std::size_t i = 0; i < boot.size(); ++i) {
        if (boot[i].visits.size() < 2) continue;
        auto e = encode_history(boot[i], ChannelMask::all(), &observed[i]);
        if (static_cast<double>(e.target_month) > kHorizonMonths) continue;
        enc.push_back(std::move(e));
    }

    num::AdamConfig adam;
    adam.lr = cfg.lr;
    adam.clip_norm = 5.0;
    auto& store = filler.model().params;
    const auto& rcfg = filler.model().cfg;

    std::vector<std::size_t> order(enc.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
        Rng rng(stage_seed(seed, "epoch" + std::to_string(epoch)));
        rng.shuffle(order);
        for (const auto idx : order) {
            Tape tape;
            const auto p = num::bind_params(tape, store);
            const auto out = rnn_rollout(tape, rcfg, p, enc[idx], /*use_observations=*/true);
            const auto loss = rnn_rollout_loss(tape, rcfg, enc[idx], out);
            const double lv = tape.value(loss)[0];
            if (!std::isfinite(lv))
                throw NumericalError("imputation model loss is not finite (epoch " +
                                     std::to_string(epoch) + ")");
            tape.backward(loss);
            num::adam_step(store, tape, p, adam);
        }
    }
    filler.mark_trained();
    return filler;
}

FoldData prepare_fold(const std::vector<VisitSequence>& sequences, const DatasetSplit& split,
                      const ChannelMask& mask, const TrainConfig& cfg) {
    cfg.validate();
    std::map<int, const VisitSequence*> by_id;
    for (const auto& s : sequences) by_id[s.seq_id] = &s;
    const auto gather = [&](const std::vector<int>& ids) {
        std::vector<VisitSequence> out;
        out.reserve(ids.size());
        for (const int id : ids) {
            const auto it = by_id.find(id);
            if (it == by_id.end())
                throw ContractError("fold references unknown sequence id " + std::to_string(id));
            out.push_back(*it->second);
        }
        return out;
    };

    auto train_all = gather(split.train);
    const auto test_seqs = gather(split.test);
    if (train_all.empty()) throw ContractError("fold has no training sequences");

    // Validation carve-out: one tenth of the training split, stratified by
    // group so every sequence length is represented.
    std::set<int> val_ids;
    if (train_all.size() >= 2) {
        const auto carve =
            stratified_kfold(train_all, 10, fold_seed(cfg, split.fold_index, "carveout"));
        val_ids.insert(carve[0].test.begin(), carve[0].test.end());
    }
    std::vector<VisitSequence> train_seqs, val_seqs;
    for (auto& s : train_all)
        (val_ids.count(s.seq_id) ? val_seqs : train_seqs).push_back(std::move(s));

    FoldData fold;
    fold.fold_index = split.fold_index;

    // Histories in the three splits, normalized with training-split stats.
    const auto make_histories = [](const std::vector<VisitSequence>& seqs) {
        std::vector<SubjectHistory> hs;
        hs.reserve(seqs.size());
        for (const auto& s : seqs) hs.push_back(to_history(s));
        return hs;
    };
    auto hist_train = make_histories(train_seqs);
    auto hist_val = make_histories(val_seqs);
    auto hist_test = make_histories(test_seqs);

    std::vector<std::vector<std::array<bool, kFeatureCount>>> observed;
    observed.reserve(hist_train.size());
    for (const auto& h : hist_train) {
        std::vector<std::array<bool, kFeatureCount>> rows;
        rows.reserve(h.visits.size());
        for (const auto& v : h.visits) {
            std::array<bool, kFeatureCount> row{};
            for (int f = 0; f < kFeatureCount; ++f)
                row[static_cast<std::size_t>(f)] = v.feature(f).has_value();
            rows.push_back(row);
        }
        observed.push_back(std::move(rows));
    }

    fold.norm = fit_norm(hist_train);
    apply_norm(hist_train, fold.norm);
    apply_norm(hist_val, fold.norm);
    apply_norm(hist_test, fold.norm);

    // Filler training set: bootstrap-filled copies; the loss still counts
    // only originally observed cells. In normalized space the no-history
    // fallback is the zero vector.
    const auto unit = unit_stats();
    auto boot = hist_train;
    bootstrap_fill(boot, unit);
    const auto filler =
        train_filler(boot, observed, cfg.filler, fold_seed(cfg, split.fold_index, "filler"));

    model_fill(hist_train, filler, unit);
    model_fill(hist_val, filler, unit);
    model_fill(hist_test, filler, unit);

    const auto encode_all = [&](std::vector<VisitSequence> seqs,
                                const std::vector<SubjectHistory>& filled,
                                std::vector<EncodedSeq>& enc, std::vector<SeqMeta>& meta) {
        enc.reserve(seqs.size());
        meta.reserve(seqs.size());
        for (std::size_t i = 0; i < seqs.size(); ++i) {
            seqs[i].visits = filled[i].visits;
            enc.push_back(encode_sequence(seqs[i], mask));
            meta.push_back(SeqMeta{seqs[i].seq_id, seqs[i].label, seqs[i].group});
        }
    };
    encode_all(std::move(train_seqs), hist_train, fold.train, fold.train_meta);
    encode_all(std::move(val_seqs), hist_val, fold.val, fold.val_meta);
    encode_all(std::move(test_seqs), hist_test, fold.test, fold.test_meta);
    return fold;
}

TrainedModel train_on(const FoldData& fold, const TrainConfig& cfg, const ChannelMask& mask) {
    cfg.validate();
    if (fold.train.empty()) throw ContractError("fold has no training sequences");

    TrainedModel m;
    m.kind = cfg.model;
    m.mask = mask;
    m.fold_index = fold.fold_index;

    TransformerConfig tcfg = cfg.transformer;
    RnnConfig rcfg;
    const std::uint64_t init_seed = fold_seed(cfg, fold.fold_index, "init");
    if (cfg.model == ModelKind::Transformer) {
        tcfg.n_features = mask.n_features();
        tcfg.validate();
        m.tf = init_transformer(tcfg, init_seed);
    } else {
        rcfg.cell = cell_of(cfg.model);
        rcfg.hidden_dim = cfg.hidden_dim;
        rcfg.n_features = mask.n_features();
        m.rnn = init_rnn(rcfg, init_seed);
    }
    ParamStore& store = cfg.model == ModelKind::Transformer ? m.tf.params : m.rnn.params;

    num::AdamConfig adam;
    adam.lr = cfg.lr;
    adam.clip_norm = cfg.clip_norm;
    const std::uint64_t dropout_seed = fold_seed(cfg, fold.fold_index, "dropout");

    double best = -std::numeric_limits<double>::infinity();
    ParamStore best_params = store;
    int since_improved = 0;
    std::int64_t global_step = 0;

    std::vector<std::size_t> order(fold.train.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;

    for (int epoch = 1; epoch <= cfg.max_epochs; ++epoch) {
        Rng rng(fold_seed(cfg, fold.fold_index, ("epoch" + std::to_string(epoch)).c_str()));
        rng.shuffle(order);

        double loss_sum = 0.0;
        std::int64_t loss_count = 0;
        if (cfg.model == ModelKind::Transformer) {
            for (std::size_t at = 0; at < order.size(); at += static_cast<std::size_t>(cfg.batch_size)) {
                std::vector<EncodedSeq> chunk;
                for (std::size_t i = at;
                     i < order.size() && i < at + static_cast<std::size_t>(cfg.batch_size); ++i)
                    chunk.push_back(fold.train[order[i]]);
                const auto batch = make_transformer_batch(chunk, tcfg);
                Tape tape;
                const auto p = num::bind_params(tape, store);
                const auto logits = transformer_logits(tape, tcfg, p, batch, /*train=*/true,
                                                       dropout_seed, global_step);
                const auto loss = transformer_loss(tape, logits, batch.final_dx);
                const double lv = tape.value(loss)[0];
                check_finite(lv, "training", fold.fold_index, epoch);
                tape.backward(loss);
                num::adam_step(store, tape, p, adam);
                loss_sum += lv * static_cast<double>(chunk.size());
                loss_count += static_cast<std::int64_t>(chunk.size());
                ++global_step;
            }
        } else {
            for (const auto idx : order) {
                const auto& seq = fold.train[idx];
                Tape tape;
                const auto p = num::bind_params(tape, store);
                const auto out = rnn_rollout(tape, rcfg, p, seq, /*use_observations=*/true);
                const auto loss = rnn_rollout_loss(tape, rcfg, seq, out);
                const double lv = tape.value(loss)[0];
                check_finite(lv, "training", fold.fold_index, epoch);
                tape.backward(loss);
                num::adam_step(store, tape, p, adam);
                loss_sum += lv;
                ++loss_count;
                ++global_step;
            }
        }

        const double vb = val_score(m, fold.val);
        m.log.push_back(EpochLog{epoch, loss_sum / static_cast<double>(loss_count), vb});
        const bool improved = fold.val.empty() || vb > best;
        if (improved) {
            best = vb;
            m.best_epoch = epoch;
            best_params = store;
            since_improved = 0;
        } else if (++since_improved > cfg.patience) {
            break;
        }
    }

    store = std::move(best_params);
    m.best_val_bca = fold.val.empty() ? std::numeric_limits<double>::quiet_NaN() : best;
    return m;
}

TrainedModel train_fold(const std::vector<VisitSequence>& sequences, const DatasetSplit& split,
                        const TrainConfig& cfg, const ChannelMask& mask) {
    return train_on(prepare_fold(sequences, split, mask, cfg), cfg, mask);
}

std::vector<std::array<double, 3>> model_predict(const TrainedModel& m,
                                                 const std::vector<EncodedSeq>& seqs) {
    std::vector<std::array<double, 3>> probs;
    probs.reserve(seqs.size());
    if (m.kind == ModelKind::Transformer) {
        constexpr std::size_t kChunk = 128;
        for (std::size_t at = 0; at < seqs.size(); at += kChunk) {
            const std::vector<EncodedSeq> chunk(
                seqs.begin() + static_cast<std::ptrdiff_t>(at),
                seqs.begin() + static_cast<std::ptrdiff_t>(std::min(at + kChunk, seqs.size())));
            const auto got = transformer_predict_proba(m.tf, chunk);
            probs.insert(probs.end(), got.begin(), got.end());
        }
    } else {
        for (const auto& e : seqs) probs.push_back(rnn_predict_proba(m.rnn, e));
    }
    return probs;
}

GridSearchResult grid_search(const std::vector<VisitSequence>& sequences,
                             const std::vector<DatasetSplit>& folds, const TrainConfig& base,
                             const ChannelMask& mask, const std::vector<double>& lrs,
                             const std::vector<int>& dims) {
    base.validate();
    if (lrs.empty() || dims.empty()) throw ConfigError("grid search: empty candidate list");
    if (folds.empty()) throw ConfigError("grid search: no folds");

    std::vector<FoldData> prepped;
    prepped.reserve(folds.size());
    for (const auto& split : folds) prepped.push_back(prepare_fold(sequences, split, mask, base));

    GridSearchResult result;
    result.best = base;
    double best_mean = -std::numeric_limits<double>::infinity();
    for (const double lr : lrs) {
        for (const int dim : dims) {
            TrainConfig cfg = base;
            cfg.lr = lr;
            if (cfg.model == ModelKind::Transformer)
                cfg.transformer.d_ffn = dim;
            else
                cfg.hidden_dim = dim;
            double sum = 0.0;
            int n = 0;
            for (const auto& fold : prepped) {
                const auto m = train_on(fold, cfg, mask);
                if (!std::isnan(m.best_val_bca)) {
                    sum += m.best_val_bca;
                    ++n;
                }
            }
            const double mean = n > 0 ? sum / n : 0.0;
            result.points.push_back(GridPoint{lr, dim, mean});
            if (mean > best_mean) {
                best_mean = mean;
                result.best = cfg;
            }
        }
    }
    return result;
}

void save_model(const std::string& path, const TrainedModel& m) {
    nlohmann::json cfg;
    cfg["kind"] = to_string(m.kind);
    cfg["mask"] = m.mask.kept;
    cfg["fold"] = m.fold_index;
    cfg["best_epoch"] = m.best_epoch;
    if (std::isfinite(m.best_val_bca)) cfg["best_val_bca"] = m.best_val_bca;
    if (m.kind == ModelKind::Transformer) {
        const auto& t = m.tf.cfg;
        cfg["transformer"] = {{"n_encoder_layers", t.n_encoder_layers},
                              {"n_decoder_layers", t.n_decoder_layers},
                              {"n_heads", t.n_heads},
                              {"d_model", t.d_model},
                              {"d_ffn", t.d_ffn},
                              {"dropout", t.dropout},
                              {"max_seq_len", t.max_seq_len}};
        num::save_checkpoint(path, m.tf.params, cfg.dump());
    } else {
        cfg["hidden_dim"] = m.rnn.cfg.hidden_dim;
        num::save_checkpoint(path, m.rnn.params, cfg.dump());
    }
}

TrainedModel load_model(const std::string& path) {
    std::string config_line;
    auto store = num::load_checkpoint(path, &config_line);
    nlohmann::json cfg;
    try {
        cfg = nlohmann::json::parse(config_line);
    } catch (const nlohmann::json::exception& e) {
        throw ContractError("checkpoint config line is not valid JSON: " + std::string(e.what()));
    }

    TrainedModel m;
    const auto kind = parse_model_kind(cfg.value("kind", ""));
    if (!kind) throw ContractError("checkpoint names an unknown model kind");
    m.kind = *kind;
    m.mask.kept = cfg.value("mask", std::vector<int>{});
    m.fold_index = cfg.value("fold", -1);
    m.best_epoch = cfg.value("best_epoch", -1);
    m.best_val_bca = cfg.value("best_val_bca", std::numeric_limits<double>::quiet_NaN());
    if (m.kind == ModelKind::Transformer) {
        auto& t = m.tf.cfg;
        const auto& j = cfg.at("transformer");
        t.n_encoder_layers = j.at("n_encoder_layers").get<int>();
        t.n_decoder_layers = j.at("n_decoder_layers").get<int>();
        t.n_heads = j.at("n_heads").get<int>();
        t.d_model = j.at("d_model").get<int>();
        t.d_ffn = j.at("d_ffn").get<int>();
        t.dropout = j.at("dropout").get<double>();
        t.max_seq_len = j.at("max_seq_len").get<int>();
        t.n_features = m.mask.n_features();
        t.validate();
        m.tf.params = std::move(store);
    } else {
        m.rnn.cfg.cell = cell_of(m.kind);
        m.rnn.cfg.hidden_dim = cfg.at("hidden_dim").get<int>();
        m.rnn.cfg.n_features = m.mask.n_features();
        m.rnn.params = std::move(store);
    }
    return m;
}

}  // namespace adprog

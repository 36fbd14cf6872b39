// Command-line driver: stage-by-stage, reproducible pipeline runs. Every
// output CSV carries the effective-config hash and the global seed in a
// header comment; one global seed fans out to per-stage seeds through the
// documented stage_seed derivation.
#include <atomic>
#include <cstdint>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <mutex>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <thread>
#include <utility>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"

#include "adprog/ablation.hpp"
#include "adprog/csv.hpp"
#include "adprog/errors.hpp"
#include "adprog/evaluate.hpp"
#include "adprog/ingest.hpp"
#include "adprog/metrics.hpp"
#include "adprog/preprocess.hpp"
#include "adprog/rng.hpp"
#include "adprog/sequences.hpp"
#include "adprog/stats.hpp"
#include "adprog/trainer.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace adprog {
namespace {

// ---------------------------------------------------------------- config --

struct AppConfig {
    std::uint64_t seed = 42;
    std::string output_dir = "out";
    int jobs = 1;

    std::string source_kind = "synthetic";  // "synthetic" | "csv"
    std::string csv_path;

    SynthConfig synth;
    double missing_dx_fraction = 0.0;

    std::string balance_mode = "balanced";  // "balanced" | "raw"
    int k_folds = 10;
    std::vector<ModelKind> models{ModelKind::MinRnn, ModelKind::GRU, ModelKind::LSTM,
                                  ModelKind::Transformer};
    TrainConfig train;

    bool grid_enabled = false;
    std::vector<double> grid_lrs{1e-4, 3e-4, 1e-3};
    std::vector<int> grid_dims;  // empty -> per-model default
    int grid_folds = 2;

    ModelKind ablation_model = ModelKind::MinRnn;
    std::vector<AblationSpec> ablation_specs = default_ablations();

    std::uint64_t config_hash = 0;
};

[[noreturn]] void bad_field(const std::string& path, const std::string& why) {
    throw ConfigError("config field " + path + ": " + why);
}

void check_keys(const json& j, const std::string& path,
                std::initializer_list<const char*> allowed) {
    if (!j.is_object()) bad_field(path, "must be an object");
    for (auto it = j.begin(); it != j.end(); ++it) {
        bool known = false;
        for (const char* a : allowed)
            if (it.key() == a) {
                known = true;
                break;
            }
        if (!known) bad_field(path + "." + it.key(), "unknown field");
    }
}

template <typename T>
T field_or(const json& j, const std::string& parent, const char* key, T def) {
    if (!j.contains(key)) return def;
    try {
        return j.at(key).get<T>();
    } catch (const json::exception&) {
        bad_field(parent + "." + std::string(key), "has the wrong type");
    }
}

ModelKind parse_model_or_fail(const std::string& s, const std::string& path) {
    const auto kind = parse_model_kind(s);
    if (!kind) bad_field(path, "unknown model kind '" + s + "'");
    return *kind;
}

AblationSpec parse_ablation_name(const std::string& s, const std::string& path) {
    const auto cat = [&](const std::string& name) -> FeatureCategory {
        if (name == "cognitive") return FeatureCategory::Cognitive;
        if (name == "mri") return FeatureCategory::MRI;
        if (name == "biomarker") return FeatureCategory::Biomarker;
        bad_field(path, "unknown feature category '" + name + "'");
    };
    if (s.rfind("remove_", 0) == 0)
        return AblationSpec{AblationKind::RemoveCategory, cat(s.substr(7)), 0};
    if (s.rfind("isolate_", 0) == 0)
        return AblationSpec{AblationKind::IsolateCategory, cat(s.substr(8)), 0};
    if (s.rfind("history_last_", 0) == 0) {
        int k = 0;
        try {
            k = std::stoi(s.substr(13));
        } catch (...) {
            bad_field(path, "expected history_last_<k>");
        }
        if (k < 1) bad_field(path, "history k must be >= 1");
        return AblationSpec{AblationKind::HistoryLastK, FeatureCategory::Cognitive, k};
    }
    bad_field(path, "unknown ablation spec '" + s + "'");
}

AppConfig parse_app_config(const json& root) {
    AppConfig cfg;
    check_keys(root, "config",
               {"seed", "output_dir", "jobs", "source", "synth", "balance", "k_folds", "models",
                "train", "grid", "ablation"});
    cfg.seed = field_or<std::uint64_t>(root, "config", "seed", cfg.seed);
    cfg.output_dir = field_or<std::string>(root, "config", "output_dir", cfg.output_dir);
    cfg.jobs = field_or<int>(root, "config", "jobs", cfg.jobs);
    if (cfg.jobs < 1) bad_field("config.jobs", "must be >= 1");

    if (root.contains("source")) {
        const auto& s = root.at("source");
        check_keys(s, "config.source", {"kind", "csv_path"});
        cfg.source_kind = field_or<std::string>(s, "config.source", "kind", cfg.source_kind);
        cfg.csv_path = field_or<std::string>(s, "config.source", "csv_path", cfg.csv_path);
        if (cfg.source_kind != "synthetic" && cfg.source_kind != "csv")
            bad_field("config.source.kind", "must be 'synthetic' or 'csv'");
        if (cfg.source_kind == "csv" && cfg.csv_path.empty())
            bad_field("config.source.csv_path", "required when kind is 'csv'");
    }

    if (root.contains("synth")) {
        const auto& s = root.at("synth");
        check_keys(s, "config.synth",
                   {"n_subjects", "converter_fraction", "cn_to_mci_fraction_of_converters",
                    "visit_interval_months", "gap_jitter", "max_visits", "signal_strength",
                    "missing_dx_fraction", "missingness"});
        cfg.synth.n_subjects = field_or<int>(s, "config.synth", "n_subjects", cfg.synth.n_subjects);
        cfg.synth.converter_fraction = field_or<double>(s, "config.synth", "converter_fraction",
                                                        cfg.synth.converter_fraction);
        cfg.synth.cn_to_mci_fraction_of_converters =
            field_or<double>(s, "config.synth", "cn_to_mci_fraction_of_converters",
                             cfg.synth.cn_to_mci_fraction_of_converters);
        cfg.synth.visit_interval_months = field_or<int>(s, "config.synth", "visit_interval_months",
                                                        cfg.synth.visit_interval_months);
        cfg.synth.gap_jitter = field_or<bool>(s, "config.synth", "gap_jitter", cfg.synth.gap_jitter);
        cfg.synth.max_visits = field_or<int>(s, "config.synth", "max_visits", cfg.synth.max_visits);
        cfg.synth.signal_strength =
            field_or<double>(s, "config.synth", "signal_strength", cfg.synth.signal_strength);
        cfg.missing_dx_fraction =
            field_or<double>(s, "config.synth", "missing_dx_fraction", cfg.missing_dx_fraction);
        if (cfg.missing_dx_fraction < 0.0 || cfg.missing_dx_fraction >= 1.0)
            bad_field("config.synth.missing_dx_fraction", "must be in [0, 1)");
        if (s.contains("missingness")) {
            const auto& mm = s.at("missingness");
            if (!mm.is_object()) bad_field("config.synth.missingness", "must be an object");
            for (auto it = mm.begin(); it != mm.end(); ++it) {
                if (feature_index(it.key()) < 0)
                    bad_field("config.synth.missingness." + it.key(), "unknown feature key");
                cfg.synth.missingness[it.key()] =
                    field_or<double>(mm, "config.synth.missingness", it.key().c_str(), 0.0);
            }
        }
    }

    cfg.balance_mode = field_or<std::string>(root, "config", "balance", cfg.balance_mode);
    if (cfg.balance_mode != "balanced" && cfg.balance_mode != "raw")
        bad_field("config.balance", "must be 'balanced' or 'raw'");
    cfg.k_folds = field_or<int>(root, "config", "k_folds", cfg.k_folds);
    if (cfg.k_folds < 2) bad_field("config.k_folds", "must be >= 2");

    if (root.contains("models")) {
        if (!root.at("models").is_array()) bad_field("config.models", "must be an array");
        cfg.models.clear();
        for (const auto& m : root.at("models"))
            cfg.models.push_back(
                parse_model_or_fail(m.is_string() ? m.get<std::string>() : "", "config.models"));
        if (cfg.models.empty()) bad_field("config.models", "must name at least one model");
    }

    if (root.contains("train")) {
        const auto& t = root.at("train");
        check_keys(t, "config.train",
                   {"hidden_dim", "lr", "batch_size", "max_epochs", "patience", "clip_norm",
                    "filler", "transformer"});
        cfg.train.hidden_dim = field_or<int>(t, "config.train", "hidden_dim", cfg.train.hidden_dim);
        cfg.train.lr = field_or<double>(t, "config.train", "lr", cfg.train.lr);
        cfg.train.batch_size = field_or<int>(t, "config.train", "batch_size", cfg.train.batch_size);
        cfg.train.max_epochs = field_or<int>(t, "config.train", "max_epochs", cfg.train.max_epochs);
        cfg.train.patience = field_or<int>(t, "config.train", "patience", cfg.train.patience);
        cfg.train.clip_norm = field_or<double>(t, "config.train", "clip_norm", cfg.train.clip_norm);
        if (t.contains("filler")) {
            const auto& f = t.at("filler");
            check_keys(f, "config.train.filler", {"hidden_dim", "epochs", "lr"});
            cfg.train.filler.hidden_dim =
                field_or<int>(f, "config.train.filler", "hidden_dim", cfg.train.filler.hidden_dim);
            cfg.train.filler.epochs =
                field_or<int>(f, "config.train.filler", "epochs", cfg.train.filler.epochs);
            cfg.train.filler.lr = field_or<double>(f, "config.train.filler", "lr", cfg.train.filler.lr);
        }
        if (t.contains("transformer")) {
            const auto& x = t.at("transformer");
            check_keys(x, "config.train.transformer",
                       {"n_encoder_layers", "n_decoder_layers", "n_heads", "d_model", "d_ffn",
                        "dropout", "max_seq_len"});
            auto& tc = cfg.train.transformer;
            tc.n_encoder_layers = field_or<int>(x, "config.train.transformer", "n_encoder_layers",
                                                tc.n_encoder_layers);
            tc.n_decoder_layers = field_or<int>(x, "config.train.transformer", "n_decoder_layers",
                                                tc.n_decoder_layers);
            tc.n_heads = field_or<int>(x, "config.train.transformer", "n_heads", tc.n_heads);
            tc.d_model = field_or<int>(x, "config.train.transformer", "d_model", tc.d_model);
            tc.d_ffn = field_or<int>(x, "config.train.transformer", "d_ffn", tc.d_ffn);
            tc.dropout = field_or<double>(x, "config.train.transformer", "dropout", tc.dropout);
            tc.max_seq_len =
                field_or<int>(x, "config.train.transformer", "max_seq_len", tc.max_seq_len);
        }
    }

    if (root.contains("grid")) {
        const auto& g = root.at("grid");
        check_keys(g, "config.grid", {"enabled", "lrs", "dims", "folds"});
        cfg.grid_enabled = field_or<bool>(g, "config.grid", "enabled", cfg.grid_enabled);
        cfg.grid_lrs = field_or<std::vector<double>>(g, "config.grid", "lrs", cfg.grid_lrs);
        cfg.grid_dims = field_or<std::vector<int>>(g, "config.grid", "dims", cfg.grid_dims);
        cfg.grid_folds = field_or<int>(g, "config.grid", "folds", cfg.grid_folds);
        if (cfg.grid_folds < 1) bad_field("config.grid.folds", "must be >= 1");
    }

    if (root.contains("ablation")) {
        const auto& a = root.at("ablation");
        check_keys(a, "config.ablation", {"model", "specs"});
        if (a.contains("model"))
            cfg.ablation_model = parse_model_or_fail(
                field_or<std::string>(a, "config.ablation", "model", ""), "config.ablation.model");
        if (a.contains("specs")) {
            if (!a.at("specs").is_array()) bad_field("config.ablation.specs", "must be an array");
            cfg.ablation_specs.clear();
            for (const auto& s : a.at("specs"))
                cfg.ablation_specs.push_back(parse_ablation_name(
                    s.is_string() ? s.get<std::string>() : "", "config.ablation.specs"));
            if (cfg.ablation_specs.empty())
                bad_field("config.ablation.specs", "must name at least one spec");
        }
    }
    return cfg;
}

// Canonical serialization of the settings that define a run; its hash is
// stamped into every output file.
json effective_config(const AppConfig& cfg) {
    json j;
    j["seed"] = cfg.seed;
    j["source"] = {{"kind", cfg.source_kind}, {"csv_path", cfg.csv_path}};
    json mm = json::object();
    for (const auto& [k, v] : cfg.synth.missingness) mm[k] = v;
    j["synth"] = {{"n_subjects", cfg.synth.n_subjects},
                  {"converter_fraction", cfg.synth.converter_fraction},
                  {"cn_to_mci_fraction_of_converters", cfg.synth.cn_to_mci_fraction_of_converters},
                  {"visit_interval_months", cfg.synth.visit_interval_months},
                  {"gap_jitter", cfg.synth.gap_jitter},
                  {"max_visits", cfg.synth.max_visits},
                  {"signal_strength", cfg.synth.signal_strength},
                  {"missing_dx_fraction", cfg.missing_dx_fraction},
                  {"missingness", mm}};
    j["balance"] = cfg.balance_mode;
    j["k_folds"] = cfg.k_folds;
    json models = json::array();
    for (const auto m : cfg.models) models.push_back(to_string(m));
    j["models"] = models;
    j["train"] = {{"hidden_dim", cfg.train.hidden_dim},
                  {"lr", cfg.train.lr},
                  {"batch_size", cfg.train.batch_size},
                  {"max_epochs", cfg.train.max_epochs},
                  {"patience", cfg.train.patience},
                  {"clip_norm", cfg.train.clip_norm},
                  {"filler",
                   {{"hidden_dim", cfg.train.filler.hidden_dim},
                    {"epochs", cfg.train.filler.epochs},
                    {"lr", cfg.train.filler.lr}}},
                  {"transformer",
                   {{"n_encoder_layers", cfg.train.transformer.n_encoder_layers},
                    {"n_decoder_layers", cfg.train.transformer.n_decoder_layers},
                    {"n_heads", cfg.train.transformer.n_heads},
                    {"d_model", cfg.train.transformer.d_model},
                    {"d_ffn", cfg.train.transformer.d_ffn},
                    {"dropout", cfg.train.transformer.dropout},
                    {"max_seq_len", cfg.train.transformer.max_seq_len}}}};
    j["grid"] = {{"enabled", cfg.grid_enabled},
                 {"lrs", cfg.grid_lrs},
                 {"dims", cfg.grid_dims},
                 {"folds", cfg.grid_folds}};
    json specs = json::array();
    for (const auto& s : cfg.ablation_specs) specs.push_back(s.name());
    j["ablation"] = {{"model", to_string(cfg.ablation_model)}, {"specs", specs}};
    return j;
}

AppConfig load_app_config(const std::string& path) {
    std::ifstream in(path);
    if (!in.good()) throw ConfigError("cannot open config file: " + path);
    json root;
    try {
        in >> root;
    } catch (const json::exception& e) {
        throw ConfigError("config file " + path + " is not valid JSON: " + e.what());
    }
    auto cfg = parse_app_config(root);
    cfg.config_hash = fnv1a(effective_config(cfg).dump());
    return cfg;
}

// ---------------------------------------------------------------- output --

std::string hex16(std::uint64_t v) {
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
    return buf;
}

std::vector<std::string> run_comments(const AppConfig& cfg) {
    return {"config_hash=" + hex16(cfg.config_hash) + " seed=" + std::to_string(cfg.seed)};
}

std::string out_path(const AppConfig& cfg, const std::string& name) {
    return (fs::path(cfg.output_dir) / name).string();
}

void write_table(const AppConfig& cfg, const std::string& name,
                 const std::vector<std::string>& header,
                 const std::vector<std::vector<std::string>>& rows) {
    csv::Writer w(out_path(cfg, name));
    for (const auto& c : run_comments(cfg)) w.comment(c);
    w.row(header);
    for (const auto& r : rows) w.row(r);
    w.close();
}

std::mutex log_mu;

void log_line(const std::string& stage, const std::string& msg) {
    std::lock_guard<std::mutex> lock(log_mu);
    std::cout << "[" << stage << "] " << msg << "\n" << std::flush;
}

void parallel_run(std::size_t n, int jobs, const std::function<void(std::size_t)>& fn) {
    if (jobs <= 1 || n <= 1) {
        for (std::size_t i = 0; i < n; ++i) fn(i);
        return;
    }
    std::atomic<std::size_t> next{0};
    std::mutex err_mu;
    std::exception_ptr err;
    const auto worker = [&] {
        for (;;) {
            const std::size_t i = next.fetch_add(1);
            if (i >= n) return;
            try {
                fn(i);
            } catch (...) {
                std::lock_guard<std::mutex> lock(err_mu);
                if (!err) err = std::current_exception();
                return;
            }
        }
    };
    std::vector<std::thread> pool;
    const std::size_t width = std::min<std::size_t>(static_cast<std::size_t>(jobs), n);
    pool.reserve(width);
    for (std::size_t i = 0; i < width; ++i) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
    if (err) std::rethrow_exception(err);
}

// ----------------------------------------------------------- shared data --

std::vector<SubjectHistory> load_cleaned(const AppConfig& cfg) {
    const auto path = out_path(cfg, "cleaned.csv");
    if (!fs::exists(path))
        throw ContractError("cleaned cohort not found at " + path + " (run preprocess first)");
    return load_csv(path);
}

std::vector<VisitSequence> build_sequences(const AppConfig& cfg,
                                           const std::vector<SubjectHistory>& cleaned) {
    auto seqs = extract_sequences(cleaned);
    if (cfg.balance_mode == "balanced") {
        seqs = balance(std::move(seqs), stage_seed(cfg.seed, "balance"));
        // Balance contract: nothing left to discard — no group may keep more
        // stable than converter sequences.
        for (const auto& [group, counts] : count_summary(seqs).by_group)
            if (counts[0] > counts[1])
                throw ContractError("balanced dataset violated in group " + std::to_string(group) +
                                    ": " + std::to_string(counts[0]) + " stable vs " +
                                    std::to_string(counts[1]) + " converter");
    }
    return seqs;
}

std::vector<DatasetSplit> build_folds(const AppConfig& cfg,
                                      const std::vector<VisitSequence>& seqs) {
    return stratified_kfold(seqs, cfg.k_folds, stage_seed(cfg.seed, "folds"));
}

std::uint64_t train_seed_for(const AppConfig& cfg, ModelKind kind) {
    return stage_seed(cfg.seed, std::string("train.") + to_string(kind));
}

std::vector<int> default_grid_dims(ModelKind kind) {
    if (kind == ModelKind::Transformer) return {256, 512, 1024};
    return {64, 128, 256};
}

std::string ckpt_name(ModelKind kind, int fold) {
    return std::string("ckpt_") + to_string(kind) + "_fold" + std::to_string(fold) + ".bin";
}

// -------------------------------------------------------------- eval csv --

const std::vector<std::pair<std::string, std::function<MetricValue(const MetricRow&)>>>&
metric_getters() {
    static const std::vector<std::pair<std::string, std::function<MetricValue(const MetricRow&)>>>
        getters = {
            {"mauc", [](const MetricRow& r) { return r.mauc_v; }},
            {"bca", [](const MetricRow& r) { return r.bca_v; }},
            {"macro_f1", [](const MetricRow& r) { return r.macro_f1_v; }},
            {"accuracy", [](const MetricRow& r) { return r.accuracy_v; }},
            {"sens_cn", [](const MetricRow& r) { return r.sens[0]; }},
            {"sens_mci", [](const MetricRow& r) { return r.sens[1]; }},
            {"sens_ad", [](const MetricRow& r) { return r.sens[2]; }},
            {"spec_cn", [](const MetricRow& r) { return r.spec[0]; }},
            {"spec_mci", [](const MetricRow& r) { return r.spec[1]; }},
            {"spec_ad", [](const MetricRow& r) { return r.spec[2]; }},
        };
    return getters;
}

void write_eval_csv(const AppConfig& cfg, const std::string& name,
                    const std::vector<FoldEval>& folds) {
    std::vector<std::vector<std::string>> rows;
    for (const auto& ev : folds)
        for (const auto& row : ev.rows)
            for (const auto& [metric, get] : metric_getters()) {
                const auto mv = get(row);
                rows.push_back({csv::format_int(ev.fold_index), to_string(row.subset),
                                csv::format_int(row.group), csv::format_int(row.n),
                                row.absent ? "1" : "0", metric,
                                row.absent ? "" : csv::format_double(mv.value),
                                mv.degenerate || row.absent ? "1" : "0"});
            }
    write_table(cfg, name, {"fold", "subset", "group", "n", "absent", "metric", "value", "degenerate"},
                rows);
}

void write_summary_csv(const AppConfig& cfg, const std::string& name,
                       const std::vector<FoldEval>& folds) {
    std::vector<std::vector<std::string>> rows;
    for (const auto subset : {SubsetKind::Overall, SubsetKind::Stable, SubsetKind::Converter})
        for (int group = 0; group <= kMaxGroup; ++group)
            for (const auto& [metric, get] : metric_getters()) {
                std::vector<double> values;
                for (const auto& ev : folds) {
                    const auto* row = find_row(ev, subset, group);
                    if (row != nullptr && !row->absent) values.push_back(get(*row).value);
                }
                const auto agg = aggregate(values);
                rows.push_back({to_string(subset), csv::format_int(group), metric,
                                agg.n > 0 ? csv::format_double(agg.mean) : "",
                                agg.n > 0 ? csv::format_double(agg.stddev) : "",
                                csv::format_int(agg.n)});
            }
    write_table(cfg, name, {"subset", "group", "metric", "mean", "std", "n_folds"}, rows);
}

void write_predictions_csv(const AppConfig& cfg, const std::string& name,
                           const std::vector<FoldEval>& folds) {
    std::vector<std::vector<std::string>> rows;
    for (const auto& ev : folds)
        for (const auto& p : ev.predictions)
            rows.push_back({csv::format_int(ev.fold_index), csv::format_int(p.seq_id),
                            to_string(p.label), csv::format_int(p.group), to_string(p.truth),
                            to_string(p.pred), csv::format_double(p.probs[0]),
                            csv::format_double(p.probs[1]), csv::format_double(p.probs[2])});
    write_table(cfg, name,
                {"fold", "seq_id", "label", "group", "truth", "pred", "p_cn", "p_mci", "p_ad"},
                rows);
}

// -------------------------------------------------------------- commands --

int do_synth(const AppConfig& cfg) {
    SynthConfig sc = cfg.synth;
    sc.rng_seed = stage_seed(cfg.seed, "synth");
    validate(sc);
    auto cohort = generate_synthetic(sc);
    if (cfg.missing_dx_fraction > 0.0)
        cohort = corrupt_diagnoses(std::move(cohort), cfg.missing_dx_fraction,
                                   stage_seed(cfg.seed, "corrupt_dx"));
    write_cohort_csv(out_path(cfg, "cohort.csv"), cohort, run_comments(cfg));
    log_line("synth", "wrote " + std::to_string(cohort.size()) + " subjects to cohort.csv");
    return 0;
}

int do_preprocess(const AppConfig& cfg) {
    std::string source;
    if (cfg.source_kind == "csv") {
        source = cfg.csv_path;
    } else {
        source = out_path(cfg, "cohort.csv");
        if (!fs::exists(source))
            throw ContractError("cohort not found at " + source + " (run synth first)");
    }
    auto cohort = load_csv(source);
    const auto subjects_in = cohort.size();
    std::size_t visits_in = 0;
    for (const auto& h : cohort) visits_in += h.visits.size();

    auto [cleaned, report] = clean(std::move(cohort));
    std::size_t visits_out = 0;
    for (const auto& h : cleaned) visits_out += h.visits.size();

    write_cohort_csv(out_path(cfg, "cleaned.csv"), cleaned, run_comments(cfg));
    write_table(cfg, "preprocess_report.csv", {"metric", "value"},
                {{"subjects_in", csv::format_int(static_cast<std::int64_t>(subjects_in))},
                 {"subjects_out", csv::format_int(static_cast<std::int64_t>(cleaned.size()))},
                 {"visits_in", csv::format_int(static_cast<std::int64_t>(visits_in))},
                 {"visits_out", csv::format_int(static_cast<std::int64_t>(visits_out))},
                 {"dropped_single_visit_subjects",
                  csv::format_int(report.dropped_single_visit_subjects)},
                 {"dropped_reverter_subjects", csv::format_int(report.dropped_reverter_subjects)},
                 {"truncated_multi_converters", csv::format_int(report.truncated_multi_converters)},
                 {"dropped_missing_dx_visits", csv::format_int(report.dropped_missing_dx_visits)}});
    log_line("preprocess", "kept " + std::to_string(cleaned.size()) + " of " +
                               std::to_string(subjects_in) + " subjects");
    return 0;
}

int do_sequences(const AppConfig& cfg) {
    const auto cleaned = load_cleaned(cfg);
    const auto raw = extract_sequences(cleaned);
    const auto seqs = build_sequences(cfg, cleaned);

    std::vector<std::vector<std::string>> rows;
    for (const auto& s : seqs) {
        const int span = s.visits.back().exam_month - s.visits.front().exam_month;
        rows.push_back({csv::format_int(s.seq_id), s.subject_id, to_string(s.label),
                        s.conversion_kind ? to_string(*s.conversion_kind) : "",
                        csv::format_int(s.group), to_string(s.target_dx),
                        csv::format_int(static_cast<std::int64_t>(s.visits.size())),
                        csv::format_int(span)});
    }
    write_table(cfg, "sequences.csv",
                {"seq_id", "subject_id", "label", "conversion_kind", "group", "target_dx",
                 "n_visits", "target_month"},
                rows);

    std::vector<std::vector<std::string>> counts;
    const auto add_counts = [&](const std::string& dataset, const std::vector<VisitSequence>& ss) {
        const auto summary = count_summary(ss);
        counts.push_back({dataset, "all", csv::format_int(summary.stable_total),
                          csv::format_int(summary.converter_total)});
        for (const auto& [group, c] : summary.by_group)
            counts.push_back({dataset, csv::format_int(group), csv::format_int(c[0]),
                              csv::format_int(c[1])});
    };
    add_counts("raw", raw);
    if (cfg.balance_mode == "balanced") add_counts("balanced", seqs);
    write_table(cfg, "sequence_counts.csv", {"dataset", "group", "stable", "converter"}, counts);

    // Distribution of the target visit's diagnosis by group (raw dataset).
    std::map<int, std::array<std::int64_t, 3>> dx_by_group;
    for (const auto& s : raw) ++dx_by_group[s.group][static_cast<std::size_t>(severity(s.target_dx))];
    std::vector<std::vector<std::string>> dx_rows;
    for (const auto& [group, c] : dx_by_group)
        dx_rows.push_back({csv::format_int(group), csv::format_int(c[0]), csv::format_int(c[1]),
                           csv::format_int(c[2])});
    write_table(cfg, "target_dx_by_group.csv", {"group", "target_cn", "target_mci", "target_ad"},
                dx_rows);
    log_line("sequences", "wrote " + std::to_string(seqs.size()) + " sequences (" +
                              cfg.balance_mode + ")");
    return 0;
}

void write_folds_csv(const AppConfig& cfg, const std::vector<DatasetSplit>& folds) {
    std::vector<std::vector<std::string>> rows;
    for (const auto& split : folds) {
        for (const int id : split.train)
            rows.push_back({csv::format_int(split.fold_index), csv::format_int(id), "train"});
        for (const int id : split.test)
            rows.push_back({csv::format_int(split.fold_index), csv::format_int(id), "test"});
    }
    write_table(cfg, "folds.csv", {"fold", "seq_id", "role"}, rows);
}

int do_train(const AppConfig& cfg) {
    const auto cleaned = load_cleaned(cfg);
    const auto seqs = build_sequences(cfg, cleaned);
    const auto folds = build_folds(cfg, seqs);
    write_folds_csv(cfg, folds);

    std::vector<FoldEval> baseline;
    std::mutex baseline_mu;

    parallel_run(cfg.models.size(), cfg.jobs, [&](std::size_t mi) {
        const auto kind = cfg.models[mi];
        TrainConfig tc = cfg.train;
        tc.model = kind;
        tc.seed = train_seed_for(cfg, kind);

        if (cfg.grid_enabled) {
            std::vector<DatasetSplit> grid_folds(
                folds.begin(),
                folds.begin() + std::min<std::size_t>(static_cast<std::size_t>(cfg.grid_folds),
                                                      folds.size()));
            const auto dims = cfg.grid_dims.empty() ? default_grid_dims(kind) : cfg.grid_dims;
            const auto grid = grid_search(seqs, grid_folds, tc, ChannelMask::all(), cfg.grid_lrs, dims);
            std::vector<std::vector<std::string>> rows;
            for (const auto& p : grid.points) {
                const int chosen_dim = kind == ModelKind::Transformer
                                           ? grid.best.transformer.d_ffn
                                           : grid.best.hidden_dim;
                const bool chosen = p.lr == grid.best.lr && p.dim == chosen_dim;
                rows.push_back({csv::format_double(p.lr), csv::format_int(p.dim),
                                csv::format_double(p.mean_val_bca), chosen ? "1" : "0"});
            }
            write_table(cfg, std::string("grid_") + to_string(kind) + ".csv",
                        {"lr", "dim", "mean_val_bca", "selected"}, rows);
            tc = grid.best;
            log_line("train", std::string(to_string(kind)) + ": grid selected lr=" +
                                  csv::format_double(tc.lr));
        }

        std::vector<std::vector<EpochLog>> fold_logs;
        std::vector<int> best_epochs;
        const auto run = run_cv(
            seqs, folds, tc, ChannelMask::all(),
            [&](const TrainedModel& m, const FoldData& fold, const FoldEval&) {
                save_model(out_path(cfg, ckpt_name(kind, fold.fold_index)), m);
                fold_logs.push_back(m.log);
                best_epochs.push_back(m.best_epoch);
                if (mi == 0) {
                    auto base_ev = evaluate_predictions(fold.fold_index, fold.test, fold.test_meta,
                                                        stability_probs(fold.test));
                    std::lock_guard<std::mutex> lock(baseline_mu);
                    baseline.push_back(std::move(base_ev));
                }
                log_line("train", std::string(to_string(kind)) + ": fold " +
                                      std::to_string(fold.fold_index) + " done (best epoch " +
                                      std::to_string(m.best_epoch) + ")");
            });

        const std::string kind_s = to_string(kind);
        write_eval_csv(cfg, "eval_" + kind_s + ".csv", run.folds);
        write_summary_csv(cfg, "summary_" + kind_s + ".csv", run.folds);
        write_predictions_csv(cfg, "predictions_" + kind_s + ".csv", run.folds);
        std::vector<std::vector<std::string>> epoch_rows;
        for (std::size_t f = 0; f < fold_logs.size(); ++f)
            for (const auto& e : fold_logs[f])
                epoch_rows.push_back({csv::format_int(static_cast<std::int64_t>(f)),
                                      csv::format_int(e.epoch), csv::format_double(e.train_loss),
                                      csv::format_double(e.val_bca),
                                      e.epoch == best_epochs[f] ? "1" : "0"});
        write_table(cfg, "epochs_" + kind_s + ".csv",
                    {"fold", "epoch", "train_loss", "val_bca", "best"}, epoch_rows);
    });

    std::sort(baseline.begin(), baseline.end(),
              [](const FoldEval& a, const FoldEval& b) { return a.fold_index < b.fold_index; });
    write_eval_csv(cfg, "eval_baseline.csv", baseline);
    write_summary_csv(cfg, "summary_baseline.csv", baseline);
    log_line("train", "finished " + std::to_string(cfg.models.size()) + " model kind(s) over " +
                          std::to_string(folds.size()) + " folds");
    return 0;
}

int do_evaluate(const AppConfig& cfg) {
    const auto cleaned = load_cleaned(cfg);
    const auto seqs = build_sequences(cfg, cleaned);
    const auto folds = build_folds(cfg, seqs);

    std::vector<FoldEval> baseline;
    std::mutex baseline_mu;

    parallel_run(cfg.models.size(), cfg.jobs, [&](std::size_t mi) {
        const auto kind = cfg.models[mi];
        TrainConfig tc = cfg.train;
        tc.model = kind;
        tc.seed = train_seed_for(cfg, kind);

        std::vector<FoldEval> evals;
        for (const auto& split : folds) {
            const auto path = out_path(cfg, ckpt_name(kind, split.fold_index));
            if (!fs::exists(path))
                throw ContractError("checkpoint not found: " + path + " (run train first)");
            const auto m = load_model(path);
            const auto fold = prepare_fold(seqs, split, m.mask, tc);
            auto ev = evaluate_predictions(fold.fold_index, fold.test, fold.test_meta,
                                           model_predict(m, fold.test));
            if (mi == 0) {
                auto base_ev = evaluate_predictions(fold.fold_index, fold.test, fold.test_meta,
                                                    stability_probs(fold.test));
                std::lock_guard<std::mutex> lock(baseline_mu);
                baseline.push_back(std::move(base_ev));
            }
            evals.push_back(std::move(ev));
            log_line("evaluate", std::string(to_string(kind)) + ": fold " +
                                     std::to_string(split.fold_index) + " done");
        }
        const std::string kind_s = to_string(kind);
        write_eval_csv(cfg, "eval_" + kind_s + ".csv", evals);
        write_summary_csv(cfg, "summary_" + kind_s + ".csv", evals);
        write_predictions_csv(cfg, "predictions_" + kind_s + ".csv", evals);
    });

    std::sort(baseline.begin(), baseline.end(),
              [](const FoldEval& a, const FoldEval& b) { return a.fold_index < b.fold_index; });
    write_eval_csv(cfg, "eval_baseline.csv", baseline);
    write_summary_csv(cfg, "summary_baseline.csv", baseline);
    return 0;
}

int do_ablate(const AppConfig& cfg) {
    const auto cleaned = load_cleaned(cfg);
    const auto seqs = build_sequences(cfg, cleaned);
    const auto folds = build_folds(cfg, seqs);

    TrainConfig tc = cfg.train;
    tc.model = cfg.ablation_model;
    tc.seed = stage_seed(cfg.seed, "ablate");

    // Baseline first, then the specs (independent, hence parallelizable).
    const auto baseline = run_cv(seqs, folds, tc, ChannelMask::all());
    const auto base_agg = aggregate(fold_values(baseline, SubsetKind::Overall, 0, "bca"));
    log_line("ablate", "baseline mean BCA " + csv::format_double(base_agg.mean));

    std::vector<CvRun> runs(cfg.ablation_specs.size());
    parallel_run(cfg.ablation_specs.size(), cfg.jobs, [&](std::size_t i) {
        const auto& spec = cfg.ablation_specs[i];
        const auto mask = mask_for(spec);
        runs[i] = spec.kind == AblationKind::HistoryLastK
                      ? run_cv(truncate_all(seqs, spec.k), folds, tc, mask)
                      : run_cv(seqs, folds, tc, mask);
        log_line("ablate", spec.name() + " done");
    });

    std::vector<std::vector<std::string>> rows;
    std::vector<std::vector<std::string>> fold_rows;
    rows.push_back({"baseline", "all", csv::format_double(base_agg.mean),
                    csv::format_double(base_agg.stddev), csv::format_double(0.0)});
    for (const double v : fold_values(baseline, SubsetKind::Overall, 0, "bca"))
        fold_rows.push_back({"baseline", csv::format_int(static_cast<std::int64_t>(fold_rows.size())),
                             csv::format_double(v)});
    for (std::size_t i = 0; i < cfg.ablation_specs.size(); ++i) {
        const auto& spec = cfg.ablation_specs[i];
        const auto vals = fold_values(runs[i], SubsetKind::Overall, 0, "bca");
        const auto agg = aggregate(vals);
        rows.push_back({to_string(spec.kind), spec.detail(), csv::format_double(agg.mean),
                        csv::format_double(agg.stddev),
                        csv::format_double(pct_change(agg.mean, base_agg.mean))});
        for (std::size_t f = 0; f < vals.size(); ++f)
            fold_rows.push_back({spec.name(), csv::format_int(static_cast<std::int64_t>(f)),
                                 csv::format_double(vals[f])});
    }
    write_table(cfg, "ablation.csv",
                {"spec_kind", "detail", "mean_bca", "std_bca", "pct_change_vs_baseline"}, rows);
    write_table(cfg, "ablation_folds.csv", {"spec", "fold", "bca"}, fold_rows);
    return 0;
}

// Per-model fold values of one metric cell, parsed back from an eval CSV.
std::map<std::string, std::vector<double>> read_eval_cell(const AppConfig& cfg,
                                                          const std::vector<std::string>& names,
                                                          const std::string& subset, int group,
                                                          const std::string& metric) {
    std::map<std::string, std::vector<double>> out;
    for (const auto& name : names) {
        const auto path = out_path(cfg, "eval_" + name + ".csv");
        if (!fs::exists(path)) continue;
        const auto table = csv::read_file(path);
        const int c_subset = table.column("subset");
        const int c_group = table.column("group");
        const int c_metric = table.column("metric");
        const int c_absent = table.column("absent");
        const int c_value = table.column("value");
        const int c_fold = table.column("fold");
        if (c_subset < 0 || c_group < 0 || c_metric < 0 || c_absent < 0 || c_value < 0 || c_fold < 0)
            throw ContractError("eval file " + path + " is missing required columns");
        std::map<int, double> by_fold;
        for (const auto& row : table.rows) {
            if (row[static_cast<std::size_t>(c_subset)] != subset) continue;
            if (row[static_cast<std::size_t>(c_group)] != std::to_string(group)) continue;
            if (row[static_cast<std::size_t>(c_metric)] != metric) continue;
            if (row[static_cast<std::size_t>(c_absent)] == "1") continue;
            const auto v = csv::parse_double(row[static_cast<std::size_t>(c_value)]);
            const auto f = csv::parse_double(row[static_cast<std::size_t>(c_fold)]);
            if (v && f) by_fold[static_cast<int>(*f)] = *v;
        }
        std::vector<double> values;
        values.reserve(by_fold.size());
        for (const auto& [fold, v] : by_fold) values.push_back(v);
        out[name] = std::move(values);
    }
    return out;
}

int do_report(const AppConfig& cfg) {
    std::vector<std::string> names;
    for (const auto kind : cfg.models) names.push_back(to_string(kind));
    names.push_back("baseline");

    bool any = false;
    for (const auto& n : names)
        if (fs::exists(out_path(cfg, "eval_" + n + ".csv"))) any = true;
    if (!any)
        throw ContractError("no evaluation results in " + cfg.output_dir + " (run train first)");

    const std::vector<std::string> metrics = {"mauc",    "bca",     "macro_f1", "accuracy",
                                              "sens_cn", "sens_mci", "sens_ad",  "spec_cn",
                                              "spec_mci", "spec_ad"};

    // Overall table: model x metric, pooled across groups.
    std::vector<std::vector<std::string>> overall_rows;
    std::vector<std::vector<std::string>> subset_rows;
    for (const auto subset : {SubsetKind::Overall, SubsetKind::Stable, SubsetKind::Converter}) {
        for (const auto& metric : metrics) {
            const auto cells = read_eval_cell(cfg, names, to_string(subset), 0, metric);
            for (const auto& name : names) {
                const auto it = cells.find(name);
                if (it == cells.end() || it->second.empty()) continue;
                const auto agg = aggregate(it->second);
                const std::vector<std::string> row = {name, to_string(subset), metric,
                                                      csv::format_double(agg.mean),
                                                      csv::format_double(agg.stddev),
                                                      csv::format_int(agg.n)};
                subset_rows.push_back(row);
                if (subset == SubsetKind::Overall)
                    overall_rows.push_back({name, metric, csv::format_double(agg.mean),
                                            csv::format_double(agg.stddev), csv::format_int(agg.n)});
            }
        }
    }
    write_table(cfg, "table_overall.csv", {"model", "metric", "mean", "std", "n_folds"},
                overall_rows);
    write_table(cfg, "table_by_subset.csv",
                {"model", "subset", "metric", "mean", "std", "n_folds"}, subset_rows);

    // Per-group table (figure data): BCA and mAUC by input-visit count, for
    // the pooled set and the stable/converter subsets.
    std::vector<std::vector<std::string>> group_rows;
    for (const auto subset : {SubsetKind::Overall, SubsetKind::Stable, SubsetKind::Converter})
        for (const auto& metric : {std::string("bca"), std::string("mauc")})
            for (int group = 1; group <= kMaxGroup; ++group) {
                const auto cells = read_eval_cell(cfg, names, to_string(subset), group, metric);
                for (const auto& name : names) {
                    const auto it = cells.find(name);
                    if (it == cells.end() || it->second.empty()) continue;
                    const auto agg = aggregate(it->second);
                    group_rows.push_back({name, to_string(subset), csv::format_int(group), metric,
                                          csv::format_double(agg.mean),
                                          csv::format_double(agg.stddev), csv::format_int(agg.n)});
                }
            }
    write_table(cfg, "table_by_group.csv",
                {"model", "subset", "group", "metric", "mean", "std", "n_folds"}, group_rows);

    // Pairwise statistical comparison on pooled overall BCA fold values.
    const auto bca_cells = read_eval_cell(cfg, names, "overall", 0, "bca");
    std::vector<std::string> present;
    for (const auto& name : names)
        if (bca_cells.count(name) && bca_cells.at(name).size() >= 2) present.push_back(name);
    std::vector<std::vector<std::string>> p_rows;
    for (std::size_t i = 0; i < present.size(); ++i)
        for (std::size_t j = i + 1; j < present.size(); ++j) {
            const auto& a = bca_cells.at(present[i]);
            const auto& b = bca_cells.at(present[j]);
            const auto w = welch_t_test(a, b);
            const auto mw = mann_whitney_u(a, b);
            p_rows.push_back({present[i], present[j], csv::format_double(w.t),
                              csv::format_double(w.df), csv::format_double(w.p),
                              w.flagged ? "1" : "0", csv::format_double(mw.u),
                              csv::format_double(mw.p)});
        }
    write_table(cfg, "pvalues.csv",
                {"model_a", "model_b", "welch_t", "welch_df", "welch_p", "welch_flagged", "mw_u",
                 "mw_p"},
                p_rows);

    // Ablation table, when an ablation run exists.
    const auto ablation_path = out_path(cfg, "ablation.csv");
    if (fs::exists(ablation_path)) {
        const auto table = csv::read_file(ablation_path);
        write_table(cfg, "table_ablation.csv", table.header, table.rows);
    }
    log_line("report", "collated results for " + std::to_string(present.size()) + " model(s)");
    return 0;
}

}  // namespace
}  // namespace adprog

int main(int argc, char** argv) {
    using namespace adprog;

    CLI::App app{"Longitudinal disease-progression modeling pipeline"};
    app.require_subcommand(1);

    std::string config_path = "config.json";
    std::string output_dir_override;
    std::string balance_override;
    int jobs_override = 0;
    app.add_option("-c,--config", config_path, "Path to the JSON run configuration")
        ->capture_default_str();
    app.add_option("--output-dir", output_dir_override, "Override the configured output directory");
    app.add_option("--jobs", jobs_override, "Override worker count for fold/spec parallelism");
    app.add_option("--balance", balance_override, "Override dataset balancing: raw or balanced");

    for (const char* name : {"synth", "preprocess", "sequences", "train", "evaluate", "ablate",
                             "report"})
        app.add_subcommand(name);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 2;
    }

    try {
        auto cfg = load_app_config(config_path);
        // Precedence: config file < environment < explicit flag.
        if (const char* env = std::getenv("ADPROG_OUTPUT_DIR")) cfg.output_dir = env;
        if (const char* env = std::getenv("ADPROG_JOBS")) {
            try {
                cfg.jobs = std::stoi(env);
            } catch (...) {
                throw ConfigError("ADPROG_JOBS must be an integer");
            }
            if (cfg.jobs < 1) throw ConfigError("ADPROG_JOBS must be >= 1");
        }
        if (!output_dir_override.empty()) cfg.output_dir = output_dir_override;
        if (jobs_override > 0) cfg.jobs = jobs_override;
        if (!balance_override.empty()) {
            if (balance_override != "raw" && balance_override != "balanced")
                throw ConfigError("--balance must be 'raw' or 'balanced'");
            cfg.balance_mode = balance_override;
        }
        cfg.config_hash = fnv1a(effective_config(cfg).dump());
        cfg.train.validate();

        fs::create_directories(cfg.output_dir);

        if (app.got_subcommand("synth")) return do_synth(cfg);
        if (app.got_subcommand("preprocess")) return do_preprocess(cfg);
        if (app.got_subcommand("sequences")) return do_sequences(cfg);
        if (app.got_subcommand("train")) return do_train(cfg);
        if (app.got_subcommand("evaluate")) return do_evaluate(cfg);
        if (app.got_subcommand("ablate")) return do_ablate(cfg);
        if (app.got_subcommand("report")) return do_report(cfg);
        throw ConfigError("no subcommand selected");
    } catch (const ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 2;
    } catch (const ContractError& e) {
        std::cerr << "data contract violation: " << e.what() << "\n";
        return 3;
    } catch (const NumericalError& e) {
        std::cerr << "numerical fault: " << e.what() << "\n";
        return 4;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
}

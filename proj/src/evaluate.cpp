#include "adprog/evaluate.hpp"

#include <cmath>

#include "adprog/errors.hpp"

namespace adprog {

const char* to_string(SubsetKind s) {
    switch (s) {
        case SubsetKind::Overall: return "overall";
        case SubsetKind::Stable: return "stable";
        case SubsetKind::Converter: return "converter";
    }
    return "?";
}

namespace {

MetricRow make_row(SubsetKind subset, int group, const std::vector<Prediction>& preds) {
    MetricRow row;
    row.subset = subset;
    row.group = group;

    std::vector<std::array<double, 3>> probs;
    std::vector<Diagnosis> labels;
    for (const auto& p : preds) {
        if (subset == SubsetKind::Stable && p.label != SequenceLabel::stable) continue;
        if (subset == SubsetKind::Converter && p.label != SequenceLabel::converter) continue;
        if (group != 0 && p.group != group) continue;
        row.cm.add(p.truth, p.pred);
        probs.push_back(p.probs);
        labels.push_back(p.truth);
        ++row.n;
    }
    if (row.n == 0) {
        row.absent = true;
        return row;
    }
    row.mauc_v = mauc(probs, labels);
    row.bca_v = bca(row.cm);
    row.macro_f1_v = macro_f1(row.cm);
    row.accuracy_v = accuracy(row.cm);
    for (int c = 0; c < 3; ++c) {
        row.sens[static_cast<std::size_t>(c)] = sensitivity(row.cm, c);
        row.spec[static_cast<std::size_t>(c)] = specificity(row.cm, c);
    }
    return row;
}

}  // namespace

FoldEval evaluate_predictions(int fold_index, const std::vector<EncodedSeq>& seqs,
                              const std::vector<SeqMeta>& meta,
                              const std::vector<std::array<double, 3>>& probs) {
    if (seqs.size() != meta.size() || seqs.size() != probs.size())
        throw ContractError("evaluate: sequences, metadata, and predictions must align");

    FoldEval ev;
    ev.fold_index = fold_index;
    ev.predictions.reserve(seqs.size());
    for (std::size_t i = 0; i < seqs.size(); ++i) {
        Prediction p;
        p.seq_id = meta[i].seq_id;
        p.label = meta[i].label;
        p.group = meta[i].group;
        p.truth = seqs[i].final_dx;
        p.probs = probs[i];
        p.pred = argmax_class(probs[i]);
        ev.predictions.push_back(p);
    }

    for (const auto subset : {SubsetKind::Overall, SubsetKind::Stable, SubsetKind::Converter})
        for (int group = 0; group <= kMaxGroup; ++group)
            ev.rows.push_back(make_row(subset, group, ev.predictions));
    return ev;
}

FoldEval evaluate_fold(const TrainedModel& m, const FoldData& fold) {
    return evaluate_predictions(fold.fold_index, fold.test, fold.test_meta,
                                model_predict(m, fold.test));
}

std::vector<std::array<double, 3>> stability_probs(const std::vector<EncodedSeq>& seqs) {
    std::vector<std::array<double, 3>> probs;
    probs.reserve(seqs.size());
    for (const auto& e : seqs) {
        if (e.inputs.empty() || e.inputs.back().size() < 3)
            throw ContractError("stability baseline needs encoded input visits");
        const auto& last = e.inputs.back();
        probs.push_back({last[0], last[1], last[2]});
    }
    return probs;
}

const MetricRow* find_row(const FoldEval& ev, SubsetKind subset, int group) {
    for (const auto& row : ev.rows)
        if (row.subset == subset && row.group == group) return &row;
    return nullptr;
}

Aggregate aggregate(const std::vector<double>& xs) {
    Aggregate a;
    a.n = static_cast<int>(xs.size());
    if (a.n == 0) return a;
    double sum = 0.0;
    for (const double x : xs) sum += x;
    a.mean = sum / a.n;
    if (a.n < 2) return a;
    double ss = 0.0;
    for (const double x : xs) ss += (x - a.mean) * (x - a.mean);
    a.stddev = std::sqrt(ss / (a.n - 1));
    return a;
}

CvRun run_cv(const std::vector<VisitSequence>& sequences, const std::vector<DatasetSplit>& folds,
             const TrainConfig& cfg, const ChannelMask& mask, const FoldCallback& on_fold) {
    CvRun run;
    run.folds.reserve(folds.size());
    for (const auto& split : folds) {
        const auto fold = prepare_fold(sequences, split, mask, cfg);
        const auto model = train_on(fold, cfg, mask);
        auto ev = evaluate_fold(model, fold);
        if (on_fold) on_fold(model, fold, ev);
        run.folds.push_back(std::move(ev));
    }
    return run;
}

std::vector<double> fold_values(const CvRun& run, SubsetKind subset, int group,
                                const std::string& metric) {
    std::vector<double> out;
    out.reserve(run.folds.size());
    for (const auto& ev : run.folds) {
        const auto* row = find_row(ev, subset, group);
        if (row == nullptr || row->absent) continue;
        if (metric == "bca")
            out.push_back(row->bca_v.value);
        else if (metric == "mauc")
            out.push_back(row->mauc_v.value);
        else if (metric == "macro_f1")
            out.push_back(row->macro_f1_v.value);
        else if (metric == "accuracy")
            out.push_back(row->accuracy_v.value);
        else
            throw ConfigError("unknown metric name: " + metric);
    }
    return out;
}

}  // namespace adprog

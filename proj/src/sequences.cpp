#include "adprog/sequences.hpp"

#include <algorithm>

#include "adprog/errors.hpp"
#include "adprog/preprocess.hpp"
#include "adprog/rng.hpp"

namespace adprog {

const char* to_string(SequenceLabel l) {
    return l == SequenceLabel::stable ? "stable" : "converter";
}

const char* to_string(ConversionKind k) {
    switch (k) {
        case ConversionKind::CN_to_MCI: return "CN->MCI";
        case ConversionKind::CN_to_AD: return "CN->AD";
        case ConversionKind::MCI_to_AD: return "MCI->AD";
    }
    return "?";
}

namespace {

ConversionKind kind_of(Diagnosis from, Diagnosis to) {
    if (from == Diagnosis::CN && to == Diagnosis::MCI) return ConversionKind::CN_to_MCI;
    if (from == Diagnosis::CN && to == Diagnosis::AD) return ConversionKind::CN_to_AD;
    if (from == Diagnosis::MCI && to == Diagnosis::AD) return ConversionKind::MCI_to_AD;
    throw ContractError("impossible conversion direction");
}

constexpr std::size_t kMaxSequenceVisits = 9;  // group capped at 8

}  // namespace

std::vector<VisitSequence> extract_sequences(const std::vector<SubjectHistory>& cleaned) {
    std::vector<VisitSequence> out;
    out.reserve(cleaned.size());
    for (const auto& h : cleaned) {
        if (h.visits.size() < 2)
            throw ContractError("sequence extraction requires cleaned histories (>= 2 visits)");
        VisitSequence s;
        s.subject_id = h.subject_id;

        // First conversion visit, if any. Cleaned histories have at most one
        // severity increase and no missing diagnosis.
        std::size_t conv = 0;
        for (std::size_t i = 1; i < h.visits.size(); ++i) {
            if (severity(*h.visits[i].diagnosis) > severity(*h.visits[i - 1].diagnosis)) {
                conv = i;
                break;
            }
        }
        if (conv > 0) {
            s.label = SequenceLabel::converter;
            s.conversion_kind =
                kind_of(*h.visits[conv - 1].diagnosis, *h.visits[conv].diagnosis);
            s.visits.assign(h.visits.begin(),
                            h.visits.begin() + static_cast<std::ptrdiff_t>(conv + 1));
        } else {
            s.label = SequenceLabel::stable;
            s.visits = h.visits;
        }
        if (s.visits.size() > kMaxSequenceVisits)
            s.visits.erase(s.visits.begin(),
                           s.visits.end() - static_cast<std::ptrdiff_t>(kMaxSequenceVisits));
        s.group = static_cast<int>(s.visits.size()) - 1;
        s.target_dx = *s.visits.back().diagnosis;
        add_months_to_final(s.visits);
        s.seq_id = static_cast<int>(out.size());
        out.push_back(std::move(s));
    }
    return out;
}

std::vector<VisitSequence> balance(std::vector<VisitSequence> sequences, std::uint64_t seed) {
    // Group -> positions of stable sequences / converter count.
    std::map<int, std::vector<std::size_t>> stable_pos;
    std::map<int, std::size_t> conv_count;
    for (std::size_t i = 0; i < sequences.size(); ++i) {
        if (sequences[i].label == SequenceLabel::stable)
            stable_pos[sequences[i].group].push_back(i);
        else
            ++conv_count[sequences[i].group];
    }
    Rng rng(seed);
    std::vector<char> keep(sequences.size(), 1);
    // Groups in ascending order so the draw sequence is reproducible.
    for (auto& [group, positions] : stable_pos) {
        const std::size_t target =
            conv_count.count(group) ? std::min(positions.size(), conv_count[group]) : 0;
        if (positions.size() <= target) continue;
        rng.shuffle(positions);
        for (std::size_t j = target; j < positions.size(); ++j) keep[positions[j]] = 0;
    }
    std::vector<VisitSequence> out;
    out.reserve(sequences.size());
    for (std::size_t i = 0; i < sequences.size(); ++i)
        if (keep[i]) out.push_back(std::move(sequences[i]));
    return out;
}

std::vector<DatasetSplit> stratified_kfold(const std::vector<VisitSequence>& sequences, int k,
                                           std::uint64_t seed) {
    if (k < 2) throw ConfigError("k-fold split requires k >= 2");
    std::vector<DatasetSplit> folds(static_cast<std::size_t>(k));
    for (int f = 0; f < k; ++f) folds[static_cast<std::size_t>(f)].fold_index = f;

    std::map<int, std::vector<int>> ids_by_group;
    for (const auto& s : sequences) ids_by_group[s.group].push_back(s.seq_id);

    Rng rng(seed);
    std::vector<int> fold_of_id;
    for (auto& [group, ids] : ids_by_group) {
        rng.shuffle(ids);
        // Random starting fold so small groups don't always load fold 0.
        const int start = static_cast<int>(rng.next_below(static_cast<std::uint64_t>(k)));
        for (std::size_t i = 0; i < ids.size(); ++i) {
            const int f = (start + static_cast<int>(i)) % k;
            folds[static_cast<std::size_t>(f)].test.push_back(ids[i]);
        }
    }
    // Train = everything not in this fold's test set.
    std::vector<int> all_ids;
    for (const auto& s : sequences) all_ids.push_back(s.seq_id);
    std::sort(all_ids.begin(), all_ids.end());
    for (auto& fold : folds) {
        std::sort(fold.test.begin(), fold.test.end());
        fold.train.clear();
        std::set_difference(all_ids.begin(), all_ids.end(), fold.test.begin(), fold.test.end(),
                            std::back_inserter(fold.train));
    }
    return folds;
}

SequenceCounts count_summary(const std::vector<VisitSequence>& sequences) {
    SequenceCounts c;
    for (const auto& s : sequences) {
        auto& slot = c.by_group[s.group];
        if (s.label == SequenceLabel::stable) {
            ++c.stable_total;
            ++slot[0];
        } else {
            ++c.converter_total;
            ++slot[1];
            ++c.by_kind[static_cast<std::size_t>(*s.conversion_kind)];
        }
    }
    return c;
}

}  // namespace adprog

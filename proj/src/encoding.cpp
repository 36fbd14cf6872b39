#include "adprog/encoding.hpp"

#include "adprog/errors.hpp"
#include "adprog/preprocess.hpp"

namespace adprog {

ChannelMask ChannelMask::all() {
    ChannelMask m;
    for (int f = 0; f < kFeatureCount; ++f) m.kept.push_back(f);
    return m;
}

ChannelMask ChannelMask::only(FeatureCategory c) {
    ChannelMask m;
    m.kept = feature_indices_of(c);
    return m;
}

ChannelMask ChannelMask::without(FeatureCategory c) {
    ChannelMask m;
    for (int f = 0; f < kFeatureCount; ++f)
        if (feature_table()[static_cast<std::size_t>(f)].category != c) m.kept.push_back(f);
    return m;
}

std::vector<double> one_hot_dx(Diagnosis d) {
    std::vector<double> v(3, 0.0);
    v[static_cast<std::size_t>(severity(d))] = 1.0;
    return v;
}

namespace {

// Shared core: visits[0..n-1] become model inputs, visits[1..n] become
// prediction targets (unless `with_targets` is false, in which case only the
// final month matters and target rows stay empty).
EncodedSeq encode_visits(const std::vector<VisitRecord>& visits, std::int64_t seq_id,
                         Diagnosis final_dx, const ChannelMask& mask, bool with_targets,
                         const std::vector<std::array<bool, kFeatureCount>>* observed) {
    if (visits.size() < 2) throw ContractError("encode: sequence needs >= 2 visits");
    if (observed && observed->size() != visits.size())
        throw ContractError("encode: observation mask size mismatch");
    EncodedSeq e;
    e.seq_id = seq_id;
    e.final_dx = final_dx;
    const int first_month = visits.front().exam_month;
    e.target_month = visits.back().exam_month - first_month;

    auto kept_features = [&mask](const VisitRecord& v) {
        std::vector<double> out;
        out.reserve(mask.kept.size());
        for (int f : mask.kept) {
            const auto val = v.feature(f);
            if (!val)
                throw ContractError("encode: missing feature value (run imputation first)");
            out.push_back(*val);
        }
        return out;
    };

    const std::size_t n = visits.size() - 1;  // input visits
    for (std::size_t j = 0; j < n; ++j) {
        const VisitRecord& v = visits[j];
        if (!v.diagnosis) throw ContractError("encode: missing diagnosis (run cleaning first)");
        if (!v.months_to_final) throw ContractError("encode: months_to_final not derived");
        e.month_offsets.push_back(v.exam_month - first_month);
        std::vector<double> x = one_hot_dx(*v.diagnosis);
        const auto feats = kept_features(v);
        x.insert(x.end(), feats.begin(), feats.end());
        x.push_back(*v.months_to_final / kHorizonMonths);
        e.inputs.push_back(std::move(x));
    }
    if (!with_targets) return e;
    for (std::size_t j = 1; j <= n; ++j) {
        const VisitRecord& v = visits[j];
        if (!v.diagnosis) throw ContractError("encode: missing diagnosis (run cleaning first)");
        e.target_dx.push_back(severity(*v.diagnosis));
        e.target_features.push_back(kept_features(v));
        std::vector<double> m;
        m.reserve(mask.kept.size());
        for (int f : mask.kept) {
            const bool keep = !observed || (*observed)[j][static_cast<std::size_t>(f)];
            m.push_back(keep ? 1.0 : 0.0);
        }
        e.target_feature_mask.push_back(std::move(m));
    }
    return e;
}

}  // namespace

EncodedSeq encode_sequence(const VisitSequence& seq, const ChannelMask& mask) {
    return encode_visits(seq.visits, seq.seq_id, seq.target_dx, mask, /*with_targets=*/true,
                         nullptr);
}

EncodedSeq encode_history(const SubjectHistory& h, const ChannelMask& mask,
                          const std::vector<std::array<bool, kFeatureCount>>* observed) {
    if (h.visits.size() < 2) throw ContractError("encode: sequence needs >= 2 visits");
    const auto& last = h.visits.back();
    if (!last.diagnosis) throw ContractError("encode: missing diagnosis (run cleaning first)");
    std::vector<VisitRecord> visits = h.visits;
    add_months_to_final(visits);  // time channel references the prediction target
    return encode_visits(visits, 0, *last.diagnosis, mask, /*with_targets=*/true, observed);
}

EncodedSeq encode_history_prefix(const SubjectHistory& h, std::size_t upto,
                                 const ChannelMask& mask) {
    if (upto == 0 || upto >= h.visits.size())
        throw ContractError("encode: prefix target index out of range");
    std::vector<VisitRecord> visits(h.visits.begin(),
                                    h.visits.begin() + static_cast<std::ptrdiff_t>(upto) + 1);
    add_months_to_final(visits);  // time channel references the prediction target
    const auto& last = visits.back();
    const Diagnosis dx = last.diagnosis ? *last.diagnosis : Diagnosis::CN;
    return encode_visits(visits, 0, dx, mask, /*with_targets=*/false, nullptr);
}

}  // namespace adprog

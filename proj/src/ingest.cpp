#include "adprog/ingest.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>

#include "adprog/csv.hpp"
#include "adprog/errors.hpp"
#include "adprog/rng.hpp"

namespace adprog {

namespace {

// EXAMDATE handling: dates collapse to integer months (year*12 + month-1);
// the day of month is discarded.
std::optional<int> parse_exam_month(const std::string& s) {
    int y = 0, m = 0, d = 0;
    if (std::sscanf(s.c_str(), "%d-%d-%d", &y, &m, &d) != 3) return std::nullopt;
    if (m < 1 || m > 12 || d < 1 || d > 31) return std::nullopt;
    return y * 12 + (m - 1);
}

std::string format_exam_date(int exam_month) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%04d-%02d-01", exam_month / 12, exam_month % 12 + 1);
    return buf;
}

}  // namespace

void validate(const SynthConfig& cfg) {
    if (cfg.n_subjects < 1) throw ConfigError("synth: n_subjects must be positive");
    if (cfg.converter_fraction < 0.0 || cfg.converter_fraction > 1.0)
        throw ConfigError("synth: converter_fraction must be in [0,1]");
    if (cfg.cn_to_mci_fraction_of_converters < 0.0 || cfg.cn_to_mci_fraction_of_converters > 1.0)
        throw ConfigError("synth: cn_to_mci_fraction_of_converters must be in [0,1]");
    if (cfg.visit_interval_months < 1) throw ConfigError("synth: visit interval must be >= 1");
    if (cfg.max_visits < 2) throw ConfigError("synth: max_visits must be >= 2");
    if (cfg.converter_fraction > 0.0 && cfg.max_visits < 3)
        throw ConfigError("synth: converters need max_visits >= 3 (conversion index >= 2)");
    if (cfg.signal_strength < 0.0) throw ConfigError("synth: signal_strength must be >= 0");
    for (const auto& [key, rate] : cfg.missingness) {
        if (feature_index(key) < 0) throw ConfigError("synth: unknown feature key " + key);
        if (rate < 0.0 || rate >= 1.0)
            throw ConfigError("synth: missingness for " + key + " must be in [0,1)");
    }
}

std::vector<SubjectHistory> load_csv(const std::string& path) {
    csv::Table table = csv::read_file(path);
    const int col_rid = table.column("RID");
    const int col_date = table.column("EXAMDATE");
    const int col_dx = table.column("DX");
    if (col_rid < 0) throw ContractError("cohort csv: missing column RID");
    if (col_date < 0) throw ContractError("cohort csv: missing column EXAMDATE");
    if (col_dx < 0) throw ContractError("cohort csv: missing column DX");
    std::array<int, kFeatureCount> feat_col{};
    for (int f = 0; f < kFeatureCount; ++f) {
        const std::string& key = feature_table()[static_cast<std::size_t>(f)].key;
        feat_col[static_cast<std::size_t>(f)] = table.column(key);
        if (feat_col[static_cast<std::size_t>(f)] < 0)
            throw ContractError("cohort csv: missing column " + key);
    }

    std::vector<std::string> order;  // subjects in first-appearance order
    std::map<std::string, SubjectHistory> by_id;
    for (std::size_t r = 0; r < table.rows.size(); ++r) {
        const auto& row = table.rows[r];
        auto cell = [&row](int c) -> const std::string& {
            static const std::string empty;
            return c < static_cast<int>(row.size()) ? row[static_cast<std::size_t>(c)] : empty;
        };
        VisitRecord v;
        v.subject_id = cell(col_rid);
        if (v.subject_id.empty())
            throw ContractError("cohort csv: empty RID in data row " + std::to_string(r + 2));
        auto month = parse_exam_month(cell(col_date));
        if (!month)
            throw ContractError("cohort csv: bad EXAMDATE in data row " + std::to_string(r + 2));
        v.exam_month = *month;
        v.diagnosis = parse_diagnosis(cell(col_dx));
        for (int f = 0; f < kFeatureCount; ++f)
            v.set_feature(f, csv::parse_double(cell(feat_col[static_cast<std::size_t>(f)])));

        auto [it, inserted] = by_id.try_emplace(v.subject_id);
        if (inserted) {
            it->second.subject_id = v.subject_id;
            order.push_back(v.subject_id);
        }
        for (const auto& existing : it->second.visits)
            if (existing.exam_month == v.exam_month)
                throw ContractError("cohort csv: duplicate (subject, date) in data row " +
                                    std::to_string(r + 2) + " for subject " + v.subject_id);
        it->second.visits.push_back(std::move(v));
    }

    std::vector<SubjectHistory> cohort;
    cohort.reserve(order.size());
    for (const auto& id : order) {
        SubjectHistory h = std::move(by_id[id]);
        std::sort(h.visits.begin(), h.visits.end(),
                  [](const VisitRecord& a, const VisitRecord& b) {
                      return a.exam_month < b.exam_month;
                  });
        cohort.push_back(std::move(h));
    }
    return cohort;
}

void write_cohort_csv(const std::string& path, const std::vector<SubjectHistory>& cohort,
                      const std::vector<std::string>& comments) {
    csv::Writer w(path);
    for (const auto& c : comments) w.comment(c);
    std::vector<std::string> header{"RID", "EXAMDATE", "DX"};
    for (const auto& spec : feature_table()) header.push_back(spec.key);
    w.row(header);
    for (const auto& h : cohort) {
        for (const auto& v : h.visits) {
            std::vector<std::string> row{h.subject_id, format_exam_date(v.exam_month),
                                         v.diagnosis ? to_string(*v.diagnosis) : ""};
            for (int f = 0; f < kFeatureCount; ++f) {
                auto val = v.feature(f);
                row.push_back(val ? csv::format_double(*val) : "");
            }
            w.row(row);
        }
    }
    w.close();
}

std::vector<SubjectHistory> generate_synthetic(const SynthConfig& cfg) {
    validate(cfg);
    Rng rng(cfg.rng_seed);
    const auto& table = feature_table();

    std::array<double, kFeatureCount> miss_rate{};
    for (int f = 0; f < kFeatureCount; ++f) {
        const auto& spec = table[static_cast<std::size_t>(f)];
        auto it = cfg.missingness.find(spec.key);
        miss_rate[static_cast<std::size_t>(f)] =
            it != cfg.missingness.end() ? it->second : spec.missingness_target;
    }

    // Pick which subjects convert, and of those, who converts CN->MCI.
    const int n_conv = static_cast<int>(
        std::llround(cfg.converter_fraction * static_cast<double>(cfg.n_subjects)));
    const int n_cn_mci = static_cast<int>(std::llround(
        cfg.cn_to_mci_fraction_of_converters * static_cast<double>(n_conv)));
    std::vector<int> subject_ids(static_cast<std::size_t>(cfg.n_subjects));
    for (int i = 0; i < cfg.n_subjects; ++i) subject_ids[static_cast<std::size_t>(i)] = i;
    rng.shuffle(subject_ids);
    // kind per subject: 0 stable, 1 CN->MCI converter, 2 MCI->AD converter
    std::vector<int> kind(static_cast<std::size_t>(cfg.n_subjects), 0);
    for (int i = 0; i < n_conv; ++i)
        kind[static_cast<std::size_t>(subject_ids[static_cast<std::size_t>(i)])] =
            i < n_cn_mci ? 1 : 2;

    // Span cap: monthly rollout covers at most 72 months, so histories are
    // kept inside that horizon.
    constexpr int kMaxSpanMonths = 72;

    const double signal = std::min(cfg.signal_strength, 2.0);
    std::vector<SubjectHistory> cohort;
    cohort.reserve(static_cast<std::size_t>(cfg.n_subjects));
    for (int s = 0; s < cfg.n_subjects; ++s) {
        SubjectHistory h;
        h.subject_id = "S" + std::to_string(1000 + s);

        const bool converter = kind[static_cast<std::size_t>(s)] != 0;
        // The shortest possible gap bounds how many visits fit in the horizon.
        const int min_gap = cfg.gap_jitter ? 6 : cfg.visit_interval_months;
        const int max_visits = std::min(cfg.max_visits, 1 + kMaxSpanMonths / min_gap);
        const int min_visits = converter ? 3 : 2;
        if (max_visits < min_visits)
            throw ConfigError(
                "synth: visit interval too large to fit a converter history in the "
                "72-month horizon");
        const int n_visits =
            min_visits + static_cast<int>(rng.next_below(
                             static_cast<std::uint64_t>(max_visits - min_visits + 1)));

        // Visit months, anchored at a realistic epoch so CSV dates look sane.
        std::vector<int> months;
        for (;;) {
            months.assign(1, 2005 * 12 + static_cast<int>(rng.next_below(12)));
            for (int v = 1; v < n_visits; ++v) {
                int gap = cfg.visit_interval_months;
                if (cfg.gap_jitter) gap = 6 * (1 + static_cast<int>(rng.next_below(3)));
                months.push_back(months.back() + gap);
            }
            if (months.back() - months.front() <= kMaxSpanMonths) break;
            // Jittered gaps can overrun the horizon; redraw the whole set so
            // the accepted gap distribution stays exchangeable across visits.
        }

        // Diagnosis track.
        Diagnosis from = Diagnosis::CN, to = Diagnosis::CN;
        int conv_index = -1;
        if (kind[static_cast<std::size_t>(s)] == 1) {
            from = Diagnosis::CN;
            to = Diagnosis::MCI;
        } else if (kind[static_cast<std::size_t>(s)] == 2) {
            from = Diagnosis::MCI;
            to = Diagnosis::AD;
        } else {
            const double u = rng.next_unit();
            from = to = u < 0.4 ? Diagnosis::CN : (u < 0.75 ? Diagnosis::MCI : Diagnosis::AD);
        }
        if (converter)
            conv_index =
                2 + static_cast<int>(rng.next_below(static_cast<std::uint64_t>(n_visits - 2)));

        // Subject-level offsets and AR(1) state per feature.
        std::array<double, kFeatureCount> offset{};
        std::array<double, kFeatureCount> ar{};
        for (int f = 0; f < kFeatureCount; ++f) {
            const auto& spec = table[static_cast<std::size_t>(f)];
            offset[static_cast<std::size_t>(f)] = 0.25 * spec.population_std * rng.next_normal();
            ar[static_cast<std::size_t>(f)] = 0.0;
        }
        constexpr double kArRho = 0.6;
        constexpr double kArSigma = 0.35;

        auto class_mean = [&](const FeatureSpec& spec, Diagnosis dx) {
            const double sev = static_cast<double>(severity(dx)) - 1.0;
            return spec.population_mean +
                   static_cast<double>(spec.severity_direction) * sev * 0.9 *
                       spec.population_std * signal;
        };

        for (int v = 0; v < n_visits; ++v) {
            VisitRecord rec;
            rec.subject_id = h.subject_id;
            rec.exam_month = months[static_cast<std::size_t>(v)];
            rec.diagnosis = (converter && v >= conv_index) ? to : from;
            for (int f = 0; f < kFeatureCount; ++f) {
                const auto& spec = table[static_cast<std::size_t>(f)];
                double& state = ar[static_cast<std::size_t>(f)];
                state = kArRho * state + kArSigma * spec.population_std * rng.next_normal();
                double mean;
                if (spec.category == FeatureCategory::Cognitive) {
                    mean = class_mean(spec, *rec.diagnosis);
                    if (converter && v < conv_index && v >= conv_index - 2) {
                        // Drift toward the post-conversion mean over the two
                        // visits before conversion: the learnable signal.
                        const int j = v - (conv_index - 3);  // 1 or 2
                        const double w =
                            std::clamp(signal * static_cast<double>(j) / 3.0, 0.0, 1.0);
                        mean = (1.0 - w) * class_mean(spec, from) + w * class_mean(spec, to);
                    }
                } else {
                    mean = spec.population_mean;  // uninformative category
                }
                const double value = mean + offset[static_cast<std::size_t>(f)] + state;
                const bool missing = rng.next_unit() < miss_rate[static_cast<std::size_t>(f)];
                rec.set_feature(f, missing ? std::nullopt : std::optional<double>(value));
            }
            h.visits.push_back(std::move(rec));
        }
        cohort.push_back(std::move(h));
    }
    return cohort;
}

std::vector<SubjectHistory> corrupt_diagnoses(std::vector<SubjectHistory> cohort,
                                              double fraction, std::uint64_t seed) {
    if (fraction < 0.0 || fraction >= 1.0)
        throw ConfigError("corrupt_diagnoses: fraction must be in [0,1)");
    std::vector<std::pair<std::size_t, std::size_t>> slots;
    for (std::size_t s = 0; s < cohort.size(); ++s)
        for (std::size_t v = 0; v < cohort[s].visits.size(); ++v) slots.emplace_back(s, v);
    const std::size_t n_mask =
        static_cast<std::size_t>(fraction * static_cast<double>(slots.size()));
    Rng rng(seed);
    rng.shuffle(slots);
    for (std::size_t i = 0; i < n_mask; ++i)
        cohort[slots[i].first].visits[slots[i].second].diagnosis.reset();
    return cohort;
}

}  // namespace adprog

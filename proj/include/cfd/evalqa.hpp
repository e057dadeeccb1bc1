#pragma once

// Datasets, answer metrics, and context perturbations.
//
// Records are held in one normalized shape regardless of source. The four
// dataset loaders accept the published field layouts and translate; the
// normalized JSONL form round-trips exactly. Metric scoring works on the
// canonical answer form from common.hpp, taking the best score over the
// gold set. Perturbations are pure functions of (input, seed) with their
// sampling plans exposed so tests can verify the counts and multisets.

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <fstream>
#include <map>
#include <ostream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "cfd/common.hpp"

namespace cfd::evalqa {

using nlohmann::json;

struct QueryRecord {
    std::string id;
    std::string question;
    std::string context;  // retrieved or provided knowledge text
    std::vector<std::string> golds;
    json metadata = json::object();
};

struct LoadReport {
    std::vector<QueryRecord> records;
    std::size_t skipped = 0;
    std::vector<std::string> notes;
};

// ---------------------------------------------------------------------------
// Normalized JSONL
// ---------------------------------------------------------------------------

inline json record_to_json(const QueryRecord& r) {
    return json{{"id", r.id},
                {"question", r.question},
                {"context", r.context},
                {"golds", r.golds},
                {"metadata", r.metadata}};
}

inline QueryRecord record_from_json(const json& j) {
    QueryRecord r;
    r.id = j.at("id").get<std::string>();
    r.question = j.at("question").get<std::string>();
    r.context = j.value("context", std::string());
    r.golds = j.at("golds").get<std::vector<std::string>>();
    r.metadata = j.value("metadata", json::object());
    return r;
}

namespace detail {

inline std::vector<json> parse_jsonl(std::istream& in, const std::string& what) {
    std::vector<json> out;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (trim(line).empty()) continue;
        try {
            out.push_back(json::parse(line));
        } catch (const json::parse_error& e) {
            throw std::runtime_error(what + " line " + std::to_string(line_no) +
                                     " is not valid JSON: " + e.what());
        }
    }
    return out;
}

inline std::ifstream open_or_throw(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open file: " + path);
    return in;
}

}  // namespace detail

inline std::vector<QueryRecord> load_records(std::istream& in) {
    std::vector<QueryRecord> out;
    for (const json& j : detail::parse_jsonl(in, "dataset")) out.push_back(record_from_json(j));
    return out;
}

inline std::vector<QueryRecord> load_records_file(const std::string& path) {
    auto in = detail::open_or_throw(path);
    return load_records(in);
}

inline void write_records(std::ostream& os, const std::vector<QueryRecord>& records) {
    for (const QueryRecord& r : records) os << record_to_json(r).dump() << '\n';
}

// ---------------------------------------------------------------------------
// Source-format loaders
// ---------------------------------------------------------------------------

// {"question", "correct_answer", "support", "distractor1..3"}
inline LoadReport load_sciq(std::istream& in) {
    LoadReport report;
    std::size_t index = 0;
    for (const json& j : detail::parse_jsonl(in, "sciq")) {
        QueryRecord r;
        r.id = j.value("id", "sciq-" + std::to_string(index));
        r.question = j.at("question").get<std::string>();
        r.context = j.value("support", std::string());
        r.golds = {j.at("correct_answer").get<std::string>()};
        json distractors = json::array();
        for (const char* k : {"distractor1", "distractor2", "distractor3"})
            if (j.contains(k)) distractors.push_back(j.at(k));
        r.metadata = json{{"source", "sciq"}, {"distractors", distractors}};
        report.records.push_back(std::move(r));
        ++index;
    }
    return report;
}

// {"_id", "question", "answer", "context": [[title, [sentences]], ...]}
inline LoadReport load_hotpotqa(std::istream& in) {
    LoadReport report;
    for (const json& j : detail::parse_jsonl(in, "hotpotqa")) {
        QueryRecord r;
        r.id = j.at("_id").get<std::string>();
        r.question = j.at("question").get<std::string>();
        r.golds = {j.at("answer").get<std::string>()};
        std::ostringstream ctx;
        bool first = true;
        for (const json& para : j.value("context", json::array())) {
            std::string title = para.at(0).get<std::string>();
            if (!first) ctx << '\n';
            ctx << title << ": ";
            for (const json& sent : para.at(1)) ctx << sent.get<std::string>();
            first = false;
        }
        r.context = ctx.str();
        r.metadata = json{{"source", "hotpotqa"}};
        for (const char* k : {"type", "level"})
            if (j.contains(k)) r.metadata[k] = j.at(k);
        report.records.push_back(std::move(r));
    }
    return report;
}

// {"id", "query", "answer", "candidates": [...], "supports": [...]}
inline LoadReport load_wikihop(std::istream& in) {
    LoadReport report;
    for (const json& j : detail::parse_jsonl(in, "wikihop")) {
        QueryRecord r;
        r.id = j.at("id").get<std::string>();
        r.question = j.at("query").get<std::string>();
        r.golds = {j.at("answer").get<std::string>()};
        std::ostringstream ctx;
        bool first = true;
        for (const json& support : j.value("supports", json::array())) {
            if (!first) ctx << '\n';
            ctx << support.get<std::string>();
            first = false;
        }
        r.context = ctx.str();
        r.metadata = json{{"source", "wikihop"},
                          {"candidates", j.value("candidates", json::array())}};
        report.records.push_back(std::move(r));
    }
    return report;
}

// {"id": "2hop__a_b", "question", "answer", "paragraphs": [{"title",
// "paragraph_text"}, ...]}. The hop count is the digits before "hop" in the
// id; records above max_hops or without a parseable hop count are skipped.
inline LoadReport load_musique(std::istream& in, std::size_t max_hops = 3) {
    LoadReport report;
    for (const json& j : detail::parse_jsonl(in, "musique")) {
        std::string id = j.at("id").get<std::string>();
        std::size_t hop_pos = id.find("hop");
        std::size_t hops = 0;
        bool parsed = hop_pos != std::string::npos && hop_pos > 0;
        if (parsed) {
            try {
                hops = std::stoul(id.substr(0, hop_pos));
            } catch (const std::exception&) {
                parsed = false;
            }
        }
        if (!parsed) {
            ++report.skipped;
            report.notes.push_back("skipped record '" + id + "': no hop count in id");
            continue;
        }
        if (hops > max_hops) {
            ++report.skipped;
            report.notes.push_back("skipped record '" + id + "': " + std::to_string(hops) +
                                   " hops exceeds " + std::to_string(max_hops));
            continue;
        }
        QueryRecord r;
        r.id = id;
        r.question = j.at("question").get<std::string>();
        r.golds = {j.at("answer").get<std::string>()};
        std::ostringstream ctx;
        bool first = true;
        for (const json& para : j.value("paragraphs", json::array())) {
            if (!first) ctx << '\n';
            ctx << para.at("title").get<std::string>() << ": "
                << para.at("paragraph_text").get<std::string>();
            first = false;
        }
        r.context = ctx.str();
        r.metadata = json{{"source", "musique"}, {"hops", hops}};
        report.records.push_back(std::move(r));
    }
    return report;
}

// ---------------------------------------------------------------------------
// Answer metrics. Both operate on the canonical answer form; F1 compares
// token multisets, and both take the maximum over the gold answers.
// ---------------------------------------------------------------------------

inline bool exact_match(const std::string& prediction, const std::vector<std::string>& golds) {
    std::string p = normalize_answer(prediction);
    for (const std::string& g : golds)
        if (p == normalize_answer(g)) return true;
    return false;
}

namespace detail {

inline double token_f1(const std::vector<std::string>& pred,
                       const std::vector<std::string>& gold) {
    if (pred.empty() && gold.empty()) return 1.0;
    if (pred.empty() || gold.empty()) return 0.0;
    std::map<std::string, std::size_t> counts;
    for (const std::string& t : gold) ++counts[t];
    std::size_t overlap = 0;
    for (const std::string& t : pred) {
        auto it = counts.find(t);
        if (it != counts.end() && it->second > 0) {
            --it->second;
            ++overlap;
        }
    }
    if (overlap == 0) return 0.0;
    double precision = static_cast<double>(overlap) / static_cast<double>(pred.size());
    double recall = static_cast<double>(overlap) / static_cast<double>(gold.size());
    return 2.0 * precision * recall / (precision + recall);
}

}  // namespace detail

inline double f1_score(const std::string& prediction, const std::vector<std::string>& golds) {
    std::vector<std::string> pred = split_ws(normalize_answer(prediction));
    double best = 0.0;
    for (const std::string& g : golds)
        best = std::max(best, detail::token_f1(pred, split_ws(normalize_answer(g))));
    return best;
}

struct MetricsReport {
    std::size_t count = 0;
    std::size_t missing_predictions = 0;
    double em_mean = 0.0;
    double f1_mean = 0.0;
    std::map<std::string, double> per_item_f1;
    std::map<std::string, bool> per_item_em;

    json to_json() const {
        return json{{"count", count},
                    {"missing_predictions", missing_predictions},
                    {"exact_match", em_mean},
                    {"f1", f1_mean}};
    }
};

// Scores the intersection of dataset ids and prediction ids; predictions for
// unknown ids are ignored, dataset records without predictions are counted.
inline MetricsReport evaluate(const std::vector<QueryRecord>& records,
                              const std::map<std::string, std::string>& predictions) {
    MetricsReport report;
    double em_sum = 0.0, f1_sum = 0.0;
    for (const QueryRecord& r : records) {
        auto it = predictions.find(r.id);
        if (it == predictions.end()) {
            ++report.missing_predictions;
            continue;
        }
        bool em = exact_match(it->second, r.golds);
        double f1 = f1_score(it->second, r.golds);
        report.per_item_em[r.id] = em;
        report.per_item_f1[r.id] = f1;
        em_sum += em ? 1.0 : 0.0;
        f1_sum += f1;
        ++report.count;
    }
    if (report.count > 0) {
        report.em_mean = em_sum / static_cast<double>(report.count);
        report.f1_mean = f1_sum / static_cast<double>(report.count);
    }
    return report;
}

// ---------------------------------------------------------------------------
// Context sentence handling
// ---------------------------------------------------------------------------

// Splits after '.', '!' or '?' followed by whitespace (or end), and at
// newlines. Sentences keep their terminators; empties are dropped.
inline std::vector<std::string> split_sentences(const std::string& text) {
    std::vector<std::string> out;
    std::string current;
    for (std::size_t i = 0; i < text.size(); ++i) {
        char c = text[i];
        if (c == '\n') {
            if (!trim(current).empty()) out.push_back(trim(current));
            current.clear();
            continue;
        }
        current += c;
        if ((c == '.' || c == '!' || c == '?') &&
            (i + 1 >= text.size() ||
             std::isspace(static_cast<unsigned char>(text[i + 1])))) {
            if (!trim(current).empty()) out.push_back(trim(current));
            current.clear();
        }
    }
    if (!trim(current).empty()) out.push_back(trim(current));
    return out;
}

inline std::string join_sentences(const std::vector<std::string>& sentences) {
    std::string out;
    for (std::size_t i = 0; i < sentences.size(); ++i) {
        if (i > 0) out += ' ';
        out += sentences[i];
    }
    return out;
}

// ---------------------------------------------------------------------------
// Perturbations. Injection adds ceil(n/10) foreign sentences at sampled
// slots; shuffling permutes the values at a sampled half of the positions.
// Counts use exact integer arithmetic so the 10% and 50% rates never drift
// through floating point.
// ---------------------------------------------------------------------------

struct InjectPlan {
    std::size_t inject_count = 0;
    std::vector<std::size_t> slots;         // sorted positions in the output
    std::vector<std::size_t> pool_indices;  // distinct picks from the pool
};

struct ShufflePlan {
    std::vector<std::size_t> positions;    // sorted distinct positions touched
    std::vector<std::size_t> permutation;  // positions[i] receives value from
                                           // positions[permutation[i]]
};

namespace detail {

// First k entries of a seeded Fisher-Yates pass over [0, n): a uniform
// k-subset in sampling order.
inline std::vector<std::size_t> sample_distinct(Rng& rng, std::size_t n, std::size_t k) {
    std::vector<std::size_t> idx(n);
    for (std::size_t i = 0; i < n; ++i) idx[i] = i;
    for (std::size_t i = 0; i < k; ++i)
        std::swap(idx[i], idx[i + uniform_index(rng, n - i)]);
    idx.resize(k);
    return idx;
}

}  // namespace detail

inline InjectPlan inject_plan(std::size_t context_size, std::size_t pool_size,
                              std::uint64_t seed) {
    InjectPlan plan;
    plan.inject_count = (context_size + 9) / 10;  // ceil of 10%
    if (plan.inject_count == 0) return plan;
    if (pool_size < plan.inject_count)
        throw std::invalid_argument("injection pool has " + std::to_string(pool_size) +
                                    " sentences, need " + std::to_string(plan.inject_count));
    Rng rng(seed);
    plan.slots = detail::sample_distinct(rng, context_size + plan.inject_count,
                                         plan.inject_count);
    std::sort(plan.slots.begin(), plan.slots.end());
    plan.pool_indices = detail::sample_distinct(rng, pool_size, plan.inject_count);
    return plan;
}

inline std::vector<std::string> perturb_inject(const std::vector<std::string>& context,
                                               const std::vector<std::string>& pool,
                                               std::uint64_t seed) {
    InjectPlan plan = inject_plan(context.size(), pool.size(), seed);
    std::vector<std::string> out(context.size() + plan.inject_count);
    std::vector<bool> taken(out.size(), false);
    for (std::size_t i = 0; i < plan.slots.size(); ++i) {
        out[plan.slots[i]] = pool[plan.pool_indices[i]];
        taken[plan.slots[i]] = true;
    }
    std::size_t src = 0;
    for (std::size_t i = 0; i < out.size(); ++i)
        if (!taken[i]) out[i] = context[src++];
    return out;
}

inline ShufflePlan shuffle_plan(std::size_t context_size, std::uint64_t seed) {
    ShufflePlan plan;
    std::size_t m = context_size / 2;  // floor of 50%
    if (m < 2) return plan;            // nothing to permute
    Rng rng(seed);
    plan.positions = detail::sample_distinct(rng, context_size, m);
    std::sort(plan.positions.begin(), plan.positions.end());
    plan.permutation.resize(m);
    for (std::size_t i = 0; i < m; ++i) plan.permutation[i] = i;
    for (std::size_t i = m; i-- > 1;)
        std::swap(plan.permutation[i], plan.permutation[uniform_index(rng, i + 1)]);
    return plan;
}

inline std::vector<std::string> perturb_shuffle(const std::vector<std::string>& context,
                                                std::uint64_t seed) {
    ShufflePlan plan = shuffle_plan(context.size(), seed);
    std::vector<std::string> out = context;
    for (std::size_t i = 0; i < plan.positions.size(); ++i)
        out[plan.positions[i]] = context[plan.positions[plan.permutation[i]]];
    return out;
}

}  // namespace cfd::evalqa

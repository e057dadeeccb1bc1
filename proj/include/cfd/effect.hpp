#pragma once

// Effect scoring: turn cluster consistency and counterfactual sensitivity
// into per-answer causal-support scores and select the winner.
//
// A cluster earns credit for a variant when its representative chain stays
// structurally consistent there AND the retained chains change their answer
// under the substituted knowledge; the product is weighted by the variant's
// selection probability. Per-answer totals are accumulated in ascending
// value order, which makes the result bit-exact under any permutation of
// the contribution rows.

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstddef>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

#include "cfd/common.hpp"
#include "cfd/cot.hpp"

namespace cfd::effect {

// ---------------------------------------------------------------------------
// Answer extraction: the span after the LAST "answer is" (any case) up to
// the sentence end, in canonical answer form. Chains that never commit to
// an answer report found = false.
// ---------------------------------------------------------------------------

struct ExtractedAnswer {
    std::string answer;  // canonical form, empty when not found
    bool found = false;
};

inline ExtractedAnswer extract_answer(const std::string& text) {
    static const std::string kMarker = "answer is";
    std::string lowered = to_lower(text);
    std::size_t pos = lowered.rfind(kMarker);
    if (pos == std::string::npos) return {};
    std::size_t start = pos + kMarker.size();
    std::size_t end = start;
    while (end < text.size()) {
        char c = text[end];
        if (c == '\n') break;
        if ((c == '.' || c == '!' || c == '?') &&
            (end + 1 >= text.size() || std::isspace(static_cast<unsigned char>(text[end + 1]))))
            break;
        ++end;
    }
    std::string answer = normalize_answer(text.substr(start, end - start));
    if (answer.empty()) return {};
    return ExtractedAnswer{std::move(answer), true};
}

// Most frequent found answer; ties break toward the lexicographically
// smaller one. All-missing input yields an empty answer.
inline std::string majority_vote(const std::vector<ExtractedAnswer>& answers) {
    std::map<std::string, std::size_t> counts;
    for (const ExtractedAnswer& a : answers)
        if (a.found) ++counts[a.answer];
    std::string best;
    std::size_t best_count = 0;
    for (const auto& [answer, count] : counts) {
        if (count > best_count) {  // map order makes ties lexicographic
            best = answer;
            best_count = count;
        }
    }
    return best;
}

// ---------------------------------------------------------------------------
// Sensitivity: among the variant chains retained by the consistency gate,
// the fraction whose answer differs from the cluster's answer. An empty
// gate contributes probability zero and is flagged rather than erroring.
// ---------------------------------------------------------------------------

struct SensitivityRecord {
    std::size_t cluster = 0;
    std::size_t variant = 0;
    std::vector<std::size_t> retained;  // chain indices that passed the gate
    std::vector<int> differing;         // aligned with retained, 0 or 1
    double probability = 0.0;           // sum(differing) / |retained|
    bool gate_empty = false;
};

inline SensitivityRecord sensitivity_prob(const std::string& cluster_answer,
                                          const std::vector<ExtractedAnswer>& chain_answers,
                                          const std::vector<int>& retained_mask) {
    if (chain_answers.size() != retained_mask.size())
        throw std::invalid_argument("sensitivity inputs are misaligned: " +
                                    std::to_string(chain_answers.size()) + " answers vs " +
                                    std::to_string(retained_mask.size()) + " gate entries");
    SensitivityRecord rec;
    std::size_t differs = 0;
    for (std::size_t i = 0; i < chain_answers.size(); ++i) {
        if (retained_mask[i] == 0) continue;
        rec.retained.push_back(i);
        // A chain that failed to answer counts as differing from any answer.
        bool same = chain_answers[i].found && chain_answers[i].answer == cluster_answer;
        rec.differing.push_back(same ? 0 : 1);
        differs += same ? 0u : 1u;
    }
    if (rec.retained.empty()) {
        rec.gate_empty = true;
        rec.probability = 0.0;
    } else {
        rec.probability =
            static_cast<double>(differs) / static_cast<double>(rec.retained.size());
    }
    return rec;
}

// ---------------------------------------------------------------------------
// Aggregation
// ---------------------------------------------------------------------------

struct ClusterAnswer {
    std::string answer;  // canonical form from the medoid chain
    bool found = false;
    std::size_t member_count = 0;
};

struct Contribution {
    std::size_t cluster = 0;
    std::size_t variant = 0;
    std::string answer;
    bool answer_found = false;
    double consistency = 0.0;
    double sensitivity = 0.0;
    double variant_prob = 0.0;
    double value = 0.0;  // consistency * sensitivity * variant_prob
};

struct CausalScoreTable {
    std::map<std::string, double> scores;            // answer -> total support
    std::map<std::string, std::size_t> membership;   // answer -> member total
    std::vector<Contribution> ledger;                // every (cluster, variant) row
};

// Sums each answer's contribution values in ascending order. Sorting first
// fixes the floating-point addition order, so any permutation of the rows
// produces bitwise-identical totals.
inline CausalScoreTable aggregate_rows(const std::vector<Contribution>& rows,
                                       const std::vector<ClusterAnswer>& answers) {
    CausalScoreTable table;
    table.ledger = rows;
    std::map<std::string, std::vector<double>> values;
    for (const Contribution& row : rows) {
        if (!row.answer_found) continue;
        values[row.answer].push_back(row.value);
    }
    for (auto& [answer, vals] : values) {
        std::sort(vals.begin(), vals.end());
        double total = 0.0;
        for (double v : vals) total += v;
        table.scores[answer] = total;
    }
    for (const ClusterAnswer& a : answers)
        if (a.found) table.membership[a.answer] += a.member_count;
    return table;
}

inline CausalScoreTable aggregate(
    const std::vector<ClusterAnswer>& answers,
    const std::vector<std::vector<cot::ConsistencyRecord>>& consistency,
    const std::vector<std::vector<SensitivityRecord>>& sensitivity,
    const std::vector<double>& variant_probs) {
    std::size_t n_clusters = answers.size();
    std::size_t n_variants = variant_probs.size();
    if (consistency.size() != n_clusters || sensitivity.size() != n_clusters)
        throw std::invalid_argument("score tables must cover every cluster");

    double prob_sum = 0.0;
    for (double p : variant_probs) {
        if (!(p >= 0.0) || p > 1.0)
            throw std::invalid_argument("variant probabilities must lie in [0, 1]");
        prob_sum += p;
    }
    if (std::abs(prob_sum - 1.0) > 1e-9)
        throw std::invalid_argument("variant probabilities sum to " +
                                    std::to_string(prob_sum) + ", expected 1");

    std::vector<Contribution> rows;
    for (std::size_t n = 0; n < n_clusters; ++n) {
        if (consistency[n].size() != n_variants || sensitivity[n].size() != n_variants)
            throw std::invalid_argument("score tables must cover every variant");
        for (std::size_t t = 0; t < n_variants; ++t) {
            const cot::ConsistencyRecord& c = consistency[n][t];
            const SensitivityRecord& s = sensitivity[n][t];
            // The dense grid is the duplicate check: every cell must carry
            // its own coordinates exactly once.
            if (c.cluster != n || c.variant != t || s.cluster != n || s.variant != t)
                throw std::invalid_argument("score tables are misindexed at cluster " +
                                            std::to_string(n) + ", variant " +
                                            std::to_string(t));
            if (c.probability < 0.0 || c.probability > 1.0 || s.probability < 0.0 ||
                s.probability > 1.0)
                throw std::invalid_argument("probabilities must lie in [0, 1]");
            Contribution row;
            row.cluster = n;
            row.variant = t;
            row.answer = answers[n].answer;
            row.answer_found = answers[n].found;
            row.consistency = c.probability;
            row.sensitivity = s.probability;
            row.variant_prob = variant_probs[t];
            row.value = c.probability * s.probability * variant_probs[t];
            rows.push_back(std::move(row));
        }
    }
    return aggregate_rows(rows, answers);
}

// ---------------------------------------------------------------------------
// Selection: highest score, then largest supporting membership, then the
// lexicographically smaller answer. An empty table selects nothing and the
// caller decides the fallback.
// ---------------------------------------------------------------------------

struct Selection {
    std::string answer;
    double score = 0.0;
    bool found = false;
};

inline Selection select_answer(const CausalScoreTable& table) {
    Selection sel;
    for (const auto& [answer, score] : table.scores) {
        std::size_t members = 0;
        if (auto it = table.membership.find(answer); it != table.membership.end())
            members = it->second;
        if (!sel.found) {
            sel = Selection{answer, score, true};
            continue;
        }
        std::size_t sel_members = 0;
        if (auto it = table.membership.find(sel.answer); it != table.membership.end())
            sel_members = it->second;
        if (score > sel.score ||
            (score == sel.score && members > sel_members)) {
            // Map iteration is ascending, so on full ties the earlier
            // (lexicographically smaller) answer is kept.
            sel = Selection{answer, score, true};
        }
    }
    return sel;
}

}  // namespace cfd::effect

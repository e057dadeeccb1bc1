#pragma once

// End-to-end per-question pipeline.
//
// The full method samples M reasoning chains from the factual knowledge,
// clusters them, builds counterfactual knowledge variants, samples P chains
// per variant, gates them by consistency with each cluster's medoid, scores
// counterfactual sensitivity among the retained chains, and aggregates
// cluster-by-variant support into per-answer causal scores. Baselines share
// the same sampled chains (same request keys), so method comparisons on one
// fixture are apples to apples.
//
// Request keys are pure functions of the record id:
//   "<id>::init"  repetitions 0..M-1   factual chains
//   "<id>"        repetitions 0,1      entity extraction (+ one re-ask)
//   "<id>::<surface>" repetitions 0,1  counterfactual replacement
//   "<id>::cf<t>" repetitions 0..P-1   chains for knowledge variant t
//   "<id>::icl"   repetition 0         direct-answer baseline
// Records are processed sequentially; the gateway's worker pool is the one
// source of concurrency, so run artifacts are deterministic for a fixture.

#include <algorithm>
#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "cfd/common.hpp"
#include "cfd/config.hpp"
#include "cfd/cot.hpp"
#include "cfd/counterfactual.hpp"
#include "cfd/effect.hpp"
#include "cfd/evalqa.hpp"
#include "cfd/gateway.hpp"

namespace cfd::pipeline {

using nlohmann::json;

enum class Method { Cfd, CotSc, Cot, Icl };

inline Method parse_method(const std::string& name) {
    if (name == "cfd") return Method::Cfd;
    if (name == "cot-sc") return Method::CotSc;
    if (name == "cot") return Method::Cot;
    if (name == "icl") return Method::Icl;
    throw std::invalid_argument("unknown method '" + name +
                                "' (expected cfd, cot-sc, cot, or icl)");
}

inline std::string method_name(Method m) {
    switch (m) {
        case Method::Cfd: return "cfd";
        case Method::CotSc: return "cot-sc";
        case Method::Cot: return "cot";
        case Method::Icl: return "icl";
    }
    return "?";
}

struct RankedAnswer {
    std::string answer;
    double score = 0.0;
    std::size_t membership = 0;
};

struct RecordReport {
    std::string id;
    std::string method;
    std::string prediction;
    double score = 0.0;
    std::string majority_answer;
    std::size_t gate_empty_count = 0;
    std::optional<double> alignment_loss;
    std::vector<RankedAnswer> ranked;
    std::vector<effect::Contribution> ledger;
    std::vector<effect::ClusterAnswer> clusters;
    std::vector<std::string> warnings;
    std::string config_digest;
    std::uint64_t seed = 0;

    json to_json() const {
        json ranked_json = json::array();
        for (const RankedAnswer& r : ranked)
            ranked_json.push_back(json{
                {"answer", r.answer}, {"score", r.score}, {"membership", r.membership}});
        json ledger_json = json::array();
        for (const effect::Contribution& c : ledger)
            ledger_json.push_back(json{{"cluster", c.cluster},
                                       {"variant", c.variant},
                                       {"answer", c.answer},
                                       {"found", c.answer_found},
                                       {"consistency", c.consistency},
                                       {"sensitivity", c.sensitivity},
                                       {"variant_prob", c.variant_prob},
                                       {"value", c.value}});
        json clusters_json = json::array();
        for (const effect::ClusterAnswer& a : clusters)
            clusters_json.push_back(json{
                {"answer", a.answer}, {"found", a.found}, {"members", a.member_count}});
        json out{{"id", id},
                 {"method", method},
                 {"prediction", prediction},
                 {"score", score},
                 {"majority_answer", majority_answer},
                 {"gate_empty_count", gate_empty_count},
                 {"ranked", ranked_json},
                 {"ledger", ledger_json},
                 {"clusters", clusters_json},
                 {"warnings", warnings},
                 {"config_digest", config_digest},
                 {"seed", seed}};
        if (alignment_loss) out["alignment_loss"] = *alignment_loss;
        return out;
    }
};

class Runner {
public:
    Runner(gateway::Gateway& gw, config::PipelineConfig cfg)
        : gw_(gw), cfg_(std::move(cfg)) {
        cfg_.validate();
        digest_ = cfg_.digest();
    }

    const config::PipelineConfig& config() const { return cfg_; }

    std::vector<RecordReport> run(const std::vector<evalqa::QueryRecord>& records,
                                  Method method) {
        std::vector<RecordReport> out;
        out.reserve(records.size());
        for (const evalqa::QueryRecord& r : records) out.push_back(run_record(r, method));
        return out;
    }

    RecordReport run_record(const evalqa::QueryRecord& record, Method method) {
        RecordReport report;
        report.id = record.id;
        report.method = method_name(method);
        report.config_digest = digest_;
        report.seed = cfg_.seed;
        switch (method) {
            case Method::Cfd: run_cfd(record, report); break;
            case Method::CotSc: run_cot_sc(record, report); break;
            case Method::Cot: run_cot(record, report); break;
            case Method::Icl: run_icl(record, report); break;
        }
        return report;
    }

private:
    std::vector<cot::CotSample> initial_chains(const evalqa::QueryRecord& record,
                                               std::size_t count) {
        return cot::sample_cots(gw_, "cot",
                                {{"question", record.question},
                                 {"knowledge", record.context}},
                                record.id + "::init", count, cfg_.temperature_cot);
    }

    void run_cot_sc(const evalqa::QueryRecord& record, RecordReport& report) {
        auto chains = initial_chains(record, cfg_.initial_samples);
        std::vector<effect::ExtractedAnswer> answers;
        for (const auto& c : chains) answers.push_back(effect::extract_answer(c.text));
        report.majority_answer = effect::majority_vote(answers);
        report.prediction = report.majority_answer;
    }

    void run_cot(const evalqa::QueryRecord& record, RecordReport& report) {
        auto chains = initial_chains(record, 1);
        report.prediction = effect::extract_answer(chains.front().text).answer;
    }

    void run_icl(const evalqa::QueryRecord& record, RecordReport& report) {
        gateway::ChatRequest req;
        req.template_id = "icl";
        req.variables = {{"question", record.question}, {"knowledge", record.context}};
        req.key = record.id + "::icl";
        req.repetition = 0;
        req.temperature = cfg_.temperature_extract;
        std::string reply = gw_.chat(req).text;
        auto extracted = effect::extract_answer(reply);
        // Direct-answer prompts often reply with the bare answer and no
        // marker; the whole trimmed reply is the honest fallback.
        report.prediction = extracted.found ? extracted.answer : trim(reply);
    }

    void run_cfd(const evalqa::QueryRecord& record, RecordReport& report) {
        // 1. Factual chains, embedded and clustered.
        auto chains = initial_chains(record, cfg_.initial_samples);
        std::vector<std::string> texts;
        for (const auto& c : chains) texts.push_back(c.text);
        std::vector<cot::Vec> vecs = cot::embed(gw_, texts);
        std::uint64_t kmeans_seed =
            fnv1a64("|" + record.id, fnv1a64(std::to_string(cfg_.seed)));
        cot::ClusterSet clusters = cot::kmeans(vecs, cfg_.cluster_count, kmeans_seed);

        std::vector<effect::ClusterAnswer> answers;
        std::vector<effect::ExtractedAnswer> chain_answers;
        for (const auto& t : texts) chain_answers.push_back(effect::extract_answer(t));
        for (std::size_t c = 0; c < clusters.cluster_count(); ++c) {
            std::size_t medoid = clusters.medoid_indices[c];
            effect::ClusterAnswer a;
            a.answer = chain_answers[medoid].answer;
            a.found = chain_answers[medoid].found;
            a.member_count = clusters.members(c).size();
            answers.push_back(std::move(a));
        }
        report.majority_answer = effect::majority_vote(chain_answers);

        // 2. Weighted entities and counterfactual knowledge variants.
        knowledge::ExtractOptions eopt;
        eopt.key = record.id;
        eopt.temperature = cfg_.temperature_extract;
        eopt.allow_fewer = cfg_.allow_fewer_entities;
        auto extraction = knowledge::extract_entities(gw_, record.question, record.context,
                                                      cfg_.entity_count, eopt);
        append(report.warnings, extraction.warnings);

        knowledge::CounterfactualOptions copt;
        copt.key_prefix = record.id;
        copt.temperature = cfg_.temperature_extract;
        auto counterfactuals =
            knowledge::counterfactual_entities(gw_, extraction.entities, record.context, copt);
        append(report.warnings, counterfactuals.warnings);

        knowledge::CounterfactualSet variants =
            knowledge::enumerate_variants(record.context, counterfactuals.entities);

        // 3. P chains per variant, with their embeddings and answers.
        std::vector<std::vector<cot::Vec>> variant_vecs;
        std::vector<std::vector<effect::ExtractedAnswer>> variant_answers;
        for (std::size_t t = 0; t < variants.variants.size(); ++t) {
            auto vc = cot::sample_cots(gw_, "cot",
                                       {{"question", record.question},
                                        {"knowledge", variants.variants[t].text}},
                                       record.id + "::cf" + std::to_string(t),
                                       cfg_.variant_samples, cfg_.temperature_cot);
            std::vector<std::string> vt;
            for (const auto& c : vc) vt.push_back(c.text);
            variant_vecs.push_back(cot::embed(gw_, vt));
            std::vector<effect::ExtractedAnswer> va;
            for (const auto& text : vt) va.push_back(effect::extract_answer(text));
            variant_answers.push_back(std::move(va));
        }

        // 4. Consistency gate and sensitivity among retained chains.
        std::vector<cot::Vec> medoid_vecs;
        for (std::size_t c = 0; c < clusters.cluster_count(); ++c)
            medoid_vecs.push_back(vecs[clusters.medoid_indices[c]]);
        auto consistency =
            cot::consistency_table(medoid_vecs, variant_vecs, cfg_.similarity_threshold);

        std::vector<std::vector<effect::SensitivityRecord>> sensitivity(
            clusters.cluster_count());
        for (std::size_t n = 0; n < clusters.cluster_count(); ++n) {
            for (std::size_t t = 0; t < variants.variants.size(); ++t) {
                auto rec = effect::sensitivity_prob(answers[n].answer, variant_answers[t],
                                                    consistency[n][t].indicators);
                rec.cluster = n;
                rec.variant = t;
                if (rec.gate_empty) ++report.gate_empty_count;
                sensitivity[n].push_back(std::move(rec));
            }
        }

        // 5. Aggregate and select.
        effect::CausalScoreTable table =
            effect::aggregate(answers, consistency, sensitivity, variants.probabilities);
        effect::Selection sel = effect::select_answer(table);
        if (sel.found) {
            report.prediction = sel.answer;
            report.score = sel.score;
        } else {
            report.prediction = report.majority_answer;
            report.warnings.push_back(
                "no cluster produced an extractable answer; fell back to majority vote");
        }

        report.clusters = answers;
        report.ledger = std::move(table.ledger);
        for (const auto& [answer, score] : table.scores) {
            RankedAnswer r;
            r.answer = answer;
            r.score = score;
            if (auto it = table.membership.find(answer); it != table.membership.end())
                r.membership = it->second;
            report.ranked.push_back(std::move(r));
        }
        std::stable_sort(report.ranked.begin(), report.ranked.end(),
                         [](const RankedAnswer& a, const RankedAnswer& b) {
                             if (a.score != b.score) return a.score > b.score;
                             if (a.membership != b.membership)
                                 return a.membership > b.membership;
                             return a.answer < b.answer;
                         });

        report.alignment_loss = alignment_diagnostic(vecs, clusters);
    }

    // Mean contrastive loss with each multi-member cluster's medoid as the
    // anchor, its lowest-index other member as the positive, and the other
    // clusters' medoids as negatives. Purely diagnostic: well-separated
    // clusterings score low.
    std::optional<double> alignment_diagnostic(const std::vector<cot::Vec>& vecs,
                                               const cot::ClusterSet& clusters) const {
        double total = 0.0;
        std::size_t counted = 0;
        for (std::size_t c = 0; c < clusters.cluster_count(); ++c) {
            auto members = clusters.members(c);
            if (members.size() < 2) continue;
            std::size_t medoid = clusters.medoid_indices[c];
            std::size_t positive = members[0] == medoid ? members[1] : members[0];
            std::vector<cot::Vec> negatives;
            for (std::size_t other = 0; other < clusters.cluster_count(); ++other)
                if (other != c) negatives.push_back(vecs[clusters.medoid_indices[other]]);
            total += cot::infonce_loss(vecs[medoid], vecs[positive], negatives,
                                       cfg_.contrastive_tau);
            ++counted;
        }
        if (counted == 0) return std::nullopt;
        return total / static_cast<double>(counted);
    }

    static void append(std::vector<std::string>& into, const std::vector<std::string>& from) {
        into.insert(into.end(), from.begin(), from.end());
    }

    gateway::Gateway& gw_;
    config::PipelineConfig cfg_;
    std::string digest_;
};

}  // namespace cfd::pipeline

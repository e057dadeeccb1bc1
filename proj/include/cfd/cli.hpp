#pragma once

// Command-line surface. Five subcommands:
//   identify  criterion checks and the derivation audit on a graph spec
//   oracle    estimator-vs-truth deviation tables on discrete models
//   run       answer-selection pipeline over a dataset (fixture or HTTP)
//   eval      EM/F1 scoring of a predictions file against a dataset
//   perturb   seeded context corruption (inject / shuffle)
//
// Exit codes: 0 success (criterion satisfied, run clean); 1 criterion
// violated or some records failed; 2 usage, parse, or configuration errors.
//
// run_cli is the in-process entry point (tests call it with captured
// streams); dispatch adapts main's argv.

#include <CLI11.hpp>

#include <algorithm>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <map>
#include <memory>
#include <set>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "cfd/common.hpp"
#include "cfd/config.hpp"
#include "cfd/criteria.hpp"
#include "cfd/dag.hpp"
#include "cfd/evalqa.hpp"
#include "cfd/gateway.hpp"
#include "cfd/http_backend.hpp"
#include "cfd/pipeline.hpp"
#include "cfd/scm.hpp"
#include "cfd/specfiles.hpp"

namespace cfd::cli {

using nlohmann::json;

namespace detail {

inline std::string brace_join(const graph::Labels& labels) {
    std::string out = "{";
    for (std::size_t i = 0; i < labels.size(); ++i) {
        if (i > 0) out += ", ";
        out += labels[i];
    }
    return out + "}";
}

inline std::string sci(double v) {
    std::ostringstream os;
    os << std::scientific << std::setprecision(3) << v;
    return os.str();
}

inline std::ofstream open_out(const std::filesystem::path& path) {
    std::ofstream os(path);
    if (!os) throw std::runtime_error("cannot write " + path.string());
    return os;
}

}  // namespace detail

// ---------------------------------------------------------------------------
// identify
// ---------------------------------------------------------------------------

struct IdentifyArgs {
    std::string graph_path;
    std::string criterion = "cfd";
    std::string x, y;
    graph::Labels z, w;  // z doubles as the adjustment set for --criterion backdoor
};

inline void render_criterion(const graph::CriterionReport& report, std::ostream& out) {
    out << "criterion: " << report.criterion << "\n";
    for (const graph::ConditionVerdict& c : report.conditions) {
        out << (c.holds ? "  [ ok ] " : "  [FAIL] ") << c.id << ": " << c.description
            << "\n";
        for (const graph::GraphPath& p : c.witnesses)
            out << "         open path: " << p.to_string() << "\n";
    }
    out << "result: " << (report.satisfied ? "satisfied" : "VIOLATED") << "\n";
}

inline int cmd_identify(const IdentifyArgs& a, std::ostream& out, std::ostream&) {
    graph::CausalDag dag = specfiles::load_graph_spec(a.graph_path);

    if (a.criterion == "audit") {
        graph::DerivationAudit audit = graph::audit_cfd_derivation(dag);
        out << "derivation audit: P(A | do(Q)) rewrite chain\n";
        for (std::size_t i = 0; i < audit.steps.size(); ++i) {
            const graph::DerivationStep& s = audit.steps[i];
            out << "  step " << (i + 1) << " [rule " << s.rule << "] "
                << (s.holds ? "[ ok ] " : "[FAIL] ") << s.claim << "\n"
                << "         requires " << s.condition << "\n";
        }
        out << "result: " << (audit.all_hold ? "all steps hold" : "DERIVATION FAILS")
            << "\n";
        return audit.all_hold ? 0 : 1;
    }

    if (a.x.empty() || a.y.empty())
        throw std::invalid_argument("--x and --y are required for criterion checks");

    graph::CriterionReport report = [&] {
        if (a.criterion == "backdoor") return graph::check_backdoor(dag, a.z, a.x, a.y);
        if (a.criterion == "frontdoor")
            return graph::check_standard_frontdoor(dag, a.z, a.x, a.y);
        return graph::check_conditional_frontdoor(dag, a.z, a.w, a.x, a.y);
    }();
    render_criterion(report, out);
    return report.satisfied ? 0 : 1;
}

// ---------------------------------------------------------------------------
// oracle
// ---------------------------------------------------------------------------

struct OracleArgs {
    std::string scm_path;
    std::size_t random_count = 0;
    std::uint64_t seed = 0;
};

namespace detail {

inline void oracle_row(std::ostream& out, const std::string& label,
                       const std::string& value) {
    out << "  " << std::left << std::setw(42) << label << value << "\n";
}

// Deviation of a gated estimator against truth, or the refusal explanation.
template <typename Estimate>
inline std::string gated_deviation(const scm::EffectTable& truth, Estimate estimate) {
    try {
        return "deviation " + sci(scm::max_abs_deviation(estimate(), truth));
    } catch (const scm::CriterionError& e) {
        for (const graph::ConditionVerdict& c : e.report().conditions)
            if (!c.holds && !c.witnesses.empty())
                return std::string("criterion violated (open path: ") +
                       c.witnesses.front().to_string() + ")";
        return "criterion violated";
    }
}

inline void oracle_table(std::ostream& out, const scm::DiscreteScm& model,
                         const specfiles::ScmRoles& roles) {
    scm::EffectTable truth =
        scm::interventional_truth(model, roles.treatment, roles.outcome);
    out << "effect: P(" << roles.outcome << " | do(" << roles.treatment
        << ")), truth via truncated factorization\n";

    if (!roles.adjust.empty())
        oracle_row(out, "back-door " + brace_join(roles.adjust),
                   gated_deviation(truth, [&] {
                       return scm::backdoor_estimate(model, roles.treatment,
                                                     roles.outcome, roles.adjust);
                   }));
    if (!roles.mediators.empty()) {
        oracle_row(out, "standard front-door " + brace_join(roles.mediators),
                   gated_deviation(truth, [&] {
                       return scm::sfd_estimate(model, roles.treatment, roles.outcome,
                                                roles.mediators);
                   }));
        if (!roles.conditioning.empty()) {
            oracle_row(out,
                       "conditional front-door " + brace_join(roles.mediators) + " | " +
                           brace_join(roles.conditioning),
                       gated_deviation(truth, [&] {
                           return scm::cfd_estimate(model, roles.treatment, roles.outcome,
                                                    roles.mediators, roles.conditioning);
                       }));
            // Ungated diagnostic: what the front-door formula returns when the
            // covariates are ignored. Nonzero deviation here is the bias the
            // conditional form removes.
            scm::EffectTable ungated = scm::sfd_formula(model, roles.treatment,
                                                        roles.outcome, roles.mediators);
            oracle_row(out,
                       "front-door ignoring " + brace_join(roles.conditioning),
                       "deviation " + sci(scm::max_abs_deviation(ungated, truth)) +
                           "  (bias diagnostic, no criterion gate)");
        }
    }
}

}  // namespace detail

inline int cmd_oracle(const OracleArgs& a, std::ostream& out, std::ostream&) {
    if (a.scm_path.empty() && a.random_count == 0)
        throw std::invalid_argument("provide --scm <path> or --random <count>");

    if (!a.scm_path.empty()) {
        specfiles::ScmSpec loaded = specfiles::load_scm_spec(a.scm_path);
        if (loaded.roles.treatment.empty() || loaded.roles.outcome.empty())
            throw specfiles::SpecError(
                "mechanism spec needs roles.treatment and roles.outcome for the oracle");
        out << "model: " << a.scm_path << "\n";
        detail::oracle_table(out, loaded.scm, loaded.roles);
        return 0;
    }

    // Random mode: knowledge-graph-shaped binary models, one per seed.
    graph::CausalDag dag = graph::qa_knowledge_dag();
    double worst_cfd = 0.0, worst_bd = 0.0, worst_ungated = 0.0;
    std::size_t biased = 0;
    for (std::size_t i = 0; i < a.random_count; ++i) {
        scm::DiscreteScm model = scm::random_scm(dag, 2, a.seed + i);
        scm::EffectTable truth = scm::interventional_truth(model, "Q", "A");
        worst_cfd = std::max(
            worst_cfd, scm::max_abs_deviation(
                           scm::cfd_estimate(model, "Q", "A", {"C"}, {"E"}), truth));
        // U alone leaves Q <- E -> C -> A open; the oracle adjusts for both.
        worst_bd = std::max(
            worst_bd, scm::max_abs_deviation(
                          scm::backdoor_estimate(model, "Q", "A", {"E", "U"}), truth));
        double ungated = scm::max_abs_deviation(
            scm::sfd_formula(model, "Q", "A", {"C"}), truth);
        worst_ungated = std::max(worst_ungated, ungated);
        if (ungated > 1e-3) ++biased;
    }
    out << "random knowledge-graph models: " << a.random_count << " instances, card 2, seeds "
        << a.seed << ".." << (a.seed + a.random_count - 1) << "\n";
    detail::oracle_row(out, "conditional front-door {C} | {E}",
                       "max deviation " + detail::sci(worst_cfd));
    detail::oracle_row(out, "back-door {E, U}", "max deviation " + detail::sci(worst_bd));
    detail::oracle_row(out, "front-door ignoring {E}",
                       "max deviation " + detail::sci(worst_ungated) + "  (" +
                           std::to_string(biased) + "/" + std::to_string(a.random_count) +
                           " instances above 1e-3)");
    return 0;
}

// ---------------------------------------------------------------------------
// perturb (shared by the perturb and run subcommands)
// ---------------------------------------------------------------------------

struct PerturbArgs {
    std::string dataset;
    std::string kind;
    std::uint64_t seed = 0;
    std::string out_path;
};

// Seeded per record: the stream is derived from (kind, record id, seed), so
// corruption is stable under dataset reordering or subsetting.
inline std::vector<evalqa::QueryRecord> perturb_records(
    const std::vector<evalqa::QueryRecord>& records, const std::string& kind,
    std::uint64_t seed) {
    if (kind != "inject" && kind != "shuffle")
        throw std::invalid_argument("unknown perturbation kind: " + kind);

    std::vector<std::vector<std::string>> sentences;
    sentences.reserve(records.size());
    for (const evalqa::QueryRecord& r : records)
        sentences.push_back(evalqa::split_sentences(r.context));

    std::vector<evalqa::QueryRecord> out = records;
    for (std::size_t i = 0; i < records.size(); ++i) {
        std::uint64_t record_seed =
            fnv1a64(kind + "|" + records[i].id, fnv1a64(std::to_string(seed)));
        if (kind == "shuffle") {
            out[i].context =
                evalqa::join_sentences(evalqa::perturb_shuffle(sentences[i], record_seed));
            continue;
        }
        // Injection pool: sentences from the other records, deduplicated,
        // minus anything already present in this record's context.
        std::set<std::string> own(sentences[i].begin(), sentences[i].end());
        std::set<std::string> seen;
        std::vector<std::string> pool;
        for (std::size_t j = 0; j < records.size(); ++j) {
            if (j == i) continue;
            for (const std::string& s : sentences[j])
                if (!own.count(s) && seen.insert(s).second) pool.push_back(s);
        }
        out[i].context =
            evalqa::join_sentences(evalqa::perturb_inject(sentences[i], pool, record_seed));
    }
    return out;
}

inline int cmd_perturb(const PerturbArgs& a, std::ostream& out, std::ostream&) {
    std::vector<evalqa::QueryRecord> records = evalqa::load_records_file(a.dataset);
    std::vector<evalqa::QueryRecord> perturbed = perturb_records(records, a.kind, a.seed);
    std::ofstream os = detail::open_out(a.out_path);
    evalqa::write_records(os, perturbed);
    out << "perturbed " << perturbed.size() << " records (" << a.kind << ", seed "
        << a.seed << ") -> " << a.out_path << "\n";
    return 0;
}

// ---------------------------------------------------------------------------
// run
// ---------------------------------------------------------------------------

struct RunArgs {
    std::string dataset;
    std::string config_path;
    std::string method = "cfd";
    std::string fixture;
    std::string perturb = "none";
    std::string out_dir = "out";
    bool fail_fast = false;
};

namespace detail {

struct Backends {
    std::shared_ptr<gateway::ChatBackend> chat;
    std::shared_ptr<gateway::EmbeddingBackend> embed;
};

inline Backends make_backends(const config::PipelineConfig& cfg,
                              const std::string& fixture_path) {
    if (!fixture_path.empty()) {
        gateway::ScriptedFixture fixture = gateway::ScriptedFixture::from_file(fixture_path);
        return {std::make_shared<gateway::ScriptedChatBackend>(fixture),
                std::make_shared<gateway::ScriptedEmbeddingBackend>(std::move(fixture))};
    }
    if (cfg.chat_base_url.empty() || cfg.chat_model.empty())
        throw std::invalid_argument(
            "no --fixture given and the config names no chat endpoint "
            "(chat_base_url / chat_model, or CFDKIT_CHAT_* overrides)");
    Backends b;
    b.chat = std::make_shared<gateway::HttpChatBackend>(
        gateway::HttpEndpoint{cfg.chat_base_url, cfg.chat_model, cfg.api_key_env});
    if (cfg.embedding_base_url.empty())
        b.embed = std::make_shared<gateway::HashedBowBackend>();
    else
        b.embed = std::make_shared<gateway::HttpEmbeddingBackend>(gateway::HttpEndpoint{
            cfg.embedding_base_url, cfg.embedding_model, cfg.api_key_env});
    return b;
}

}  // namespace detail

inline int cmd_run(const RunArgs& a, std::ostream& out, std::ostream& err) {
    config::PipelineConfig cfg = config::PipelineConfig::from_file(a.config_path);
    cfg.apply_env_overrides();

    // Relative paths inside a config resolve against the config file itself,
    // so committed configs work from any working directory. The digest is
    // taken over the config as written, not the resolved paths.
    std::filesystem::path anchor = std::filesystem::path(a.config_path).parent_path();
    auto anchored = [&](const std::filesystem::path& p) {
        return p.is_relative() ? anchor / p : p;
    };

    std::vector<evalqa::QueryRecord> records = evalqa::load_records_file(a.dataset);
    if (records.empty()) throw std::runtime_error("dataset has no records: " + a.dataset);
    if (a.perturb != "none") records = perturb_records(records, a.perturb, cfg.seed);

    gateway::GatewayOptions opt;
    opt.templates = gateway::TemplateStore::from_dir(anchored(cfg.templates_path()));
    opt.parallelism = cfg.parallelism;
    opt.retry.budget = cfg.retry_budget;
    opt.retry.initial_delay = std::chrono::milliseconds(cfg.backoff_initial_ms);
    opt.retry.factor = cfg.backoff_factor;
    opt.retry.jitter_seed = cfg.seed;
    if (!cfg.cache_dir.empty()) opt.embed_cache_dir = anchored(cfg.cache_dir);

    detail::Backends backends = detail::make_backends(cfg, a.fixture);
    gateway::Gateway gw(backends.chat, backends.embed, std::move(opt));
    pipeline::Runner runner(gw, cfg);
    pipeline::Method method = pipeline::parse_method(a.method);

    std::vector<pipeline::RecordReport> reports;
    std::vector<std::pair<std::string, std::string>> failures;
    for (const evalqa::QueryRecord& r : records) {
        try {
            reports.push_back(runner.run_record(r, method));
        } catch (const std::exception& e) {
            failures.emplace_back(r.id, e.what());
            err << "record " << r.id << " failed: " << e.what() << "\n";
            if (a.fail_fast) {
                err << "fail-fast: stopping with " << reports.size() << " of "
                    << records.size() << " records done\n";
                break;
            }
        }
    }

    std::filesystem::path dir(a.out_dir);
    std::filesystem::create_directories(dir);
    {
        std::ofstream os = detail::open_out(dir / "predictions.jsonl");
        for (const pipeline::RecordReport& r : reports)
            os << json{{"id", r.id},
                       {"prediction", r.prediction},
                       {"method", r.method},
                       {"config_digest", r.config_digest},
                       {"seed", r.seed}}
                      .dump()
               << "\n";
    }
    {
        std::ofstream os = detail::open_out(dir / "reports.jsonl");
        for (const pipeline::RecordReport& r : reports) os << r.to_json().dump() << "\n";
    }
    {
        std::ofstream os = detail::open_out(dir / "trace.jsonl");
        gw.write_trace(os);
    }

    std::map<std::string, std::string> predictions;
    for (const pipeline::RecordReport& r : reports) predictions[r.id] = r.prediction;
    evalqa::MetricsReport metrics = evalqa::evaluate(records, predictions);

    const gateway::GatewayUsage usage = gw.usage();
    out << "method " << a.method << ": " << reports.size() << "/" << records.size()
        << " records";
    if (a.perturb != "none") out << " (perturb " << a.perturb << ")";
    out << "\n";
    out << "  exact match " << metrics.em_mean << ", f1 " << metrics.f1_mean << "\n";
    out << "  chat " << usage.chat_requests << " requests / " << usage.chat_attempts
        << " attempts; embeddings " << usage.embed_texts << " texts, "
        << usage.embed_cache_hits << " cache hits\n";
    out << "  wrote " << (dir / "predictions.jsonl").string() << ", reports.jsonl, "
        << "trace.jsonl\n";
    if (!failures.empty())
        out << "  " << failures.size() << " records failed (see stderr)\n";
    return failures.empty() ? 0 : 1;
}

// ---------------------------------------------------------------------------
// eval
// ---------------------------------------------------------------------------

struct EvalArgs {
    std::string predictions;
    std::string dataset;
    bool json_out = false;
};

inline int cmd_eval(const EvalArgs& a, std::ostream& out, std::ostream&) {
    std::vector<evalqa::QueryRecord> records = evalqa::load_records_file(a.dataset);

    std::ifstream in = evalqa::detail::open_or_throw(a.predictions);
    std::map<std::string, std::string> predictions;
    for (const json& j : evalqa::detail::parse_jsonl(in, "predictions")) {
        std::string id = j.at("id").get<std::string>();
        if (predictions.count(id))
            throw std::invalid_argument("duplicate prediction id: " + id);
        predictions[id] = j.at("prediction").get<std::string>();
    }

    evalqa::MetricsReport metrics = evalqa::evaluate(records, predictions);
    if (metrics.count == 0)
        throw std::runtime_error("no prediction ids match the dataset");

    out << "  " << std::left << std::setw(24) << "id" << std::setw(5) << "em"
        << "f1\n";
    for (const evalqa::QueryRecord& r : records) {
        auto em = metrics.per_item_em.find(r.id);
        if (em == metrics.per_item_em.end()) continue;
        std::ostringstream f1;
        f1 << std::fixed << std::setprecision(4) << metrics.per_item_f1.at(r.id);
        out << "  " << std::left << std::setw(24) << r.id << std::setw(5)
            << (em->second ? 1 : 0) << f1.str() << "\n";
    }
    out << "scored " << metrics.count << " records";
    if (metrics.missing_predictions > 0)
        out << " (" << metrics.missing_predictions << " without predictions)";
    std::size_t ignored = predictions.size() - metrics.count;
    if (ignored > 0) out << " (" << ignored << " predictions outside the dataset)";
    out << "\n";
    out << "exact match " << metrics.em_mean << ", f1 " << metrics.f1_mean << "\n";
    if (a.json_out) out << metrics.to_json().dump() << "\n";
    return 0;
}

// ---------------------------------------------------------------------------
// dispatch
// ---------------------------------------------------------------------------

inline int run_cli(std::vector<std::string> args, std::ostream& out = std::cout,
                   std::ostream& err = std::cerr) {
    CLI::App app{"conditional front-door answer selection toolkit"};
    app.require_subcommand(1);

    IdentifyArgs ia;
    CLI::App* identify = app.add_subcommand(
        "identify", "check an identification criterion on a graph spec");
    identify->add_option("--graph", ia.graph_path, "graph spec file (JSON)")->required();
    identify
        ->add_option("--criterion", ia.criterion,
                     "backdoor | frontdoor | cfd | audit (default cfd)")
        ->check(CLI::IsMember({"backdoor", "frontdoor", "cfd", "audit"}));
    identify->add_option("--x", ia.x, "treatment node");
    identify->add_option("--y", ia.y, "outcome node");
    identify->add_option("--z", ia.z,
                         "mediators (front-door) or adjustment set (backdoor)");
    identify->add_option("--w", ia.w, "conditioning set (cfd only)");

    OracleArgs oa;
    CLI::App* oracle = app.add_subcommand(
        "oracle", "compare adjustment estimators against interventional truth");
    CLI::Option* oscm =
        oracle->add_option("--scm", oa.scm_path, "mechanism spec file (JSON)");
    CLI::Option* orandom = oracle->add_option(
        "--random", oa.random_count, "number of random knowledge-graph models");
    oracle->add_option("--seed", oa.seed, "first seed for --random (default 0)");
    oscm->excludes(orandom);

    RunArgs ra;
    CLI::App* run =
        app.add_subcommand("run", "run an answer-selection method over a dataset");
    run->add_option("--dataset", ra.dataset, "normalized dataset (JSONL)")->required();
    run->add_option("--config", ra.config_path, "pipeline config (JSON)")->required();
    run->add_option("--method", ra.method, "cfd | cot-sc | cot | icl (default cfd)")
        ->check(CLI::IsMember({"cfd", "cot-sc", "cot", "icl"}));
    run->add_option("--fixture", ra.fixture,
                    "scripted backend fixture (JSON); omit to use HTTP endpoints");
    run->add_option("--perturb", ra.perturb,
                    "none | inject | shuffle (default none; seeded by config seed)")
        ->check(CLI::IsMember({"none", "inject", "shuffle"}));
    run->add_option("--out", ra.out_dir,
                    "output directory for predictions/reports/trace (default out)");
    run->add_flag("--fail-fast", ra.fail_fast, "stop at the first failed record");

    EvalArgs ea;
    CLI::App* eval =
        app.add_subcommand("eval", "score a predictions file against a dataset");
    eval->add_option("--predictions", ea.predictions, "predictions (JSONL)")->required();
    eval->add_option("--dataset", ea.dataset, "normalized dataset (JSONL)")->required();
    eval->add_flag("--json", ea.json_out, "also print the metrics report as JSON");

    PerturbArgs pa;
    CLI::App* perturb =
        app.add_subcommand("perturb", "write a corrupted copy of a dataset");
    perturb->add_option("--dataset", pa.dataset, "normalized dataset (JSONL)")->required();
    perturb->add_option("--kind", pa.kind, "inject | shuffle")
        ->required()
        ->check(CLI::IsMember({"inject", "shuffle"}));
    perturb->add_option("--seed", pa.seed, "perturbation seed (default 0)");
    perturb->add_option("--out", pa.out_path, "output dataset path (JSONL)")->required();

    try {
        std::reverse(args.begin(), args.end());
        app.parse(std::move(args));
    } catch (const CLI::ParseError& e) {
        int code = app.exit(e, out, err);
        return code == 0 ? 0 : 2;
    }

    try {
        if (identify->parsed()) return cmd_identify(ia, out, err);
        if (oracle->parsed()) return cmd_oracle(oa, out, err);
        if (run->parsed()) return cmd_run(ra, out, err);
        if (eval->parsed()) return cmd_eval(ea, out, err);
        return cmd_perturb(pa, out, err);
    } catch (const std::exception& e) {
        err << "error: " << e.what() << "\n";
        return 2;
    }
}

inline int dispatch(int argc, char** argv) {
    return run_cli(std::vector<std::string>(argv + 1, argv + argc));
}

}  // namespace cfd::cli

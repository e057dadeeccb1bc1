#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <map>
#include <string>
#include <vector>

#include "cfd/scm.hpp"

using namespace cfd;
using graph::CausalDag;
using scm::DiscreteScm;
using scm::Distribution;
using scm::EffectTable;

namespace {

// A two-node graph with no confounding: Q -> A.
DiscreteScm plain_qa() {
    CausalDag dag({"A", "Q"}, {{"Q", "A"}});
    return DiscreteScm(dag, {{"A", 2}, {"Q", 2}},
                       {{"Q", {{0.4, 0.6}}}, {"A", {{0.8, 0.2}, {0.3, 0.7}}}});
}

}  // namespace

TEST_CASE("scm construction validates cardinalities and tables") {
    CausalDag dag({"A", "Q"}, {{"Q", "A"}});
    REQUIRE_THROWS_AS(DiscreteScm(dag, {{"A", 1}, {"Q", 2}},
                                  {{"Q", {{0.4, 0.6}}}, {"A", {{1.0}, {1.0}}}}),
                      std::invalid_argument);
    // Wrong row count for A (needs one row per Q state).
    REQUIRE_THROWS_AS(DiscreteScm(dag, {{"A", 2}, {"Q", 2}},
                                  {{"Q", {{0.4, 0.6}}}, {"A", {{0.5, 0.5}}}}),
                      std::invalid_argument);
    // Row does not sum to one.
    REQUIRE_THROWS_AS(DiscreteScm(dag, {{"A", 2}, {"Q", 2}},
                                  {{"Q", {{0.4, 0.7}}}, {"A", {{0.5, 0.5}, {0.5, 0.5}}}}),
                      std::invalid_argument);
    REQUIRE_THROWS_AS(DiscreteScm(dag, {{"A", 2}, {"Q", 2}}, {{"Q", {{0.4, 0.6}}}}),
                      std::invalid_argument);
}

TEST_CASE("joint distribution multiplies the mechanisms") {
    SECTION("single node") {
        CausalDag one({"X"}, {});
        DiscreteScm scm(one, {{"X", 3}}, {{"X", {{0.2, 0.3, 0.5}}}});
        Distribution j = joint(scm);
        REQUIRE(j.probs == std::vector<double>{0.2, 0.3, 0.5});
    }

    SECTION("independent coins") {
        CausalDag two({"X", "Y"}, {});
        DiscreteScm scm(two, {{"X", 2}, {"Y", 2}},
                        {{"X", {{0.25, 0.75}}}, {"Y", {{0.5, 0.5}}}});
        Distribution j = joint(scm);
        REQUIRE(j.prob_of({{"X", 1}, {"Y", 0}}) == Catch::Approx(0.375).margin(1e-15));
        REQUIRE(j.total() == Catch::Approx(1.0).margin(1e-12));
    }

    SECTION("matches an explicit product over assignments") {
        DiscreteScm scm = scm::random_scm(graph::qa_knowledge_dag(), 2, 99);
        Distribution j = joint(scm);
        const CausalDag& dag = scm.dag();
        // Recompute each cell from the CPTs by hand.
        for (int a = 0; a < 2; ++a)
            for (int c = 0; c < 2; ++c)
                for (int e = 0; e < 2; ++e)
                    for (int q = 0; q < 2; ++q)
                        for (int u = 0; u < 2; ++u) {
                            std::vector<int> full{a, c, e, q, u};
                            double expect = 1.0;
                            for (std::size_t i = 0; i < dag.size(); ++i)
                                expect *= scm.cpt_prob(static_cast<int>(i), full);
                            REQUIRE(j.at(full) == Catch::Approx(expect).margin(1e-15));
                        }
        REQUIRE(j.total() == Catch::Approx(1.0).margin(1e-12));
    }
}

TEST_CASE("marginals preserve order and mass") {
    DiscreteScm scm = scm::random_scm(graph::qa_chain_dag(), 3, 5);
    Distribution j = joint(scm);
    Distribution m = j.marginal({"Q", "A"});
    REQUIRE(m.vars == graph::Labels{"A", "Q"});  // distribution keeps id order
    REQUIRE(m.total() == Catch::Approx(1.0).margin(1e-12));
    REQUIRE_THROWS_AS(j.marginal({"nope"}), std::invalid_argument);
}

TEST_CASE("intervention replaces a mechanism with a point mass") {
    DiscreteScm scm = plain_qa();
    DiscreteScm cut = scm::intervene(scm, "Q", 1);
    Distribution j = joint(cut);
    REQUIRE(j.prob_of({{"Q", 1}}) == Catch::Approx(1.0).margin(1e-15));
    REQUIRE(j.prob_of({{"Q", 0}}) == Catch::Approx(0.0).margin(1e-15));
    REQUIRE(j.prob_of({{"A", 1}}) == Catch::Approx(0.7).margin(1e-15));
    REQUIRE_THROWS_AS(scm::intervene(scm, "Q", 2), std::out_of_range);
}

TEST_CASE("intervening on a root equals conditioning on it") {
    for (std::uint64_t seed : {11ull, 12ull, 13ull}) {
        DiscreteScm scm = scm::random_scm(graph::qa_knowledge_dag(), 2, seed);
        Distribution obs = joint(scm).marginal({"E", "A"});
        for (int e = 0; e < 2; ++e) {
            Distribution truth = joint(scm::intervene(scm, "E", e)).marginal({"A"});
            double pe = obs.prob_of({{"E", e}});
            for (int a = 0; a < 2; ++a) {
                double cond = obs.prob_of({{"A", a}, {"E", e}}) / pe;
                REQUIRE(std::abs(truth.probs[static_cast<std::size_t>(a)] - cond) < 1e-12);
            }
        }
    }
}

TEST_CASE("backdoor adjustment") {
    SECTION("adjusting for the latent confounder recovers truth") {
        for (std::uint64_t seed : {21ull, 22ull, 23ull, 24ull}) {
            DiscreteScm scm = scm::random_scm(graph::qa_direct_dag(), 2, seed);
            EffectTable est = scm::backdoor_estimate(scm, "Q", "A", {"U"});
            EffectTable truth = scm::interventional_truth(scm, "Q", "A");
            REQUIRE(scm::max_abs_deviation(est, truth) < 1e-12);
        }
    }

    SECTION("empty adjustment equals conditioning when nothing confounds") {
        DiscreteScm scm = plain_qa();
        EffectTable est = scm::backdoor_estimate(scm, "Q", "A", {});
        REQUIRE(est.p[0][0] == Catch::Approx(0.8).margin(1e-15));
        REQUIRE(est.p[1][1] == Catch::Approx(0.7).margin(1e-15));
        EffectTable truth = scm::interventional_truth(scm, "Q", "A");
        REQUIRE(scm::max_abs_deviation(est, truth) < 1e-12);
    }

    SECTION("criterion violations refuse to produce a number") {
        DiscreteScm scm = scm::random_scm(graph::qa_chain_dag(), 2, 31);
        REQUIRE_THROWS_AS(scm::backdoor_estimate(scm, "Q", "A", {"C"}), scm::CriterionError);
        try {
            scm::backdoor_estimate(scm, "Q", "A", {"C"});
        } catch (const scm::CriterionError& e) {
            REQUIRE_FALSE(e.report().satisfied);
            REQUIRE_FALSE(e.report().condition("no-descendant").holds);
        }
    }
}

TEST_CASE("zero-probability strata") {
    CausalDag dag({"A", "Q", "Z"}, {{"Z", "Q"}, {"Q", "A"}});

    SECTION("weight-zero strata are skipped silently") {
        DiscreteScm scm(dag, {{"A", 2}, {"Q", 2}, {"Z", 2}},
                        {{"Z", {{1.0, 0.0}}},
                         {"Q", {{0.5, 0.5}, {0.5, 0.5}}},
                         {"A", {{0.9, 0.1}, {0.2, 0.8}}}});
        EffectTable est = scm::backdoor_estimate(scm, "Q", "A", {"Z"});
        EffectTable truth = scm::interventional_truth(scm, "Q", "A");
        REQUIRE(scm::max_abs_deviation(est, truth) < 1e-12);
    }

    SECTION("positive weight over an undefined conditional is an error") {
        DiscreteScm scm(dag, {{"A", 2}, {"Q", 2}, {"Z", 2}},
                        {{"Z", {{0.5, 0.5}}},
                         {"Q", {{1.0, 0.0}, {0.5, 0.5}}},  // Q=1 impossible when Z=0
                         {"A", {{0.9, 0.1}, {0.2, 0.8}}}});
        REQUIRE_THROWS_AS(scm::backdoor_formula(scm, "Q", "A", {"Z"}),
                          scm::UndefinedConditionalError);
    }
}

TEST_CASE("standard front-door estimation") {
    SECTION("matches truth on the chain graph") {
        for (std::uint64_t seed = 41; seed < 61; ++seed) {
            DiscreteScm scm = scm::random_scm(graph::qa_chain_dag(), 2, seed);
            EffectTable est = scm::sfd_estimate(scm, "Q", "A", {"C"});
            EffectTable truth = scm::interventional_truth(scm, "Q", "A");
            REQUIRE(scm::max_abs_deviation(est, truth) < 1e-10);
        }
    }

    SECTION("nested and flat formulations agree") {
        for (std::uint64_t seed : {71ull, 72ull, 73ull}) {
            DiscreteScm scm = scm::random_scm(graph::qa_chain_dag(), 2, seed);
            Distribution obs = joint(scm).marginal(scm.observed_labels());
            EffectTable nested = scm::sfd_formula(scm, "Q", "A", {"C"});
            for (int t = 0; t < 2; ++t)
                for (int a = 0; a < 2; ++a) {
                    double flat = 0.0;  // sum over (z, q) jointly
                    for (int z = 0; z < 2; ++z)
                        for (int q = 0; q < 2; ++q) {
                            double p_zq = obs.prob_of({{"C", z}, {"Q", q}});
                            if (p_zq == 0.0) continue;
                            double p_a = obs.prob_of({{"A", a}, {"C", z}, {"Q", q}}) / p_zq;
                            double p_z_t = obs.prob_of({{"C", z}, {"Q", t}}) /
                                           obs.prob_of({{"Q", t}});
                            double p_q = obs.prob_of({{"Q", q}});
                            flat += p_a * p_z_t * p_q;
                        }
                    REQUIRE(std::abs(flat - nested.p[static_cast<std::size_t>(t)]
                                                    [static_cast<std::size_t>(a)]) < 1e-12);
                }
        }
    }

    SECTION("refuses when knowledge confounds the mediator") {
        DiscreteScm scm = scm::random_scm(graph::qa_knowledge_dag(), 2, 81);
        REQUIRE_THROWS_AS(scm::sfd_estimate(scm, "Q", "A", {"C"}), scm::CriterionError);
    }
}

TEST_CASE("conditional front-door estimation") {
    SECTION("matches truth on seeded knowledge-graph models") {
        for (std::uint64_t seed = 1; seed <= 25; ++seed) {
            DiscreteScm scm = scm::random_scm(graph::qa_knowledge_dag(), 2, seed);
            EffectTable est = scm::cfd_estimate(scm, "Q", "A", {"C"}, {"E"});
            EffectTable truth = scm::interventional_truth(scm, "Q", "A");
            REQUIRE(scm::max_abs_deviation(est, truth) < 1e-10);
        }
    }

    SECTION("rows are conditional distributions") {
        DiscreteScm scm = scm::random_scm(graph::qa_knowledge_dag(), 2, 5);
        EffectTable est = scm::cfd_estimate(scm, "Q", "A", {"C"}, {"E"});
        for (const auto& row : est.p) {
            double total = 0.0;
            for (double p : row) {
                REQUIRE(p >= 0.0);
                total += p;
            }
            REQUIRE(std::abs(total - 1.0) < 1e-10);
        }
    }

    SECTION("constant knowledge collapses the covariate sum") {
        // E exists in the graph but is degenerate; the conditional and
        // standard formulas then agree with each other and with truth.
        DiscreteScm base = scm::random_scm(graph::qa_knowledge_dag(), 2, 7);
        std::map<std::string, int> card;
        std::map<std::string, std::vector<std::vector<double>>> cpts;
        for (const std::string& l : base.dag().labels()) {
            card[l] = 2;
            cpts[l] = base.cpt_rows(l);
        }
        cpts["E"] = {{1.0, 0.0}};
        DiscreteScm scm(base.dag(), card, cpts);
        EffectTable cfd = scm::cfd_formula(scm, "Q", "A", {"C"}, {"E"});
        EffectTable sfd = scm::sfd_formula(scm, "Q", "A", {"C"});
        EffectTable truth = scm::interventional_truth(scm, "Q", "A");
        REQUIRE(scm::max_abs_deviation(cfd, sfd) < 1e-10);
        REQUIRE(scm::max_abs_deviation(cfd, truth) < 1e-10);
    }

    SECTION("latent covariates are rejected") {
        DiscreteScm scm = scm::random_scm(graph::qa_knowledge_dag(), 2, 9);
        REQUIRE_THROWS_AS(scm::cfd_estimate(scm, "Q", "A", {"C"}, {"U"}),
                          std::invalid_argument);
    }
}

TEST_CASE("ignoring the covariate leaves measurable bias") {
    // On knowledge-graph models the standard front-door arithmetic applied
    // anyway (covariate marginalized away) is generally wrong; the
    // conditional form is exact. Quantified per seed below; the pinned
    // fixture lives in the acceptance suite.
    int biased = 0;
    for (std::uint64_t seed = 1; seed <= 10; ++seed) {
        DiscreteScm scm = scm::random_scm(graph::qa_knowledge_dag(), 2, seed);
        EffectTable truth = scm::interventional_truth(scm, "Q", "A");
        EffectTable ignore_e = scm::sfd_formula(scm, "Q", "A", {"C"});
        EffectTable cfd = scm::cfd_formula(scm, "Q", "A", {"C"}, {"E"});
        REQUIRE(scm::max_abs_deviation(cfd, truth) < 1e-10);
        if (scm::max_abs_deviation(ignore_e, truth) > 1e-3) ++biased;
    }
    REQUIRE(biased >= 8);  // bias is the rule, not the exception
}

TEST_CASE("heuristic adjustment degrades gracefully") {
    // Adjusting on all observed non-descendants of the treatment either
    // passes the criterion and matches truth, or refuses: never a silent
    // wrong number.
    Rng rng(314);
    int matched = 0, refused = 0;
    for (int trial = 0; trial < 40; ++trial) {
        int n = 4 + static_cast<int>(uniform_index(rng, 2));
        std::vector<std::string> labels;
        for (int i = 0; i < n; ++i) labels.push_back("N" + std::to_string(i));
        std::vector<std::pair<std::string, std::string>> edges;
        for (int i = 0; i < n; ++i)
            for (int j = i + 1; j < n; ++j)
                if (uniform01(rng) < 0.5)
                    edges.emplace_back(labels[static_cast<std::size_t>(i)],
                                       labels[static_cast<std::size_t>(j)]);
        graph::Labels latent;
        if (uniform01(rng) < 0.5) latent.push_back(labels[0]);
        CausalDag dag(labels, edges, latent);
        DiscreteScm scm = scm::random_scm(dag, 2, 1000 + static_cast<std::uint64_t>(trial));

        std::string q = labels[static_cast<std::size_t>(1 + uniform_index(rng, 2))];
        std::string a = labels[static_cast<std::size_t>(n - 1)];
        if (q == a || dag.is_latent(q) || dag.is_latent(a)) continue;

        graph::Labels desc = graph::descendants(dag, {q});
        graph::Labels adjust;
        for (const std::string& l : labels) {
            if (l == q || l == a || dag.is_latent(l)) continue;
            if (std::find(desc.begin(), desc.end(), l) != desc.end()) continue;
            adjust.push_back(l);
        }
        try {
            EffectTable est = scm::backdoor_estimate(scm, q, a, adjust);
            EffectTable truth = scm::interventional_truth(scm, q, a);
            REQUIRE(scm::max_abs_deviation(est, truth) < 1e-10);
            ++matched;
        } catch (const scm::CriterionError&) {
            ++refused;
        }
    }
    REQUIRE(matched > 0);
    REQUIRE(refused > 0);
}

TEST_CASE("random models are seeded and reproducible") {
    DiscreteScm a = scm::random_scm(graph::qa_knowledge_dag(), 2, 1234);
    DiscreteScm b = scm::random_scm(graph::qa_knowledge_dag(), 2, 1234);
    DiscreteScm c = scm::random_scm(graph::qa_knowledge_dag(), 2, 1235);
    for (const std::string& l : a.dag().labels()) {
        REQUIRE(a.cpt_rows(l) == b.cpt_rows(l));
    }
    REQUIRE(a.cpt_rows("Q") != c.cpt_rows("Q"));
    for (const auto& row : a.cpt_rows("A"))
        for (double p : row) REQUIRE(p > 0.0);
}

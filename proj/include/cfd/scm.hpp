#pragma once

// Discrete structural causal models over a CausalDag, with exact evaluation
// of observational, interventional, and adjustment-formula distributions.
// This is the numeric oracle that checks the identification engine's output
// against ground truth: every estimator here consumes only observational
// quantities over observed nodes, while ground truth is computed by graph
// surgery (truncated factorization) with full access to the model.
//
// Conventions:
//   - node states are 0 .. card-1;
//   - CPT rows are indexed by the parent assignment in node-id order with
//     the LAST parent varying fastest; row r lists P(node = s | parents = r);
//   - Distribution entries use the same mixed-radix layout over their vars.

#include <cmath>
#include <functional>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

#include "cfd/common.hpp"
#include "cfd/criteria.hpp"
#include "cfd/dag.hpp"

namespace cfd::scm {

using graph::CausalDag;
using graph::Labels;

// An identification criterion failed; the report carries the per-condition
// verdicts and witness paths so callers can explain the refusal.
class CriterionError : public std::runtime_error {
public:
    CriterionError(const std::string& msg, graph::CriterionReport report)
        : std::runtime_error(msg), report_(std::move(report)) {}
    const graph::CriterionReport& report() const { return report_; }

private:
    graph::CriterionReport report_;
};

// A conditional with zero-probability conditioning event entered a sum with
// nonzero weight. Zero-weight strata are skipped instead (measure zero).
struct UndefinedConditionalError : std::domain_error {
    using std::domain_error::domain_error;
};

// ---------------------------------------------------------------------------
// Distribution: a dense table over a fixed variable list.
// ---------------------------------------------------------------------------

struct Distribution {
    Labels vars;
    std::vector<int> cards;
    std::vector<double> probs;  // size = product of cards

    static Distribution zeros(Labels vars, std::vector<int> cards) {
        std::size_t total = 1;
        for (int c : cards) total *= static_cast<std::size_t>(c);
        return Distribution{std::move(vars), std::move(cards),
                            std::vector<double>(total, 0.0)};
    }

    std::size_t index(const std::vector<int>& assignment) const {
        std::size_t idx = 0;
        for (std::size_t i = 0; i < cards.size(); ++i) {
            if (assignment[i] < 0 || assignment[i] >= cards[i])
                throw std::out_of_range("state out of range for " + vars[i]);
            idx = idx * static_cast<std::size_t>(cards[i]) +
                  static_cast<std::size_t>(assignment[i]);
        }
        return idx;
    }

    double& at(const std::vector<int>& assignment) { return probs[index(assignment)]; }
    double at(const std::vector<int>& assignment) const { return probs[index(assignment)]; }

    double total() const {
        double t = 0.0;
        for (double p : probs) t += p;
        return t;
    }

    // Sum of all entries matching a partial assignment by variable name.
    double prob_of(const std::map<std::string, int>& partial) const {
        for (const auto& [var, state] : partial) {
            std::size_t vi = var_index(var);
            if (state < 0 || state >= cards[vi])
                throw std::out_of_range("state out of range for " + var);
        }
        double sum = 0.0;
        std::vector<int> a(vars.size(), 0);
        for (std::size_t flat = 0; flat < probs.size(); ++flat) {
            unflatten(flat, a);
            bool match = true;
            for (const auto& [var, state] : partial)
                if (a[var_index(var)] != state) {
                    match = false;
                    break;
                }
            if (match) sum += probs[flat];
        }
        return sum;
    }

    // Marginal onto `keep`, preserving this distribution's variable order.
    Distribution marginal(const Labels& keep) const {
        std::vector<std::size_t> keep_idx;
        Labels kept_vars;
        std::vector<int> kept_cards;
        for (std::size_t i = 0; i < vars.size(); ++i) {
            if (std::find(keep.begin(), keep.end(), vars[i]) == keep.end()) continue;
            keep_idx.push_back(i);
            kept_vars.push_back(vars[i]);
            kept_cards.push_back(cards[i]);
        }
        if (kept_vars.size() != keep.size())
            throw std::invalid_argument("marginal references a variable not in the distribution");
        Distribution out = zeros(kept_vars, kept_cards);
        std::vector<int> a(vars.size(), 0);
        std::vector<int> sub(keep_idx.size(), 0);
        for (std::size_t flat = 0; flat < probs.size(); ++flat) {
            unflatten(flat, a);
            for (std::size_t k = 0; k < keep_idx.size(); ++k) sub[k] = a[keep_idx[k]];
            out.at(sub) += probs[flat];
        }
        return out;
    }

    std::size_t var_index(const std::string& var) const {
        for (std::size_t i = 0; i < vars.size(); ++i)
            if (vars[i] == var) return i;
        throw std::invalid_argument("distribution has no variable " + var);
    }

private:
    void unflatten(std::size_t flat, std::vector<int>& a) const {
        for (std::size_t i = cards.size(); i-- > 0;) {
            a[i] = static_cast<int>(flat % static_cast<std::size_t>(cards[i]));
            flat /= static_cast<std::size_t>(cards[i]);
        }
    }
};

// ---------------------------------------------------------------------------
// DiscreteScm
// ---------------------------------------------------------------------------

class DiscreteScm {
public:
    // cpts[node] holds one row per parent assignment; see header comment for
    // the row order. Validation is strict: a malformed table is a
    // construction error naming the node and row.
    DiscreteScm(CausalDag dag, std::map<std::string, int> card,
                std::map<std::string, std::vector<std::vector<double>>> cpts)
        : dag_(std::move(dag)) {
        cards_.resize(dag_.size());
        for (std::size_t i = 0; i < dag_.size(); ++i) {
            auto it = card.find(dag_.label(static_cast<int>(i)));
            if (it == card.end())
                throw std::invalid_argument("missing cardinality for node " +
                                            dag_.label(static_cast<int>(i)));
            if (it->second < 2)
                throw std::invalid_argument("cardinality must be >= 2 for node " + it->first);
            cards_[i] = it->second;
        }
        tables_.resize(dag_.size());
        for (std::size_t i = 0; i < dag_.size(); ++i) {
            const std::string& label = dag_.label(static_cast<int>(i));
            auto it = cpts.find(label);
            if (it == cpts.end())
                throw std::invalid_argument("missing CPT for node " + label);
            std::size_t rows = 1;
            for (int p : dag_.parents(static_cast<int>(i)))
                rows *= static_cast<std::size_t>(cards_[static_cast<std::size_t>(p)]);
            if (it->second.size() != rows)
                throw std::invalid_argument("CPT for " + label + " must have " +
                                            std::to_string(rows) + " rows, got " +
                                            std::to_string(it->second.size()));
            std::vector<double>& flat = tables_[i];
            flat.reserve(rows * static_cast<std::size_t>(cards_[i]));
            for (std::size_t r = 0; r < rows; ++r) {
                const std::vector<double>& row = it->second[r];
                if (row.size() != static_cast<std::size_t>(cards_[i]))
                    throw std::invalid_argument("CPT row " + std::to_string(r) + " for " +
                                                label + " has wrong width");
                double sum = 0.0;
                for (double p : row) {
                    if (p < 0.0 || !std::isfinite(p))
                        throw std::invalid_argument("CPT for " + label +
                                                    " contains a negative or non-finite entry");
                    sum += p;
                }
                if (std::abs(sum - 1.0) > 1e-12)
                    throw std::invalid_argument("CPT row " + std::to_string(r) + " for " +
                                                label + " sums to " + std::to_string(sum));
                flat.insert(flat.end(), row.begin(), row.end());
            }
        }
    }

    const CausalDag& dag() const { return dag_; }

    int card(int id) const { return cards_.at(static_cast<std::size_t>(id)); }
    int card(const std::string& label) const { return card(dag_.index_of(label)); }

    Labels observed_labels() const {
        Labels out;
        for (std::size_t i = 0; i < dag_.size(); ++i)
            if (!dag_.is_latent(static_cast<int>(i)))
                out.push_back(dag_.label(static_cast<int>(i)));
        return out;
    }

    // P(node = full[node] | parents take their values in `full`).
    double cpt_prob(int node, const std::vector<int>& full) const {
        std::size_t row = 0;
        for (int p : dag_.parents(node))
            row = row * static_cast<std::size_t>(cards_[static_cast<std::size_t>(p)]) +
                  static_cast<std::size_t>(full[static_cast<std::size_t>(p)]);
        return tables_[static_cast<std::size_t>(node)]
                      [row * static_cast<std::size_t>(cards_[static_cast<std::size_t>(node)]) +
                       static_cast<std::size_t>(full[static_cast<std::size_t>(node)])];
    }

    std::vector<std::vector<double>> cpt_rows(const std::string& label) const {
        int id = dag_.index_of(label);
        std::size_t rows = 1;
        for (int p : dag_.parents(id))
            rows *= static_cast<std::size_t>(cards_[static_cast<std::size_t>(p)]);
        std::vector<std::vector<double>> out(rows);
        std::size_t k = static_cast<std::size_t>(cards_[static_cast<std::size_t>(id)]);
        for (std::size_t r = 0; r < rows; ++r)
            out[r].assign(tables_[static_cast<std::size_t>(id)].begin() +
                              static_cast<std::ptrdiff_t>(r * k),
                          tables_[static_cast<std::size_t>(id)].begin() +
                              static_cast<std::ptrdiff_t>((r + 1) * k));
        return out;
    }

private:
    CausalDag dag_;
    std::vector<int> cards_;
    std::vector<std::vector<double>> tables_;  // per node: rows * card, row-major
};

// ---------------------------------------------------------------------------
// Exact distributions
// ---------------------------------------------------------------------------

inline constexpr std::size_t kJointCellCap = 10'000'000;

// Full joint by multiplying CPT entries over every assignment.
inline Distribution joint(const DiscreteScm& scm) {
    const CausalDag& dag = scm.dag();
    Labels vars = dag.labels();
    std::vector<int> cards;
    std::size_t total = 1;
    for (std::size_t i = 0; i < dag.size(); ++i) {
        cards.push_back(scm.card(static_cast<int>(i)));
        total *= static_cast<std::size_t>(cards.back());
        if (total > kJointCellCap)
            throw std::invalid_argument("joint distribution exceeds the cell cap");
    }
    Distribution out = Distribution::zeros(vars, cards);
    std::vector<int> a(dag.size(), 0);
    for (std::size_t flat = 0; flat < out.probs.size(); ++flat) {
        std::size_t rem = flat;
        for (std::size_t i = cards.size(); i-- > 0;) {
            a[i] = static_cast<int>(rem % static_cast<std::size_t>(cards[i]));
            rem /= static_cast<std::size_t>(cards[i]);
        }
        double p = 1.0;
        for (std::size_t i = 0; i < dag.size(); ++i)
            p *= scm.cpt_prob(static_cast<int>(i), a);
        out.probs[flat] = p;
    }
    return out;
}

// Graph surgery: replace `node`'s mechanism with a point mass at `value`
// and cut its incoming edges. The returned model is a full DiscreteScm, so
// interventions compose.
inline DiscreteScm intervene(const DiscreteScm& scm, const std::string& node, int value) {
    const CausalDag& dag = scm.dag();
    int id = dag.index_of(node);
    if (value < 0 || value >= scm.card(id))
        throw std::out_of_range("intervention value out of range for " + node);
    CausalDag cut = graph::mutilate(dag, {node}, {});
    std::map<std::string, int> card;
    std::map<std::string, std::vector<std::vector<double>>> cpts;
    for (std::size_t i = 0; i < dag.size(); ++i) {
        const std::string& label = dag.label(static_cast<int>(i));
        card[label] = scm.card(static_cast<int>(i));
        cpts[label] = scm.cpt_rows(label);
    }
    std::vector<double> point(static_cast<std::size_t>(scm.card(id)), 0.0);
    point[static_cast<std::size_t>(value)] = 1.0;
    cpts[node] = {point};
    return DiscreteScm(std::move(cut), std::move(card), std::move(cpts));
}

// ---------------------------------------------------------------------------
// Effect tables: p[t][s] = P(outcome = s | do(treatment = t)).
// ---------------------------------------------------------------------------

struct EffectTable {
    std::string treatment, outcome;
    std::vector<std::vector<double>> p;
};

inline double max_abs_deviation(const EffectTable& a, const EffectTable& b) {
    double worst = 0.0;
    for (std::size_t t = 0; t < a.p.size(); ++t)
        for (std::size_t s = 0; s < a.p[t].size(); ++s)
            worst = std::max(worst, std::abs(a.p[t][s] - b.p[t][s]));
    return worst;
}

// Ground truth via truncated factorization: intervene, then marginalize.
inline EffectTable interventional_truth(const DiscreteScm& scm, const std::string& treatment,
                                        const std::string& outcome) {
    EffectTable out{treatment, outcome, {}};
    for (int t = 0; t < scm.card(treatment); ++t) {
        Distribution m = joint(intervene(scm, treatment, t)).marginal({outcome});
        out.p.push_back(m.probs);
    }
    return out;
}

namespace detail {

// Enumerate assignments of `cards` in mixed-radix order (last fastest).
inline void for_each_assignment(const std::vector<int>& cards,
                                const std::function<void(const std::vector<int>&)>& fn) {
    std::size_t total = 1;
    for (int c : cards) total *= static_cast<std::size_t>(c);
    std::vector<int> a(cards.size(), 0);
    for (std::size_t flat = 0; flat < total; ++flat) {
        std::size_t rem = flat;
        for (std::size_t i = cards.size(); i-- > 0;) {
            a[i] = static_cast<int>(rem % static_cast<std::size_t>(cards[i]));
            rem /= static_cast<std::size_t>(cards[i]);
        }
        fn(a);
    }
}

inline void assign_into(std::map<std::string, int>& target, const Labels& vars,
                        const std::vector<int>& states) {
    for (std::size_t i = 0; i < vars.size(); ++i) target[vars[i]] = states[i];
}

// P(target-part | given-part) from a joint table. `joint_event` must contain
// the given event. Undefined conditionals with positive weight are the
// caller's error case; weight-zero strata never reach this function.
inline double conditional(const Distribution& obs,
                          const std::map<std::string, int>& joint_event,
                          const std::map<std::string, int>& given_event,
                          const std::string& what) {
    double denom = obs.prob_of(given_event);
    if (denom <= 0.0)
        throw UndefinedConditionalError("conditional " + what +
                                        " is undefined: conditioning event has probability 0");
    return obs.prob_of(joint_event) / denom;
}

inline std::vector<int> cards_of(const DiscreteScm& scm, const Labels& vars) {
    std::vector<int> out;
    for (const std::string& v : vars) out.push_back(scm.card(v));
    return out;
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Adjustment formulas. The *_formula functions evaluate the arithmetic
// without any identification check; they exist for bias diagnostics and
// oracle comparisons. The *_estimate functions gate on the matching
// criterion and refuse (CriterionError) when it fails.
// ---------------------------------------------------------------------------

// sum_z P(z) P(outcome | treatment, z)
inline EffectTable backdoor_formula(const DiscreteScm& scm, const std::string& treatment,
                                    const std::string& outcome, const Labels& adjust) {
    Distribution needed = joint(scm).marginal([&] {
        Labels keep = adjust;
        keep.push_back(treatment);
        keep.push_back(outcome);
        return keep;
    }());
    std::vector<int> zcards = detail::cards_of(scm, adjust);
    EffectTable out{treatment, outcome, {}};
    for (int t = 0; t < scm.card(treatment); ++t) {
        std::vector<double> row(static_cast<std::size_t>(scm.card(outcome)), 0.0);
        detail::for_each_assignment(zcards, [&](const std::vector<int>& z) {
            std::map<std::string, int> zev;
            detail::assign_into(zev, adjust, z);
            double pz = needed.prob_of(zev);
            if (pz == 0.0) return;
            std::map<std::string, int> given = zev;
            given[treatment] = t;
            for (int s = 0; s < scm.card(outcome); ++s) {
                std::map<std::string, int> ev = given;
                ev[outcome] = s;
                row[static_cast<std::size_t>(s)] +=
                    pz * detail::conditional(needed, ev, given,
                                             "P(" + outcome + " | " + treatment + ", adjust)");
            }
        });
        out.p.push_back(std::move(row));
    }
    return out;
}

// sum_z P(z | t-hat) sum_q P(q) P(outcome | q, z), evaluated over observed
// nodes only.
inline EffectTable sfd_formula(const DiscreteScm& scm, const std::string& treatment,
                               const std::string& outcome, const Labels& mediators) {
    Distribution obs = joint(scm).marginal(scm.observed_labels());
    std::vector<int> zcards = detail::cards_of(scm, mediators);
    EffectTable out{treatment, outcome, {}};
    for (int t = 0; t < scm.card(treatment); ++t) {
        std::vector<double> row(static_cast<std::size_t>(scm.card(outcome)), 0.0);
        detail::for_each_assignment(zcards, [&](const std::vector<int>& z) {
            std::map<std::string, int> zev;
            detail::assign_into(zev, mediators, z);
            std::map<std::string, int> t_ev{{treatment, t}};
            std::map<std::string, int> zt_ev = zev;
            zt_ev[treatment] = t;
            double pz_t = detail::conditional(obs, zt_ev, t_ev,
                                              "P(mediators | " + treatment + ")");
            if (pz_t == 0.0) return;
            for (int q = 0; q < scm.card(treatment); ++q) {
                double pq = obs.prob_of({{treatment, q}});
                if (pq == 0.0) continue;
                std::map<std::string, int> given = zev;
                given[treatment] = q;
                for (int s = 0; s < scm.card(outcome); ++s) {
                    std::map<std::string, int> ev = given;
                    ev[outcome] = s;
                    row[static_cast<std::size_t>(s)] +=
                        pz_t * pq *
                        detail::conditional(obs, ev, given,
                                            "P(" + outcome + " | " + treatment + ", mediators)");
                }
            }
        });
        out.p.push_back(std::move(row));
    }
    return out;
}

// sum_w P(w) sum_z P(z | t-hat, w) sum_q P(q | w) P(outcome | z, q, w),
// evaluated over observed nodes only.
inline EffectTable cfd_formula(const DiscreteScm& scm, const std::string& treatment,
                               const std::string& outcome, const Labels& mediators,
                               const Labels& covariates) {
    Distribution obs = joint(scm).marginal(scm.observed_labels());
    std::vector<int> zcards = detail::cards_of(scm, mediators);
    std::vector<int> wcards = detail::cards_of(scm, covariates);
    EffectTable out{treatment, outcome, {}};
    for (int t = 0; t < scm.card(treatment); ++t) {
        std::vector<double> row(static_cast<std::size_t>(scm.card(outcome)), 0.0);
        detail::for_each_assignment(wcards, [&](const std::vector<int>& w) {
            std::map<std::string, int> wev;
            detail::assign_into(wev, covariates, w);
            double pw = obs.prob_of(wev);
            if (pw == 0.0) return;
            std::map<std::string, int> tw_ev = wev;
            tw_ev[treatment] = t;
            detail::for_each_assignment(zcards, [&](const std::vector<int>& z) {
                std::map<std::string, int> zev;
                detail::assign_into(zev, mediators, z);
                std::map<std::string, int> ztw_ev = zev;
                for (const auto& [k, v] : tw_ev) ztw_ev[k] = v;
                double pz_tw = detail::conditional(obs, ztw_ev, tw_ev,
                                                   "P(mediators | " + treatment +
                                                       ", covariates)");
                if (pz_tw == 0.0) return;
                for (int q = 0; q < scm.card(treatment); ++q) {
                    std::map<std::string, int> qw_ev = wev;
                    qw_ev[treatment] = q;
                    double pq_w =
                        detail::conditional(obs, qw_ev, wev,
                                            "P(" + treatment + " | covariates)");
                    if (pq_w == 0.0) continue;
                    std::map<std::string, int> given = zev;
                    for (const auto& [k, v] : qw_ev) given[k] = v;
                    for (int s = 0; s < scm.card(outcome); ++s) {
                        std::map<std::string, int> ev = given;
                        ev[outcome] = s;
                        row[static_cast<std::size_t>(s)] +=
                            pw * pz_tw * pq_w *
                            detail::conditional(obs, ev, given,
                                                "P(" + outcome +
                                                    " | mediators, " + treatment +
                                                    ", covariates)");
                    }
                }
            });
        });
        out.p.push_back(std::move(row));
    }
    return out;
}

// ---------------------------------------------------------------------------
// Criterion-gated estimators.
// ---------------------------------------------------------------------------

inline EffectTable backdoor_estimate(const DiscreteScm& scm, const std::string& treatment,
                                     const std::string& outcome, const Labels& adjust) {
    // Latent adjustment nodes are legitimate here: the oracle inspects the
    // full model precisely to certify what an executable method cannot see.
    graph::CriterionReport report = graph::check_backdoor(
        scm.dag(), adjust, treatment, outcome, /*allow_latent_adjust=*/true);
    if (!report.satisfied)
        throw CriterionError("back-door criterion does not hold for the given adjustment set",
                             std::move(report));
    return backdoor_formula(scm, treatment, outcome, adjust);
}

inline EffectTable sfd_estimate(const DiscreteScm& scm, const std::string& treatment,
                                const std::string& outcome, const Labels& mediators) {
    graph::CriterionReport report =
        graph::check_standard_frontdoor(scm.dag(), mediators, treatment, outcome);
    if (!report.satisfied)
        throw CriterionError("standard front-door criterion does not hold for the mediator set",
                             std::move(report));
    return sfd_formula(scm, treatment, outcome, mediators);
}

inline EffectTable cfd_estimate(const DiscreteScm& scm, const std::string& treatment,
                                const std::string& outcome, const Labels& mediators,
                                const Labels& covariates) {
    graph::CriterionReport report = graph::check_conditional_frontdoor(
        scm.dag(), mediators, covariates, treatment, outcome);
    if (!report.satisfied)
        throw CriterionError(
            "conditional front-door criterion does not hold for the mediator/covariate sets",
            std::move(report));
    return cfd_formula(scm, treatment, outcome, mediators, covariates);
}

// ---------------------------------------------------------------------------
// Random models for property tests and oracle sweeps.
// ---------------------------------------------------------------------------

// CPT rows drawn uniform with entries floored at 0.01 before normalization,
// so no conditional is near-degenerate. Seeded and portable: the row layout
// and the engine's output sequence are both pinned.
inline DiscreteScm random_scm(const CausalDag& dag, int cardinality, std::uint64_t seed) {
    Rng rng(seed);
    std::map<std::string, int> card;
    std::map<std::string, std::vector<std::vector<double>>> cpts;
    for (std::size_t i = 0; i < dag.size(); ++i) {
        const std::string& label = dag.label(static_cast<int>(i));
        card[label] = cardinality;
        std::size_t rows = 1;
        for (std::size_t k = 0; k < dag.parents(static_cast<int>(i)).size(); ++k)
            rows *= static_cast<std::size_t>(cardinality);
        std::vector<std::vector<double>> table(rows);
        for (std::size_t r = 0; r < rows; ++r) {
            std::vector<double> row(static_cast<std::size_t>(cardinality));
            double sum = 0.0;
            for (double& p : row) {
                p = std::max(uniform01(rng), 0.01);
                sum += p;
            }
            for (double& p : row) p /= sum;
            table[r] = std::move(row);
        }
        cpts[label] = std::move(table);
    }
    return DiscreteScm(dag, std::move(card), std::move(cpts));
}

}  // namespace cfd::scm

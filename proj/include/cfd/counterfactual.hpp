#pragma once

// Counterfactual knowledge construction: extract weighted entities from the
// retrieved knowledge, obtain a counterfactual replacement for each, and
// enumerate the T single-entity-preserving variants together with their
// selection probabilities. Variant t keeps entity t factual and substitutes
// the other T-1, so a LOW entity weight makes its variant LIKELY: the
// probability of variant t is proportional to the product of the weights of
// the entities actually substituted in it.

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstddef>
#include <stdexcept>
#include <string>
#include <vector>

#include "cfd/common.hpp"
#include "cfd/gateway.hpp"

namespace cfd::knowledge {

struct WeightedEntity {
    std::string surface;  // verbatim span as it appears in the knowledge text
    double weight = 0.0;  // importance in (0, 1]
};

struct CounterfactualEntity {
    std::string original;
    std::string replacement;
    double weight = 0.0;
};

struct CounterfactualVariant {
    std::string text;
    std::size_t kept_index = 0;  // the one entity left factual in this variant
};

struct CounterfactualSet {
    std::vector<CounterfactualVariant> variants;
    std::vector<double> probabilities;  // aligned with variants, sums to 1
};

struct EntityError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// ---------------------------------------------------------------------------
// Token-boundary matching shared by the presence check and the substitution
// scan: a surface matches at a position iff the characters on both sides are
// non-alphanumeric and the span compares equal ignoring case.
// ---------------------------------------------------------------------------

namespace detail {

inline bool iequal_at(const std::string& text, std::size_t pos, const std::string& surface) {
    if (pos + surface.size() > text.size()) return false;
    for (std::size_t i = 0; i < surface.size(); ++i) {
        unsigned char a = static_cast<unsigned char>(text[pos + i]);
        unsigned char b = static_cast<unsigned char>(surface[i]);
        if (std::tolower(a) != std::tolower(b)) return false;
    }
    return true;
}

inline bool boundary_at(const std::string& text, std::size_t pos, std::size_t len) {
    auto is_word = [](char c) { return std::isalnum(static_cast<unsigned char>(c)) != 0; };
    if (pos > 0 && is_word(text[pos - 1]) && is_word(text[pos])) return false;
    std::size_t end = pos + len;
    if (end < text.size() && is_word(text[end - 1]) && is_word(text[end])) return false;
    return true;
}

inline bool matches_at(const std::string& text, std::size_t pos, const std::string& surface) {
    return iequal_at(text, pos, surface) && boundary_at(text, pos, surface.size());
}

// Strips leading list markers a model may prepend: "1. ", "2) ", "- ", "* ".
inline std::string strip_list_marker(std::string line) {
    std::size_t i = 0;
    std::size_t digits = 0;
    while (i < line.size() && std::isdigit(static_cast<unsigned char>(line[i]))) {
        ++i;
        ++digits;
    }
    if (digits > 0 && i < line.size() && (line[i] == '.' || line[i] == ')')) {
        ++i;
    } else if (digits == 0 && !line.empty() && (line[0] == '-' || line[0] == '*')) {
        i = 1;
    } else {
        i = 0;
    }
    while (i < line.size() && line[i] == ' ') ++i;
    return line.substr(i);
}

}  // namespace detail

inline bool appears_as_token(const std::string& text, const std::string& surface) {
    if (surface.empty()) return false;
    for (std::size_t pos = 0; pos + surface.size() <= text.size(); ++pos)
        if (detail::matches_at(text, pos, surface)) return true;
    return false;
}

// ---------------------------------------------------------------------------
// Entity extraction
// ---------------------------------------------------------------------------

struct ExtractOptions {
    std::string template_id = "entity_extraction";
    std::string key;  // fixture/trace identity, typically the record id
    double temperature = 0.0;
    bool allow_fewer = false;  // accept >= 2 entities instead of erroring
};

struct ExtractionResult {
    std::vector<WeightedEntity> entities;  // non-increasing weight order
    std::vector<std::string> warnings;
};

namespace detail {

// Reply contract (documented in the prompt template): one entity per line as
// "<surface> | <weight>". A missing or unparseable weight falls back to the
// rank-based schedule (T - t + 1) / T; weights are clamped into [0.01, 1].
inline std::vector<WeightedEntity> parse_entity_reply(const std::string& reply,
                                                      std::size_t count,
                                                      std::vector<std::string>& warnings) {
    std::vector<WeightedEntity> out;
    std::size_t rank = 0;
    std::size_t start = 0;
    while (start <= reply.size()) {
        std::size_t nl = reply.find('\n', start);
        std::string line = reply.substr(
            start, nl == std::string::npos ? std::string::npos : nl - start);
        start = nl == std::string::npos ? reply.size() + 1 : nl + 1;
        line = strip_list_marker(trim(line));
        if (line.empty()) continue;
        ++rank;

        std::string surface = line;
        double weight = std::nan("");
        std::size_t bar = line.rfind('|');
        if (bar != std::string::npos) {
            surface = trim(line.substr(0, bar));
            std::string rhs = trim(line.substr(bar + 1));
            try {
                std::size_t used = 0;
                double parsed = std::stod(rhs, &used);
                if (used == rhs.size() && std::isfinite(parsed)) weight = parsed;
            } catch (const std::exception&) {
            }
        }
        if (surface.empty()) {
            warnings.push_back("skipped entity line with empty surface: '" + line + "'");
            continue;
        }
        if (!std::isfinite(weight)) {
            double t = static_cast<double>(std::min(rank, count));
            weight = (static_cast<double>(count) - t + 1.0) / static_cast<double>(count);
            warnings.push_back("entity '" + surface +
                               "' had no parseable weight; using rank fallback " +
                               std::to_string(weight));
        }
        if (weight > 1.0) {
            warnings.push_back("entity '" + surface + "' weight " + std::to_string(weight) +
                               " clamped to 1.0");
            weight = 1.0;
        } else if (weight < 0.01) {
            warnings.push_back("entity '" + surface + "' weight " + std::to_string(weight) +
                               " clamped to 0.01");
            weight = 0.01;
        }
        out.push_back(WeightedEntity{surface, weight});
    }

    // Deduplicate case-insensitively, keeping the highest weight.
    std::vector<WeightedEntity> unique;
    for (const WeightedEntity& e : out) {
        bool merged = false;
        for (WeightedEntity& u : unique) {
            if (to_lower(u.surface) == to_lower(e.surface)) {
                if (e.weight > u.weight) u.weight = e.weight;
                warnings.push_back("duplicate entity '" + e.surface + "' merged");
                merged = true;
                break;
            }
        }
        if (!merged) unique.push_back(e);
    }

    std::stable_sort(unique.begin(), unique.end(),
                     [](const WeightedEntity& a, const WeightedEntity& b) {
                         return a.weight > b.weight;
                     });
    return unique;
}

inline std::vector<std::string> absent_surfaces(const std::vector<WeightedEntity>& entities,
                                                const std::string& knowledge) {
    std::vector<std::string> absent;
    for (const WeightedEntity& e : entities)
        if (!appears_as_token(knowledge, e.surface)) absent.push_back(e.surface);
    return absent;
}

}  // namespace detail

// Asks the model for `count` weighted entities found verbatim in `knowledge`.
// A reply that parses short or names an absent entity is re-asked once
// (repetition 1); a second bad reply is an error, except that allow_fewer
// accepts any >= 2 present entities.
inline ExtractionResult extract_entities(gateway::Gateway& gw, const std::string& question,
                                         const std::string& knowledge, std::size_t count,
                                         const ExtractOptions& opt = {}) {
    if (count < 2) throw std::invalid_argument("entity count must be >= 2");
    ExtractionResult result;

    auto ask = [&](std::size_t repetition) {
        gateway::ChatRequest req;
        req.template_id = opt.template_id;
        req.variables = {{"question", question},
                         {"knowledge", knowledge},
                         {"count", std::to_string(count)}};
        req.key = opt.key;
        req.repetition = repetition;
        req.temperature = opt.temperature;
        return detail::parse_entity_reply(gw.chat(req).text, count, result.warnings);
    };

    std::vector<WeightedEntity> entities = ask(0);
    std::vector<std::string> absent = detail::absent_surfaces(entities, knowledge);
    if (entities.size() < count || !absent.empty()) {
        result.warnings.push_back("entity extraction re-asked: got " +
                                  std::to_string(entities.size()) + " of " +
                                  std::to_string(count) + ", " +
                                  std::to_string(absent.size()) + " absent from knowledge");
        entities = ask(1);
        absent = detail::absent_surfaces(entities, knowledge);
    }

    if (!absent.empty())
        throw EntityError("entity '" + absent.front() +
                          "' does not appear in the knowledge text");
    if (entities.size() > count) entities.resize(count);
    if (entities.size() < count) {
        if (!opt.allow_fewer || entities.size() < 2)
            throw EntityError("entity extraction produced " + std::to_string(entities.size()) +
                              " entities, need " + std::to_string(count));
        result.warnings.push_back("proceeding with " + std::to_string(entities.size()) +
                                  " entities instead of " + std::to_string(count));
    }

    result.entities = std::move(entities);
    return result;
}

// ---------------------------------------------------------------------------
// Counterfactual replacements
// ---------------------------------------------------------------------------

struct CounterfactualOptions {
    std::string template_id = "counterfactual_entity";
    std::string key_prefix;  // per-entity key is "<prefix>::<surface>"
    double temperature = 0.0;
};

struct CounterfactualResult {
    std::vector<CounterfactualEntity> entities;  // aligned with the input order
    std::vector<std::string> warnings;
};

// One call per entity asking for a same-type but different referent. A reply
// identical to the original (ignoring case) is re-asked once, then rejected.
inline CounterfactualResult counterfactual_entities(gateway::Gateway& gw,
                                                    const std::vector<WeightedEntity>& entities,
                                                    const std::string& knowledge,
                                                    const CounterfactualOptions& opt = {}) {
    CounterfactualResult result;
    for (const WeightedEntity& entity : entities) {
        auto ask = [&](std::size_t repetition) {
            gateway::ChatRequest req;
            req.template_id = opt.template_id;
            req.variables = {{"entity", entity.surface}, {"knowledge", knowledge}};
            req.key = opt.key_prefix.empty() ? entity.surface
                                             : opt.key_prefix + "::" + entity.surface;
            req.repetition = repetition;
            req.temperature = opt.temperature;
            std::string text = gw.chat(req).text;
            // First nonempty line, quotes stripped.
            std::size_t nl = text.find('\n');
            std::string line = trim(nl == std::string::npos ? text : text.substr(0, nl));
            if (line.size() >= 2 && (line.front() == '"' || line.front() == '\'') &&
                line.back() == line.front())
                line = trim(line.substr(1, line.size() - 2));
            return line;
        };

        std::string replacement = ask(0);
        if (replacement.empty() || to_lower(replacement) == to_lower(entity.surface)) {
            result.warnings.push_back("counterfactual for '" + entity.surface +
                                      "' was unusable; re-asked");
            replacement = ask(1);
        }
        if (replacement.empty())
            throw EntityError("counterfactual for '" + entity.surface + "' is empty");
        if (to_lower(replacement) == to_lower(entity.surface))
            throw EntityError("counterfactual for '" + entity.surface +
                              "' repeats the original entity");
        result.entities.push_back(
            CounterfactualEntity{entity.surface, replacement, entity.weight});
    }
    return result;
}

// ---------------------------------------------------------------------------
// Variant enumeration and probabilities
// ---------------------------------------------------------------------------

// Rewrites `knowledge` substituting every entity except `kept`. One
// left-to-right scan over the original text, trying surfaces longest-first
// at each position with token boundaries; replacements are never rescanned,
// so substitution cannot cascade. Every substituted entity must occur at
// least once or the inputs are inconsistent with the extraction contract.
inline std::string substitute_variant(const std::string& knowledge,
                                      const std::vector<CounterfactualEntity>& entities,
                                      std::size_t kept) {
    if (kept >= entities.size())
        throw std::invalid_argument("kept entity index out of range");
    struct Sub {
        const CounterfactualEntity* entity;
        bool found = false;
    };
    std::vector<Sub> subs;
    for (std::size_t i = 0; i < entities.size(); ++i)
        if (i != kept) subs.push_back(Sub{&entities[i]});
    std::stable_sort(subs.begin(), subs.end(), [](const Sub& a, const Sub& b) {
        return a.entity->original.size() > b.entity->original.size();
    });

    std::string out;
    out.reserve(knowledge.size());
    std::size_t pos = 0;
    while (pos < knowledge.size()) {
        bool matched = false;
        for (Sub& s : subs) {
            if (detail::matches_at(knowledge, pos, s.entity->original)) {
                out += s.entity->replacement;
                pos += s.entity->original.size();
                s.found = true;
                matched = true;
                break;
            }
        }
        if (!matched) out += knowledge[pos++];
    }
    for (const Sub& s : subs)
        if (!s.found)
            throw EntityError("entity '" + s.entity->original +
                              "' not found during substitution");
    return out;
}

// Probability of variant t is proportional to the product of the substituted
// weights, i.e. all weights except w_t. Computed in ratio form
//   p_t = 1 / sum_j (w_t / w_j)
// which cancels the common product per term: equal weights make every ratio
// exactly 1.0 so p_t is exactly 1/T, and the result is invariant to
// rescaling all weights by a constant.
inline std::vector<double> variant_probabilities(const std::vector<double>& weights) {
    if (weights.size() < 2)
        throw std::invalid_argument("variant probabilities need at least 2 weights");
    for (double w : weights)
        if (!(w > 0.0) || !std::isfinite(w))
            throw std::invalid_argument("entity weights must be finite and positive");
    std::vector<double> p(weights.size());
    for (std::size_t t = 0; t < weights.size(); ++t) {
        double denom = 0.0;
        for (double w : weights) denom += weights[t] / w;
        p[t] = 1.0 / denom;
    }
    return p;
}

inline CounterfactualSet enumerate_variants(const std::string& knowledge,
                                            const std::vector<CounterfactualEntity>& entities) {
    CounterfactualSet set;
    std::vector<double> weights;
    for (std::size_t t = 0; t < entities.size(); ++t) {
        set.variants.push_back(CounterfactualVariant{
            substitute_variant(knowledge, entities, t), t});
        weights.push_back(entities[t].weight);
    }
    set.probabilities = variant_probabilities(weights);
    return set;
}

}  // namespace cfd::knowledge

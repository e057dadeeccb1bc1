#pragma once

// Parsing for user-supplied graph and mechanism spec files (JSON). Graph
// specs declare nodes, directed edges, and which nodes are unobserved;
// mechanism specs add per-node cardinalities and CPTs, plus optional role
// labels the oracle subcommand uses to pick treatment and outcome.
//
// CPT row order: one row per assignment of the node's parents, parents
// taken in node-declaration order with the LAST parent varying fastest;
// each row lists P(node = 0), P(node = 1), ... and must sum to 1.

#include <fstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "cfd/dag.hpp"
#include "cfd/scm.hpp"

namespace cfd::specfiles {

using nlohmann::json;

struct SpecError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

namespace detail {

inline json load_json_file(const std::string& path, const std::string& what) {
    std::ifstream in(path);
    if (!in) throw SpecError("cannot open " + what + " file: " + path);
    try {
        json j;
        in >> j;
        return j;
    } catch (const json::parse_error& e) {
        throw SpecError(what + " file " + path + " is not valid JSON: " + e.what());
    }
}

}  // namespace detail

// {"nodes": ["A", "C", ...], "edges": [["U", "Q"], ...], "latent": ["U"]}
inline graph::CausalDag graph_from_json(const json& j) {
    if (!j.contains("nodes") || !j.at("nodes").is_array())
        throw SpecError("graph spec needs a \"nodes\" array");
    if (!j.contains("edges") || !j.at("edges").is_array())
        throw SpecError("graph spec needs an \"edges\" array");
    graph::Labels nodes, latent;
    for (const json& n : j.at("nodes")) nodes.push_back(n.get<std::string>());
    for (const json& n : j.value("latent", json::array()))
        latent.push_back(n.get<std::string>());
    std::vector<std::pair<std::string, std::string>> edges;
    for (const json& e : j.at("edges")) {
        if (!e.is_array() || e.size() != 2)
            throw SpecError("each edge must be a [from, to] pair");
        edges.emplace_back(e.at(0).get<std::string>(), e.at(1).get<std::string>());
    }
    try {
        return graph::CausalDag(nodes, edges, latent);
    } catch (const std::exception& e) {
        throw SpecError(std::string("invalid graph spec: ") + e.what());
    }
}

inline graph::CausalDag load_graph_spec(const std::string& path) {
    return graph_from_json(detail::load_json_file(path, "graph spec"));
}

struct ScmRoles {
    std::string treatment;
    std::string outcome;
    graph::Labels mediators;     // front-door Z
    graph::Labels conditioning;  // front-door W
    graph::Labels adjust;        // backdoor set
};

struct ScmSpec {
    scm::DiscreteScm scm;
    ScmRoles roles;
};

// Graph fields plus {"card": {"Q": 2, ...}, "cpt": {"Q": [[...], ...], ...},
// "roles": {...}} where roles are optional.
inline ScmSpec scm_from_json(const json& j) {
    graph::CausalDag dag = graph_from_json(j);
    if (!j.contains("card") || !j.at("card").is_object())
        throw SpecError("mechanism spec needs a \"card\" object");
    if (!j.contains("cpt") || !j.at("cpt").is_object())
        throw SpecError("mechanism spec needs a \"cpt\" object");

    std::map<std::string, int> card;
    for (const auto& [node, value] : j.at("card").items()) card[node] = value.get<int>();
    std::map<std::string, std::vector<std::vector<double>>> cpts;
    for (const auto& [node, rows] : j.at("cpt").items()) {
        if (!rows.is_array()) throw SpecError("CPT for " + node + " must be an array of rows");
        for (const json& row : rows)
            cpts[node].push_back(row.get<std::vector<double>>());
    }

    ScmRoles roles;
    if (j.contains("roles")) {
        const json& r = j.at("roles");
        roles.treatment = r.value("treatment", std::string());
        roles.outcome = r.value("outcome", std::string());
        roles.mediators = r.value("mediator", graph::Labels{});
        roles.conditioning = r.value("conditioning", graph::Labels{});
        roles.adjust = r.value("adjust", graph::Labels{});
    }

    try {
        return ScmSpec{scm::DiscreteScm(std::move(dag), std::move(card), std::move(cpts)),
                       std::move(roles)};
    } catch (const std::exception& e) {
        throw SpecError(std::string("invalid mechanism spec: ") + e.what());
    }
}

inline ScmSpec load_scm_spec(const std::string& path) {
    return scm_from_json(detail::load_json_file(path, "mechanism spec"));
}

}  // namespace cfd::specfiles

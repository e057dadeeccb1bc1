#pragma once

// Directed acyclic causal graphs over named nodes, with the path and
// separation machinery needed for identification checks: graph surgery,
// ancestry, exhaustive simple-path enumeration, and d-separation.
//
// Determinism contract: nodes carry integer ids in declaration order, and
// every routine that returns nodes or paths orders its output by id
// (paths lexicographically by their id sequence). Two calls with the same
// graph and query always render byte-identical output.

#include <algorithm>
#include <array>
#include <deque>
#include <map>
#include <stdexcept>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "cfd/common.hpp"

namespace cfd::graph {

using NodeSet = std::vector<int>;  // sorted, unique ids
using Labels = std::vector<std::string>;

// Thrown when a path query would enumerate more paths than its cap allows.
// The cap exists to fail loudly instead of silently truncating witnesses.
struct PathLimitError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// ---------------------------------------------------------------------------
// Small sorted-set helpers (node sets are tiny; vectors beat std::set here).
// ---------------------------------------------------------------------------

inline bool set_contains(const NodeSet& s, int v) {
    return std::binary_search(s.begin(), s.end(), v);
}

inline NodeSet set_union(const NodeSet& a, const NodeSet& b) {
    NodeSet out;
    std::set_union(a.begin(), a.end(), b.begin(), b.end(), std::back_inserter(out));
    return out;
}

inline NodeSet set_minus(const NodeSet& a, const NodeSet& b) {
    NodeSet out;
    std::set_difference(a.begin(), a.end(), b.begin(), b.end(), std::back_inserter(out));
    return out;
}

inline bool sets_intersect(const NodeSet& a, const NodeSet& b) {
    auto ia = a.begin();
    auto ib = b.begin();
    while (ia != a.end() && ib != b.end()) {
        if (*ia == *ib) return true;
        (*ia < *ib) ? ++ia : ++ib;
    }
    return false;
}

// ---------------------------------------------------------------------------
// CausalDag
// ---------------------------------------------------------------------------

class CausalDag {
public:
    CausalDag(Labels nodes,
              std::vector<std::pair<std::string, std::string>> edges,
              Labels latent = {})
        : labels_(std::move(nodes)) {
        for (std::size_t i = 0; i < labels_.size(); ++i) {
            if (labels_[i].empty())
                throw std::invalid_argument("node label may not be empty");
            if (!index_.emplace(labels_[i], static_cast<int>(i)).second)
                throw std::invalid_argument("duplicate node label: " + labels_[i]);
        }
        parents_.resize(labels_.size());
        children_.resize(labels_.size());
        latent_.assign(labels_.size(), false);
        for (const auto& [from, to] : edges) {
            int f = index_of(from);
            int t = index_of(to);
            if (f == t)
                throw std::invalid_argument("self loop on node: " + from);
            if (std::find(children_[f].begin(), children_[f].end(), t) != children_[f].end())
                throw std::invalid_argument("duplicate edge: " + from + " -> " + to);
            children_[f].push_back(t);
            parents_[t].push_back(f);
            edges_.emplace_back(f, t);
        }
        for (auto& v : parents_) std::sort(v.begin(), v.end());
        for (auto& v : children_) std::sort(v.begin(), v.end());
        std::sort(edges_.begin(), edges_.end());
        for (const std::string& l : latent) latent_[static_cast<std::size_t>(index_of(l))] = true;
        require_acyclic();
    }

    std::size_t size() const { return labels_.size(); }
    const Labels& labels() const { return labels_; }
    const std::string& label(int id) const { return labels_.at(static_cast<std::size_t>(id)); }

    bool has_node(const std::string& label) const { return index_.count(label) > 0; }

    int index_of(const std::string& label) const {
        auto it = index_.find(label);
        if (it == index_.end())
            throw std::invalid_argument("unknown node: " + label);
        return it->second;
    }

    bool is_latent(int id) const { return latent_.at(static_cast<std::size_t>(id)); }
    bool is_latent(const std::string& label) const { return is_latent(index_of(label)); }

    const NodeSet& parents(int id) const { return parents_.at(static_cast<std::size_t>(id)); }
    const NodeSet& children(int id) const { return children_.at(static_cast<std::size_t>(id)); }

    bool has_edge(int from, int to) const {
        const NodeSet& c = children_.at(static_cast<std::size_t>(from));
        return std::binary_search(c.begin(), c.end(), to);
    }

    // Sorted by (from id, to id).
    const std::vector<std::pair<int, int>>& edges() const { return edges_; }

    Labels latent_labels() const {
        Labels out;
        for (std::size_t i = 0; i < labels_.size(); ++i)
            if (latent_[i]) out.push_back(labels_[i]);
        return out;
    }

    // Resolve a label set to a sorted unique id set; `role` names the
    // argument in error messages ("X", "Z", ...).
    NodeSet resolve(const Labels& labels, std::string_view role = "node set") const {
        NodeSet out;
        out.reserve(labels.size());
        for (const std::string& l : labels) {
            auto it = index_.find(l);
            if (it == index_.end())
                throw std::invalid_argument(std::string(role) + " references unknown node: " + l);
            out.push_back(it->second);
        }
        std::sort(out.begin(), out.end());
        out.erase(std::unique(out.begin(), out.end()), out.end());
        return out;
    }

    Labels render(const NodeSet& ids) const {
        Labels out;
        out.reserve(ids.size());
        for (int id : ids) out.push_back(label(id));
        return out;
    }

private:
    void require_acyclic() const {
        // Kahn's algorithm; on failure, walk the residual graph to report
        // one concrete cycle instead of a bare "graph is cyclic".
        std::vector<int> indeg(size(), 0);
        for (const auto& [f, t] : edges_) {
            (void)f;
            ++indeg[static_cast<std::size_t>(t)];
        }
        std::deque<int> ready;
        for (std::size_t i = 0; i < size(); ++i)
            if (indeg[i] == 0) ready.push_back(static_cast<int>(i));
        std::size_t seen = 0;
        while (!ready.empty()) {
            int v = ready.front();
            ready.pop_front();
            ++seen;
            for (int c : children_[static_cast<std::size_t>(v)])
                if (--indeg[static_cast<std::size_t>(c)] == 0) ready.push_back(c);
        }
        if (seen == size()) return;

        int start = -1;
        for (std::size_t i = 0; i < size(); ++i)
            if (indeg[i] > 0) {
                start = static_cast<int>(i);
                break;
            }
        std::vector<int> walk{start};
        std::vector<bool> on_walk(size(), false);
        on_walk[static_cast<std::size_t>(start)] = true;
        int cur = start;
        while (true) {
            int next = -1;
            for (int c : children_[static_cast<std::size_t>(cur)])
                if (indeg[static_cast<std::size_t>(c)] > 0) {
                    next = c;
                    break;
                }
            if (on_walk[static_cast<std::size_t>(next)]) {
                std::string msg = "graph contains a cycle: ";
                auto it = std::find(walk.begin(), walk.end(), next);
                for (; it != walk.end(); ++it) msg += label(*it) + " -> ";
                msg += label(next);
                throw std::invalid_argument(msg);
            }
            walk.push_back(next);
            on_walk[static_cast<std::size_t>(next)] = true;
            cur = next;
        }
    }

    Labels labels_;
    std::map<std::string, int> index_;
    std::vector<NodeSet> parents_, children_;
    std::vector<bool> latent_;
    std::vector<std::pair<int, int>> edges_;
};

// ---------------------------------------------------------------------------
// Graph surgery and ancestry
// ---------------------------------------------------------------------------

// New graph with all edges into `cut_incoming` and all edges out of
// `cut_outgoing` removed. Nodes and latent marks are untouched.
inline CausalDag mutilate(const CausalDag& dag,
                          const Labels& cut_incoming,
                          const Labels& cut_outgoing) {
    NodeSet in = dag.resolve(cut_incoming, "cut_incoming");
    NodeSet out = dag.resolve(cut_outgoing, "cut_outgoing");
    std::vector<std::pair<std::string, std::string>> kept;
    for (const auto& [f, t] : dag.edges()) {
        if (set_contains(in, t) || set_contains(out, f)) continue;
        kept.emplace_back(dag.label(f), dag.label(t));
    }
    return CausalDag(dag.labels(), std::move(kept), dag.latent_labels());
}

namespace detail {

inline NodeSet ancestor_ids(const CausalDag& dag, const NodeSet& targets) {
    std::vector<bool> hit(dag.size(), false);
    std::deque<int> work(targets.begin(), targets.end());
    while (!work.empty()) {
        int v = work.front();
        work.pop_front();
        for (int p : dag.parents(v))
            if (!hit[static_cast<std::size_t>(p)]) {
                hit[static_cast<std::size_t>(p)] = true;
                work.push_back(p);
            }
    }
    NodeSet out;
    for (std::size_t i = 0; i < dag.size(); ++i)
        if (hit[i] && !set_contains(targets, static_cast<int>(i)))
            out.push_back(static_cast<int>(i));
    return out;
}

inline NodeSet descendant_ids(const CausalDag& dag, const NodeSet& targets) {
    std::vector<bool> hit(dag.size(), false);
    std::deque<int> work(targets.begin(), targets.end());
    while (!work.empty()) {
        int v = work.front();
        work.pop_front();
        for (int c : dag.children(v))
            if (!hit[static_cast<std::size_t>(c)]) {
                hit[static_cast<std::size_t>(c)] = true;
                work.push_back(c);
            }
    }
    NodeSet out;
    for (std::size_t i = 0; i < dag.size(); ++i)
        if (hit[i] && !set_contains(targets, static_cast<int>(i)))
            out.push_back(static_cast<int>(i));
    return out;
}

}  // namespace detail

// Strict ancestors of any target node (targets themselves excluded).
inline Labels ancestors(const CausalDag& dag, const Labels& targets) {
    return dag.render(detail::ancestor_ids(dag, dag.resolve(targets, "targets")));
}

// Strict descendants of any target node (targets themselves excluded).
inline Labels descendants(const CausalDag& dag, const Labels& targets) {
    return dag.render(detail::descendant_ids(dag, dag.resolve(targets, "targets")));
}

// ---------------------------------------------------------------------------
// Paths
// ---------------------------------------------------------------------------

// A simple path, possibly against edge direction. forward[i] is true when
// the step nodes[i] .. nodes[i+1] follows an edge nodes[i] -> nodes[i+1].
struct GraphPath {
    Labels nodes;
    std::vector<bool> forward;

    std::size_t length() const { return forward.size(); }

    bool directed() const {
        return std::all_of(forward.begin(), forward.end(), [](bool f) { return f; });
    }

    // First step enters the start node (x <- ...): the back-door shape.
    bool starts_backward() const { return !forward.empty() && !forward.front(); }

    std::string to_string() const {
        std::string out = nodes.empty() ? std::string() : nodes.front();
        for (std::size_t i = 0; i < forward.size(); ++i) {
            out += forward[i] ? " -> " : " <- ";
            out += nodes[i + 1];
        }
        return out;
    }

    bool operator==(const GraphPath& other) const {
        return nodes == other.nodes && forward == other.forward;
    }
};

inline constexpr std::size_t kDefaultPathCap = 10000;

namespace detail {

struct IdPath {
    std::vector<int> nodes;
    std::vector<bool> forward;
};

// DFS emitting simple paths from x to y in lexicographic id-sequence order.
// Neighbor ids are visited in increasing order and a path is emitted the
// moment y is reached, so prefix paths precede their extensions.
inline void walk_paths(const CausalDag& dag, int x, int y, bool directed_only,
                       std::size_t cap, IdPath& cur, std::vector<bool>& used,
                       std::vector<IdPath>& out) {
    int v = cur.nodes.back();
    if (v == y) {
        if (out.size() >= cap)
            throw PathLimitError("path enumeration exceeded cap of " + std::to_string(cap));
        out.push_back(cur);
        return;
    }
    NodeSet steps = directed_only ? dag.children(v)
                                  : set_union(dag.children(v), dag.parents(v));
    for (int next : steps) {
        if (used[static_cast<std::size_t>(next)]) continue;
        // A child edge and a parent edge can join the same pair of nodes
        // only in a cyclic graph, so the direction flag is unambiguous.
        bool fwd = dag.has_edge(v, next);
        used[static_cast<std::size_t>(next)] = true;
        cur.nodes.push_back(next);
        cur.forward.push_back(fwd);
        walk_paths(dag, x, y, directed_only, cap, cur, used, out);
        cur.nodes.pop_back();
        cur.forward.pop_back();
        used[static_cast<std::size_t>(next)] = false;
    }
}

inline std::vector<IdPath> id_paths(const CausalDag& dag, int x, int y,
                                    bool directed_only, std::size_t cap) {
    std::vector<IdPath> out;
    std::vector<bool> used(dag.size(), false);
    used[static_cast<std::size_t>(x)] = true;
    IdPath cur;
    cur.nodes.push_back(x);
    walk_paths(dag, x, y, directed_only, cap, cur, used, out);
    return out;
}

inline GraphPath to_graph_path(const CausalDag& dag, const IdPath& p) {
    GraphPath out;
    out.nodes.reserve(p.nodes.size());
    for (int id : p.nodes) out.nodes.push_back(dag.label(id));
    out.forward = p.forward;
    return out;
}

// Blocking rules for one path given conditioning ids `z`:
//   collider (-> v <-): blocks unless v or a descendant of v is in z;
//   any other interior node: blocks exactly when it is in z.
inline bool id_path_blocked(const CausalDag& dag, const IdPath& p, const NodeSet& z) {
    for (std::size_t i = 1; i + 1 < p.nodes.size(); ++i) {
        int v = p.nodes[i];
        bool collider = p.forward[i - 1] && !p.forward[i];
        if (collider) {
            if (set_contains(z, v)) continue;
            NodeSet desc = descendant_ids(dag, NodeSet{v});
            if (sets_intersect(desc, z)) continue;
            return true;
        }
        if (set_contains(z, v)) return true;
    }
    return false;
}

inline void require_disjoint(const NodeSet& a, const NodeSet& b,
                             std::string_view what) {
    if (sets_intersect(a, b))
        throw std::invalid_argument(std::string("sets must be disjoint: ") + std::string(what));
}

}  // namespace detail

// All simple paths between x and y, ignoring edge direction.
inline std::vector<GraphPath> enumerate_paths(const CausalDag& dag,
                                              const std::string& x,
                                              const std::string& y,
                                              std::size_t cap = kDefaultPathCap) {
    int xi = dag.index_of(x);
    int yi = dag.index_of(y);
    if (xi == yi) throw std::invalid_argument("path query requires distinct endpoints");
    std::vector<GraphPath> out;
    for (const auto& p : detail::id_paths(dag, xi, yi, /*directed_only=*/false, cap))
        out.push_back(detail::to_graph_path(dag, p));
    return out;
}

// All directed (edge-following) paths from x to y.
inline std::vector<GraphPath> directed_paths(const CausalDag& dag,
                                             const std::string& x,
                                             const std::string& y,
                                             std::size_t cap = kDefaultPathCap) {
    int xi = dag.index_of(x);
    int yi = dag.index_of(y);
    if (xi == yi) throw std::invalid_argument("path query requires distinct endpoints");
    std::vector<GraphPath> out;
    for (const auto& p : detail::id_paths(dag, xi, yi, /*directed_only=*/true, cap))
        out.push_back(detail::to_graph_path(dag, p));
    return out;
}

// Paths from x to y whose first step enters x (x <- ...).
inline std::vector<GraphPath> backdoor_paths(const CausalDag& dag,
                                             const std::string& x,
                                             const std::string& y,
                                             std::size_t cap = kDefaultPathCap) {
    std::vector<GraphPath> out;
    for (GraphPath& p : enumerate_paths(dag, x, y, cap))
        if (p.starts_backward()) out.push_back(std::move(p));
    return out;
}

// True when the conditioning set z blocks the given path.
inline bool path_blocked(const CausalDag& dag, const GraphPath& path, const Labels& z) {
    detail::IdPath p;
    for (const std::string& l : path.nodes) p.nodes.push_back(dag.index_of(l));
    p.forward = path.forward;
    return detail::id_path_blocked(dag, p, dag.resolve(z, "Z"));
}

// d-separation of X from Y given Z, decided by reachability (Bayes-ball
// style traversal over (node, arrival-direction) states). Latent nodes are
// ordinary nodes here. The exhaustive path-based check lives in the test
// oracle; the two are verified against each other.
inline bool d_separated(const CausalDag& dag, const Labels& x_labels,
                        const Labels& y_labels, const Labels& z_labels) {
    NodeSet X = dag.resolve(x_labels, "X");
    NodeSet Y = dag.resolve(y_labels, "Y");
    NodeSet Z = dag.resolve(z_labels, "Z");
    if (X.empty() || Y.empty())
        throw std::invalid_argument("d-separation requires nonempty X and Y");
    detail::require_disjoint(X, Y, "X and Y");
    detail::require_disjoint(X, Z, "X and Z");
    detail::require_disjoint(Y, Z, "Y and Z");

    // A: nodes whose descendants reach Z (open colliders), Z included.
    NodeSet A = set_union(Z, detail::ancestor_ids(dag, Z));

    // State (v, up): arrived moving child -> parent; (v, down): parent -> child.
    enum { kUp = 0, kDown = 1 };
    std::vector<std::array<bool, 2>> visited(dag.size(), {false, false});
    std::deque<std::pair<int, int>> work;
    for (int x : X) work.emplace_back(x, kUp);

    while (!work.empty()) {
        auto [v, dir] = work.front();
        work.pop_front();
        if (visited[static_cast<std::size_t>(v)][static_cast<std::size_t>(dir)]) continue;
        visited[static_cast<std::size_t>(v)][static_cast<std::size_t>(dir)] = true;

        bool in_z = set_contains(Z, v);
        if (!in_z && set_contains(Y, v)) return false;

        if (dir == kUp && !in_z) {
            for (int p : dag.parents(v)) work.emplace_back(p, kUp);
            for (int c : dag.children(v)) work.emplace_back(c, kDown);
        } else if (dir == kDown) {
            if (!in_z)
                for (int c : dag.children(v)) work.emplace_back(c, kDown);
            if (set_contains(A, v))
                for (int p : dag.parents(v)) work.emplace_back(p, kUp);
        }
    }
    return true;
}

// Every unblocked path between the sets; the witness generator for failed
// separation claims. Empty exactly when d_separated holds.
inline std::vector<GraphPath> unblocked_paths(const CausalDag& dag,
                                              const Labels& x_labels,
                                              const Labels& y_labels,
                                              const Labels& z_labels,
                                              std::size_t cap = kDefaultPathCap) {
    NodeSet X = dag.resolve(x_labels, "X");
    NodeSet Y = dag.resolve(y_labels, "Y");
    NodeSet Z = dag.resolve(z_labels, "Z");
    detail::require_disjoint(X, Y, "X and Y");
    detail::require_disjoint(X, Z, "X and Z");
    detail::require_disjoint(Y, Z, "Y and Z");
    std::vector<GraphPath> out;
    for (int x : X)
        for (int y : Y)
            for (const auto& p : detail::id_paths(dag, x, y, /*directed_only=*/false, cap))
                if (!detail::id_path_blocked(dag, p, Z))
                    out.push_back(detail::to_graph_path(dag, p));
    return out;
}

// ---------------------------------------------------------------------------
// Canonical query/answer graphs used by the oracle tools and tests.
// Node declaration order is alphabetical so ids match label order.
// ---------------------------------------------------------------------------

// Query -> Answer with a latent common cause (the unadjusted bias setting).
inline CausalDag qa_direct_dag() {
    return CausalDag({"A", "Q", "U"},
                     {{"U", "Q"}, {"U", "A"}, {"Q", "A"}},
                     {"U"});
}

// A reasoning chain C mediates the query's effect on the answer.
inline CausalDag qa_chain_dag() {
    return CausalDag({"A", "C", "Q", "U"},
                     {{"U", "Q"}, {"U", "A"}, {"Q", "C"}, {"C", "A"}},
                     {"U"});
}

// Adds observable external knowledge E feeding both query and chain; the
// setting where the chain is a valid mediator only conditional on E.
inline CausalDag qa_knowledge_dag() {
    return CausalDag({"A", "C", "E", "Q", "U"},
                     {{"U", "Q"}, {"U", "A"}, {"E", "Q"}, {"E", "C"}, {"Q", "C"}, {"C", "A"}},
                     {"U"});
}

}  // namespace cfd::graph

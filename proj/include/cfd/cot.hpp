#pragma once

// Reasoning-chain machinery: sampling repeated chains through the gateway,
// embedding them, clustering with seeded k-means, and scoring how
// consistently each cluster's representative chain survives counterfactual
// knowledge. Everything downstream keys off cluster medoids (real samples),
// never centroids, so reported chains are always verbatim model output.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

#include "cfd/common.hpp"
#include "cfd/gateway.hpp"

namespace cfd::cot {

using Vec = std::vector<double>;

// ---------------------------------------------------------------------------
// Vector primitives
// ---------------------------------------------------------------------------

inline double dot(const Vec& a, const Vec& b) {
    if (a.size() != b.size())
        throw std::invalid_argument("vector dimensions differ: " + std::to_string(a.size()) +
                                    " vs " + std::to_string(b.size()));
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
    return s;
}

inline double norm(const Vec& a) { return std::sqrt(dot(a, a)); }

inline Vec l2_normalize(const Vec& a) {
    double n = norm(a);
    if (!(n > 0.0)) throw std::domain_error("cannot normalize a zero-length embedding");
    Vec out(a.size());
    for (std::size_t i = 0; i < a.size(); ++i) out[i] = a[i] / n;
    return out;
}

inline double cosine(const Vec& a, const Vec& b) {
    double na = norm(a), nb = norm(b);
    if (!(na > 0.0) || !(nb > 0.0))
        throw std::domain_error("cosine of a zero-length embedding is undefined");
    return dot(a, b) / (na * nb);
}

inline double squared_distance(const Vec& a, const Vec& b) {
    if (a.size() != b.size()) throw std::invalid_argument("vector dimensions differ");
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        double d = a[i] - b[i];
        s += d * d;
    }
    return s;
}

// ---------------------------------------------------------------------------
// Contrastive alignment loss. Similarities are cosines; the loss is
//   -log( exp(sim(a,p)/tau) / (exp(sim(a,p)/tau) + sum_i exp(sim(a,n_i)/tau)) )
// evaluated through a log-sum-exp so tiny temperatures cannot overflow.
// All similarities equal gives exactly log(K + 1) for K negatives.
// ---------------------------------------------------------------------------

inline double infonce_loss(const Vec& anchor, const Vec& positive,
                           const std::vector<Vec>& negatives, double tau) {
    if (!(tau > 0.0)) throw std::invalid_argument("temperature must be positive");
    std::vector<double> logits;
    logits.push_back(cosine(anchor, positive) / tau);
    for (const Vec& n : negatives) logits.push_back(cosine(anchor, n) / tau);
    double peak = *std::max_element(logits.begin(), logits.end());
    double sum = 0.0;
    for (double l : logits) sum += std::exp(l - peak);
    double lse = peak + std::log(sum);
    return lse - logits.front();
}

// ---------------------------------------------------------------------------
// Seeded k-means with k-means++ initialization. Euclidean metric, at most
// 100 sweeps, stopping when no centroid moves more than 1e-6. Ties always
// resolve to the lowest index, and an emptied cluster is repaired by taking
// the point currently farthest from its own centroid (from a cluster that
// can spare one), so the result is a deterministic function of (points,
// k, seed).
// ---------------------------------------------------------------------------

struct ClusterSet {
    std::vector<std::size_t> assignments;  // point index -> cluster
    std::vector<Vec> centroids;
    std::vector<std::size_t> medoid_indices;  // cluster -> point index

    std::size_t cluster_count() const { return centroids.size(); }

    std::vector<std::size_t> members(std::size_t cluster) const {
        std::vector<std::size_t> out;
        for (std::size_t i = 0; i < assignments.size(); ++i)
            if (assignments[i] == cluster) out.push_back(i);
        return out;
    }
};

namespace detail {

inline std::vector<Vec> kmeanspp_init(const std::vector<Vec>& points, std::size_t k, Rng& rng) {
    std::vector<Vec> centers;
    centers.push_back(points[uniform_index(rng, points.size())]);
    std::vector<double> d2(points.size());
    while (centers.size() < k) {
        double total = 0.0;
        for (std::size_t i = 0; i < points.size(); ++i) {
            double best = std::numeric_limits<double>::infinity();
            for (const Vec& c : centers) best = std::min(best, squared_distance(points[i], c));
            d2[i] = best;
            total += best;
        }
        std::size_t pick;
        if (total > 0.0) {
            double r = uniform01(rng) * total;
            double acc = 0.0;
            pick = points.size() - 1;
            for (std::size_t i = 0; i < points.size(); ++i) {
                acc += d2[i];
                if (r < acc) {
                    pick = i;
                    break;
                }
            }
        } else {
            pick = uniform_index(rng, points.size());  // all points coincide
        }
        centers.push_back(points[pick]);
    }
    return centers;
}

}  // namespace detail

inline ClusterSet kmeans(const std::vector<Vec>& points, std::size_t k, std::uint64_t seed) {
    if (k == 0) throw std::invalid_argument("cluster count must be >= 1");
    if (points.size() < k)
        throw std::invalid_argument("cannot form " + std::to_string(k) + " clusters from " +
                                    std::to_string(points.size()) + " points");
    for (const Vec& p : points)
        if (p.size() != points.front().size())
            throw std::invalid_argument("points have inconsistent dimensions");

    Rng rng(seed);
    std::vector<Vec> centers = detail::kmeanspp_init(points, k, rng);
    std::vector<std::size_t> assign(points.size(), 0);

    for (int iter = 0; iter < 100; ++iter) {
        // Assignment step; ties go to the lower cluster index.
        for (std::size_t i = 0; i < points.size(); ++i) {
            std::size_t best = 0;
            double best_d = squared_distance(points[i], centers[0]);
            for (std::size_t c = 1; c < k; ++c) {
                double d = squared_distance(points[i], centers[c]);
                if (d < best_d) {
                    best_d = d;
                    best = c;
                }
            }
            assign[i] = best;
        }

        // Repair empty clusters with the globally worst-fit point from any
        // cluster that can spare one; ties go to the lowest point index.
        std::vector<std::size_t> sizes(k, 0);
        for (std::size_t a : assign) ++sizes[a];
        for (std::size_t c = 0; c < k; ++c) {
            if (sizes[c] > 0) continue;
            std::size_t worst = points.size();
            double worst_d = -1.0;
            for (std::size_t i = 0; i < points.size(); ++i) {
                if (sizes[assign[i]] < 2) continue;
                double d = squared_distance(points[i], centers[assign[i]]);
                if (d > worst_d) {
                    worst_d = d;
                    worst = i;
                }
            }
            if (worst == points.size()) continue;  // everything is a singleton
            --sizes[assign[worst]];
            assign[worst] = c;
            ++sizes[c];
        }

        // Update step.
        double shift = 0.0;
        for (std::size_t c = 0; c < k; ++c) {
            Vec mean(points.front().size(), 0.0);
            std::size_t count = 0;
            for (std::size_t i = 0; i < points.size(); ++i) {
                if (assign[i] != c) continue;
                for (std::size_t d = 0; d < mean.size(); ++d) mean[d] += points[i][d];
                ++count;
            }
            if (count == 0) continue;
            for (double& v : mean) v /= static_cast<double>(count);
            shift = std::max(shift, std::sqrt(squared_distance(mean, centers[c])));
            centers[c] = std::move(mean);
        }
        if (shift < 1e-6) break;
    }

    ClusterSet set;
    set.assignments = std::move(assign);
    set.centroids = std::move(centers);
    set.medoid_indices.assign(k, points.size());
    for (std::size_t c = 0; c < k; ++c) {
        double best_d = std::numeric_limits<double>::infinity();
        for (std::size_t i = 0; i < points.size(); ++i) {
            if (set.assignments[i] != c) continue;
            double d = squared_distance(points[i], set.centroids[c]);
            if (d < best_d) {
                best_d = d;
                set.medoid_indices[c] = i;
            }
        }
        if (set.medoid_indices[c] == points.size())
            throw std::logic_error("cluster " + std::to_string(c) + " ended up empty");
    }
    return set;
}

// ---------------------------------------------------------------------------
// Chain sampling and embedding
// ---------------------------------------------------------------------------

struct CotSample {
    std::string text;
    std::size_t repetition = 0;
};

// M independent samples under one key, repetitions 0..M-1, dispatched as a
// single batch so the gateway can run them concurrently.
inline std::vector<CotSample> sample_cots(gateway::Gateway& gw, const std::string& template_id,
                                          const std::map<std::string, std::string>& variables,
                                          const std::string& key, std::size_t m,
                                          double temperature) {
    if (m == 0) throw std::invalid_argument("sample count must be >= 1");
    std::vector<gateway::ChatRequest> requests(m);
    for (std::size_t i = 0; i < m; ++i) {
        requests[i].template_id = template_id;
        requests[i].variables = variables;
        requests[i].key = key;
        requests[i].repetition = i;
        requests[i].temperature = temperature;
    }
    std::vector<gateway::ChatReply> replies = gw.chat_batch(requests);
    std::vector<CotSample> out(m);
    for (std::size_t i = 0; i < m; ++i) out[i] = CotSample{std::move(replies[i].text), i};
    return out;
}

// Embeddings normalized to unit length; dimension consistency enforced here
// so later stages can assume it.
inline std::vector<Vec> embed(gateway::Gateway& gw, const std::vector<std::string>& texts) {
    std::vector<Vec> raw = gw.embed_batch(texts);
    std::vector<Vec> out;
    out.reserve(raw.size());
    for (std::size_t i = 0; i < raw.size(); ++i) {
        if (raw[i].size() != raw.front().size())
            throw std::runtime_error("embedding dimensions are inconsistent within a batch");
        out.push_back(l2_normalize(raw[i]));
    }
    return out;
}

inline ClusterSet cluster_texts(gateway::Gateway& gw, const std::vector<std::string>& texts,
                                std::size_t k, std::uint64_t seed) {
    return kmeans(embed(gw, texts), k, seed);
}

// ---------------------------------------------------------------------------
// Consistency: does a cluster's representative chain persist under a
// knowledge variant? Each of the P variant chains votes 1 iff its cosine to
// the medoid reaches the threshold (the boundary itself counts), and the
// probability is the exact vote fraction count/P.
// ---------------------------------------------------------------------------

struct ConsistencyRecord {
    std::size_t cluster = 0;
    std::size_t variant = 0;
    std::vector<int> indicators;  // one per variant chain, 0 or 1
    double probability = 0.0;     // sum(indicators) / P
};

inline ConsistencyRecord consistency_prob(const Vec& medoid,
                                          const std::vector<Vec>& variant_chains,
                                          double threshold) {
    if (variant_chains.empty())
        throw std::invalid_argument("consistency needs at least one variant chain");
    ConsistencyRecord rec;
    std::size_t count = 0;
    for (const Vec& chain : variant_chains) {
        int vote = cosine(chain, medoid) >= threshold ? 1 : 0;
        rec.indicators.push_back(vote);
        count += static_cast<std::size_t>(vote);
    }
    rec.probability =
        static_cast<double>(count) / static_cast<double>(variant_chains.size());
    return rec;
}

// Full cluster-by-variant table, indexed [cluster][variant].
inline std::vector<std::vector<ConsistencyRecord>> consistency_table(
    const std::vector<Vec>& medoids, const std::vector<std::vector<Vec>>& variant_chains,
    double threshold) {
    std::vector<std::vector<ConsistencyRecord>> table(medoids.size());
    for (std::size_t n = 0; n < medoids.size(); ++n) {
        for (std::size_t t = 0; t < variant_chains.size(); ++t) {
            ConsistencyRecord rec = consistency_prob(medoids[n], variant_chains[t], threshold);
            rec.cluster = n;
            rec.variant = t;
            table[n].push_back(std::move(rec));
        }
    }
    return table;
}

}  // namespace cfd::cot

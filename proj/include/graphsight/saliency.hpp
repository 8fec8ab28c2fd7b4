#pragma once

// Stage-two interpretation of a trained classifier: evidence for the correct
// class per community sub-graph, per-node importance aggregated from it, and
// mean absolute input gradients per node attribute.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include "graphsight/autodiff.hpp"
#include "graphsight/community.hpp"
#include "graphsight/error.hpp"
#include "graphsight/graph.hpp"
#include "graphsight/model.hpp"
#include "graphsight/trainer.hpp"

namespace graphsight {

/// p ← (p·S + 1)/(S + 2)
inline double laplace_correct(double p, std::size_t s) {
    const double n = static_cast<double>(s);
    return (p * n + 1.0) / (n + 2.0);
}

/// tanh(log2(p / (1 - p))) of an already corrected probability.
inline double ecc_term(double p) { return std::tanh(std::log2(p / (1.0 - p))); }

/// ECC from the raw probabilities each instance assigns to its correct class.
inline double ecc_from_probabilities(std::span<const double> p_correct) {
    if (p_correct.empty()) throw invalid_input("ecc: no instances");
    double s = 0.0;
    for (double p : p_correct) s += ecc_term(laplace_correct(p, p_correct.size()));
    return s / static_cast<double>(p_correct.size());
}

struct ecc_score {
    std::size_t community = 0;
    double score = 0.0;
    std::vector<double> contributions;  // per instance, before averaging
};

/// Scores every non-degenerate community on `train` (already normalized).
/// Degenerate communities are skipped.
inline std::vector<ecc_score> ecc(const gnn_model& m, const std::vector<community>& communities,
                                  const graph_dataset& train) {
    const std::size_t s = train.graphs.size();
    if (s == 0) throw invalid_input("ecc: empty training set");
    std::vector<ecc_score> out;
    for (const auto& c : communities) {
        if (c.degenerate || c.members.empty()) continue;
        const subgraph_index idx(c.members);
        ecc_score e;
        e.community = c.j;
        for (const auto& g : train.graphs) {
            const auto p = predict(m, slice_subgraph(g, idx));
            const double term = ecc_term(laplace_correct(p[static_cast<std::size_t>(g.label)], s));
            e.contributions.push_back(term);
            e.score += term;
        }
        e.score /= static_cast<double>(s);
        out.push_back(std::move(e));
    }
    return out;
}

/// Communities paired with their scores, best first.
inline std::vector<ecc_score> rank_by_ecc(std::vector<ecc_score> scores) {
    std::stable_sort(scores.begin(), scores.end(),
                     [](const ecc_score& a, const ecc_score& b) { return a.score > b.score; });
    return scores;
}

struct node_importance {
    std::vector<double> score;        // per node
    std::vector<std::size_t> order;   // nodes by descending score, index tie-break
    std::vector<std::size_t> rank;    // rank[node], 1-based
};

/// score_k = Σ_{j : k ∈ i_j} ECC_j / |i_j|
inline node_importance compute_node_importance(const std::vector<ecc_score>& eccs,
                                               const std::vector<community>& communities, std::size_t n) {
    node_importance out;
    out.score.assign(n, 0.0);
    for (const auto& e : eccs) {
        const auto it = std::find_if(communities.begin(), communities.end(),
                                     [&](const community& c) { return c.j == e.community; });
        if (it == communities.end()) throw invalid_input("node_importance: ECC without a community");
        if (it->members.empty()) continue;
        const double share = e.score / static_cast<double>(it->members.size());
        for (std::size_t k : it->members) {
            if (k >= n) throw invalid_input("node_importance: member outside graph");
            out.score[k] += share;
        }
    }
    out.order.resize(n);
    std::iota(out.order.begin(), out.order.end(), 0);
    std::stable_sort(out.order.begin(), out.order.end(),
                     [&](std::size_t a, std::size_t b) { return out.score[a] > out.score[b]; });
    out.rank.assign(n, 0);
    for (std::size_t r = 0; r < n; ++r) out.rank[out.order[r]] = r + 1;
    return out;
}

struct attribute_importance {
    std::vector<double> raw;       // mean |∂p(c=1|G)/∂v_ij| per attribute j
    std::vector<double> relative;  // raw / max(raw)
    std::size_t excluded = 0;      // graphs dropped for non-finite gradients
    bool normalized = false;       // false when every score is zero
};

/// Absolute input gradient of p(c=1|G) with respect to one graph's node
/// attributes, averaged over nodes.
inline std::vector<double> node_attribute_gradient(const gnn_model& m, const brain_graph& g) {
    ad::tape t;
    model_vars v = bind_model(t, m, false);
    graph_vars gv = bind_graph(t, g, true, m.config.edge_dim);
    ad::var p1 = ad::element(model_forward(v, m.config, gv).probs, 0, 1);
    t.backward(p1);
    const tensor& grad = gv.nodes.grad();
    std::vector<double> out(g.node_dim(), 0.0);
    for (std::size_t r = 0; r < grad.rows(); ++r)
        for (std::size_t c = 0; c < grad.cols(); ++c) out[c] += std::abs(grad(r, c));
    for (auto& x : out) x /= static_cast<double>(g.n_nodes());
    return out;
}

inline attribute_importance gradient_explanation(const gnn_model& m, const graph_dataset& train) {
    if (train.graphs.empty()) throw invalid_input("gradient_explanation: empty dataset");
    attribute_importance out;
    const std::size_t d = train.graphs.front().node_dim();
    out.raw.assign(d, 0.0);
    std::size_t used = 0;
    for (const auto& g : train.graphs) {
        const auto gi = node_attribute_gradient(m, g);
        if (!std::all_of(gi.begin(), gi.end(), [](double x) { return std::isfinite(x); })) {
            ++out.excluded;
            continue;
        }
        for (std::size_t c = 0; c < d; ++c) out.raw[c] += gi[c];
        ++used;
    }
    if (used > 0)
        for (auto& x : out.raw) x /= static_cast<double>(used);
    const double mx = *std::max_element(out.raw.begin(), out.raw.end());
    out.relative.assign(d, 0.0);
    if (mx > 0.0) {
        out.normalized = true;
        for (std::size_t c = 0; c < d; ++c) out.relative[c] = out.raw[c] / mx;
    }
    return out;
}

struct retrain_check {
    std::vector<std::size_t> nodes;  // union of the sliced communities
    metrics sliced;
    metrics full;
};

/// Trains a fresh model on every graph restricted to `nodes` and compares its
/// held-out metrics with the full-graph model's.
inline retrain_check subgraph_retrain_check(const std::vector<std::size_t>& nodes, const graph_dataset& raw,
                                            const fold_split& split, const model_config& mc,
                                            const train_config& tc, std::uint64_t init_seed,
                                            const metrics& full) {
    if (nodes.empty()) throw invalid_input("subgraph_retrain_check: node union is empty");
    const auto idx = subgraph_index::from_unsorted(nodes);
    graph_dataset sliced;
    sliced.meta = raw.meta;
    for (const auto& g : raw.graphs) sliced.graphs.push_back(slice_subgraph(g, idx));
    retrain_check out;
    out.nodes = idx.indices();
    out.full = full;
    out.sliced = run_fold(sliced, split, 0, mc, tc, init_seed).test;
    return out;
}

/// Union of the members of the `count` best-scoring communities.
inline std::vector<std::size_t> top_community_nodes(const std::vector<ecc_score>& scores,
                                                    const std::vector<community>& communities, std::size_t count) {
    std::vector<std::size_t> nodes;
    const auto ranked = rank_by_ecc(scores);
    for (std::size_t k = 0; k < std::min(count, ranked.size()); ++k)
        for (const auto& c : communities)
            if (c.j == ranked[k].community) nodes.insert(nodes.end(), c.members.begin(), c.members.end());
    std::sort(nodes.begin(), nodes.end());
    nodes.erase(std::unique(nodes.begin(), nodes.end()), nodes.end());
    return nodes;
}

}  // namespace graphsight

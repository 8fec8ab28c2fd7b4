#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "graphsight/error.hpp"
#include "graphsight/tensor.hpp"

namespace graphsight {

/// Node attribute columns, in storage order.
namespace node_attr {
inline constexpr std::size_t degree = 0;
inline constexpr std::size_t beta1 = 1;
inline constexpr std::size_t beta2 = 2;
inline constexpr std::size_t beta3 = 3;
inline constexpr std::size_t beta4 = 4;
inline constexpr std::size_t tf_mean = 5;
inline constexpr std::size_t tf_std = 6;
inline constexpr std::size_t x = 7;
inline constexpr std::size_t y = 8;
inline constexpr std::size_t z = 9;
inline constexpr std::size_t count = 10;
inline constexpr std::array<std::string_view, count> names = {
    "degree", "beta1", "beta2", "beta3", "beta4", "tf_mean", "tf_std", "x", "y", "z"};
}  // namespace node_attr

/// Edge attribute columns, in storage order.
namespace edge_attr {
inline constexpr std::size_t pearson = 0;
inline constexpr std::size_t partial = 1;
inline constexpr std::size_t distance = 2;  // exp(-r/10)
inline constexpr std::size_t count = 3;
}  // namespace edge_attr

/// Undirected edge stored once with i < j.
struct edge {
    std::size_t i = 0;
    std::size_t j = 0;
    std::vector<double> attr;

    bool operator==(const edge&) const = default;
};

inline edge make_edge(std::size_t a, std::size_t b, std::vector<double> attr) {
    if (a == b) throw invalid_input("self loop on node " + std::to_string(a));
    return a < b ? edge{a, b, std::move(attr)} : edge{b, a, std::move(attr)};
}

/// Attributed undirected multigraph: one node-attribute row per region, one
/// attribute vector per edge.
struct brain_graph {
    tensor nodes;  // N×D
    std::vector<edge> edges;
    std::string subject_id;
    int label = 0;  // 0 = control, 1 = case

    std::size_t n_nodes() const noexcept { return nodes.rows(); }
    std::size_t node_dim() const noexcept { return nodes.cols(); }
    std::size_t edge_dim() const noexcept { return edges.empty() ? 0 : edges.front().attr.size(); }

    /// Attribute vector of edge {a,b} regardless of argument order.
    const std::vector<double>* find_edge(std::size_t a, std::size_t b) const {
        if (a > b) std::swap(a, b);
        for (const auto& e : edges)
            if (e.i == a && e.j == b) return &e.attr;
        return nullptr;
    }

    /// Throws invalid_input describing the first violated invariant.
    void validate() const {
        if (n_nodes() < 1) throw invalid_input("graph '" + subject_id + "' has no nodes");
        if (label != 0 && label != 1) throw invalid_input("graph '" + subject_id + "' label must be 0 or 1");
        const std::size_t f = edge_dim();
        for (const auto& e : edges) {
            if (!(e.i < e.j) || e.j >= n_nodes())
                throw invalid_input("graph '" + subject_id + "' edge (" + std::to_string(e.i) + "," +
                                    std::to_string(e.j) + ") invalid for N=" + std::to_string(n_nodes()));
            if (e.attr.size() != f) throw invalid_input("graph '" + subject_id + "' has ragged edge attributes");
            if (f == edge_attr::count) {
                const double p = e.attr[edge_attr::pearson];
                const double d = e.attr[edge_attr::distance];
                if (!(p >= -1.0 && p <= 1.0)) throw invalid_input("pearson attribute outside [-1,1]");
                if (!(d > 0.0 && d <= 1.0)) throw invalid_input("distance kernel outside (0,1]");
            }
        }
    }

    bool operator==(const brain_graph&) const = default;
};

struct dataset_meta {
    std::uint64_t seed = 0;
    std::size_t node_dim = node_attr::count;
    std::size_t edge_dim = edge_attr::count;
    std::string generator = "graphsight-synthetic/1";
    std::string notes;

    bool operator==(const dataset_meta&) const = default;
};

/// Per-column Box-Cox power transform followed by z-scoring. Fitted by
/// boxcox_fit (boxcox.hpp) on a training split.
struct boxcox_column {
    double lambda = 1.0;
    double shift = 0.0;      // added before the power transform
    double mean = 0.0;       // of the transformed training column
    double std = 1.0;        // population std of the transformed training column
    double train_min = 0.0;  // smallest raw training value, used for clamping
    bool degenerate = false; // constant column: identity transform

    bool operator==(const boxcox_column&) const = default;
};

struct boxcox_params {
    std::vector<boxcox_column> columns;

    bool operator==(const boxcox_params&) const = default;
};

struct graph_dataset {
    std::vector<brain_graph> graphs;
    std::optional<boxcox_params> boxcox;  // set once normalized
    dataset_meta meta;

    std::size_t size() const noexcept { return graphs.size(); }

    void validate() const {
        for (const auto& g : graphs) {
            g.validate();
            if (g.node_dim() != meta.node_dim)
                throw invalid_input("graph '" + g.subject_id + "' node width " + std::to_string(g.node_dim()) +
                                    " differs from dataset width " + std::to_string(meta.node_dim));
            if (!g.edges.empty() && g.edge_dim() != meta.edge_dim)
                throw invalid_input("graph '" + g.subject_id + "' edge width differs from dataset width");
        }
    }

    /// Graphs at the given positions, in that order.
    graph_dataset subset(const std::vector<std::size_t>& idx) const {
        graph_dataset out;
        out.meta = meta;
        out.boxcox = boxcox;
        out.graphs.reserve(idx.size());
        for (std::size_t i : idx) out.graphs.push_back(graphs.at(i));
        return out;
    }
};

/// Strictly increasing, nonempty list of node positions in a parent graph.
class subgraph_index {
public:
    explicit subgraph_index(std::vector<std::size_t> idx) : idx_(std::move(idx)) {
        if (idx_.empty()) throw invalid_input("subgraph index is empty");
        for (std::size_t k = 1; k < idx_.size(); ++k)
            if (idx_[k] <= idx_[k - 1]) throw invalid_input("subgraph index must be strictly increasing");
    }

    /// Sorts and deduplicates.
    static subgraph_index from_unsorted(std::vector<std::size_t> idx) {
        std::sort(idx.begin(), idx.end());
        idx.erase(std::unique(idx.begin(), idx.end()), idx.end());
        return subgraph_index(std::move(idx));
    }

    static subgraph_index all(std::size_t n) {
        std::vector<std::size_t> v(n);
        for (std::size_t k = 0; k < n; ++k) v[k] = k;
        return subgraph_index(std::move(v));
    }

    const std::vector<std::size_t>& indices() const noexcept { return idx_; }
    std::size_t size() const noexcept { return idx_.size(); }
    std::size_t operator[](std::size_t k) const { return idx_[k]; }

private:
    std::vector<std::size_t> idx_;
};

/// Induced sub-graph on `idx`; endpoints renumbered by rank within idx.
inline brain_graph slice_subgraph(const brain_graph& g, const subgraph_index& idx) {
    const auto& ids = idx.indices();
    if (ids.back() >= g.n_nodes())
        throw invalid_input("subgraph index " + std::to_string(ids.back()) + " out of range for N=" +
                            std::to_string(g.n_nodes()));
    constexpr std::size_t absent = static_cast<std::size_t>(-1);
    std::vector<std::size_t> pos(g.n_nodes(), absent);
    for (std::size_t k = 0; k < ids.size(); ++k) pos[ids[k]] = k;

    brain_graph out;
    out.subject_id = g.subject_id;
    out.label = g.label;
    out.nodes = tensor(ids.size(), g.node_dim());
    for (std::size_t k = 0; k < ids.size(); ++k)
        std::copy(g.nodes.row(ids[k]).begin(), g.nodes.row(ids[k]).end(), out.nodes.row(k).begin());
    for (const auto& e : g.edges)
        if (pos[e.i] != absent && pos[e.j] != absent) out.edges.push_back(make_edge(pos[e.i], pos[e.j], e.attr));
    std::sort(out.edges.begin(), out.edges.end(),
              [](const edge& a, const edge& b) { return a.i != b.i ? a.i < b.i : a.j < b.j; });
    return out;
}

/// Nearest-rank percentile of `values` (p in [0,100)).
inline double nearest_rank_percentile(std::vector<double> values, double p) {
    if (values.empty()) throw invalid_input("percentile of empty set");
    if (!(p >= 0.0 && p < 100.0)) throw invalid_input("percentile must lie in [0,100)");
    std::sort(values.begin(), values.end());
    auto rank = static_cast<std::size_t>(std::ceil(p / 100.0 * static_cast<double>(values.size())));
    rank = std::max<std::size_t>(rank, 1);
    return values[rank - 1];
}

/// Number of strongest values kept by an upper-tail cut at percentile p:
/// ceil((100-p)% of n), at least 1.
inline std::size_t upper_tail_count(double p, std::size_t n) {
    const double x = (100.0 - p) * static_cast<double>(n) / 100.0;
    auto k = static_cast<std::size_t>(std::ceil(x - 1e-9 * std::max(1.0, x)));
    return std::clamp<std::size_t>(k, 1, n);
}

/// Keeps the strongest (100-p)% of edges by partial correlation. The cut is
/// the value of the last kept edge and every edge tied with it is kept too.
inline brain_graph sparsify_edges(const brain_graph& g, double percentile = 95.0) {
    if (g.edges.empty()) throw invalid_input("sparsify_edges: graph has no edges");
    if (!(percentile >= 0.0 && percentile < 100.0)) throw invalid_input("percentile must lie in [0,100)");
    std::vector<double> pc;
    pc.reserve(g.edges.size());
    for (const auto& e : g.edges) pc.push_back(e.attr.at(edge_attr::partial));
    std::sort(pc.begin(), pc.end(), std::greater<>());
    const double threshold = pc[upper_tail_count(percentile, pc.size()) - 1];
    brain_graph out;
    out.nodes = g.nodes;
    out.subject_id = g.subject_id;
    out.label = g.label;
    for (const auto& e : g.edges)
        if (e.attr[edge_attr::partial] >= threshold) out.edges.push_back(e);
    return out;
}

/// Number of incident edges per node.
inline std::vector<double> degree_feature(const brain_graph& g) {
    std::vector<double> deg(g.n_nodes(), 0.0);
    for (const auto& e : g.edges) {
        deg[e.i] += 1.0;
        deg[e.j] += 1.0;
    }
    return deg;
}

/// Writes degree_feature(g) into the degree column and returns it.
inline std::vector<double> set_degree_feature(brain_graph& g) {
    auto deg = degree_feature(g);
    for (std::size_t k = 0; k < deg.size(); ++k) g.nodes(k, node_attr::degree) = deg[k];
    return deg;
}

}  // namespace graphsight

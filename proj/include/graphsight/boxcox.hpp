#pragma once

// Box-Cox normalization of node attributes. Power parameters are fitted per
// column by maximizing the profile log-likelihood over a fixed grid, then the
// transformed column is z-scored with training statistics.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <span>
#include <vector>

#include "graphsight/error.hpp"
#include "graphsight/graph.hpp"

namespace graphsight {

namespace boxcox_grid {
inline constexpr int steps = 400;         // [-2, 2] in steps of 0.01
inline constexpr double epsilon = 1e-6;   // positivity margin for the shift
inline double lambda_at(int k) { return static_cast<double>(k - steps / 2) / 100.0; }
}  // namespace boxcox_grid

/// ((x+shift)^λ - 1)/λ, or log(x+shift) at λ = 0.
inline double boxcox_transform(double x, double lambda, double shift) {
    const double v = x + shift;
    if (lambda == 0.0) return std::log(v);
    return (std::pow(v, lambda) - 1.0) / lambda;
}

/// Profile log-likelihood of the Box-Cox family at λ, up to a constant:
/// (λ-1)·Σ log(x+shift) - n/2 · log(var of transformed values).
inline double boxcox_profile_loglik(std::span<const double> log_values, double lambda) {
    const double n = static_cast<double>(log_values.size());
    double sum_log = 0.0, mean = 0.0;
    std::vector<double> y(log_values.size());
    for (std::size_t k = 0; k < y.size(); ++k) {
        sum_log += log_values[k];
        y[k] = lambda == 0.0 ? log_values[k] : std::expm1(lambda * log_values[k]) / lambda;
        mean += y[k];
    }
    mean /= n;
    double var = 0.0;
    for (double v : y) var += (v - mean) * (v - mean);
    var /= n;
    if (!(var > 0.0)) return -std::numeric_limits<double>::infinity();
    return (lambda - 1.0) * sum_log - 0.5 * n * std::log(var);
}

/// Fits one column. Constant columns come back as an identity transform with
/// the degenerate flag set.
inline boxcox_column boxcox_fit_column(std::span<const double> values) {
    if (values.empty()) throw invalid_input("boxcox_fit: empty column");
    boxcox_column col;
    const auto [lo, hi] = std::minmax_element(values.begin(), values.end());
    col.train_min = *lo;
    if (*lo == *hi) {
        col.degenerate = true;
        col.lambda = 1.0;
        col.shift = 0.0;
        col.mean = 0.0;
        col.std = 1.0;
        return col;
    }
    col.shift = std::max(0.0, boxcox_grid::epsilon - *lo);
    std::vector<double> logs(values.size());
    for (std::size_t k = 0; k < values.size(); ++k) logs[k] = std::log(values[k] + col.shift);

    double best = -std::numeric_limits<double>::infinity();
    for (int k = 0; k <= boxcox_grid::steps; ++k) {
        const double lam = boxcox_grid::lambda_at(k);
        const double ll = boxcox_profile_loglik(logs, lam);
        if (ll > best) {
            best = ll;
            col.lambda = lam;
        }
    }

    double mean = 0.0;
    std::vector<double> y(values.size());
    for (std::size_t k = 0; k < values.size(); ++k) {
        y[k] = boxcox_transform(values[k], col.lambda, col.shift);
        mean += y[k];
    }
    mean /= static_cast<double>(y.size());
    double var = 0.0;
    for (double v : y) var += (v - mean) * (v - mean);
    var /= static_cast<double>(y.size());
    col.mean = mean;
    col.std = std::sqrt(var);
    if (!(col.std > 0.0)) {
        col.degenerate = true;
        col.lambda = 1.0;
        col.shift = 0.0;
        col.mean = 0.0;
        col.std = 1.0;
    }
    return col;
}

/// Fits every node-attribute column over all nodes of all training graphs.
inline boxcox_params boxcox_fit(const graph_dataset& train) {
    if (train.graphs.empty()) throw invalid_input("boxcox_fit: training set is empty");
    const std::size_t d = train.graphs.front().node_dim();
    std::vector<std::vector<double>> cols(d);
    for (const auto& g : train.graphs) {
        if (g.node_dim() != d) throw invalid_input("boxcox_fit: graphs disagree on node width");
        for (std::size_t r = 0; r < g.n_nodes(); ++r)
            for (std::size_t c = 0; c < d; ++c) cols[c].push_back(g.nodes(r, c));
    }
    boxcox_params p;
    for (const auto& c : cols) p.columns.push_back(boxcox_fit_column(c));
    return p;
}

inline double boxcox_apply_value(double x, const boxcox_column& col, std::size_t* clamped = nullptr) {
    if (col.degenerate) return x;
    if (!(x + col.shift > 0.0)) {
        x = col.train_min;
        if (clamped) ++*clamped;
    }
    return (boxcox_transform(x, col.lambda, col.shift) - col.mean) / col.std;
}

/// Maps every node attribute through its fitted column transform. Values
/// outside the transform's domain are clamped to the smallest training value
/// and counted in `clamped`.
inline graph_dataset boxcox_apply(const graph_dataset& ds, const boxcox_params& p, std::size_t* clamped = nullptr) {
    graph_dataset out = ds;
    for (auto& g : out.graphs) {
        if (g.node_dim() != p.columns.size())
            throw invalid_input("boxcox_apply: node width " + std::to_string(g.node_dim()) +
                                " does not match fitted width " + std::to_string(p.columns.size()));
        for (std::size_t r = 0; r < g.n_nodes(); ++r)
            for (std::size_t c = 0; c < g.node_dim(); ++c) g.nodes(r, c) = boxcox_apply_value(g.nodes(r, c), p.columns[c], clamped);
    }
    out.boxcox = p;
    return out;
}

/// Single-graph form used when slicing or explaining individual inputs.
inline brain_graph boxcox_apply(const brain_graph& g, const boxcox_params& p) {
    if (g.node_dim() != p.columns.size()) throw invalid_input("boxcox_apply: node width mismatch");
    brain_graph out = g;
    for (std::size_t r = 0; r < out.n_nodes(); ++r)
        for (std::size_t c = 0; c < out.node_dim(); ++c) out.nodes(r, c) = boxcox_apply_value(out.nodes(r, c), p.columns[c]);
    return out;
}

}  // namespace graphsight

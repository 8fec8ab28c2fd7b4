#pragma once

// Random graphs and a whole-model gradient check: every parameter, node
// attribute and edge attribute of the full training loss against central
// differences.

#include <cstddef>
#include <span>
#include <vector>

#include "graphsight/autodiff.hpp"
#include "graphsight/gradcheck.hpp"
#include "graphsight/graph.hpp"
#include "graphsight/model.hpp"
#include "graphsight/rng.hpp"

namespace graphsight {

/// Standard-normal node attributes; each pair is an edge with probability
/// `density`. Edge attributes follow the Pearson/partial/distance layout when
/// f == 3, otherwise they are uniform in [-1, 1].
inline brain_graph random_graph(rng& r, std::size_t n, std::size_t d, std::size_t f, int label,
                                double density = 0.5) {
    brain_graph g;
    g.subject_id = "random";
    g.label = label;
    g.nodes = tensor(n, d);
    for (auto& x : g.nodes.data()) x = r.normal();
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = i + 1; j < n; ++j) {
            if (r.uniform() >= density) continue;
            std::vector<double> a(f);
            for (auto& x : a) x = r.uniform(-1.0, 1.0);
            if (f == edge_attr::count) a[edge_attr::distance] = r.uniform(0.05, 1.0);
            g.edges.push_back(make_edge(i, j, std::move(a)));
        }
    return g;
}

/// Rebuilds model_vars from tape variables listed in gnn_model::parameters()
/// order.
inline model_vars model_vars_from(std::span<const ad::var> params, const model_config& c) {
    model_vars v;
    std::size_t k = 0;
    auto next = [&] {
        if (k >= params.size()) throw invalid_input("model_vars_from: too few tensors");
        v.all.push_back(params[k]);
        return params[k++];
    };
    auto conv = [&] {
        nnconv_vars p;
        p.theta = next();
        p.hidden = c.edge_hidden > 0;
        if (p.hidden) {
            p.edge_hidden_weight = next();
            p.edge_hidden_bias = next();
        }
        p.edge_weight = next();
        p.edge_bias = next();
        return p;
    };
    v.conv1 = conv();
    v.pool1.w = next();
    v.conv2 = conv();
    v.pool2.w = next();
    v.w1 = next();
    v.b1 = next();
    v.w2 = next();
    v.b2 = next();
    return v;
}

/// Full loss on one graph, differentiated with respect to every parameter
/// tensor followed by the node and edge attribute matrices.
inline fd_report model_gradcheck(const gnn_model& m, const brain_graph& g, double h = 1e-5) {
    std::vector<tensor> inputs;
    for (const auto& [name, t] : m.parameters()) inputs.push_back(*t);
    const std::size_t n_params = inputs.size();
    inputs.push_back(g.nodes);
    tensor ea(g.edges.size(), m.config.edge_dim);
    for (std::size_t k = 0; k < g.edges.size(); ++k)
        for (std::size_t c = 0; c < ea.cols(); ++c) ea(k, c) = g.edges[k].attr[c];
    inputs.push_back(ea);

    const model_config cfg = m.config;
    std::vector<std::array<std::size_t, 2>> pairs;
    for (const auto& e : g.edges) pairs.push_back({e.i, e.j});
    const int label = g.label;
    auto program = [cfg, pairs, n_params, label](ad::tape&, std::span<const ad::var> x) {
        model_vars v = model_vars_from(x.first(n_params), cfg);
        graph_vars gv{x[n_params], pairs, x[n_params + 1]};
        ad::var ce = cross_entropy(model_forward(v, cfg, gv).probs, label);
        return ad::add(ce, pooling_regularizer(v, cfg.lambda_reg));
    };
    return finite_difference_check(program, std::move(inputs), h);
}

}  // namespace graphsight

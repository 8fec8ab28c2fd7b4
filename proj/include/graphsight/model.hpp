#pragma once

// Edge-conditioned graph classifier: two conv/pool blocks, a mean‖max readout
// after each block, and a two-layer MLP head producing two class logits.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <numeric>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "graphsight/autodiff.hpp"
#include "graphsight/error.hpp"
#include "graphsight/graph.hpp"
#include "graphsight/rng.hpp"

namespace graphsight {

struct model_config {
    std::size_t d0 = 10;
    std::size_t d1 = 16;
    std::size_t d2 = 8;
    double pool_ratio = 0.5;
    std::size_t edge_dim = 3;
    std::size_t edge_hidden = 0;  // 0: edge network is a single affine map
    std::size_t head_hidden = 16;
    double lambda_reg = 0.001;

    void validate() const {
        if (d0 == 0 || d1 == 0 || d2 == 0 || edge_dim == 0 || head_hidden == 0)
            throw invalid_input("model widths must be positive");
        if (!(pool_ratio > 0.0 && pool_ratio <= 1.0)) throw invalid_input("pool_ratio must lie in (0,1]");
        if (!(lambda_reg >= 0.0)) throw invalid_input("lambda_reg must be non-negative");
    }

    std::size_t summary_width() const { return 2 * d1 + 2 * d2; }

    bool operator==(const model_config&) const = default;
};

/// Edge-conditioned convolution weights. The edge network maps an F-vector
/// to a flattened out×in matrix (entry (o,i) at column o*in+i).
struct nnconv_params {
    tensor theta;               // out×in, no bias
    tensor edge_hidden_weight;  // F×h, empty when the edge network has no hidden layer
    tensor edge_hidden_bias;    // 1×h
    tensor edge_weight;         // (F or h)×(out·in)
    tensor edge_bias;           // 1×(out·in)

    std::size_t in_dim() const { return theta.cols(); }
    std::size_t out_dim() const { return theta.rows(); }
    bool has_hidden() const { return edge_hidden_weight.size() > 0; }
};

struct pool_params {
    tensor w;  // d×1 projection
};

struct head_params {
    tensor w1;  // summary×hidden
    tensor b1;  // 1×hidden
    tensor w2;  // hidden×2
    tensor b2;  // 1×2
};

struct gnn_model {
    model_config config;
    nnconv_params conv1, conv2;
    pool_params pool1, pool2;
    head_params head;

    /// Every trainable tensor in a fixed order, with stable names.
    std::vector<std::pair<std::string, tensor*>> parameters() {
        std::vector<std::pair<std::string, tensor*>> out;
        auto conv = [&](const std::string& p, nnconv_params& c) {
            out.emplace_back(p + ".theta", &c.theta);
            if (c.has_hidden()) {
                out.emplace_back(p + ".edge_hidden_weight", &c.edge_hidden_weight);
                out.emplace_back(p + ".edge_hidden_bias", &c.edge_hidden_bias);
            }
            out.emplace_back(p + ".edge_weight", &c.edge_weight);
            out.emplace_back(p + ".edge_bias", &c.edge_bias);
        };
        conv("conv1", conv1);
        out.emplace_back("pool1.w", &pool1.w);
        conv("conv2", conv2);
        out.emplace_back("pool2.w", &pool2.w);
        out.emplace_back("head.w1", &head.w1);
        out.emplace_back("head.b1", &head.b1);
        out.emplace_back("head.w2", &head.w2);
        out.emplace_back("head.b2", &head.b2);
        return out;
    }

    std::vector<std::pair<std::string, const tensor*>> parameters() const {
        auto ps = const_cast<gnn_model*>(this)->parameters();
        return {ps.begin(), ps.end()};
    }

    std::size_t scalar_count() const {
        std::size_t n = 0;
        for (const auto& [name, t] : parameters()) n += t->size();
        return n;
    }
};

/// Closed-form number of trainable scalars.
inline std::size_t param_count(const model_config& c) {
    auto conv = [&](std::size_t in, std::size_t out) {
        const std::size_t m = in * out;
        std::size_t n = out * in;  // theta
        if (c.edge_hidden > 0) n += c.edge_dim * c.edge_hidden + c.edge_hidden + c.edge_hidden * m + m;
        else n += c.edge_dim * m + m;
        return n;
    };
    const std::size_t s = c.summary_width();
    return conv(c.d0, c.d1) + c.d1 + conv(c.d1, c.d2) + c.d2 + (s * c.head_hidden + c.head_hidden) +
           (c.head_hidden * 2 + 2);
}

namespace detail {

inline tensor glorot(std::size_t rows, std::size_t cols, std::size_t fan_in, std::size_t fan_out, rng& r) {
    const double a = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
    tensor t(rows, cols);
    for (auto& v : t.data()) v = r.uniform(-a, a);
    return t;
}

inline tensor unit_direction(std::size_t n, rng& r) {
    tensor t(n, 1);
    double s = 0.0;
    do {
        s = 0.0;
        for (auto& v : t.data()) {
            v = r.normal();
            s += v * v;
        }
    } while (s == 0.0);
    for (auto& v : t.data()) v /= std::sqrt(s);
    return t;
}

inline nnconv_params init_conv(std::size_t in, std::size_t out, const model_config& c, rng& r) {
    nnconv_params p;
    const std::size_t m = in * out;
    p.theta = glorot(out, in, in, out, r);
    std::size_t feat = c.edge_dim;
    if (c.edge_hidden > 0) {
        p.edge_hidden_weight = glorot(c.edge_dim, c.edge_hidden, c.edge_dim, c.edge_hidden, r);
        p.edge_hidden_bias = tensor(1, c.edge_hidden, 0.0);
        feat = c.edge_hidden;
    }
    p.edge_weight = glorot(feat, m, feat, m, r);
    p.edge_bias = tensor(1, m, 0.0);
    return p;
}

}  // namespace detail

/// Uniform Glorot weights, zero biases, unit-norm random pooling vectors.
inline gnn_model init_model(const model_config& c, std::uint64_t seed) {
    c.validate();
    rng r(seed);
    gnn_model m;
    m.config = c;
    m.conv1 = detail::init_conv(c.d0, c.d1, c, r);
    m.pool1.w = detail::unit_direction(c.d1, r);
    m.conv2 = detail::init_conv(c.d1, c.d2, c, r);
    m.pool2.w = detail::unit_direction(c.d2, r);
    const std::size_t s = c.summary_width();
    m.head.w1 = detail::glorot(s, c.head_hidden, s, c.head_hidden, r);
    m.head.b1 = tensor(1, c.head_hidden, 0.0);
    m.head.w2 = detail::glorot(c.head_hidden, 2, c.head_hidden, 2, r);
    m.head.b2 = tensor(1, 2, 0.0);
    return m;
}

// ------------------------------------------------------------------ tape binding

struct nnconv_vars {
    ad::var theta, edge_hidden_weight, edge_hidden_bias, edge_weight, edge_bias;
    bool hidden = false;
};

struct pool_vars {
    ad::var w;
};

/// Model parameters placed on a tape. `all` follows gnn_model::parameters().
struct model_vars {
    nnconv_vars conv1, conv2;
    pool_vars pool1, pool2;
    ad::var w1, b1, w2, b2;
    std::vector<ad::var> all;
};

inline model_vars bind_model(ad::tape& t, const gnn_model& m, bool trainable = true) {
    model_vars v;
    auto leaf = [&](const tensor& x) {
        ad::var l = t.leaf(x, trainable);
        v.all.push_back(l);
        return l;
    };
    auto conv = [&](const nnconv_params& p) {
        nnconv_vars c;
        c.theta = leaf(p.theta);
        c.hidden = p.has_hidden();
        if (c.hidden) {
            c.edge_hidden_weight = leaf(p.edge_hidden_weight);
            c.edge_hidden_bias = leaf(p.edge_hidden_bias);
        }
        c.edge_weight = leaf(p.edge_weight);
        c.edge_bias = leaf(p.edge_bias);
        return c;
    };
    v.conv1 = conv(m.conv1);
    v.pool1.w = leaf(m.pool1.w);
    v.conv2 = conv(m.conv2);
    v.pool2.w = leaf(m.pool2.w);
    v.w1 = leaf(m.head.w1);
    v.b1 = leaf(m.head.b1);
    v.w2 = leaf(m.head.w2);
    v.b2 = leaf(m.head.b2);
    return v;
}

/// A graph on a tape: node features, undirected edge pairs (i<j), and one
/// attribute row per edge.
struct graph_vars {
    ad::var nodes;  // N×d
    std::vector<std::array<std::size_t, 2>> edges;
    ad::var edge_attrs;  // M×F
};

inline graph_vars bind_graph(ad::tape& t, const brain_graph& g, bool requires_grad = false, std::size_t edge_dim = 0) {
    graph_vars gv;
    gv.nodes = t.leaf(g.nodes, requires_grad);
    const std::size_t f = g.edges.empty() ? edge_dim : g.edge_dim();
    tensor ea(g.edges.size(), f);
    for (std::size_t m = 0; m < g.edges.size(); ++m) {
        gv.edges.push_back({g.edges[m].i, g.edges[m].j});
        std::copy(g.edges[m].attr.begin(), g.edges[m].attr.end(), ea.row(m).begin());
    }
    gv.edge_attrs = t.leaf(std::move(ea), requires_grad);
    return gv;
}

// ------------------------------------------------------------------ layers

/// v_i' = 1/(|N(i)|+1) · relu(Θ v_i + Σ_{j∈N(i)} h(e_ij) v_j)
inline ad::var nnconv_forward(const nnconv_vars& p, const graph_vars& g) {
    const std::size_t n = g.nodes.rows();
    const std::size_t in = p.theta.cols();
    if (g.nodes.cols() != in)
        throw shape_error("nnconv: node width " + std::to_string(g.nodes.cols()) + " but layer expects " +
                          std::to_string(in));
    ad::tape& t = *g.nodes.owner();

    ad::var self = ad::matmul(g.nodes, ad::transpose(p.theta));
    ad::var pre = self;
    std::vector<double> inv_deg(n, 1.0);
    if (!g.edges.empty()) {
        const std::size_t m = g.edges.size();
        std::vector<std::size_t> src, dst, eidx;
        src.reserve(2 * m);
        dst.reserve(2 * m);
        eidx.reserve(2 * m);
        for (std::size_t k = 0; k < m; ++k) {
            const auto [a, b] = g.edges[k];
            if (a >= n || b >= n || a == b) throw invalid_input("nnconv: edge endpoint out of range");
            dst.push_back(a), src.push_back(b), eidx.push_back(k);
            dst.push_back(b), src.push_back(a), eidx.push_back(k);
            inv_deg[a] += 1.0;
            inv_deg[b] += 1.0;
        }
        ad::var feat = g.edge_attrs;
        if (p.hidden) feat = ad::relu(ad::add_row(ad::matmul(feat, p.edge_hidden_weight), p.edge_hidden_bias));
        ad::var w_edge = ad::add_row(ad::matmul(feat, p.edge_weight), p.edge_bias);  // M×(out·in)
        ad::var w_msg = ad::gather_rows(w_edge, std::move(eidx));
        ad::var x_src = ad::gather_rows(g.nodes, std::move(src));
        ad::var msg = ad::batched_matvec(w_msg, x_src);
        pre = ad::add(self, ad::scatter_add_rows(msg, std::move(dst), n));
    }
    for (auto& d : inv_deg) d = 1.0 / d;
    return ad::mul_rows(ad::relu(pre), t.constant(tensor::column_vector(std::move(inv_deg))));
}

/// Number of nodes kept by pooling `n` nodes at ratio r: ceil(r·n), at least 1.
inline std::size_t pooled_size(double ratio, std::size_t n) {
    const double x = ratio * static_cast<double>(n);
    auto k = static_cast<std::size_t>(std::ceil(x - 1e-9 * std::max(1.0, x)));
    return std::clamp<std::size_t>(k, 1, n);
}

struct pool_result {
    graph_vars graph;               // pooled nodes and renumbered edges
    ad::var scores;                 // N×1 projection scores of the input
    std::vector<std::size_t> kept;  // input rows kept, by descending score
    std::vector<std::size_t> kept_edges;  // input edge rows kept
};

/// Top-k pooling: y = X w / ‖w‖, keep the k largest (ties to the lower
/// index), gate the kept rows by tanh(y).
inline pool_result topk_pool(const pool_vars& p, const graph_vars& g, std::size_t k) {
    const std::size_t n = g.nodes.rows();
    if (k < 1 || k > n) throw invalid_input("topk_pool: k=" + std::to_string(k) + " outside [1," + std::to_string(n) + "]");
    if (p.w.rows() != g.nodes.cols() || p.w.cols() != 1)
        throw shape_error(ad::detail::shapes("topk_pool", g.nodes.value(), p.w.value()));
    ad::tape& t = *g.nodes.owner();
    ad::var norm = ad::l2norm(p.w);
    if (norm.value().item() == 0.0) throw invalid_input("topk_pool: projection vector has zero norm");

    pool_result out;
    out.scores = ad::matmul(ad::matmul(g.nodes, p.w), ad::div(t.constant(tensor::scalar(1.0)), norm));
    const tensor& y = out.scores.value();
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return y[a] > y[b]; });
    order.resize(k);
    out.kept = order;

    ad::var gate = ad::tanh(ad::gather_rows(out.scores, order));
    out.graph.nodes = ad::mul_rows(ad::gather_rows(g.nodes, order), gate);

    constexpr std::size_t absent = static_cast<std::size_t>(-1);
    std::vector<std::size_t> pos(n, absent);
    for (std::size_t r = 0; r < k; ++r) pos[order[r]] = r;
    for (std::size_t m = 0; m < g.edges.size(); ++m) {
        const auto [a, b] = g.edges[m];
        if (pos[a] == absent || pos[b] == absent) continue;
        out.graph.edges.push_back({std::min(pos[a], pos[b]), std::max(pos[a], pos[b])});
        out.kept_edges.push_back(m);
    }
    out.graph.edge_attrs = ad::gather_rows(g.edge_attrs, out.kept_edges);
    return out;
}

/// Column-wise mean followed by column-wise max, 1×2d.
inline ad::var readout(const ad::var& nodes) {
    if (nodes.rows() == 0) throw invalid_input("readout: graph has no nodes");
    return ad::concat({ad::mean_rows(nodes), ad::max_rows(nodes)});
}

struct forward_trace {
    ad::var logits;  // 1×2
    ad::var probs;   // 1×2 softmax
    ad::var summary; // 1×(2·d1+2·d2)
    pool_result pool1, pool2;
    std::size_t k1 = 0, k2 = 0;
};

inline forward_trace model_forward(const model_vars& v, const model_config& c, const graph_vars& g) {
    const std::size_t n = g.nodes.rows();
    if (n < 1) throw invalid_input("model_forward: graph has no nodes");
    if (g.nodes.cols() != c.d0)
        throw shape_error("model_forward: node width " + std::to_string(g.nodes.cols()) + " but model expects " +
                          std::to_string(c.d0));
    forward_trace tr;
    tr.k1 = pooled_size(c.pool_ratio, n);
    graph_vars h1{nnconv_forward(v.conv1, g), g.edges, g.edge_attrs};
    tr.pool1 = topk_pool(v.pool1, h1, tr.k1);
    tr.k2 = pooled_size(c.pool_ratio, tr.k1);
    graph_vars h2{nnconv_forward(v.conv2, tr.pool1.graph), tr.pool1.graph.edges, tr.pool1.graph.edge_attrs};
    tr.pool2 = topk_pool(v.pool2, h2, tr.k2);
    tr.summary = ad::concat({readout(tr.pool1.graph.nodes), readout(tr.pool2.graph.nodes)});
    ad::var hidden = ad::relu(ad::add_row(ad::matmul(tr.summary, v.w1), v.b1));
    tr.logits = ad::add_row(ad::matmul(hidden, v.w2), v.b2);
    tr.probs = ad::softmax(tr.logits);
    return tr;
}

/// Class probabilities (p0, p1) for a single graph.
inline std::array<double, 2> predict(const gnn_model& m, const brain_graph& g) {
    ad::tape t;
    model_vars v = bind_model(t, m, false);
    graph_vars gv = bind_graph(t, g, false, m.config.edge_dim);
    const tensor& p = model_forward(v, m.config, gv).probs.value();
    return {p[0], p[1]};
}

// ------------------------------------------------------------------ loss

inline ad::var cross_entropy(const ad::var& probs, int label) {
    return ad::scale(ad::log(ad::element(probs, 0, static_cast<std::size_t>(label))), -1.0);
}

/// λ Σ_l (‖w_l‖ - 1)²
inline ad::var pooling_regularizer(const model_vars& v, double lambda) {
    auto term = [](const ad::var& w) {
        ad::var d = ad::add_scalar(ad::l2norm(w), -1.0);
        return ad::mul(d, d);
    };
    return ad::scale(ad::add(term(v.pool1.w), term(v.pool2.w)), lambda);
}

/// Mean cross-entropy over the batch plus the pooling regularizer.
inline ad::var batch_loss(ad::tape& t, const model_vars& v, const model_config& c,
                          std::span<const brain_graph* const> batch) {
    if (batch.empty()) throw invalid_input("loss: empty batch");
    std::vector<ad::var> terms;
    terms.reserve(batch.size());
    for (const brain_graph* g : batch) {
        graph_vars gv = bind_graph(t, *g, false, c.edge_dim);
        terms.push_back(cross_entropy(model_forward(v, c, gv).probs, g->label));
    }
    ad::var ce = ad::mean(ad::concat(terms));
    return ad::add(ce, pooling_regularizer(v, c.lambda_reg));
}

inline double loss(const gnn_model& m, std::span<const brain_graph> batch) {
    ad::tape t;
    model_vars v = bind_model(t, m, false);
    std::vector<const brain_graph*> ptrs;
    for (const auto& g : batch) ptrs.push_back(&g);
    return batch_loss(t, v, m.config, ptrs).value().item();
}

}  // namespace graphsight

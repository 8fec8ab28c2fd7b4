#pragma once

// Reverse-mode automatic differentiation over rank-2 tensors.
//
// A tape records every primitive application in creation order, which is a
// topological order by construction. backward() walks the tape once from the
// root towards the leaves, accumulating into per-node gradient buffers.
// One tape belongs to one thread; build a fresh tape per training step.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <initializer_list>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "graphsight/error.hpp"
#include "graphsight/tensor.hpp"

namespace graphsight::ad {

class tape;

/// Handle to a value recorded on a tape.
class var {
public:
    var() = default;

    const tensor& value() const;
    /// d(root)/d(this) after backward(); zeros for leaves the root does not reach.
    const tensor& grad() const;
    bool requires_grad() const;
    std::size_t id() const noexcept { return id_; }
    tape* owner() const noexcept { return tape_; }
    std::size_t rows() const { return value().rows(); }
    std::size_t cols() const { return value().cols(); }

private:
    friend class tape;
    var(tape* t, std::size_t id) : tape_(t), id_(id) {}
    tape* tape_ = nullptr;
    std::size_t id_ = 0;
};

class tape {
public:
    /// Receives the gradient flowing into the node (and the node's own value)
    /// and pushes contributions to the node's inputs via accumulate().
    using backward_fn = std::function<void(tape&, const tensor& out_grad, const tensor& out_value)>;

    tape() { nodes_.reserve(256); }
    tape(const tape&) = delete;
    tape& operator=(const tape&) = delete;

    var leaf(tensor value, bool requires_grad = true) {
        nodes_.push_back({std::move(value), {}, requires_grad, false, {}});
        return {this, nodes_.size() - 1};
    }

    var constant(tensor value) { return leaf(std::move(value), false); }

    /// Appends the output of a primitive. The backward rule is dropped when no
    /// input needs a gradient.
    var record(tensor value, std::initializer_list<var> inputs, backward_fn fn) {
        bool needs = false;
        for (const var& v : inputs) {
            check_owner(v);
            needs = needs || nodes_[v.id()].requires_grad;
        }
        nodes_.push_back({std::move(value), {}, needs, false, needs ? std::move(fn) : backward_fn{}});
        return {this, nodes_.size() - 1};
    }

    var record(tensor value, std::span<const var> inputs, backward_fn fn) {
        bool needs = false;
        for (const var& v : inputs) {
            check_owner(v);
            needs = needs || nodes_[v.id()].requires_grad;
        }
        nodes_.push_back({std::move(value), {}, needs, false, needs ? std::move(fn) : backward_fn{}});
        return {this, nodes_.size() - 1};
    }

    /// Populates gradients of every requires_grad node with d(root)/d(node).
    void backward(var root) {
        check_owner(root);
        const tensor& rv = nodes_[root.id()].value;
        if (rv.size() != 1)
            throw shape_error("backward: root must be scalar, got shape " + rv.shape_string());
        for (auto& n : nodes_) {
            n.has_grad = false;
            if (n.requires_grad) n.grad = tensor(n.value.rows(), n.value.cols(), 0.0);
            else n.grad = tensor();
        }
        if (!nodes_[root.id()].requires_grad) return;
        nodes_[root.id()].grad[0] = 1.0;
        nodes_[root.id()].has_grad = true;
        for (std::size_t i = root.id() + 1; i-- > 0;) {
            node& n = nodes_[i];
            if (!n.has_grad || !n.backward) continue;
            n.backward(*this, n.grad, n.value);
        }
    }

    /// Adds `g` into the gradient buffer of node `id`.
    void accumulate(std::size_t id, const tensor& g) {
        node& n = nodes_[id];
        if (!n.requires_grad) return;
        auto& dst = n.grad.data();
        const auto& src = g.data();
        for (std::size_t k = 0; k < dst.size(); ++k) dst[k] += src[k];
        n.has_grad = true;
    }

    /// Direct access to a gradient buffer for sparse accumulation; marks it live.
    tensor* grad_buffer(std::size_t id) {
        node& n = nodes_[id];
        if (!n.requires_grad) return nullptr;
        n.has_grad = true;
        return &n.grad;
    }

    const tensor& value(std::size_t id) const { return nodes_[id].value; }
    const tensor& grad(std::size_t id) const {
        const node& n = nodes_[id];
        if (n.grad.size() != n.value.size()) {
            static thread_local tensor zeros;
            zeros = tensor(n.value.rows(), n.value.cols(), 0.0);
            return zeros;
        }
        return n.grad;
    }
    bool requires_grad(std::size_t id) const { return nodes_[id].requires_grad; }
    std::size_t size() const noexcept { return nodes_.size(); }

private:
    struct node {
        tensor value;
        tensor grad;
        bool requires_grad = false;
        bool has_grad = false;
        backward_fn backward;
    };

    void check_owner(const var& v) const {
        if (v.owner() != this) throw invalid_input("variable belongs to a different tape");
    }

    std::vector<node> nodes_;
};

inline const tensor& var::value() const { return tape_->value(id_); }
inline const tensor& var::grad() const { return tape_->grad(id_); }
inline bool var::requires_grad() const { return tape_->requires_grad(id_); }

namespace detail {

inline std::string shapes(const char* op, const tensor& a, const tensor& b) {
    return std::string(op) + ": shapes " + a.shape_string() + " and " + b.shape_string() +
           " do not conform";
}

inline void require_same(const char* op, const var& a, const var& b) {
    if (!a.value().same_shape(b.value())) throw shape_error(shapes(op, a.value(), b.value()));
}

// out = a·b, or with transposes folded in.
inline tensor matmul(const tensor& a, const tensor& b) {
    tensor out(a.rows(), b.cols(), 0.0);
    const std::size_t n = b.cols();
    for (std::size_t i = 0; i < a.rows(); ++i) {
        double* o = out.row(i).data();
        for (std::size_t k = 0; k < a.cols(); ++k) {
            const double av = a(i, k);
            if (av == 0.0) continue;
            const double* br = b.row(k).data();
            for (std::size_t j = 0; j < n; ++j) o[j] += av * br[j];
        }
    }
    return out;
}

inline tensor matmul_bt(const tensor& a, const tensor& b) {  // a·bᵀ
    tensor out(a.rows(), b.rows(), 0.0);
    for (std::size_t i = 0; i < a.rows(); ++i)
        for (std::size_t j = 0; j < b.rows(); ++j) {
            double s = 0.0;
            for (std::size_t k = 0; k < a.cols(); ++k) s += a(i, k) * b(j, k);
            out(i, j) = s;
        }
    return out;
}

inline tensor matmul_at(const tensor& a, const tensor& b) {  // aᵀ·b
    tensor out(a.cols(), b.cols(), 0.0);
    const std::size_t n = b.cols();
    for (std::size_t k = 0; k < a.rows(); ++k)
        for (std::size_t i = 0; i < a.cols(); ++i) {
            const double av = a(k, i);
            if (av == 0.0) continue;
            double* o = out.row(i).data();
            const double* br = b.row(k).data();
            for (std::size_t j = 0; j < n; ++j) o[j] += av * br[j];
        }
    return out;
}

template <typename F>
tensor map(const tensor& a, F f) {
    tensor out(a.rows(), a.cols());
    for (std::size_t k = 0; k < a.size(); ++k) out[k] = f(a[k]);
    return out;
}

}  // namespace detail

// ---------------------------------------------------------------- linear algebra

inline var matmul(const var& a, const var& b) {
    if (a.cols() != b.rows()) throw shape_error(detail::shapes("matmul", a.value(), b.value()));
    const std::size_t ia = a.id(), ib = b.id();
    return a.owner()->record(detail::matmul(a.value(), b.value()), {a, b},
                             [ia, ib](tape& t, const tensor& g, const tensor&) {
                                 if (t.requires_grad(ia)) t.accumulate(ia, detail::matmul_bt(g, t.value(ib)));
                                 if (t.requires_grad(ib)) t.accumulate(ib, detail::matmul_at(t.value(ia), g));
                             });
}

inline var transpose(const var& a) {
    const tensor& v = a.value();
    tensor out(v.cols(), v.rows());
    for (std::size_t i = 0; i < v.rows(); ++i)
        for (std::size_t j = 0; j < v.cols(); ++j) out(j, i) = v(i, j);
    const std::size_t ia = a.id();
    return a.owner()->record(std::move(out), {a}, [ia](tape& t, const tensor& g, const tensor&) {
        tensor gt(g.cols(), g.rows());
        for (std::size_t i = 0; i < g.rows(); ++i)
            for (std::size_t j = 0; j < g.cols(); ++j) gt(j, i) = g(i, j);
        t.accumulate(ia, gt);
    });
}

// ---------------------------------------------------------------- elementwise

inline var add(const var& a, const var& b) {
    detail::require_same("add", a, b);
    tensor out = a.value();
    for (std::size_t k = 0; k < out.size(); ++k) out[k] += b.value()[k];
    const std::size_t ia = a.id(), ib = b.id();
    return a.owner()->record(std::move(out), {a, b}, [ia, ib](tape& t, const tensor& g, const tensor&) {
        t.accumulate(ia, g);
        t.accumulate(ib, g);
    });
}

inline var sub(const var& a, const var& b) {
    detail::require_same("sub", a, b);
    tensor out = a.value();
    for (std::size_t k = 0; k < out.size(); ++k) out[k] -= b.value()[k];
    const std::size_t ia = a.id(), ib = b.id();
    return a.owner()->record(std::move(out), {a, b}, [ia, ib](tape& t, const tensor& g, const tensor&) {
        t.accumulate(ia, g);
        t.accumulate(ib, detail::map(g, [](double x) { return -x; }));
    });
}

inline var mul(const var& a, const var& b) {
    detail::require_same("mul", a, b);
    tensor out = a.value();
    for (std::size_t k = 0; k < out.size(); ++k) out[k] *= b.value()[k];
    const std::size_t ia = a.id(), ib = b.id();
    return a.owner()->record(std::move(out), {a, b}, [ia, ib](tape& t, const tensor& g, const tensor&) {
        const tensor& av = t.value(ia);
        const tensor& bv = t.value(ib);
        tensor ga(g.rows(), g.cols()), gb(g.rows(), g.cols());
        for (std::size_t k = 0; k < g.size(); ++k) {
            ga[k] = g[k] * bv[k];
            gb[k] = g[k] * av[k];
        }
        t.accumulate(ia, ga);
        t.accumulate(ib, gb);
    });
}

inline var div(const var& a, const var& b) {
    detail::require_same("div", a, b);
    tensor out = a.value();
    for (std::size_t k = 0; k < out.size(); ++k) out[k] /= b.value()[k];
    const std::size_t ia = a.id(), ib = b.id();
    return a.owner()->record(std::move(out), {a, b}, [ia, ib](tape& t, const tensor& g, const tensor&) {
        const tensor& av = t.value(ia);
        const tensor& bv = t.value(ib);
        tensor ga(g.rows(), g.cols()), gb(g.rows(), g.cols());
        for (std::size_t k = 0; k < g.size(); ++k) {
            ga[k] = g[k] / bv[k];
            gb[k] = -g[k] * av[k] / (bv[k] * bv[k]);
        }
        t.accumulate(ia, ga);
        t.accumulate(ib, gb);
    });
}

inline var scale(const var& a, double s) {
    const std::size_t ia = a.id();
    return a.owner()->record(detail::map(a.value(), [s](double x) { return s * x; }), {a},
                             [ia, s](tape& t, const tensor& g, const tensor&) {
                                 t.accumulate(ia, detail::map(g, [s](double x) { return s * x; }));
                             });
}

inline var add_scalar(const var& a, double s) {
    const std::size_t ia = a.id();
    return a.owner()->record(detail::map(a.value(), [s](double x) { return x + s; }), {a},
                             [ia](tape& t, const tensor& g, const tensor&) { t.accumulate(ia, g); });
}

/// Subgradient 0 at the kink.
inline var relu(const var& a) {
    const std::size_t ia = a.id();
    return a.owner()->record(detail::map(a.value(), [](double x) { return x > 0.0 ? x : 0.0; }), {a},
                             [ia](tape& t, const tensor& g, const tensor&) {
                                 const tensor& x = t.value(ia);
                                 tensor gx(g.rows(), g.cols());
                                 for (std::size_t k = 0; k < g.size(); ++k) gx[k] = x[k] > 0.0 ? g[k] : 0.0;
                                 t.accumulate(ia, gx);
                             });
}

inline var tanh(const var& a) {
    const std::size_t ia = a.id();
    return a.owner()->record(detail::map(a.value(), [](double x) { return std::tanh(x); }), {a},
                             [ia](tape& t, const tensor& g, const tensor& y) {
                                 tensor gx(g.rows(), g.cols());
                                 for (std::size_t k = 0; k < g.size(); ++k) gx[k] = g[k] * (1.0 - y[k] * y[k]);
                                 t.accumulate(ia, gx);
                             });
}

inline var exp(const var& a) {
    const std::size_t ia = a.id();
    return a.owner()->record(detail::map(a.value(), [](double x) { return std::exp(x); }), {a},
                             [ia](tape& t, const tensor& g, const tensor&) {
                                 const tensor& x = t.value(ia);
                                 tensor gx(g.rows(), g.cols());
                                 for (std::size_t k = 0; k < g.size(); ++k) gx[k] = g[k] * std::exp(x[k]);
                                 t.accumulate(ia, gx);
                             });
}

inline var log(const var& a) {
    const std::size_t ia = a.id();
    return a.owner()->record(detail::map(a.value(), [](double x) { return std::log(x); }), {a},
                             [ia](tape& t, const tensor& g, const tensor&) {
                                 const tensor& x = t.value(ia);
                                 tensor gx(g.rows(), g.cols());
                                 for (std::size_t k = 0; k < g.size(); ++k) gx[k] = g[k] / x[k];
                                 t.accumulate(ia, gx);
                             });
}

/// Softmax along the last axis (each row independently).
inline var softmax(const var& a) {
    const tensor& x = a.value();
    tensor y(x.rows(), x.cols());
    for (std::size_t r = 0; r < x.rows(); ++r) {
        auto xr = x.row(r);
        const double m = *std::max_element(xr.begin(), xr.end());
        double z = 0.0;
        for (std::size_t c = 0; c < x.cols(); ++c) z += (y(r, c) = std::exp(xr[c] - m));
        for (std::size_t c = 0; c < x.cols(); ++c) y(r, c) /= z;
    }
    const std::size_t ia = a.id();
    return a.owner()->record(std::move(y), {a}, [ia](tape& t, const tensor& g, const tensor& p) {
        tensor gx(g.rows(), g.cols());
        for (std::size_t r = 0; r < g.rows(); ++r) {
            double dot = 0.0;
            for (std::size_t c = 0; c < g.cols(); ++c) dot += g(r, c) * p(r, c);
            for (std::size_t c = 0; c < g.cols(); ++c) gx(r, c) = p(r, c) * (g(r, c) - dot);
        }
        t.accumulate(ia, gx);
    });
}

// ---------------------------------------------------------------- structure

/// Horizontal concatenation; all parts share the row count.
inline var concat(std::span<const var> parts) {
    if (parts.empty()) throw invalid_input("concat: no operands");
    const std::size_t rows = parts[0].rows();
    std::size_t cols = 0;
    for (const var& p : parts) {
        if (p.rows() != rows) throw shape_error(detail::shapes("concat", parts[0].value(), p.value()));
        cols += p.cols();
    }
    tensor out(rows, cols);
    std::vector<std::size_t> ids, widths;
    std::size_t off = 0;
    for (const var& p : parts) {
        for (std::size_t r = 0; r < rows; ++r)
            for (std::size_t c = 0; c < p.cols(); ++c) out(r, off + c) = p.value()(r, c);
        off += p.cols();
        ids.push_back(p.id());
        widths.push_back(p.cols());
    }
    return parts[0].owner()->record(std::move(out), parts, [ids, widths](tape& t, const tensor& g, const tensor&) {
        std::size_t o = 0;
        for (std::size_t k = 0; k < ids.size(); ++k) {
            if (t.requires_grad(ids[k])) {
                tensor gp(g.rows(), widths[k]);
                for (std::size_t r = 0; r < g.rows(); ++r)
                    for (std::size_t c = 0; c < widths[k]; ++c) gp(r, c) = g(r, o + c);
                t.accumulate(ids[k], gp);
            }
            o += widths[k];
        }
    });
}

inline var concat(std::initializer_list<var> parts) {
    return concat(std::span<const var>(parts.begin(), parts.size()));
}

/// out[r,:] = a[index[r],:]. Repeated indices accumulate on the way back.
inline var gather_rows(const var& a, std::vector<std::size_t> index) {
    const tensor& v = a.value();
    tensor out(index.size(), v.cols());
    for (std::size_t r = 0; r < index.size(); ++r) {
        if (index[r] >= v.rows())
            throw shape_error("gather_rows: index " + std::to_string(index[r]) + " out of range for shape " +
                              v.shape_string());
        std::copy(v.row(index[r]).begin(), v.row(index[r]).end(), out.row(r).begin());
    }
    const std::size_t ia = a.id();
    return a.owner()->record(std::move(out), {a}, [ia, index = std::move(index)](tape& t, const tensor& g, const tensor&) {
        tensor* buf = t.grad_buffer(ia);
        for (std::size_t r = 0; r < index.size(); ++r) {
            auto dst = buf->row(index[r]);
            auto src = g.row(r);
            for (std::size_t c = 0; c < src.size(); ++c) dst[c] += src[c];
        }
    });
}

/// out (n×cols) with out[index[r],:] += a[r,:].
inline var scatter_add_rows(const var& a, std::vector<std::size_t> index, std::size_t n) {
    const tensor& v = a.value();
    if (index.size() != v.rows())
        throw shape_error("scatter_add_rows: " + std::to_string(index.size()) + " indices for shape " +
                          v.shape_string());
    tensor out(n, v.cols(), 0.0);
    for (std::size_t r = 0; r < index.size(); ++r) {
        if (index[r] >= n) throw shape_error("scatter_add_rows: index out of range");
        auto dst = out.row(index[r]);
        auto src = v.row(r);
        for (std::size_t c = 0; c < src.size(); ++c) dst[c] += src[c];
    }
    const std::size_t ia = a.id();
    return a.owner()->record(std::move(out), {a}, [ia, index = std::move(index)](tape& t, const tensor& g, const tensor&) {
        tensor ga(index.size(), g.cols());
        for (std::size_t r = 0; r < index.size(); ++r)
            std::copy(g.row(index[r]).begin(), g.row(index[r]).end(), ga.row(r).begin());
        t.accumulate(ia, ga);
    });
}

/// Single element as a 1×1 tensor.
inline var element(const var& a, std::size_t r, std::size_t c) {
    if (r >= a.rows() || c >= a.cols()) throw shape_error("element: index out of range for " + a.value().shape_string());
    const std::size_t ia = a.id();
    return a.owner()->record(tensor::scalar(a.value()(r, c)), {a}, [ia, r, c](tape& t, const tensor& g, const tensor&) {
        (*t.grad_buffer(ia))(r, c) += g[0];
    });
}

// ---------------------------------------------------------------- reductions

inline var sum(const var& a) {
    double s = 0.0;
    for (double x : a.value().data()) s += x;
    const std::size_t ia = a.id();
    return a.owner()->record(tensor::scalar(s), {a}, [ia](tape& t, const tensor& g, const tensor&) {
        const tensor& x = t.value(ia);
        t.accumulate(ia, tensor(x.rows(), x.cols(), g[0]));
    });
}

inline var mean(const var& a) {
    const double n = static_cast<double>(a.value().size());
    return scale(sum(a), 1.0 / n);
}

/// Column-wise mean over rows, 1×cols.
inline var mean_rows(const var& a) {
    const tensor& v = a.value();
    if (v.rows() == 0) throw shape_error("mean_rows: empty input");
    tensor out(1, v.cols(), 0.0);
    for (std::size_t r = 0; r < v.rows(); ++r)
        for (std::size_t c = 0; c < v.cols(); ++c) out[c] += v(r, c);
    const double inv = 1.0 / static_cast<double>(v.rows());
    for (auto& x : out.data()) x *= inv;
    const std::size_t ia = a.id();
    const std::size_t rows = v.rows();
    return a.owner()->record(std::move(out), {a}, [ia, rows, inv](tape& t, const tensor& g, const tensor&) {
        tensor ga(rows, g.cols());
        for (std::size_t r = 0; r < rows; ++r)
            for (std::size_t c = 0; c < g.cols(); ++c) ga(r, c) = g[c] * inv;
        t.accumulate(ia, ga);
    });
}

/// Column-wise max over rows, 1×cols. The gradient goes to the first
/// maximal row of each column.
inline var max_rows(const var& a) {
    const tensor& v = a.value();
    if (v.rows() == 0) throw shape_error("max_rows: empty input");
    tensor out(1, v.cols());
    std::vector<std::size_t> arg(v.cols(), 0);
    for (std::size_t c = 0; c < v.cols(); ++c) {
        double m = v(0, c);
        for (std::size_t r = 1; r < v.rows(); ++r)
            if (v(r, c) > m) {
                m = v(r, c);
                arg[c] = r;
            }
        out[c] = m;
    }
    const std::size_t ia = a.id();
    return a.owner()->record(std::move(out), {a}, [ia, arg = std::move(arg)](tape& t, const tensor& g, const tensor&) {
        tensor* buf = t.grad_buffer(ia);
        for (std::size_t c = 0; c < arg.size(); ++c) (*buf)(arg[c], c) += g[c];
    });
}

/// Euclidean norm of all entries, 1×1. Gradient at the origin is taken as 0.
inline var l2norm(const var& a) {
    double s = 0.0;
    for (double x : a.value().data()) s += x * x;
    const double n = std::sqrt(s);
    const std::size_t ia = a.id();
    return a.owner()->record(tensor::scalar(n), {a}, [ia, n](tape& t, const tensor& g, const tensor&) {
        if (n == 0.0) return;
        t.accumulate(ia, detail::map(t.value(ia), [&](double x) { return g[0] * x / n; }));
    });
}

// ---------------------------------------------------------------- broadcasting

/// Adds a 1×cols row vector to every row of `a`.
inline var add_row(const var& a, const var& row) {
    if (row.rows() != 1 || row.cols() != a.cols())
        throw shape_error(detail::shapes("add_row", a.value(), row.value()));
    tensor out = a.value();
    for (std::size_t r = 0; r < out.rows(); ++r)
        for (std::size_t c = 0; c < out.cols(); ++c) out(r, c) += row.value()[c];
    const std::size_t ia = a.id(), ib = row.id();
    return a.owner()->record(std::move(out), {a, row}, [ia, ib](tape& t, const tensor& g, const tensor&) {
        t.accumulate(ia, g);
        if (!t.requires_grad(ib)) return;
        tensor gb(1, g.cols(), 0.0);
        for (std::size_t r = 0; r < g.rows(); ++r)
            for (std::size_t c = 0; c < g.cols(); ++c) gb[c] += g(r, c);
        t.accumulate(ib, gb);
    });
}

/// Multiplies row r of `a` by column[r]; `column` is rows×1.
inline var mul_rows(const var& a, const var& column) {
    if (column.cols() != 1 || column.rows() != a.rows())
        throw shape_error(detail::shapes("mul_rows", a.value(), column.value()));
    tensor out = a.value();
    for (std::size_t r = 0; r < out.rows(); ++r)
        for (std::size_t c = 0; c < out.cols(); ++c) out(r, c) *= column.value()[r];
    const std::size_t ia = a.id(), ib = column.id();
    return a.owner()->record(std::move(out), {a, column}, [ia, ib](tape& t, const tensor& g, const tensor&) {
        const tensor& av = t.value(ia);
        const tensor& cv = t.value(ib);
        if (t.requires_grad(ia)) {
            tensor ga(g.rows(), g.cols());
            for (std::size_t r = 0; r < g.rows(); ++r)
                for (std::size_t c = 0; c < g.cols(); ++c) ga(r, c) = g(r, c) * cv[r];
            t.accumulate(ia, ga);
        }
        if (t.requires_grad(ib)) {
            tensor gc(cv.rows(), 1, 0.0);
            for (std::size_t r = 0; r < g.rows(); ++r)
                for (std::size_t c = 0; c < g.cols(); ++c) gc[r] += g(r, c) * av(r, c);
            t.accumulate(ib, gc);
        }
    });
}

/// Row-wise matrix-vector product: row m of `weights` holds a flattened
/// out×in matrix (entry (o,i) at o*in+i) applied to row m of `x`.
inline var batched_matvec(const var& weights, const var& x) {
    const tensor& w = weights.value();
    const tensor& xv = x.value();
    if (w.rows() != xv.rows() || xv.cols() == 0 || w.cols() % xv.cols() != 0)
        throw shape_error(detail::shapes("batched_matvec", w, xv));
    const std::size_t in = xv.cols();
    const std::size_t out_w = w.cols() / in;
    tensor out(w.rows(), out_w, 0.0);
    for (std::size_t m = 0; m < w.rows(); ++m) {
        const double* wr = w.row(m).data();
        const double* xr = xv.row(m).data();
        for (std::size_t o = 0; o < out_w; ++o) {
            double s = 0.0;
            for (std::size_t i = 0; i < in; ++i) s += wr[o * in + i] * xr[i];
            out(m, o) = s;
        }
    }
    const std::size_t iw = weights.id(), ix = x.id();
    return weights.owner()->record(std::move(out), {weights, x}, [iw, ix, in, out_w](tape& t, const tensor& g, const tensor&) {
        const tensor& w = t.value(iw);
        const tensor& xv = t.value(ix);
        if (t.requires_grad(iw)) {
            tensor gw(w.rows(), w.cols());
            for (std::size_t m = 0; m < w.rows(); ++m)
                for (std::size_t o = 0; o < out_w; ++o)
                    for (std::size_t i = 0; i < in; ++i) gw(m, o * in + i) = g(m, o) * xv(m, i);
            t.accumulate(iw, gw);
        }
        if (t.requires_grad(ix)) {
            tensor gx(xv.rows(), in, 0.0);
            for (std::size_t m = 0; m < w.rows(); ++m)
                for (std::size_t o = 0; o < out_w; ++o) {
                    const double go = g(m, o);
                    for (std::size_t i = 0; i < in; ++i) gx(m, i) += go * w(m, o * in + i);
                }
            t.accumulate(ix, gx);
        }
    });
}

inline var operator+(const var& a, const var& b) { return add(a, b); }
inline var operator-(const var& a, const var& b) { return sub(a, b); }
inline var operator*(const var& a, const var& b) { return mul(a, b); }

}  // namespace graphsight::ad

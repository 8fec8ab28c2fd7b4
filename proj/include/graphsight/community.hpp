#pragma once

// Overlapping communities from a symmetric non-negative CP decomposition of
// the stacked connectivity tensor τ (N×N×S):
//
//     τ ≈ Σ_r a_r ⊗ a_r ⊗ c_r,   A, C ≥ 0
//
// The node factor A is shared by both node modes, so symmetry holds by
// construction. Factors are fitted with multiplicative updates; an update is
// only accepted when it does not increase the reconstruction error.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <numeric>
#include <optional>
#include <thread>
#include <vector>

#include "graphsight/error.hpp"
#include "graphsight/graph.hpp"
#include "graphsight/rng.hpp"
#include "graphsight/tensor.hpp"

namespace graphsight {

/// Dense N×N×S array; slice s is the connectivity matrix of graph s.
class connectivity_tensor {
public:
    connectivity_tensor() = default;
    connectivity_tensor(std::size_t n, std::size_t s) : n_(n), s_(s), data_(n * n * s, 0.0) {}

    std::size_t nodes() const noexcept { return n_; }
    std::size_t slices() const noexcept { return s_; }
    double& operator()(std::size_t i, std::size_t j, std::size_t s) { return data_[(s * n_ + i) * n_ + j]; }
    double operator()(std::size_t i, std::size_t j, std::size_t s) const { return data_[(s * n_ + i) * n_ + j]; }
    const std::vector<double>& data() const noexcept { return data_; }

    double norm() const {
        double s = 0.0;
        for (double v : data_) s += v * v;
        return std::sqrt(s);
    }

private:
    std::size_t n_ = 0, s_ = 0;
    std::vector<double> data_;
};

/// Stacks the (sparsified) partial-correlation matrices of every graph,
/// negatives clamped to zero, zero diagonal.
inline connectivity_tensor build_tensor(const graph_dataset& ds) {
    if (ds.graphs.empty()) throw invalid_input("build_tensor: empty dataset");
    const std::size_t n = ds.graphs.front().n_nodes();
    connectivity_tensor t(n, ds.graphs.size());
    for (std::size_t s = 0; s < ds.graphs.size(); ++s) {
        const auto& g = ds.graphs[s];
        if (g.n_nodes() != n) throw invalid_input("build_tensor: graphs have different node counts");
        for (const auto& e : g.edges) {
            const double v = std::max(0.0, e.attr.at(edge_attr::partial));
            t(e.i, e.j, s) = v;
            t(e.j, e.i, s) = v;
        }
    }
    return t;
}

struct cp_options {
    std::size_t rank = 20;
    std::size_t iters = 500;
    double tol = 1e-8;  // relative fit change
    std::size_t restarts = 10;
    std::uint64_t seed = 0;
    std::size_t jobs = 1;
};

struct cp_factors {
    std::size_t rank = 0;
    tensor a;                     // N×R, unit columns
    tensor c;                     // S×R, unit columns
    std::vector<double> lambda;   // descending
    double fit = 0.0;             // 1 - ‖τ - τ̂‖/‖τ‖, NaN when undefined
    bool degenerate = false;      // zero tensor
    std::size_t iterations = 0;
    std::vector<double> error_history;  // ‖τ - τ̂‖ after each accepted iteration
};

namespace detail {

/// Nonzeros of each slice, both orientations, for the contractions below.
struct slice_entries {
    std::vector<std::vector<std::size_t>> i, j;
    std::vector<std::vector<double>> v;

    explicit slice_entries(const connectivity_tensor& t) : i(t.slices()), j(t.slices()), v(t.slices()) {
        const std::size_t n = t.nodes();
        for (std::size_t s = 0; s < t.slices(); ++s)
            for (std::size_t a = 0; a < n; ++a)
                for (std::size_t b = 0; b < n; ++b)
                    if (const double x = t(a, b, s); x != 0.0) {
                        i[s].push_back(a);
                        j[s].push_back(b);
                        v[s].push_back(x);
                    }
    }
};

// G[s,r] = a_rᵀ τ_s a_r
inline tensor contract_slices(const slice_entries& e, const tensor& a) {
    const std::size_t r = a.cols();
    tensor g(e.v.size(), r, 0.0);
    for (std::size_t s = 0; s < e.v.size(); ++s)
        for (std::size_t k = 0; k < e.v[s].size(); ++k) {
            const double x = e.v[s][k];
            const double* ai = a.row(e.i[s][k]).data();
            const double* aj = a.row(e.j[s][k]).data();
            for (std::size_t q = 0; q < r; ++q) g(s, q) += x * ai[q] * aj[q];
        }
    return g;
}

// P[k,r] = Σ_s c_sr Σ_j τ_kjs a_jr
inline tensor contract_nodes(const slice_entries& e, const tensor& a, const tensor& c) {
    const std::size_t r = a.cols();
    tensor p(a.rows(), r, 0.0);
    for (std::size_t s = 0; s < e.v.size(); ++s) {
        const double* cs = c.row(s).data();
        for (std::size_t k = 0; k < e.v[s].size(); ++k) {
            const double x = e.v[s][k];
            double* pi = p.row(e.i[s][k]).data();
            const double* aj = a.row(e.j[s][k]).data();
            for (std::size_t q = 0; q < r; ++q) pi[q] += x * cs[q] * aj[q];
        }
    }
    return p;
}

inline tensor gram(const tensor& x) {
    tensor g(x.cols(), x.cols(), 0.0);
    for (std::size_t k = 0; k < x.rows(); ++k)
        for (std::size_t p = 0; p < x.cols(); ++p)
            for (std::size_t q = 0; q < x.cols(); ++q) g(p, q) += x(k, p) * x(k, q);
    return g;
}

// ‖τ - τ̂‖² from cached contractions: ‖τ‖² - 2 Σ C∘G + Σ (AᵀA)²∘(CᵀC)
inline double squared_error(double tau_sq, const tensor& a, const tensor& c, const tensor& g) {
    double inner = 0.0;
    for (std::size_t k = 0; k < c.size(); ++k) inner += c[k] * g[k];
    const tensor ga = gram(a), gc = gram(c);
    double model_sq = 0.0;
    for (std::size_t k = 0; k < ga.size(); ++k) model_sq += ga[k] * ga[k] * gc[k];
    return tau_sq - 2.0 * inner + model_sq;
}

struct cp_run {
    tensor a, c;
    double error_sq = 0.0;
    std::size_t iterations = 0;
    std::vector<double> history;
};

inline cp_run cp_single(const connectivity_tensor& tau, const slice_entries& e, double tau_sq,
                        const cp_options& opt, std::uint64_t seed) {
    constexpr double tiny = 1e-300;
    const std::size_t n = tau.nodes(), s = tau.slices(), r = opt.rank;
    rng gen(seed);
    cp_run run;
    run.a = tensor(n, r);
    run.c = tensor(s, r);
    for (auto& v : run.a.data()) v = gen.uniform();
    for (auto& v : run.c.data()) v = gen.uniform();
    {
        // Match the initial model norm to ‖τ‖.
        const tensor ga = gram(run.a), gc = gram(run.c);
        double model_sq = 0.0;
        for (std::size_t k = 0; k < ga.size(); ++k) model_sq += ga[k] * ga[k] * gc[k];
        const double alpha = std::cbrt(std::sqrt(tau_sq) / std::sqrt(model_sq));
        for (auto& v : run.a.data()) v *= alpha;
        for (auto& v : run.c.data()) v *= alpha;
    }
    tensor& a = run.a;
    tensor& c = run.c;
    tensor g = contract_slices(e, a);
    double err = squared_error(tau_sq, a, c, g);
    const double tau_norm = std::sqrt(tau_sq);
    double fit_prev = 1.0 - std::sqrt(std::max(0.0, err)) / tau_norm;

    for (std::size_t it = 0; it < opt.iters; ++it) {
        // Graph factor: C ← C ∘ G / (C · (AᵀA)∘(AᵀA))
        {
            const tensor ga = gram(a);
            tensor h(r, r);
            for (std::size_t k = 0; k < h.size(); ++k) h[k] = ga[k] * ga[k];
            tensor c_new = c;
            for (std::size_t si = 0; si < s; ++si)
                for (std::size_t q = 0; q < r; ++q) {
                    double den = 0.0;
                    for (std::size_t p = 0; p < r; ++p) den += c(si, p) * h(p, q);
                    c_new(si, q) = c(si, q) * g(si, q) / (den + tiny);
                }
            const double err_new = squared_error(tau_sq, a, c_new, g);
            if (err_new <= err) {
                c = std::move(c_new);
                err = err_new;
            }
        }
        // Node factor: A ← A ∘ (P / (A · (AᵀA)∘(CᵀC)))^ω, ω halved until the
        // error does not increase.
        {
            const tensor p = contract_nodes(e, a, c);
            const tensor ga = gram(a), gc = gram(c);
            tensor q(r, r);
            for (std::size_t k = 0; k < q.size(); ++k) q[k] = ga[k] * gc[k];
            tensor ratio(n, r);
            for (std::size_t i = 0; i < n; ++i)
                for (std::size_t col = 0; col < r; ++col) {
                    double den = 0.0;
                    for (std::size_t k = 0; k < r; ++k) den += a(i, k) * q(k, col);
                    ratio(i, col) = p(i, col) / (den + tiny);
                }
            for (double omega = 1.0; omega >= 0.0625; omega *= 0.5) {
                tensor a_try = a;
                for (std::size_t k = 0; k < a_try.size(); ++k)
                    a_try[k] *= omega == 1.0 ? ratio[k] : std::pow(ratio[k], omega);
                tensor g_try = contract_slices(e, a_try);
                const double err_try = squared_error(tau_sq, a_try, c, g_try);
                if (err_try <= err) {
                    a = std::move(a_try);
                    g = std::move(g_try);
                    err = err_try;
                    break;
                }
            }
        }
        run.history.push_back(std::sqrt(std::max(0.0, err)));
        run.iterations = it + 1;
        const double fit = 1.0 - run.history.back() / tau_norm;
        if (std::abs(fit - fit_prev) < opt.tol) break;
        fit_prev = fit;
    }
    run.error_sq = err;
    return run;
}

}  // namespace detail

/// Best of `restarts` seeded multiplicative-update runs. Columns of A and C
/// are normalized to unit length with the scale in lambda, sorted by
/// descending lambda.
inline cp_factors nncp_decompose(const connectivity_tensor& tau, const cp_options& opt) {
    if (opt.rank < 1) throw invalid_input("nncp_decompose: rank must be at least 1");
    for (double v : tau.data())
        if (v < 0.0) throw invalid_input("nncp_decompose: tensor has negative entries");
    cp_factors out;
    out.rank = opt.rank;
    const double tau_norm = tau.norm();
    if (tau_norm == 0.0) {
        out.a = tensor(tau.nodes(), opt.rank, 0.0);
        out.c = tensor(tau.slices(), opt.rank, 0.0);
        out.lambda.assign(opt.rank, 0.0);
        out.fit = std::numeric_limits<double>::quiet_NaN();
        out.degenerate = true;
        return out;
    }
    const detail::slice_entries entries(tau);
    const double tau_sq = tau_norm * tau_norm;
    const std::size_t restarts = std::max<std::size_t>(1, opt.restarts);
    std::vector<detail::cp_run> runs(restarts);
    auto work = [&](std::size_t k) { runs[k] = detail::cp_single(tau, entries, tau_sq, opt, derive_seed(opt.seed, k)); };
    const std::size_t jobs = std::clamp<std::size_t>(opt.jobs, 1, restarts);
    if (jobs == 1) {
        for (std::size_t k = 0; k < restarts; ++k) work(k);
    } else {
        std::vector<std::thread> pool;
        for (std::size_t w = 0; w < jobs; ++w)
            pool.emplace_back([&, w] {
                for (std::size_t k = w; k < restarts; k += jobs) work(k);
            });
        for (auto& th : pool) th.join();
    }
    std::size_t best = 0;
    for (std::size_t k = 1; k < restarts; ++k)
        if (runs[k].error_sq < runs[best].error_sq) best = k;
    detail::cp_run& run = runs[best];

    const std::size_t r = opt.rank;
    std::vector<double> lam(r, 0.0);
    for (std::size_t q = 0; q < r; ++q) {
        double na = 0.0, nc = 0.0;
        for (std::size_t i = 0; i < run.a.rows(); ++i) na += run.a(i, q) * run.a(i, q);
        for (std::size_t s = 0; s < run.c.rows(); ++s) nc += run.c(s, q) * run.c(s, q);
        na = std::sqrt(na);
        nc = std::sqrt(nc);
        lam[q] = na * na * nc;
        if (na > 0.0)
            for (std::size_t i = 0; i < run.a.rows(); ++i) run.a(i, q) /= na;
        if (nc > 0.0)
            for (std::size_t s = 0; s < run.c.rows(); ++s) run.c(s, q) /= nc;
    }
    std::vector<std::size_t> order(r);
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](std::size_t x, std::size_t y) { return lam[x] > lam[y]; });
    out.a = tensor(run.a.rows(), r);
    out.c = tensor(run.c.rows(), r);
    for (std::size_t q = 0; q < r; ++q) {
        out.lambda.push_back(lam[order[q]]);
        for (std::size_t i = 0; i < run.a.rows(); ++i) out.a(i, q) = run.a(i, order[q]);
        for (std::size_t s = 0; s < run.c.rows(); ++s) out.c(s, q) = run.c(s, order[q]);
    }
    out.iterations = run.iterations;
    out.error_history = std::move(run.history);
    out.fit = 1.0 - std::sqrt(std::max(0.0, run.error_sq)) / tau_norm;
    return out;
}

/// Dense reconstruction error ‖τ - Σ λ_r a_r⊗a_r⊗c_r‖.
inline double reconstruction_error(const connectivity_tensor& tau, const cp_factors& f) {
    double s = 0.0;
    const std::size_t n = tau.nodes();
    for (std::size_t sl = 0; sl < tau.slices(); ++sl)
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t j = 0; j < n; ++j) {
                double m = 0.0;
                for (std::size_t q = 0; q < f.rank; ++q) m += f.lambda[q] * f.a(i, q) * f.a(j, q) * f.c(sl, q);
                const double d = tau(i, j, sl) - m;
                s += d * d;
            }
    return std::sqrt(s);
}

struct community {
    std::size_t j = 0;
    std::vector<std::size_t> members;  // ascending
    double mean_membership = 0.0;
    double threshold = 0.0;
    bool degenerate = false;  // no member exceeds the threshold
    std::optional<double> ecc;
};

/// Node i joins community j when A[i,j] > mean(A[:,j]) + std(A[:,j]), with
/// the population standard deviation.
inline std::vector<community> membership_threshold(const cp_factors& f) {
    std::vector<community> out;
    const std::size_t n = f.a.rows();
    for (std::size_t q = 0; q < f.a.cols(); ++q) {
        community c;
        c.j = q;
        double mean = 0.0;
        for (std::size_t i = 0; i < n; ++i) mean += f.a(i, q);
        mean /= static_cast<double>(n);
        double var = 0.0;
        for (std::size_t i = 0; i < n; ++i) var += (f.a(i, q) - mean) * (f.a(i, q) - mean);
        var /= static_cast<double>(n);
        c.mean_membership = mean;
        c.threshold = mean + std::sqrt(var);
        double lo = f.a(0, q), hi = f.a(0, q);
        for (std::size_t i = 1; i < n; ++i) lo = std::min(lo, f.a(i, q)), hi = std::max(hi, f.a(i, q));
        if (lo == hi) c.threshold = hi;  // constant column, no rounding in mean/std
        for (std::size_t i = 0; i < n; ++i)
            if (f.a(i, q) > c.threshold) c.members.push_back(i);
        c.degenerate = c.members.empty();
        out.push_back(std::move(c));
    }
    return out;
}

}  // namespace graphsight

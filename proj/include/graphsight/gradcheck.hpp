#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include "graphsight/autodiff.hpp"

namespace graphsight {

struct fd_issue {
    std::size_t input = 0;
    std::size_t index = 0;
    std::string reason;  // "nondifferentiable" or "non-finite"
};

/// Comparison of tape gradients with central differences.
/// Relative error per coordinate is |g_ad - g_fd| / max(1, |g_ad|, |g_fd|).
struct fd_report {
    double max_rel_error = 0.0;
    double mean_rel_error = 0.0;
    std::size_t checked = 0;
    std::size_t worst_input = 0;
    std::size_t worst_index = 0;
    std::vector<fd_issue> issues;

    std::size_t count(const std::string& reason) const {
        return static_cast<std::size_t>(
            std::count_if(issues.begin(), issues.end(), [&](const fd_issue& i) { return i.reason == reason; }));
    }
};

/// Builds a scalar on a fresh tape from leaves holding the inputs.
using scalar_program = std::function<ad::var(ad::tape&, std::span<const ad::var>)>;

namespace detail {

inline double evaluate(const scalar_program& f, const std::vector<tensor>& inputs) {
    ad::tape t;
    std::vector<ad::var> leaves;
    leaves.reserve(inputs.size());
    for (const auto& x : inputs) leaves.push_back(t.constant(x));
    return f(t, leaves).value().item();
}

}  // namespace detail

/// Checks d f / d x for every coordinate of every input.
///
/// A coordinate whose one-sided difference quotients disagree at step h and
/// still disagree at h/10 sits on a kink (relu at 0, a max tie, a top-k
/// boundary); it is reported as nondifferentiable and left out of the error
/// statistics.
inline fd_report finite_difference_check(const scalar_program& f, std::vector<tensor> inputs, double h = 1e-5) {
    ad::tape t;
    std::vector<ad::var> leaves;
    for (const auto& x : inputs) leaves.push_back(t.leaf(x, true));
    ad::var root = f(t, leaves);
    t.backward(root);
    const double f0 = root.value().item();

    fd_report rep;
    double total = 0.0;
    auto one_sided_gap = [&](std::size_t k, std::size_t i, double step, double& central) {
        const double x0 = inputs[k][i];
        inputs[k][i] = x0 + step;
        const double fp = detail::evaluate(f, inputs);
        inputs[k][i] = x0 - step;
        const double fm = detail::evaluate(f, inputs);
        inputs[k][i] = x0;
        central = (fp - fm) / (2.0 * step);
        const double fwd = (fp - f0) / step;
        const double bwd = (f0 - fm) / step;
        if (!std::isfinite(fp) || !std::isfinite(fm)) return std::numeric_limits<double>::quiet_NaN();
        return std::abs(fwd - bwd) / std::max({1.0, std::abs(fwd), std::abs(bwd)});
    };

    for (std::size_t k = 0; k < inputs.size(); ++k) {
        const tensor& g = leaves[k].grad();
        for (std::size_t i = 0; i < inputs[k].size(); ++i) {
            double fd = 0.0;
            const double gap = one_sided_gap(k, i, h, fd);
            if (!std::isfinite(gap) || !std::isfinite(g[i])) {
                rep.issues.push_back({k, i, "non-finite"});
                continue;
            }
            if (gap > 1e-3) {
                double fd_small = 0.0;
                const double gap_small = one_sided_gap(k, i, h / 10.0, fd_small);
                if (!(gap_small < 0.5 * gap)) {
                    rep.issues.push_back({k, i, "nondifferentiable"});
                    continue;
                }
            }
            const double ga = g[i];
            const double rel = std::abs(ga - fd) / std::max({1.0, std::abs(ga), std::abs(fd)});
            total += rel;
            ++rep.checked;
            if (rel > rep.max_rel_error) {
                rep.max_rel_error = rel;
                rep.worst_input = k;
                rep.worst_index = i;
            }
        }
    }
    rep.mean_rel_error = rep.checked ? total / static_cast<double>(rep.checked) : 0.0;
    return rep;
}

/// Single-input convenience form.
inline fd_report finite_difference_check(const std::function<ad::var(ad::tape&, const ad::var&)>& f,
                                         const tensor& x, double h = 1e-5) {
    return finite_difference_check(
        [&](ad::tape& t, std::span<const ad::var> v) { return f(t, v[0]); }, std::vector<tensor>{x}, h);
}

}  // namespace graphsight

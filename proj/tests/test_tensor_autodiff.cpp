#include <cmath>
#include <span>
#include <vector>

#include <gtest/gtest.h>

#include "graphsight/autodiff.hpp"
#include "graphsight/gradcheck.hpp"
#include "graphsight/rng.hpp"
#include "graphsight/tensor.hpp"

using namespace graphsight;

namespace {

tensor random_tensor(rng& r, std::size_t rows, std::size_t cols, double lo = -1.0, double hi = 1.0) {
    tensor t(rows, cols);
    for (auto& x : t.data()) x = r.uniform(lo, hi);
    return t;
}

// Reduce any op output to a scalar with fixed random weights so every output
// coordinate reaches the root with a distinct coefficient.
ad::var weighted_sum(ad::tape& t, const ad::var& x, std::uint64_t seed) {
    rng r(seed);
    return ad::sum(ad::mul(x, t.constant(random_tensor(r, x.rows(), x.cols()))));
}

void expect_fd_ok(const scalar_program& f, std::vector<tensor> inputs, double tol = 1e-6) {
    const auto rep = finite_difference_check(f, std::move(inputs));
    EXPECT_GT(rep.checked, 0u);
    EXPECT_LT(rep.max_rel_error, tol) << "worst input " << rep.worst_input << " index " << rep.worst_index;
    EXPECT_EQ(rep.count("non-finite"), 0u);
}

}  // namespace

TEST(Tensor, ShapeAndAccess) {
    tensor t(2, 3, 1.5);
    EXPECT_EQ(t.rows(), 2u);
    EXPECT_EQ(t.cols(), 3u);
    t(1, 2) = 4.0;
    EXPECT_EQ(t[5], 4.0);
    EXPECT_EQ(t.row(1)[2], 4.0);
    EXPECT_THROW(tensor(2, 2, std::vector<double>{1, 2, 3}), shape_error);
    EXPECT_THROW(t.item(), shape_error);
    EXPECT_EQ(tensor::scalar(3.0).item(), 3.0);
}

TEST(Autodiff, TanhAtZero) {
    ad::tape t;
    ad::var x = t.leaf(tensor::scalar(0.0));
    ad::var y = ad::tanh(x);
    t.backward(y);
    EXPECT_EQ(y.value().item(), 0.0);
    EXPECT_DOUBLE_EQ(x.grad().item(), 1.0);
}

TEST(Autodiff, SoftmaxOfZeros) {
    ad::tape t;
    ad::var p = ad::softmax(t.leaf(tensor::row_vector({0.0, 0.0})));
    EXPECT_DOUBLE_EQ(p.value()[0], 0.5);
    EXPECT_DOUBLE_EQ(p.value()[1], 0.5);
}

TEST(Autodiff, MaxRoutesToFirstArgmax) {
    ad::tape t;
    ad::var x = t.leaf(tensor::column_vector({3.0, 1.0, 3.0}));
    t.backward(ad::sum(ad::max_rows(x)));
    EXPECT_EQ(x.grad()[0], 1.0);
    EXPECT_EQ(x.grad()[1], 0.0);
    EXPECT_EQ(x.grad()[2], 0.0);

    // The finite-difference oracle sees a kink there and excludes it.
    const auto rep = finite_difference_check([](ad::tape&, const ad::var& v) { return ad::sum(ad::max_rows(v)); },
                                             tensor::column_vector({3.0, 1.0, 3.0}));
    EXPECT_GE(rep.count("nondifferentiable"), 1u);
}

TEST(Autodiff, SumGivesOnes) {
    ad::tape t;
    ad::var x = t.leaf(tensor(2, 3, 0.7));
    t.backward(ad::sum(x));
    for (double g : x.grad().data()) EXPECT_EQ(g, 1.0);
}

TEST(Autodiff, SumOfSquaresGivesTwoX) {
    rng r(1);
    const tensor x0 = random_tensor(r, 3, 4);
    ad::tape t;
    ad::var x = t.leaf(x0);
    t.backward(ad::sum(ad::mul(x, x)));
    for (std::size_t i = 0; i < x0.size(); ++i) EXPECT_DOUBLE_EQ(x.grad()[i], 2.0 * x0[i]);
}

TEST(Autodiff, BackwardRequiresScalarRoot) {
    ad::tape t;
    ad::var x = t.leaf(tensor(2, 2, 1.0));
    EXPECT_THROW(t.backward(x), shape_error);
}

TEST(Autodiff, ShapeMismatchThrows) {
    ad::tape t;
    ad::var a = t.leaf(tensor(2, 3));
    ad::var b = t.leaf(tensor(2, 2));
    EXPECT_THROW(ad::matmul(a, b), shape_error);
    EXPECT_THROW(ad::add(a, b), shape_error);
    EXPECT_THROW(ad::mul(a, b), shape_error);
}

TEST(Autodiff, GradientAccumulatesOverReuse) {
    ad::tape t;
    ad::var x = t.leaf(tensor::scalar(2.0));
    t.backward(ad::add(ad::mul(x, x), ad::scale(x, 3.0)));  // x² + 3x
    EXPECT_DOUBLE_EQ(x.grad().item(), 7.0);
}

TEST(Autodiff, LinearityOfBackward) {
    rng r(2);
    const tensor x0 = random_tensor(r, 3, 3);
    auto grad_of = [&](double alpha, double beta) {
        ad::tape t;
        ad::var x = t.leaf(x0);
        ad::var f = ad::sum(ad::tanh(x));
        ad::var g = ad::sum(ad::mul(x, x));
        t.backward(ad::add(ad::scale(f, alpha), ad::scale(g, beta)));
        return x.grad();
    };
    const tensor gf = grad_of(1.0, 0.0), gg = grad_of(0.0, 1.0), both = grad_of(0.3, -1.7);
    for (std::size_t i = 0; i < x0.size(); ++i) EXPECT_NEAR(both[i], 0.3 * gf[i] - 1.7 * gg[i], 1e-12);
}

TEST(Autodiff, ReplayIsBitIdentical) {
    rng r(3);
    const tensor a0 = random_tensor(r, 4, 3), b0 = random_tensor(r, 3, 2);
    auto run = [&] {
        ad::tape t;
        ad::var a = t.leaf(a0), b = t.leaf(b0);
        ad::var y = ad::sum(ad::softmax(ad::matmul(a, b)));
        t.backward(weighted_sum(t, ad::tanh(ad::matmul(a, b)), 9));
        return std::make_pair(a.grad(), y.value());
    };
    const auto first = run(), second = run();
    EXPECT_EQ(first.first, second.first);
    EXPECT_EQ(first.second, second.second);
}

TEST(GradCheck, SquareAtThree) {
    const auto rep = finite_difference_check([](ad::tape&, const ad::var& x) { return ad::mul(x, x); },
                                             tensor::scalar(3.0));
    EXPECT_EQ(rep.checked, 1u);
    EXPECT_LT(rep.max_rel_error, 1e-8);
}

TEST(GradCheck, ReluKinkIsFlagged) {
    const auto rep = finite_difference_check([](ad::tape&, const ad::var& x) { return ad::sum(ad::relu(x)); },
                                             tensor::row_vector({0.0, 0.5}));
    EXPECT_EQ(rep.count("nondifferentiable"), 1u);
    EXPECT_EQ(rep.issues.front().index, 0u);
    EXPECT_EQ(rep.checked, 1u);
    EXPECT_LT(rep.max_rel_error, 1e-8);
}

TEST(GradCheck, DetectsWrongGradient) {
    // A primitive whose recorded backward is deliberately off by a factor 2.
    auto broken = [](ad::tape& t, const ad::var& x) {
        const std::size_t ix = x.id();
        const double v = x.value().item();
        return t.record(tensor::scalar(v * v), {x}, [ix, v](ad::tape& tp, const tensor& g, const tensor&) {
            tp.accumulate(ix, tensor::scalar(g.item() * 4.0 * v));
        });
    };
    const auto rep = finite_difference_check(broken, tensor::scalar(3.0));
    EXPECT_NEAR(rep.max_rel_error, 0.5, 1e-6);  // |12 - 6| / 12
}

// Every primitive against central differences on random inputs away from kinks.
TEST(Primitives, FiniteDifferences) {
    rng r(11);
    const tensor a = random_tensor(r, 3, 4), b = random_tensor(r, 4, 2), c = random_tensor(r, 3, 4);
    const tensor pos = random_tensor(r, 3, 4, 0.5, 2.0);
    const tensor row = random_tensor(r, 1, 4), col = random_tensor(r, 3, 1);

    expect_fd_ok([](ad::tape& t, std::span<const ad::var> x) { return weighted_sum(t, ad::matmul(x[0], x[1]), 1); },
                 {a, b});
    expect_fd_ok([](ad::tape& t, std::span<const ad::var> x) { return weighted_sum(t, ad::transpose(x[0]), 2); }, {a});
    expect_fd_ok([](ad::tape& t, std::span<const ad::var> x) { return weighted_sum(t, ad::add(x[0], x[1]), 3); },
                 {a, c});
    expect_fd_ok([](ad::tape& t, std::span<const ad::var> x) { return weighted_sum(t, ad::sub(x[0], x[1]), 4); },
                 {a, c});
    expect_fd_ok([](ad::tape& t, std::span<const ad::var> x) { return weighted_sum(t, ad::mul(x[0], x[1]), 5); },
                 {a, c});
    expect_fd_ok([](ad::tape& t, std::span<const ad::var> x) { return weighted_sum(t, ad::div(x[0], x[1]), 6); },
                 {a, pos});
    expect_fd_ok([](ad::tape& t, std::span<const ad::var> x) { return weighted_sum(t, ad::scale(x[0], -2.5), 7); },
                 {a});
    expect_fd_ok([](ad::tape& t, std::span<const ad::var> x) { return weighted_sum(t, ad::add_scalar(x[0], 0.3), 8); },
                 {a});
    expect_fd_ok([](ad::tape& t, std::span<const ad::var> x) { return weighted_sum(t, ad::relu(x[0]), 9); }, {a});
    expect_fd_ok([](ad::tape& t, std::span<const ad::var> x) { return weighted_sum(t, ad::tanh(x[0]), 10); }, {a});
    expect_fd_ok([](ad::tape& t, std::span<const ad::var> x) { return weighted_sum(t, ad::exp(x[0]), 11); }, {a});
    expect_fd_ok([](ad::tape& t, std::span<const ad::var> x) { return weighted_sum(t, ad::log(x[0]), 12); }, {pos});
    expect_fd_ok([](ad::tape& t, std::span<const ad::var> x) { return weighted_sum(t, ad::softmax(x[0]), 13); }, {a});
    expect_fd_ok(
        [](ad::tape& t, std::span<const ad::var> x) { return weighted_sum(t, ad::concat({x[0], x[1]}), 14); },
        {a, c});
    expect_fd_ok(
        [](ad::tape& t, std::span<const ad::var> x) { return weighted_sum(t, ad::gather_rows(x[0], {2, 0, 2}), 15); },
        {a});
    expect_fd_ok(
        [](ad::tape& t, std::span<const ad::var> x) {
            return weighted_sum(t, ad::scatter_add_rows(x[0], {1, 1, 4}, 5), 16);
        },
        {a});
    expect_fd_ok([](ad::tape&, std::span<const ad::var> x) { return ad::element(x[0], 1, 2); }, {a});
    expect_fd_ok([](ad::tape&, std::span<const ad::var> x) { return ad::mean(x[0]); }, {a});
    expect_fd_ok([](ad::tape& t, std::span<const ad::var> x) { return weighted_sum(t, ad::mean_rows(x[0]), 17); },
                 {a});
    expect_fd_ok([](ad::tape& t, std::span<const ad::var> x) { return weighted_sum(t, ad::max_rows(x[0]), 18); },
                 {a});
    expect_fd_ok([](ad::tape&, std::span<const ad::var> x) { return ad::l2norm(x[0]); }, {a});
    expect_fd_ok([](ad::tape& t, std::span<const ad::var> x) { return weighted_sum(t, ad::add_row(x[0], x[1]), 19); },
                 {a, row});
    expect_fd_ok(
        [](ad::tape& t, std::span<const ad::var> x) { return weighted_sum(t, ad::mul_rows(x[0], x[1]), 20); },
        {a, col});
    // 3 messages, out=2, in=2: weights hold flattened 2×2 matrices.
    const tensor w = random_tensor(r, 3, 4), xv = random_tensor(r, 3, 2);
    expect_fd_ok(
        [](ad::tape& t, std::span<const ad::var> x) { return weighted_sum(t, ad::batched_matvec(x[0], x[1]), 21); },
        {w, xv});
}

TEST(Primitives, BatchedMatvecLayout) {
    ad::tape t;
    // One message: W = [[1,2],[3,4]] stored row-major, x = (5,6).
    ad::var w = t.leaf(tensor::row_vector({1, 2, 3, 4}));
    ad::var x = t.leaf(tensor::row_vector({5, 6}));
    ad::var y = ad::batched_matvec(w, x);
    EXPECT_EQ(y.value()[0], 17.0);
    EXPECT_EQ(y.value()[1], 39.0);
}

TEST(Primitives, L2NormAtOriginHasZeroGradient) {
    ad::tape t;
    ad::var x = t.leaf(tensor(3, 1, 0.0));
    t.backward(ad::l2norm(x));
    for (double g : x.grad().data()) EXPECT_EQ(g, 0.0);
}

TEST(Rng, DeterministicAndSeedSplit) {
    rng a(42), b(42);
    for (int k = 0; k < 100; ++k) EXPECT_EQ(a.next(), b.next());
    EXPECT_NE(derive_seed(1, 2), derive_seed(1, 3));
    EXPECT_NE(derive_seed(1, 2), derive_seed(2, 2));
    rng u(5);
    for (int k = 0; k < 1000; ++k) {
        const double x = u.uniform();
        EXPECT_GE(x, 0.0);
        EXPECT_LT(x, 1.0);
    }
}

TEST(Rng, NormalMoments) {
    rng r(8);
    double s = 0.0, s2 = 0.0;
    const int n = 200000;
    for (int k = 0; k < n; ++k) {
        const double x = r.normal();
        s += x;
        s2 += x * x;
    }
    EXPECT_NEAR(s / n, 0.0, 0.01);
    EXPECT_NEAR(s2 / n, 1.0, 0.02);
}

#include <gtest/gtest.h>

#include <cmath>
#include <stdexcept>
#include <string>

#include "robustq/autodiff.hpp"
#include "robustq/rng.hpp"

namespace robustq {
namespace {

Tensor random_tensor(Shape shape, Rng& rng) {
    Tensor t(std::move(shape));
    for (auto& v : t.data()) v = rng.normal();
    return t;
}

TEST(Tensor, ShapeAndFactories) {
    auto m = Tensor::matrix({{1, 2, 3}, {4, 5, 6}});
    EXPECT_EQ(m.shape(), (Shape{2, 3}));
    EXPECT_EQ(m[4], 5.0);
    EXPECT_THROW(Tensor(Shape{2, 2}, std::vector<double>{1, 2, 3}), std::invalid_argument);
    EXPECT_EQ(shape_numel({3, 4, 5}), 60u);
    EXPECT_EQ(m.reshaped({3, 2}).shape(), (Shape{3, 2}));
}

TEST(Tensor, SliceGroupsCoverEveryElement) {
    const Shape s{3, 2, 2};
    auto groups = slice_groups(s, 0);
    ASSERT_EQ(groups.size(), 3u);
    EXPECT_EQ(groups[1], (std::vector<std::size_t>{4, 5, 6, 7}));
    auto inner = slice_indices(s, 2, 1);
    EXPECT_EQ(inner, (std::vector<std::size_t>{1, 3, 5, 7, 9, 11}));
}

TEST(Rng, SameSeedSameStream) {
    Rng a(42), b(42);
    for (int i = 0; i < 100; ++i) EXPECT_EQ(a.normal(), b.normal());
    Rng c(42);
    auto f1 = c.fork(1), f2 = c.fork(2);
    EXPECT_NE(f1.next_u64(), f2.next_u64());
}

TEST(Rng, PermutationIsPermutation) {
    Rng r(3);
    auto p = r.permutation(50);
    std::sort(p.begin(), p.end());
    for (std::size_t i = 0; i < p.size(); ++i) EXPECT_EQ(p[i], i);
}

TEST(Forward, MatmulIdentity) {
    Graph g;
    auto a = g.constant(Tensor::matrix({{1, 2}, {3, 4}}));
    auto i = g.constant(Tensor::matrix({{1, 0}, {0, 1}}));
    EXPECT_EQ(g.value(g.matmul(a, i)), Tensor::matrix({{1, 2}, {3, 4}}));
}

TEST(Forward, ReluAndTanh) {
    Graph g;
    auto r = g.relu(g.constant(Tensor::vector({-1, 0, 2})));
    EXPECT_EQ(g.value(r), Tensor::vector({0, 0, 2}));
    auto t = g.tanh(g.constant(Tensor::vector({0})));
    EXPECT_EQ(g.value(t)[0], 0.0);
}

TEST(Forward, ShapeErrorNamesOpAndShapes) {
    Graph g;
    auto a = g.constant(Tensor::zeros({2, 3}));
    auto b = g.constant(Tensor::zeros({2, 3}));
    try {
        g.matmul(a, b);
        FAIL() << "expected an error";
    } catch (const std::invalid_argument& e) {
        const std::string msg = e.what();
        EXPECT_NE(msg.find("matmul"), std::string::npos) << msg;
        EXPECT_NE(msg.find("[2,3]"), std::string::npos) << msg;
    }
    EXPECT_THROW(g.add(a, g.constant(Tensor::zeros({3, 2}))), std::invalid_argument);
}

TEST(CrossEntropy, UniformLogitsGiveLogClasses) {
    Graph g;
    auto l = g.constant(Tensor::zeros({3, 4}));
    std::vector<int> labels{0, 1, 3};
    EXPECT_NEAR(g.value(g.softmax_cross_entropy(l, labels)).item(), std::log(4.0), 1e-12);
}

TEST(CrossEntropy, MatchesDirectFormula) {
    Graph g;
    auto l = g.constant(Tensor::matrix({{2.0, 0.0, 0.0}}));
    std::vector<int> labels{0};
    const double expect = -std::log(std::exp(2.0) / (std::exp(2.0) + 2.0));
    EXPECT_NEAR(g.value(g.softmax_cross_entropy(l, labels)).item(), expect, 1e-12);
}

TEST(CrossEntropy, RejectsEmptyBatchAndBadLabels) {
    Graph g;
    std::vector<int> none;
    EXPECT_THROW(g.softmax_cross_entropy(g.constant(Tensor::zeros({0, 4})), none), std::invalid_argument);
    std::vector<int> bad{4};
    EXPECT_THROW(g.softmax_cross_entropy(g.constant(Tensor::zeros({1, 4})), bad), std::out_of_range);
}

TEST(Backward, SumGivesOnes) {
    Graph g;
    auto w = g.parameter(Tensor::matrix({{1, -2, 3}, {0.5, 0, 7}}));
    g.backward(g.sum(w));
    EXPECT_EQ(g.grad(w), Tensor::ones({2, 3}));
}

TEST(Backward, TanhDerivative) {
    Graph g;
    auto w = g.parameter(Tensor::vector({0.5}));
    g.backward(g.sum(g.tanh(w)));
    EXPECT_NEAR(g.grad(w)[0], 1.0 - std::tanh(0.5) * std::tanh(0.5), 1e-15);
    EXPECT_NEAR(g.grad(w)[0], 0.7864, 1e-4);
}

TEST(Backward, AbsAtZeroIsZero) {
    Graph g;
    auto w = g.parameter(Tensor::vector({0.0}));
    g.backward(g.sum(g.abs(w)));
    EXPECT_EQ(g.grad(w)[0], 0.0);
}

TEST(Backward, NonScalarLossThrows) {
    Graph g;
    auto w = g.parameter(Tensor::vector({1.0, 2.0}));
    EXPECT_THROW(g.backward(g.tanh(w)), std::invalid_argument);
}

TEST(Backward, SharedInputAccumulates) {
    Graph g;
    auto w = g.parameter(Tensor::vector({3.0}));
    g.backward(g.sum(g.add(w, g.scale(w, 2.0))));
    EXPECT_EQ(g.grad(w)[0], 3.0);
}

TEST(FiniteDifference, QuadraticIsExact) {
    Rng rng(11);
    std::vector<Tensor> params{random_tensor({4, 3}, rng)};
    auto loss = [](Graph& g, std::span<const NodeId> p) {
        auto sq = g.elementwise(p[0], [](double x) { return x * x; }, [](double x) { return 2 * x; }, "square");
        return g.sum(sq);
    };
    EXPECT_LE(finite_difference_check(loss, params, 1e-5), 1e-6);
}

TEST(FiniteDifference, TanhChain) {
    Rng rng(12);
    std::vector<Tensor> params{random_tensor({3, 4}, rng), random_tensor({4, 2}, rng)};
    auto loss = [](Graph& g, std::span<const NodeId> p) {
        auto h = g.tanh(g.matmul(p[0], p[1]));
        return g.sum(g.tanh(g.scale(h, 1.5)));
    };
    EXPECT_LE(finite_difference_check(loss, params, 1e-5), 1e-4);
}

TEST(FiniteDifference, ConstantLossIsZero) {
    std::vector<Tensor> params{Tensor::vector({1, 2, 3})};
    auto loss = [](Graph& g, std::span<const NodeId>) { return g.constant(Tensor::scalar(2.5)); };
    EXPECT_EQ(finite_difference_check(loss, params, 1e-5), 0.0);
}

TEST(FiniteDifference, ConvAndPool) {
    Rng rng(13);
    std::vector<Tensor> params{random_tensor({2, 2, 4, 4}, rng), random_tensor({3, 2, 3, 3}, rng),
                               random_tensor({3}, rng)};
    auto loss = [](Graph& g, std::span<const NodeId> p) {
        auto y = g.add_bias(g.conv2d(p[0], p[1], {1, 1}), p[2]);
        auto z = g.flatten(g.avgpool2d(g.tanh(y), 2));
        return g.sum(g.tanh(z));
    };
    EXPECT_LE(finite_difference_check(loss, params, 1e-5), 1e-4);
}

TEST(Determinism, RepeatedGraphsAgreeBitwise) {
    Rng rng(14);
    auto x = random_tensor({5, 6}, rng);
    auto w = random_tensor({6, 3}, rng);
    auto run = [&] {
        Graph g;
        auto p = g.parameter(w);
        std::vector<int> labels{0, 1, 2, 0, 1};
        auto l = g.softmax_cross_entropy(g.matmul(g.constant(x), p), labels);
        g.backward(l);
        return g.grad(p);
    };
    EXPECT_EQ(run(), run());
}

TEST(Properties, TanhOddAndBounded) {
    Rng rng(15);
    auto x = random_tensor({200}, rng);
    for (auto& v : x.data()) v *= 10;
    Graph g;
    auto a = g.value(g.tanh(g.constant(x)));
    auto b = g.value(g.tanh(g.scale(g.constant(x), -1.0)));
    for (std::size_t i = 0; i < x.numel(); ++i) {
        EXPECT_EQ(a[i], -b[i]);
        EXPECT_LE(std::abs(a[i]), 1.0);
    }
}

}  // namespace
}  // namespace robustq

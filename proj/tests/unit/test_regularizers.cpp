#include <gtest/gtest.h>

#include <cmath>
#include <stdexcept>

#include "../common/oracles.hpp"
#include "robustq/regularizers.hpp"

namespace robustq {
namespace {

double eval1(const Tensor& w) {
    Graph g;
    return g.value(sym_loss1(g, g.constant(w))).item();
}

double eval2(const Tensor& w) {
    Graph g;
    return g.value(sym_loss2(g, g.constant(w))).item();
}

// Values spread out enough that no pair sum or sort order is near a tie.
Tensor spread_tensor(std::size_t c, std::size_t n, Rng& rng) {
    Tensor t({c, n});
    for (std::size_t k = 0; k < c; ++k) {
        auto perm = rng.permutation(n);
        for (std::size_t i = 0; i < n; ++i) {
            t[k * n + i] = 0.37 * static_cast<double>(perm[i]) - 0.5 + 0.05 * rng.uniform() + 0.013 * i;
        }
    }
    return t;
}

TEST(SymLoss1, Examples) {
    EXPECT_EQ(eval1(Tensor::matrix({{0.5, -0.5, 1.0, -1.0}})), 0.0);
    EXPECT_DOUBLE_EQ(eval1(Tensor::matrix({{1, 2, 3, 4}})), 5.0);
    EXPECT_DOUBLE_EQ(eval1(Tensor::matrix({{0.5, -0.5, 1.0, -1.0}, {1, 2, 3, 4}})), 2.5);
    EXPECT_THROW(eval1(Tensor::matrix({{1.0}})), std::invalid_argument);
}

TEST(SymLoss1, OddChannelSkipsMiddle) {
    EXPECT_DOUBLE_EQ(eval1(Tensor::matrix({{-1, 0.3, 1}})), 0.0);
    EXPECT_DOUBLE_EQ(eval1(Tensor::matrix({{-1, 7, 1}})), 4.0);
}

TEST(SymLoss1, ZeroExactlyOnMirrorChannels) {
    Rng rng(1);
    for (int trial = 0; trial < 20; ++trial) {
        auto w = oracle::mirror_tensor(3, 6, rng);
        EXPECT_EQ(eval1(w), 0.0);
        w[rng.below(w.numel())] += 0.1;
        EXPECT_GT(eval1(w), 0.0);
    }
}

TEST(SymLoss2, Examples) {
    EXPECT_EQ(eval2(Tensor::matrix({{-4, -3, -2, -1, 1, 2, 3, 4}})), 0.0);
    EXPECT_DOUBLE_EQ(eval2(Tensor::matrix({{-4, -3, -2, -1, 1, 2, 3, 5}})), 0.5);
    auto relaxed = Tensor::matrix({{-2, -1, 0.5, 2.5}});
    EXPECT_EQ(eval2(relaxed), 0.0);
    EXPECT_DOUBLE_EQ(eval1(relaxed), 0.5);
    EXPECT_THROW(eval2(Tensor::matrix({{1, 2, 3}})), std::invalid_argument);
}

TEST(SymLoss, MatchOracleAndInvariants) {
    Rng rng(2);
    for (int trial = 0; trial < 50; ++trial) {
        auto w = oracle::normal_tensor({3, 8}, rng);
        const double l1 = eval1(w), l2 = eval2(w);
        EXPECT_NEAR(l1, oracle::sym1(w), 1e-14);
        EXPECT_NEAR(l2, oracle::sym2(w), 1e-14);
        Tensor flipped = w, shuffled = w;
        for (auto& v : flipped.data()) v = -v;
        for (std::size_t c = 0; c < 3; ++c) {
            auto p = rng.permutation(8);
            for (std::size_t i = 0; i < 8; ++i) shuffled[c * 8 + i] = w[c * 8 + p[i]];
        }
        EXPECT_NEAR(eval1(flipped), l1, 1e-14);
        EXPECT_NEAR(eval1(shuffled), l1, 1e-14);
        EXPECT_NEAR(eval2(shuffled), l2, 1e-14);
        EXPECT_GE(l2, 0.0);
        // each 2:2 group is bounded by its two mirror pairs, with twice the prefactor
        EXPECT_LE(l2, 2.0 * l1 + 1e-12);
    }
}

TEST(SymLoss, ChannelAxisSelectsSlices) {
    auto w = Tensor::matrix({{1, 0.5}, {2, -0.5}, {3, 1.0}, {4, -1.0}});
    Graph g;
    EXPECT_DOUBLE_EQ(g.value(sym_loss1(g, g.constant(w), 1)).item(), 2.5);
}

TEST(SymLoss, GradientsPassFiniteDifference) {
    Rng rng(3);
    for (int trial = 0; trial < 10; ++trial) {
        std::vector<Tensor> p{spread_tensor(2, 8, rng)};
        auto f1 = [](Graph& g, std::span<const NodeId> n) { return sym_loss1(g, n[0]); };
        auto f2 = [](Graph& g, std::span<const NodeId> n) { return sym_loss2(g, n[0]); };
        EXPECT_LE(finite_difference_check(f1, p, 1e-6), 1e-4);
        EXPECT_LE(finite_difference_check(f2, p, 1e-6), 1e-4);
    }
}

TEST(TotalLoss, Examples) {
    Graph g;
    auto ce = g.constant(Tensor::scalar(0.7));
    auto asym = g.constant(Tensor::matrix({{1, 2, 3, 4}}));
    auto mirror = g.constant(Tensor::matrix({{0.5, -0.5, 1.0, -1.0}}));
    std::vector<LayerWeight> one{{"fc1", asym}};
    std::vector<LayerWeight> sym{{"fc1", mirror}, {"fc2", mirror}};

    SymRegConfig off;
    off.lambda1 = off.lambda2 = 0;
    EXPECT_EQ(g.value(total_loss(g, ce, one, off)).item(), 0.7);
    EXPECT_EQ(g.value(total_loss(g, ce, sym, SymRegConfig{})).item(), 0.7);

    SymRegConfig cfg;
    cfg.lambda1 = 0.1;
    cfg.lambda2 = 0;
    EXPECT_NEAR(g.value(total_loss(g, ce, one, cfg)).item(), 1.2, 1e-15);
    cfg.skip_layers = {"fc1"};
    EXPECT_EQ(g.value(total_loss(g, ce, one, cfg)).item(), 0.7);
}

TEST(SatNL, ValidityOfCandidates) {
    const auto grid = satnl_probe_grid();
    for (auto kind : {SatNLKind::tanh, SatNLKind::alternative_1, SatNLKind::alternative_2}) {
        auto r = is_valid_satnl([kind](double x) { return satnl_value(kind, x); }, grid);
        EXPECT_TRUE(r.valid) << to_string(kind);
        EXPECT_TRUE(r.violations.empty());
    }
    EXPECT_FALSE(is_valid_satnl([](double x) { return x; }, grid).valid);
    EXPECT_FALSE(is_valid_satnl([](double x) { return std::max(0.0, x); }, grid).valid);
}

TEST(SatNL, UnitSlopeAtOriginAndInverse) {
    for (auto kind : {SatNLKind::tanh, SatNLKind::alternative_1, SatNLKind::alternative_2}) {
        EXPECT_EQ(satnl_value(kind, 0.0), 0.0);
        const double slope = kind == SatNLKind::alternative_2 ? 2.0 / M_PI : 1.0;
        EXPECT_NEAR(satnl_derivative(kind, 0.0), slope, 1e-15);
        for (double y : {-0.9, -0.3, 0.0, 0.5, 0.99}) EXPECT_NEAR(satnl_value(kind, satnl_inverse(kind, y)), y, 1e-12);
        for (double x : {-2.0, 0.3, 1.7}) {
            const double h = 1e-6;
            const double fd = (satnl_value(kind, x + h) - satnl_value(kind, x - h)) / (2 * h);
            EXPECT_NEAR(satnl_derivative(kind, x), fd, 1e-8);
        }
    }
}

TEST(SatNL, ApplyGradient) {
    Rng rng(4);
    for (auto kind : {SatNLKind::tanh, SatNLKind::alternative_1, SatNLKind::alternative_2}) {
        std::vector<Tensor> p{oracle::normal_tensor({3, 4}, rng)};
        auto f = [kind](Graph& g, std::span<const NodeId> n) { return g.sum(g.tanh(satnl_apply(g, n[0], kind))); };
        EXPECT_LE(finite_difference_check(f, p, 1e-5), 1e-4);
    }
}

TEST(SatNL, InitLatentExamples) {
    auto l = init_latent(Tensor::vector({0.0, std::tanh(1.0), 0.9999, -5.0}), SatNLKind::tanh);
    EXPECT_EQ(l[0], 0.0);
    EXPECT_NEAR(l[1], 1.0, 1e-9);
    EXPECT_DOUBLE_EQ(l[2], std::atanh(0.999));
    EXPECT_DOUBLE_EQ(l[3], -std::atanh(0.999));
}

}  // namespace
}  // namespace robustq

#include <gtest/gtest.h>

#include <cmath>
#include <limits>
#include <stdexcept>
#include <string>

#include "fixtures.hpp"
#include "robustq/checkpoint.hpp"
#include "robustq/harness.hpp"

namespace robustq {
namespace {

TEST(Schedule, WarmupThenCosine) {
    TrainConfig c;
    c.epochs = 10;
    c.warmup_epochs = 2;
    c.lr = 0.1;
    c.lr_floor = 0.0;
    EXPECT_NEAR(learning_rate(c, 0, 10), 0.1 / 20, 1e-15);
    EXPECT_NEAR(learning_rate(c, 19, 10), 0.1, 1e-15);
    EXPECT_NEAR(learning_rate(c, 99, 10), 0.0, 1e-3);
    double prev = learning_rate(c, 20, 10);
    for (std::size_t s = 21; s < 100; ++s) {
        const double lr = learning_rate(c, s, 10);
        EXPECT_LE(lr, prev);
        prev = lr;
    }
}

TEST(Sgd, MomentumAndDecayRule) {
    std::vector<Tensor> w{Tensor::vector({1.0, -2.0}), Tensor::vector({0.5})};
    std::vector<Tensor> g{Tensor::vector({0.1, 0.2}), Tensor::vector({0.3})};
    SgdState st;
    SgdStep step{0.5, 0.9, 0.01, {true, false}};
    sgd_update(w, g, st, step);
    EXPECT_DOUBLE_EQ(w[0][0], 1.0 - 0.5 * (0.1 + 0.01 * 1.0));
    EXPECT_DOUBLE_EQ(w[0][1], -2.0 - 0.5 * (0.2 - 0.01 * 2.0));
    EXPECT_DOUBLE_EQ(w[1][0], 0.5 - 0.5 * 0.3);
    const double v0 = 0.1 + 0.01 * 1.0;
    const double w0 = w[0][0];
    sgd_update(w, g, st, step);
    EXPECT_DOUBLE_EQ(w[0][0], w0 - 0.5 * (0.9 * v0 + 0.1 + 0.01 * w0));
}

TEST(Sam, HandTraceOnQuadratic) {
    std::vector<Tensor> w{Tensor::vector({1.0})};
    SamConfig sam{true, false, 0.1};
    SgdState st;
    SgdStep step{1.0, 0.0, 0.0, {}};
    auto closure = [](const std::vector<Tensor>& p) { return std::vector<Tensor>{p[0]}; };
    auto eps = sam_perturbation(w, {Tensor::vector({1.0})}, sam);
    EXPECT_DOUBLE_EQ(eps[0][0], 0.1);
    sam_step(w, {Tensor::vector({1.0})}, sam, closure, st, step);
    EXPECT_NEAR(w[0][0], -0.1, 1e-15);
}

TEST(Sam, AdaptivePerturbationVanishesAtZeroWeight) {
    std::vector<Tensor> w{Tensor::vector({0.0, 2.0, -1.0})};
    std::vector<Tensor> g{Tensor::vector({1.0, 1.0, 1.0})};
    auto eps = sam_perturbation(w, g, {true, true, 0.5});
    EXPECT_EQ(eps[0][0], 0.0);
    // rho T^2 g / |T g| with T = diag(|w|)
    const double norm = std::sqrt(4.0 + 1.0);
    EXPECT_NEAR(eps[0][1], 0.5 * 4.0 / norm, 1e-15);
    EXPECT_NEAR(eps[0][2], 0.5 * 1.0 / norm, 1e-15);
    auto none = sam_perturbation(w, {Tensor::zeros({3})}, {true, false, 0.5});
    EXPECT_EQ(none[0], Tensor::zeros({3}));
}

TEST(Sam, ZeroRhoReproducesSgdExactly) {
    Rng rng(7);
    Tensor target({6});
    for (auto& v : target.data()) v = rng.normal();
    auto grad_of = [&](const std::vector<Tensor>& p) {
        Tensor g({6});
        for (std::size_t i = 0; i < 6; ++i) g[i] = std::tanh(p[0][i] - target[i]) + 0.1 * p[0][i];
        return std::vector<Tensor>{g};
    };
    std::vector<Tensor> a{Tensor::zeros({6})}, b{Tensor::zeros({6})};
    SgdState sa, sb;
    SgdStep step{0.1, 0.9, 1e-3, {}};
    for (int i = 0; i < 100; ++i) {
        sgd_update(a, grad_of(a), sa, step);
        sam_step(b, grad_of(b), {true, false, 0.0}, grad_of, sb, step);
        ASSERT_EQ(a[0], b[0]) << "step " << i;
    }
    EXPECT_THROW(sam_step(b, grad_of(b), {false, false, 0.1}, grad_of, sb, step), std::invalid_argument);
}

TEST(Train, BlobsReachNinetyFivePercent) {
    const auto& r = fixture::trained_mlp();
    EXPECT_GE(r.best_val_accuracy, 0.95);
    EXPECT_EQ(r.history.size(), 30u);
    EXPECT_EQ(r.checkpoint.meta("seed"), "1");
    EXPECT_DOUBLE_EQ(evaluate(r.checkpoint, fixture::blobs().validation), r.best_val_accuracy);
}

TEST(Train, SameSeedIsBitIdentical) {
    auto a = train(fixture::two_layer_mlp(), fixture::blobs(), fixture::quick(3, 9));
    auto b = train(fixture::two_layer_mlp(), fixture::blobs(), fixture::quick(3, 9));
    EXPECT_EQ(encode_checkpoint(a.checkpoint), encode_checkpoint(b.checkpoint));
    auto c = train(fixture::two_layer_mlp(), fixture::blobs(), fixture::quick(3, 10));
    EXPECT_NE(a.checkpoint.tensors, c.checkpoint.tensors);
}

TEST(Train, ZeroLambdaMatchesPlainTraining) {
    auto plain = fixture::quick(3, 4);
    auto reg = plain;
    reg.symreg = true;
    reg.symreg_cfg.lambda1 = 0;
    reg.symreg_cfg.lambda2 = 0;
    auto a = train(fixture::two_layer_mlp(), fixture::blobs(), plain);
    auto b = train(fixture::two_layer_mlp(), fixture::blobs(), reg);
    EXPECT_EQ(a.checkpoint.tensors, b.checkpoint.tensors);
    ASSERT_EQ(a.history.size(), b.history.size());
    for (std::size_t i = 0; i < a.history.size(); ++i) EXPECT_EQ(a.history[i].train_loss, b.history[i].train_loss);
}

TEST(Train, DivergenceNamesEpoch) {
    auto cfg = fixture::quick(3, 1);
    cfg.lr = 1e12;
    cfg.warmup_epochs = 0;
    try {
        train(fixture::two_layer_mlp(), fixture::blobs(), cfg);
        FAIL() << "expected divergence";
    } catch (const std::runtime_error& e) {
        EXPECT_NE(std::string(e.what()).find("epoch"), std::string::npos) << e.what();
    }
}

TEST(Train, SymRegSkipsClassifierAndNarrowLayers) {
    ModelSpec cnn;
    cnn.arch = Architecture::smallcnn;
    cnn.widths = {1, 4, 8, 32};
    auto skip = default_symreg_skip(cnn);
    const auto layers = cnn.layers();
    EXPECT_TRUE(skip.count(layers.back().name));
    EXPECT_TRUE(skip.count(layers.front().name));  // 1 x 3 x 3 = 9 weights per channel
    EXPECT_FALSE(skip.count(layers[1].name));
}

TEST(Evaluate, RandomLabelsNearChance) {
    const auto& ck = fixture::trained_mlp().checkpoint;
    const double acc = evaluate(ck, with_random_labels(fixture::blobs().validation, 3));
    EXPECT_NEAR(acc, 0.25, 0.05);
    EXPECT_GT(evaluate(ck, fixture::blobs().train), acc);
}

TEST(Evaluate, QuantizedAccuracyTracksPrecision) {
    const auto& ck = fixture::trained_mlp().checkpoint;
    const auto spec = load_model_spec(ck);
    const auto params = load_model_params(ck, spec);
    const auto& data = fixture::blobs();
    const double fp = evaluate(ck, data.validation);

    PtqOptions o16;
    o16.bits_w = 16;
    o16.bits_a = 16;
    auto q16 = build_ptq_quant(spec, params, data.calibration, o16);
    EXPECT_LE(std::fabs(evaluate(ck, data.validation, &q16) - fp), 0.002);

    // A step four times too wide only reaches chance once the grid is coarse:
    // at 2 bits every weight rounds to zero.
    PtqOptions off;
    off.step_ratio = 4.0;
    off.bits_w = off.pinned_bits = 2;
    auto q2 = build_ptq_quant(spec, params, data.calibration, off);
    EXPECT_NEAR(evaluate(ck, data.validation, &q2), 0.25, 0.03);
    for (int bits : {3, 4}) {
        PtqOptions fitted;
        fitted.bits_w = fitted.pinned_bits = bits;
        off.bits_w = off.pinned_bits = bits;
        auto qa = build_ptq_quant(spec, params, data.calibration, fitted);
        auto qb = build_ptq_quant(spec, params, data.calibration, off);
        EXPECT_LT(evaluate(ck, data.validation, &qb), evaluate(ck, data.validation, &qa)) << bits;
    }
}

TEST(Evaluate, QuantizesEffectiveWeights) {
    ModelSpec spec = fixture::two_layer_mlp();
    spec.satnl.layers["fc1"] = true;
    auto r = train(spec, fixture::blobs(), fixture::quick(5, 2));
    const auto params = load_model_params(r.checkpoint, spec);
    const auto eff = effective_weights(spec, params);
    for (double v : eff[0].data()) EXPECT_LT(std::fabs(v), 1.0);
    PtqOptions o;
    o.bits_w = 16;
    auto q = build_ptq_quant(spec, params, fixture::blobs().calibration, o);
    const auto fp = evaluate(r.checkpoint, fixture::blobs().validation);
    EXPECT_LE(std::fabs(evaluate(r.checkpoint, fixture::blobs().validation, &q) - fp), 0.002);
}

TEST(LayerBits, FirstAndLastPinned) {
    EXPECT_EQ(layer_bits(4, 3), (std::vector<int>{8, 3, 3, 8}));
    EXPECT_EQ(layer_bits(3, 16), (std::vector<int>{16, 16, 16}));
    EXPECT_EQ(layer_bits(1, 2), (std::vector<int>{8}));
}

TEST(Qat, SixteenBitIsNearLossless) {
    const auto& base = fixture::trained_mlp();
    QatConfig q;
    q.bits_w = 16;
    q.bits_a = 16;
    q.epochs = 2;
    q.base = fixture::quick();
    auto r = qat_finetune(base.checkpoint, fixture::blobs(), q);
    ASSERT_TRUE(has_qat_state(r.checkpoint));
    auto nq = load_qat_quant(r.checkpoint);
    const double acc = evaluate(r.checkpoint, fixture::blobs().validation, &nq);
    EXPECT_LE(std::fabs(acc - evaluate(base.checkpoint, fixture::blobs().validation)), 0.002);
}

TEST(Qat, FourBitBeatsPtqAndPinsEnds) {
    const auto& base = fixture::trained_mlp();
    QatConfig q;
    q.bits_w = 4;
    q.bits_a = 4;
    q.epochs = 5;
    q.base = fixture::quick();
    auto r = qat_finetune(base.checkpoint, fixture::blobs(), q);
    auto nq = load_qat_quant(r.checkpoint);
    const double qat = evaluate(r.checkpoint, fixture::blobs().validation, &nq);

    PtqOptions o;
    o.bits_w = 4;
    o.bits_a = 4;
    o.pinned_bits = 4;
    const auto spec = load_model_spec(base.checkpoint);
    auto pq = build_ptq_quant(spec, load_model_params(base.checkpoint, spec), fixture::blobs().calibration, o);
    EXPECT_GE(qat, evaluate(base.checkpoint, fixture::blobs().validation, &pq));
    EXPECT_EQ(r.checkpoint.meta("qat.fc1.w_bits"), "8");
    EXPECT_EQ(r.checkpoint.meta("qat.fc2.w_bits"), "8");
}

TEST(Checkpoint, RoundTripIsByteExact) {
    const auto& ck = fixture::trained_mlp().checkpoint;
    const auto path = std::filesystem::temp_directory_path() / "robustq_unit_roundtrip.rqck";
    save_checkpoint(ck, path);
    auto back = load_checkpoint(path);
    EXPECT_EQ(back, ck);
    EXPECT_EQ(encode_checkpoint(back), encode_checkpoint(ck));
    std::filesystem::remove(path);
}

TEST(Checkpoint, LayoutAndErrors) {
    Checkpoint c;
    c.set_tensor("w", Tensor::vector({1.5}));
    c.metadata["k"] = "v";
    const std::string bytes = encode_checkpoint(c);
    const std::string expect = std::string("RQCK\x01\x00\x01\x00w\x00\x01\x01\x00\x00\x00\x00\x00\xc0\x3f\x00\x00k=v\n", 25);
    EXPECT_EQ(bytes, expect);
    EXPECT_THROW(decode_checkpoint("RQCX"), std::runtime_error);
    EXPECT_THROW(decode_checkpoint(bytes.substr(0, 12)), std::runtime_error);
    c.set_tensor("x", Tensor::vector({0.1}));
    EXPECT_EQ(c.tensor("x")[0], static_cast<double>(0.1f));
}

}  // namespace
}  // namespace robustq

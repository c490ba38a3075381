#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "robustq/checkpoint.hpp"
#include "robustq/dataset.hpp"
#include "robustq/model.hpp"
#include "robustq/quantizer.hpp"
#include "robustq/regularizers.hpp"

namespace robustq {

struct SamConfig {
    bool enabled = false;
    bool adaptive = false;  // ASAM: perturbation scaled by T = diag(|w|)
    double rho = 0.05;
};

struct TrainConfig {
    int epochs = 30;
    std::size_t batch_size = 64;
    double lr = 0.05;
    double weight_decay = 5e-4;
    double momentum = 0.9;
    int warmup_epochs = 2;
    double lr_floor = 1e-4;
    std::uint64_t seed = 0;
    SamConfig sam;
    bool symreg = false;
    SymRegConfig symreg_cfg;
};

// Linear warmup then cosine decay to lr_floor.
double learning_rate(const TrainConfig& cfg, std::size_t step, std::size_t steps_per_epoch);

// Layers SymReg leaves alone: the final classifier and any layer with fewer
// than 16 weights per output channel.
std::set<std::string> default_symreg_skip(const ModelSpec& spec);

struct SgdState {
    std::vector<Tensor> velocity;
};

struct SgdStep {
    double lr = 0.0;
    double momentum = 0.9;
    double weight_decay = 0.0;
    std::vector<bool> decay;  // per parameter tensor; empty = decay everything
};

// v <- m v + (g + wd w);  w <- w - lr v
void sgd_update(std::vector<Tensor>& params, const std::vector<Tensor>& grads, SgdState& state, const SgdStep& step);

using GradientClosure = std::function<std::vector<Tensor>(const std::vector<Tensor>& params)>;

// eps = rho g / |g| (SAM) or rho T^2 g / |T g| with T = |w| (ASAM). Zero when
// the (scaled) gradient norm vanishes.
std::vector<Tensor> sam_perturbation(const std::vector<Tensor>& params, const std::vector<Tensor>& grads,
                                     const SamConfig& sam);

// Two-pass update: gradient at w + eps via `closure`, then the base SGD step
// from the original w with that gradient.
void sam_step(std::vector<Tensor>& params, const std::vector<Tensor>& grads, const SamConfig& sam,
              const GradientClosure& closure, SgdState& state, const SgdStep& step);

struct EpochRecord {
    int epoch = 0;
    double train_loss = 0.0;
    double val_accuracy = 0.0;
};

struct TrainResult {
    Checkpoint checkpoint;
    std::vector<EpochRecord> history;
    double best_val_accuracy = 0.0;
    int best_epoch = 0;
};

// Trains from a fresh seeded initialization and returns the best-validation
// state. Throws std::runtime_error naming the epoch if the loss diverges.
TrainResult train(const ModelSpec& spec, const DataSplit& data, const TrainConfig& cfg,
                  const std::map<std::string, std::string>& metadata = {});

// ---------------------------------------------------------------------------
// Quantized evaluation

struct WeightQuant {
    QuantScheme scheme;
    QuantParams params;
    // Only elements whose nearest level equals this one are quantized.
    std::optional<std::int64_t> single_level;
};

struct ActivationQuant {
    QuantScheme scheme;
    QuantParams params;
};

struct LayerQuant {
    std::optional<WeightQuant> weight;
    std::optional<ActivationQuant> activation;
};

// One entry per layer, in layer order.
using NetworkQuant = std::vector<LayerQuant>;

// Bit-width per layer; the first and last layers get max(bits, pinned_bits).
std::vector<int> layer_bits(std::size_t layers, int bits, int pinned_bits = 8);

Tensor apply_weight_quant(const Tensor& effective, const WeightQuant& q);

// Top-1 accuracy; quantization applies to effective (post-SatNL) weights and
// to each layer's input activations.
double evaluate(const ModelSpec& spec, const ModelParams& params, const Dataset& data,
                const NetworkQuant* quant = nullptr);
double evaluate(const Checkpoint& ckpt, const Dataset& data, const NetworkQuant* quant = nullptr);

struct LayerTrace {
    std::vector<Tensor> inputs;   // per layer, all samples stacked
    std::vector<Tensor> outputs;  // pre-activation
};

LayerTrace trace_layers(const ModelSpec& spec, const ModelParams& params, const Dataset& data,
                        const NetworkQuant* quant = nullptr);

// ---------------------------------------------------------------------------
// Quantization-aware fine-tuning

struct QatConfig {
    int bits_w = 4;
    std::optional<int> bits_a = 4;  // nullopt keeps activations in full precision
    int pinned_bits = 8;
    int epochs = 10;
    double lr_scale = 0.1;
    TrainConfig base;  // everything but lr (scaled) and epochs is reused
};

// Learned-step fake quantization on weights (per-channel symmetric) and
// activations (per-tensor asymmetric) with straight-through gradients inside
// the clip range. Steps of grids wider than 8 bits stay at their calibrated
// values. The returned checkpoint carries the learned steps.
TrainResult qat_finetune(const Checkpoint& ckpt, const DataSplit& data, const QatConfig& cfg);

bool has_qat_state(const Checkpoint& ckpt);
// Quantizers stored by qat_finetune.
NetworkQuant load_qat_quant(const Checkpoint& ckpt);

// Fake-quant node with learnable step(s); exposed for gradient checks.
NodeId lsq_fake_quant(Graph& g, NodeId x, NodeId step, const QuantScheme& scheme,
                      const std::vector<std::int64_t>& zero_points);

}  // namespace robustq

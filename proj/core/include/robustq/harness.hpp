#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "robustq/checkpoint.hpp"
#include "robustq/config.hpp"
#include "robustq/dataset.hpp"
#include "robustq/error_model.hpp"
#include "robustq/model.hpp"
#include "robustq/quantizer.hpp"
#include "robustq/report.hpp"
#include "robustq/trainer.hpp"

namespace robustq {

// "FP" (any case) -> nullopt, otherwise an integer bit-width.
std::optional<int> parse_bits(const std::string& s);
std::string bits_label(const std::optional<int>& bits);

// ---------------------------------------------------------------------------
// Config -> experiment objects

// Named bundles of defaults: "baseline", "symreg", "satnl", "robust"
// (SymReg + SatNL + ASAM). Explicit keys in the user config win.
Config preset_config(const std::string& name);
// preset_config(cfg["preset"]) overlaid with cfg.
Config resolve_preset(const Config& cfg);

ModelSpec model_from_config(const Config& cfg);
// data.kind = blobs | patterns | idx
DataSplit data_from_config(const Config& cfg);
TrainConfig train_from_config(const Config& cfg, const ModelSpec& spec, std::uint64_t seed);

// Trains one model per seed, on up to `jobs` threads.
std::vector<Checkpoint> train_models(const Config& cfg, const ModelSpec& spec, const DataSplit& data,
                                     const std::vector<std::uint64_t>& seeds, std::size_t jobs);

// ---------------------------------------------------------------------------
// Measurements

struct PtqOptions {
    std::optional<int> bits_w = 4;
    std::optional<int> bits_a;  // FP by default
    FitMethod fit = FitMethod::minmax;
    int pinned_bits = 8;
    // Multiplies every weight step; 1.0 leaves the fitted steps untouched.
    double step_ratio = 1.0;
};

// Per-layer quantizers fitted to effective weights (and calibration inputs
// for activations).
NetworkQuant build_ptq_quant(const ModelSpec& spec, const ModelParams& params, const Dataset& calibration,
                             const PtqOptions& opt);

// Mean over output channels of |mean of the channel's weights|.
double channel_mean_abs(const Tensor& w);

struct PtqResult {
    double fp_accuracy = 0.0;
    double quant_accuracy = 0.0;
    std::vector<std::string> layers;
    std::vector<double> drift_max;        // per layer, max |bias_drift|
    std::vector<double> weight_mean_abs;  // per layer, channel_mean_abs of effective weights
    double drift_max_all = 0.0;           // max over layers
    double weight_mean_abs_regularized = 0.0;  // mean over layers SymReg targets by default

    double drop() const noexcept { return fp_accuracy - quant_accuracy; }
    ReportRow row() const;
};

PtqResult ptq_pipeline(const Checkpoint& ckpt, const DataSplit& data, const PtqOptions& opt);

enum class SweepMode { ptq, qat };

// Same checkpoint evaluated across bit-widths with steps re-fitted by minmax
// at each width. In qat mode activations follow the swept width when the
// checkpoint was fine-tuned with quantized activations.
Report sweep_bits(const Checkpoint& ckpt, const DataSplit& data, const std::vector<std::optional<int>>& bits,
                  SweepMode mode, int pinned_bits = 8);

std::vector<double> default_step_ratios();

struct StepSweep {
    Report report;
    double area = 0.0;  // trapezoid over ratio in [0.8, 1.2]
};

StepSweep sweep_step_ratio(const Checkpoint& ckpt, const DataSplit& data, int bits, const std::vector<double>& ratios,
                           int pinned_bits = 8);

// Trapezoid rule over the points with lo <= x <= hi (x ascending).
double curve_area(const std::vector<double>& x, const std::vector<double>& y, double lo, double hi);

struct LevelProbe {
    Report report;  // one row per level
    double fp_accuracy = 0.0;
    std::vector<std::int64_t> levels;
    std::vector<double> accuracy;

    double drop_at(std::int64_t level) const;
    double near_zero_drop() const;  // mean drop over levels -1 and +1
    double outermost_drop() const;  // mean drop over the extreme levels
};

// Every weight layer probed at once, no pinning.
LevelProbe probe_single_level(const Checkpoint& ckpt, const DataSplit& data, int bits);

// KL(p || q) between 64-bin histograms over the pooled range, smoothing 1e-8.
double histogram_kl(const Tensor& p_samples, const Tensor& q_samples, std::size_t bins = 64, double smoothing = 1e-8);

struct KlResult {
    Report report;
    std::vector<std::string> layers;
    std::vector<double> kl;  // depth order

    double final_layer() const { return kl.back(); }
};

KlResult kl_propagation(const Checkpoint& ckpt, const Dataset& probe, const std::optional<int>& bits_w,
                        int pinned_bits = 8);

struct ErrorCurves {
    Report report;
    DominanceReport dominance;
};

ErrorCurves error_curves(const std::vector<double>& d_grid, const std::vector<int>& bits_list);

struct GradcheckRow {
    std::string op;
    double max_relative_error = 0.0;
};

// Finite-difference check of every differentiable op kind at `points`
// random inputs each.
std::vector<GradcheckRow> gradcheck_suite(std::uint64_t seed, int points = 10, double epsilon = 1e-6);

}  // namespace robustq

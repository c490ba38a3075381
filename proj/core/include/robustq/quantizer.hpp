#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "robustq/tensor.hpp"

namespace robustq {

enum class QuantMode { symmetric, asymmetric };
enum class FitMethod { minmax, aciq_analytic, mse_grid };

std::string to_string(QuantMode mode);
std::string to_string(FitMethod fit);
QuantMode parse_quant_mode(const std::string& s);
FitMethod parse_fit_method(const std::string& s);

struct Granularity {
    // nullopt means one set of parameters for the whole tensor
    std::optional<std::size_t> axis;

    static Granularity per_tensor() { return {}; }
    static Granularity per_channel(std::size_t axis) { return {axis}; }
    bool is_per_channel() const noexcept { return axis.has_value(); }

    friend bool operator==(const Granularity&, const Granularity&) = default;
};

struct QuantScheme {
    int bits = 8;
    QuantMode mode = QuantMode::symmetric;
    Granularity granularity = Granularity::per_tensor();
    FitMethod fit = FitMethod::minmax;

    // Symmetric: restricted range [-(2^(b-1)-1), 2^(b-1)-1]. Asymmetric: [0, 2^b-1].
    std::int64_t min_level() const;
    std::int64_t max_level() const;
    void validate() const;

    static QuantScheme weight(int bits, FitMethod fit = FitMethod::minmax) {
        return {bits, QuantMode::symmetric, Granularity::per_channel(0), fit};
    }
    static QuantScheme activation(int bits) {
        return {bits, QuantMode::asymmetric, Granularity::per_tensor(), FitMethod::minmax};
    }

    friend bool operator==(const QuantScheme&, const QuantScheme&) = default;
};

// Fitted parameters, one entry per slice (a single entry for per-tensor).
struct QuantParams {
    std::vector<double> step;
    std::vector<std::int64_t> zero_point;  // asymmetric only; zero for symmetric
    std::vector<bool> degenerate;

    std::size_t slices() const noexcept { return step.size(); }
    // Upper clip boundary: step * (max_level - zero_point).
    double clip_high(std::size_t slice, const QuantScheme& scheme) const;
    double clip_low(std::size_t slice, const QuantScheme& scheme) const;

    friend bool operator==(const QuantParams&, const QuantParams&) = default;
};

QuantParams fit_params(const Tensor& t, const QuantScheme& scheme);

// Activation calibration: asymmetric per-tensor params over the given
// two-sided percentile of the data (0.999 keeps the central 99.9%).
QuantParams fit_activation_params(const Tensor& t, int bits, double percentile = 0.999);

Tensor quantize(const Tensor& t, const QuantParams& p, const QuantScheme& scheme);

QuantParams scale_step(const QuantParams& p, double ratio);

// Replaces only the elements whose nearest level is `level`.
Tensor quantize_single_level(const Tensor& t, const QuantParams& p, const QuantScheme& scheme, std::int64_t level);

// Power-of-two quantization with a 2^(bits-1)-wide exponent window below the
// largest exponent present.
Tensor log_quantize(const Tensor& t, int bits);

// 1-D Lloyd clustering into 2^bits centroids.
Tensor kmeans_quantize(const Tensor& t, int bits, int max_iters);

// Nearest integer, ties to even.
double round_half_even(double x);

}  // namespace robustq

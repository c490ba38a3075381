#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "robustq/tensor.hpp"

namespace robustq {

double normal_pdf(double x);
// Standard normal CDF through erfc, accurate in both tails.
double normal_cdf(double x);

// Weight prior for the error model: standard normal, optionally hard-clamped
// to [-d, d] (point masses F(-d) at each end).
struct ErrorModel {
    std::optional<double> clamp;

    static ErrorModel normal() { return {}; }
    static ErrorModel clamped(double d) { return {d}; }
};

// Expected squared quantization error split into its two components.
struct ErrorEstimate {
    double truncation = 0.0;
    double rounding = 0.0;
    double total = 0.0;
    double alpha = 0.0;
    int bits = 0;
};

// \int_lo^hi f(x) (x - alpha)^2 dx, closed form. `hi` may be +infinity.
double gaussian_sq_deviation_integral(double lo, double hi, double alpha);

ErrorEstimate quant_error_normal(double alpha, int bits);

// CDF of the standard normal clamped to [-d, d].
double clamped_cdf(double x, double d);

ErrorEstimate quant_error_clamped(double alpha, double d, int bits);

// Boundary minimizing the model's total error: golden-section search over
// (1e-3, 8] for the normal model and (1e-3, d] for the clamped one.
double optimal_alpha(int bits, const ErrorModel& model);

enum class McPlacement {
    // Clipped samples take the boundary value +-alpha; in-range samples round
    // to the mid-rise level centres -alpha + (2i+1) delta/2. This measures
    // exactly the truncation + rounding decomposition the closed forms model.
    boundary_tails,
    // Every sample, clipped or not, takes its nearest mid-rise level.
    nearest_level,
};

struct McRequest {
    std::size_t samples = 10'000'000;
    double alpha = 1.0;
    int bits = 4;
    std::optional<double> clamp;
    std::uint64_t seed = 0;
    McPlacement placement = McPlacement::boundary_tails;
};

// Monte Carlo mean squared error of 2^bits-level uniform quantization over
// [-alpha, alpha] applied to standard-normal (optionally clamped) samples.
double mc_quant_error(const McRequest& request);

struct DominanceRow {
    double d = 0.0;
    int bits = 0;
    double alpha_normal = 0.0;
    double total_normal = 0.0;
    double alpha_clamped = 0.0;
    double total_clamped = 0.0;
    bool holds = true;
};

struct DominanceReport {
    std::vector<DominanceRow> rows;
    std::vector<std::string> violations;  // "(d=..., b=...)" for each failing point

    bool ok() const noexcept { return violations.empty(); }
};

// Checks clamped(alpha'*) <= normal(alpha*) + 1e-9 for every (d, b).
DominanceReport verify_dominance(const std::vector<double>& d_grid, const std::vector<int>& bits_list);

// Expected output drift per output channel: N * mu_x * (mean(w_q) - mean(w)).
Tensor bias_drift(const Tensor& w, const Tensor& w_q, double mu_x, std::size_t axis = 0);

}  // namespace robustq

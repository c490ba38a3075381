#include "robustq/error_model.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <sstream>
#include <stdexcept>

#include "robustq/rng.hpp"

namespace robustq {

double normal_pdf(double x) { return std::exp(-0.5 * x * x) / std::sqrt(2.0 * std::numbers::pi); }

double normal_cdf(double x) { return 0.5 * std::erfc(-x / std::numbers::sqrt2); }

namespace {

double rounding_term(double alpha, int bits) { return alpha * alpha / (3.0 * std::ldexp(1.0, 2 * bits)); }

// \int_a^inf f(x)(x - alpha)^2 dx = (1 + alpha^2) Q(a) + (a - 2 alpha) f(a)
double upper_tail(double a, double alpha) {
    if (std::isinf(a)) return 0.0;
    return (1.0 + alpha * alpha) * normal_cdf(-a) + (a - 2.0 * alpha) * normal_pdf(a);
}

}  // namespace

double gaussian_sq_deviation_integral(double lo, double hi, double alpha) {
    if (hi <= lo) return 0.0;
    return upper_tail(lo, alpha) - upper_tail(hi, alpha);
}

ErrorEstimate quant_error_normal(double alpha, int bits) {
    if (!(alpha > 0.0)) throw std::invalid_argument("quant_error_normal: alpha must be positive");
    if (bits < 2) throw std::invalid_argument("quant_error_normal: bits must be >= 2");
    ErrorEstimate e;
    e.alpha = alpha;
    e.bits = bits;
    e.truncation = 2.0 * upper_tail(alpha, alpha);
    e.rounding = rounding_term(alpha, bits);
    e.total = e.truncation + e.rounding;
    return e;
}

double clamped_cdf(double x, double d) {
    if (!(d > 0.0)) throw std::invalid_argument("clamped_cdf: d must be positive");
    if (x <= -d) return 0.0;
    if (x >= d) return 1.0;
    return normal_cdf(x) + normal_cdf(-std::fabs(d));
}

ErrorEstimate quant_error_clamped(double alpha, double d, int bits) {
    if (!(d > 0.0)) throw std::invalid_argument("quant_error_clamped: d must be positive");
    if (!(alpha > 0.0)) throw std::invalid_argument("quant_error_clamped: alpha must be positive");
    if (alpha > d) {
        std::ostringstream os;
        os << "quant_error_clamped: boundary alpha=" << alpha << " lies beyond the clamp d=" << d;
        throw std::invalid_argument(os.str());
    }
    if (bits < 2) throw std::invalid_argument("quant_error_clamped: bits must be >= 2");
    ErrorEstimate e;
    e.alpha = alpha;
    e.bits = bits;
    const double mass = normal_cdf(-std::fabs(d));
    e.truncation = 2.0 * (mass * (d - alpha) * (d - alpha) + gaussian_sq_deviation_integral(alpha, d, alpha));
    e.rounding = rounding_term(alpha, bits);
    e.total = e.truncation + e.rounding;
    return e;
}

double optimal_alpha(int bits, const ErrorModel& model) {
    if (bits < 2) throw std::invalid_argument("optimal_alpha: bits must be >= 2");
    const double lo0 = 1e-3;
    const double hi0 = model.clamp ? *model.clamp : 8.0;
    if (!(hi0 > 0.0)) throw std::invalid_argument("optimal_alpha: clamp must be positive");
    auto total = [&](double a) {
        return model.clamp ? quant_error_clamped(a, *model.clamp, bits).total : quant_error_normal(a, bits).total;
    };
    if (hi0 <= lo0) return hi0;

    const double inv_phi = (std::sqrt(5.0) - 1.0) / 2.0;
    double lo = lo0, hi = hi0;
    double x1 = hi - inv_phi * (hi - lo);
    double x2 = lo + inv_phi * (hi - lo);
    double f1 = total(x1), f2 = total(x2);
    while (hi - lo > 1e-6) {
        if (f1 <= f2) {
            hi = x2;
            x2 = x1;
            f2 = f1;
            x1 = hi - inv_phi * (hi - lo);
            f1 = total(x1);
        } else {
            lo = x1;
            x1 = x2;
            f1 = f2;
            x2 = lo + inv_phi * (hi - lo);
            f2 = total(x2);
        }
    }
    const double mid = 0.5 * (lo + hi);
    // the minimum may sit on the closed upper end of the interval
    return total(hi0) <= total(mid) ? hi0 : mid;
}

double mc_quant_error(const McRequest& r) {
    if (r.samples < 100'000) throw std::invalid_argument("mc_quant_error: need at least 1e5 samples");
    if (!(r.alpha > 0.0)) throw std::invalid_argument("mc_quant_error: alpha must be positive");
    if (r.bits < 1 || r.bits > 30) throw std::invalid_argument("mc_quant_error: bits out of range");
    if (r.clamp && !(*r.clamp > 0.0)) throw std::invalid_argument("mc_quant_error: clamp must be positive");

    Rng rng(r.seed);
    const double levels = std::ldexp(1.0, r.bits);
    const double delta = 2.0 * r.alpha / levels;
    const double top = levels - 1.0;
    double acc = 0.0;
    for (std::size_t i = 0; i < r.samples; ++i) {
        double x = rng.normal();
        if (r.clamp) x = std::clamp(x, -*r.clamp, *r.clamp);
        double q;
        if (r.placement == McPlacement::boundary_tails && std::fabs(x) > r.alpha) {
            q = std::copysign(r.alpha, x);
        } else {
            const double bin = std::clamp(std::floor((x + r.alpha) / delta), 0.0, top);
            q = -r.alpha + (bin + 0.5) * delta;
        }
        acc += (x - q) * (x - q);
    }
    return acc / static_cast<double>(r.samples);
}

DominanceReport verify_dominance(const std::vector<double>& d_grid, const std::vector<int>& bits_list) {
    DominanceReport report;
    for (double d : d_grid) {
        if (!(d > 0.0)) throw std::invalid_argument("verify_dominance: every d must be positive");
    }
    for (double d : d_grid) {
        for (int b : bits_list) {
            DominanceRow row;
            row.d = d;
            row.bits = b;
            row.alpha_normal = optimal_alpha(b, ErrorModel::normal());
            row.total_normal = quant_error_normal(row.alpha_normal, b).total;
            row.alpha_clamped = optimal_alpha(b, ErrorModel::clamped(d));
            row.total_clamped = quant_error_clamped(row.alpha_clamped, d, b).total;
            row.holds = row.total_clamped <= row.total_normal + 1e-9;
            if (!row.holds) {
                std::ostringstream os;
                os << "(d=" << d << ", b=" << b << ")";
                report.violations.push_back(os.str());
            }
            report.rows.push_back(row);
        }
    }
    return report;
}

Tensor bias_drift(const Tensor& w, const Tensor& w_q, double mu_x, std::size_t axis) {
    if (w.shape() != w_q.shape()) {
        throw std::invalid_argument("bias_drift: shape mismatch " + shape_to_string(w.shape()) + " vs " +
                                    shape_to_string(w_q.shape()));
    }
    if (axis >= w.rank()) throw std::invalid_argument("bias_drift: axis out of range for " + shape_to_string(w.shape()));
    const auto groups = slice_groups(w.shape(), axis);
    Tensor drift({groups.size()});
    for (std::size_t c = 0; c < groups.size(); ++c) {
        double before = 0.0, after = 0.0;
        for (auto i : groups[c]) {
            before += w[i];
            after += w_q[i];
        }
        const auto n = static_cast<double>(groups[c].size());
        drift[c] = n * mu_x * (after / n - before / n);
    }
    return drift;
}

}  // namespace robustq

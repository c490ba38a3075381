#include "robustq/quantizer.hpp"

#include <algorithm>
#include <cfenv>
#include <cmath>
#include <limits>
#include <numeric>
#include <stdexcept>

#include "robustq/error_model.hpp"

namespace robustq {

std::string to_string(QuantMode mode) { return mode == QuantMode::symmetric ? "symmetric" : "asymmetric"; }

std::string to_string(FitMethod fit) {
    switch (fit) {
        case FitMethod::minmax: return "minmax";
        case FitMethod::aciq_analytic: return "aciq_analytic";
        case FitMethod::mse_grid: return "mse_grid";
    }
    return "unknown";
}

QuantMode parse_quant_mode(const std::string& s) {
    if (s == "symmetric") return QuantMode::symmetric;
    if (s == "asymmetric") return QuantMode::asymmetric;
    throw std::invalid_argument("unknown quantization mode '" + s + "'");
}

FitMethod parse_fit_method(const std::string& s) {
    if (s == "minmax") return FitMethod::minmax;
    if (s == "aciq_analytic" || s == "aciq") return FitMethod::aciq_analytic;
    if (s == "mse_grid" || s == "mse") return FitMethod::mse_grid;
    throw std::invalid_argument("unknown fit method '" + s + "'");
}

std::int64_t QuantScheme::min_level() const {
    return mode == QuantMode::symmetric ? -max_level() : 0;
}

std::int64_t QuantScheme::max_level() const {
    return mode == QuantMode::symmetric ? (std::int64_t{1} << (bits - 1)) - 1 : (std::int64_t{1} << bits) - 1;
}

void QuantScheme::validate() const {
    if (bits < 2 || bits > 30) throw std::invalid_argument("QuantScheme: bits must be in [2, 30], got " + std::to_string(bits));
}

double QuantParams::clip_high(std::size_t slice, const QuantScheme& scheme) const {
    return step.at(slice) * static_cast<double>(scheme.max_level() - zero_point.at(slice));
}

double QuantParams::clip_low(std::size_t slice, const QuantScheme& scheme) const {
    return step.at(slice) * static_cast<double>(scheme.min_level() - zero_point.at(slice));
}

double round_half_even(double x) {
    // std::nearbyint honours the current rounding mode, which is
    // round-to-nearest-even unless someone changed it.
    if (std::fegetround() != FE_TONEAREST) {
        const double f = std::floor(x);
        const double diff = x - f;
        if (diff < 0.5) return f;
        if (diff > 0.5) return f + 1.0;
        return std::fmod(f, 2.0) == 0.0 ? f : f + 1.0;
    }
    return std::nearbyint(x);
}

namespace {

std::vector<std::vector<std::size_t>> groups_for(const Tensor& t, const QuantScheme& scheme) {
    if (!scheme.granularity.is_per_channel()) {
        std::vector<std::size_t> all(t.numel());
        std::iota(all.begin(), all.end(), std::size_t{0});
        return {std::move(all)};
    }
    const std::size_t axis = *scheme.granularity.axis;
    if (axis >= t.rank()) {
        throw std::invalid_argument("per-channel axis " + std::to_string(axis) + " invalid for tensor of shape " +
                                    shape_to_string(t.shape()));
    }
    return slice_groups(t.shape(), axis);
}

struct SliceFit {
    double step = 1.0;
    std::int64_t zero_point = 0;
    bool degenerate = false;
};

SliceFit symmetric_from_clip(double clip, std::int64_t qmax) {
    if (!(clip > 0.0)) return {1.0, 0, true};
    return {clip / static_cast<double>(qmax), 0, false};
}

SliceFit asymmetric_from_range(double lo, double hi, std::int64_t qmax) {
    lo = std::min(lo, 0.0);
    hi = std::max(hi, 0.0);
    if (!(hi > lo)) return {1.0, 0, true};
    const double step = (hi - lo) / static_cast<double>(qmax);
    auto zp = static_cast<std::int64_t>(round_half_even(-lo / step));
    zp = std::clamp<std::int64_t>(zp, 0, qmax);
    return {step, zp, false};
}

double quantize_value_symmetric(double x, double step, std::int64_t qmax) {
    const double clip = step * static_cast<double>(qmax);
    const double lvl = std::clamp(round_half_even(std::clamp(x, -clip, clip) / step), -static_cast<double>(qmax),
                                  static_cast<double>(qmax));
    return lvl * step;
}

double slice_sq_error_symmetric(const Tensor& t, const std::vector<std::size_t>& idx, double clip, std::int64_t qmax) {
    const double step = clip / static_cast<double>(qmax);
    double err = 0.0;
    for (auto i : idx) {
        const double d = t[i] - quantize_value_symmetric(t[i], step, qmax);
        err += d * d;
    }
    return err;
}

// Integer level an element maps to (before dequantization).
std::int64_t level_of(double x, double step, std::int64_t zp, const QuantScheme& scheme) {
    const double lvl = round_half_even(x / step) + static_cast<double>(zp);
    const double lo = static_cast<double>(scheme.min_level());
    const double hi = static_cast<double>(scheme.max_level());
    return static_cast<std::int64_t>(std::clamp(lvl, lo, hi));
}

double dequantize(std::int64_t level, double step, std::int64_t zp) { return static_cast<double>(level - zp) * step; }

std::vector<std::vector<std::size_t>> checked_groups(const Tensor& t, const QuantParams& p, const QuantScheme& scheme) {
    auto groups = groups_for(t, scheme);
    if (groups.size() != p.slices() || p.zero_point.size() != p.slices()) {
        throw std::invalid_argument("quantize: params have " + std::to_string(p.slices()) + " slices but tensor " +
                                    shape_to_string(t.shape()) + " has " + std::to_string(groups.size()));
    }
    return groups;
}

}  // namespace

QuantParams fit_params(const Tensor& t, const QuantScheme& scheme) {
    scheme.validate();
    if (t.empty()) throw std::invalid_argument("fit_params: empty tensor");
    const auto groups = groups_for(t, scheme);
    const std::int64_t qmax = scheme.max_level();
    QuantParams p;
    for (const auto& idx : groups) {
        double lo = std::numeric_limits<double>::infinity();
        double hi = -lo;
        double maxabs = 0.0;
        for (auto i : idx) {
            lo = std::min(lo, t[i]);
            hi = std::max(hi, t[i]);
            maxabs = std::max(maxabs, std::fabs(t[i]));
        }
        SliceFit fit;
        if (scheme.mode == QuantMode::asymmetric) {
            if (scheme.fit != FitMethod::minmax) {
                throw std::invalid_argument("fit_params: " + to_string(scheme.fit) + " supports symmetric mode only");
            }
            fit = asymmetric_from_range(lo, hi, qmax);
        } else {
            switch (scheme.fit) {
                case FitMethod::minmax:
                    fit = symmetric_from_clip(maxabs, qmax);
                    break;
                case FitMethod::aciq_analytic: {
                    double mean = 0.0;
                    for (auto i : idx) mean += t[i];
                    mean /= static_cast<double>(idx.size());
                    double ss = 0.0;
                    for (auto i : idx) ss += (t[i] - mean) * (t[i] - mean);
                    const double sigma =
                        idx.size() > 1 ? std::sqrt(ss / static_cast<double>(idx.size() - 1)) : 0.0;
                    if (sigma > 0.0) {
                        fit = symmetric_from_clip(sigma * optimal_alpha(scheme.bits, ErrorModel::normal()), qmax);
                    } else {
                        fit = symmetric_from_clip(maxabs, qmax);
                    }
                    break;
                }
                case FitMethod::mse_grid: {
                    if (!(maxabs > 0.0)) {
                        fit = symmetric_from_clip(0.0, qmax);
                        break;
                    }
                    double best_clip = maxabs;
                    double best_err = std::numeric_limits<double>::infinity();
                    for (int k = 1; k <= 100; ++k) {
                        const double clip = maxabs * static_cast<double>(k) / 100.0;
                        const double err = slice_sq_error_symmetric(t, idx, clip, qmax);
                        if (err < best_err) {
                            best_err = err;
                            best_clip = clip;
                        }
                    }
                    fit = symmetric_from_clip(best_clip, qmax);
                    break;
                }
            }
        }
        p.step.push_back(fit.step);
        p.zero_point.push_back(fit.zero_point);
        p.degenerate.push_back(fit.degenerate);
    }
    return p;
}

QuantParams fit_activation_params(const Tensor& t, int bits, double percentile) {
    const QuantScheme scheme = QuantScheme::activation(bits);
    scheme.validate();
    if (t.empty()) throw std::invalid_argument("fit_activation_params: empty tensor");
    if (!(percentile > 0.5 && percentile <= 1.0)) {
        throw std::invalid_argument("fit_activation_params: percentile must be in (0.5, 1]");
    }
    std::vector<double> v(t.data().begin(), t.data().end());
    std::sort(v.begin(), v.end());
    const auto n = static_cast<double>(v.size() - 1);
    const double lo = v[static_cast<std::size_t>(std::floor((1.0 - percentile) * n))];
    const double hi = v[static_cast<std::size_t>(std::ceil(percentile * n))];
    const SliceFit fit = asymmetric_from_range(lo, hi, scheme.max_level());
    return QuantParams{{fit.step}, {fit.zero_point}, {fit.degenerate}};
}

Tensor quantize(const Tensor& t, const QuantParams& p, const QuantScheme& scheme) {
    scheme.validate();
    const auto groups = checked_groups(t, p, scheme);
    Tensor out(t.shape());
    for (std::size_t s = 0; s < groups.size(); ++s) {
        const double step = p.step[s];
        const std::int64_t zp = p.zero_point[s];
        if (!(step > 0.0)) throw std::invalid_argument("quantize: non-positive step in slice " + std::to_string(s));
        for (auto i : groups[s]) out[i] = dequantize(level_of(t[i], step, zp, scheme), step, zp);
    }
    return out;
}

QuantParams scale_step(const QuantParams& p, double ratio) {
    if (!(ratio > 0.0)) throw std::invalid_argument("scale_step: ratio must be positive");
    QuantParams out = p;
    for (auto& s : out.step) s *= ratio;
    return out;
}

Tensor quantize_single_level(const Tensor& t, const QuantParams& p, const QuantScheme& scheme, std::int64_t level) {
    scheme.validate();
    if (level < scheme.min_level() || level > scheme.max_level()) {
        throw std::out_of_range("quantize_single_level: level " + std::to_string(level) + " outside [" +
                                std::to_string(scheme.min_level()) + ", " + std::to_string(scheme.max_level()) + "]");
    }
    const auto groups = checked_groups(t, p, scheme);
    Tensor out = t;
    for (std::size_t s = 0; s < groups.size(); ++s) {
        const double step = p.step[s];
        const std::int64_t zp = p.zero_point[s];
        for (auto i : groups[s]) {
            if (level_of(t[i], step, zp, scheme) == level) out[i] = dequantize(level, step, zp);
        }
    }
    return out;
}

Tensor log_quantize(const Tensor& t, int bits) {
    if (bits < 2) throw std::invalid_argument("log_quantize: bits must be >= 2");
    bool any = false;
    double max_exp = -std::numeric_limits<double>::infinity();
    for (double v : t.data()) {
        if (v == 0.0) continue;
        any = true;
        max_exp = std::max(max_exp, round_half_even(std::log2(std::fabs(v))));
    }
    Tensor out = t;
    if (!any) return out;
    const double min_exp = max_exp - static_cast<double>((std::int64_t{1} << (bits - 1)) - 1);
    for (auto& v : out.data()) {
        if (v == 0.0) continue;
        const double e = std::clamp(round_half_even(std::log2(std::fabs(v))), min_exp, max_exp);
        v = std::copysign(std::exp2(e), v);
    }
    return out;
}

Tensor kmeans_quantize(const Tensor& t, int bits, int max_iters) {
    if (bits < 1 || bits > 16) throw std::invalid_argument("kmeans_quantize: bits must be in [1, 16]");
    if (t.empty()) throw std::invalid_argument("kmeans_quantize: empty tensor");
    const std::size_t k = std::size_t{1} << bits;

    std::vector<double> sorted(t.data().begin(), t.data().end());
    std::sort(sorted.begin(), sorted.end());
    std::vector<double> distinct = sorted;
    distinct.erase(std::unique(distinct.begin(), distinct.end()), distinct.end());
    if (distinct.size() <= k) return t;  // every value is its own centroid

    const std::size_t n = sorted.size();
    std::vector<double> centroids(k);
    for (std::size_t c = 0; c < k; ++c) {
        const auto pos = static_cast<std::size_t>((static_cast<double>(c) + 0.5) / static_cast<double>(k) *
                                                  static_cast<double>(n));
        centroids[c] = sorted[std::min(pos, n - 1)];
    }

    // Sorted data + sorted centroids: each cluster is a contiguous run, so
    // an assignment is fully described by the k-1 split positions.
    auto assign = [&](const std::vector<double>& cs) {
        std::vector<std::size_t> bounds(k + 1, 0);
        bounds[k] = n;
        for (std::size_t c = 1; c < k; ++c) {
            const double mid = 0.5 * (cs[c - 1] + cs[c]);
            // ties go to the lower centroid
            bounds[c] = static_cast<std::size_t>(std::upper_bound(sorted.begin(), sorted.end(), mid) - sorted.begin());
            bounds[c] = std::max(bounds[c], bounds[c - 1]);
        }
        return bounds;
    };

    std::sort(centroids.begin(), centroids.end());
    auto bounds = assign(centroids);
    for (int it = 0; it < max_iters; ++it) {
        for (std::size_t c = 0; c < k; ++c) {
            if (bounds[c + 1] == bounds[c]) continue;  // empty cluster keeps its centroid
            double acc = 0.0;
            for (std::size_t i = bounds[c]; i < bounds[c + 1]; ++i) acc += sorted[i];
            centroids[c] = acc / static_cast<double>(bounds[c + 1] - bounds[c]);
        }
        std::sort(centroids.begin(), centroids.end());
        auto next = assign(centroids);
        if (next == bounds) break;
        bounds = std::move(next);
    }

    Tensor out = t;
    for (auto& v : out.data()) {
        // same nearest-centroid rule as assign()
        auto it = std::lower_bound(centroids.begin(), centroids.end(), v);
        std::size_t hi = static_cast<std::size_t>(it - centroids.begin());
        if (hi == k) {
            v = centroids[k - 1];
        } else if (hi == 0) {
            v = centroids[0];
        } else {
            const double mid = 0.5 * (centroids[hi - 1] + centroids[hi]);
            v = v <= mid ? centroids[hi - 1] : centroids[hi];
        }
    }
    return out;
}

}  // namespace robustq

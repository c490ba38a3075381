#pragma once

// Independent reference computations shared by the unit and acceptance tests.

#include <algorithm>
#include <cfenv>
#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "robustq/quantizer.hpp"
#include "robustq/rng.hpp"
#include "robustq/tensor.hpp"

namespace robustq::oracle {

inline Tensor normal_tensor(Shape shape, Rng& rng, double scale = 1.0) {
    Tensor t(std::move(shape));
    for (auto& v : t.data()) v = scale * rng.normal();
    return t;
}

// Per-channel symmetric minmax quantization along axis 0, written out
// directly: step = max|w| / L, q = clamp(nearbyint(w / step), -L, L) * step.
// nearbyint uses the default ties-to-even rounding mode.
inline Tensor symmetric_quantize(const Tensor& t, int bits) {
    const double levels = std::ldexp(1.0, bits - 1) - 1.0;
    const std::size_t channels = t.dim(0);
    const std::size_t per = t.numel() / channels;
    Tensor out = t;
    for (std::size_t c = 0; c < channels; ++c) {
        double mx = 0.0;
        for (std::size_t i = 0; i < per; ++i) mx = std::max(mx, std::fabs(t[c * per + i]));
        const double step = mx == 0.0 ? 1.0 : mx / levels;
        for (std::size_t i = 0; i < per; ++i) {
            const double r = std::clamp(std::nearbyint(t[c * per + i] / step), -levels, levels);
            out[c * per + i] = r * step;
        }
    }
    return out;
}

// Channels of mirror pairs {a, -a} in shuffled order.
inline Tensor mirror_tensor(std::size_t channels, std::size_t pairs, Rng& rng) {
    Tensor t({channels, 2 * pairs});
    for (std::size_t c = 0; c < channels; ++c) {
        std::vector<double> row;
        for (std::size_t i = 0; i < pairs; ++i) {
            const double a = rng.normal();
            row.push_back(a);
            row.push_back(-a);
        }
        auto perm = rng.permutation(row.size());
        for (std::size_t i = 0; i < row.size(); ++i) t[c * row.size() + i] = row[perm[i]];
    }
    return t;
}

// Mirror-pair loss by its definition, over rows of a 2-D view with axis 0 as channel.
inline double sym1(const Tensor& w) {
    const std::size_t c = w.dim(0), n = w.numel() / c;
    double total = 0.0;
    for (std::size_t k = 0; k < c; ++k) {
        std::vector<double> r(w.data().begin() + k * n, w.data().begin() + (k + 1) * n);
        std::sort(r.begin(), r.end());
        for (std::size_t i = 0; i < n / 2; ++i) total += std::fabs(r[i] + r[n - 1 - i]);
    }
    return 2.0 * total / static_cast<double>(c * n);
}

inline double sym2(const Tensor& w) {
    const std::size_t c = w.dim(0), n = w.numel() / c;
    double total = 0.0;
    for (std::size_t k = 0; k < c; ++k) {
        std::vector<double> r(w.data().begin() + k * n, w.data().begin() + (k + 1) * n);
        std::sort(r.begin(), r.end());
        for (std::size_t i = 0; i < n / 4; ++i) {
            total += std::fabs(r[2 * i] + r[2 * i + 1] + r[n - 1 - 2 * i] + r[n - 2 - 2 * i]);
        }
    }
    return 4.0 * total / static_cast<double>(c * n);
}

}  // namespace robustq::oracle

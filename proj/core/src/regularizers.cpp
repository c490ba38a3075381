#include "robustq/regularizers.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>
#include <sstream>
#include <stdexcept>

namespace robustq {

namespace {

// Symmetry loss with `group` values taken from each end per term.
NodeId mirror_group_loss(Graph& g, NodeId w, std::size_t axis, std::size_t group, const char* name) {
    const Tensor& wv = g.value(w);
    if (axis >= wv.rank()) {
        throw std::invalid_argument(std::string(name) + ": channel axis " + std::to_string(axis) +
                                    " invalid for shape " + shape_to_string(wv.shape()));
    }
    const auto channels = slice_groups(wv.shape(), axis);
    const std::size_t c = channels.size();
    const std::size_t n = channels.front().size();
    if (n < 2 * group) {
        throw std::invalid_argument(std::string(name) + ": needs at least " + std::to_string(2 * group) +
                                    " elements per channel, got " + std::to_string(n));
    }
    const double prefactor = 2.0 * static_cast<double>(group) / (static_cast<double>(c) * static_cast<double>(n));

    Tensor coef(wv.shape());
    double loss = 0.0;
    std::vector<std::size_t> order(n);
    for (const auto& idx : channels) {
        std::iota(order.begin(), order.end(), std::size_t{0});
        std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return wv[idx[a]] < wv[idx[b]]; });
        const std::size_t terms = n / (2 * group);
        for (std::size_t t = 0; t < terms; ++t) {
            double s = 0.0;
            for (std::size_t k = 0; k < group; ++k) {
                s += wv[idx[order[t * group + k]]];
                s += wv[idx[order[n - 1 - t * group - k]]];
            }
            loss += std::fabs(s);
            const double sign = s > 0.0 ? 1.0 : (s < 0.0 ? -1.0 : 0.0);
            for (std::size_t k = 0; k < group; ++k) {
                coef[idx[order[t * group + k]]] = prefactor * sign;
                coef[idx[order[n - 1 - t * group - k]]] = prefactor * sign;
            }
        }
    }
    return g.custom(name, {w}, Tensor::scalar(prefactor * loss), [coef = std::move(coef)](BackwardContext& ctx) {
        Tensor grad = coef;
        const double up = ctx.grad().item();
        for (auto& v : grad.data()) v *= up;
        ctx.accumulate(0, grad);
    });
}

double odd_extend(double x, double (*f)(double)) { return std::copysign(f(std::fabs(x)), x); }

double tanh_pos(double x) { return std::tanh(x); }
double erf_pos(double x) { return std::erf(0.5 * std::sqrt(std::numbers::pi) * x); }
double gd_pos(double x) { return 2.0 / std::numbers::pi * std::atan(std::sinh(x)); }

}  // namespace

NodeId sym_loss1(Graph& g, NodeId w, std::size_t channel_axis) {
    return mirror_group_loss(g, w, channel_axis, 1, "sym_loss1");
}

NodeId sym_loss2(Graph& g, NodeId w, std::size_t channel_axis) {
    return mirror_group_loss(g, w, channel_axis, 2, "sym_loss2");
}

NodeId total_loss(Graph& g, NodeId ce, std::span<const LayerWeight> layers, const SymRegConfig& cfg) {
    if (cfg.lambda1 < 0.0 || cfg.lambda2 < 0.0) throw std::invalid_argument("total_loss: lambdas must be >= 0");
    std::vector<const LayerWeight*> active;
    for (const auto& l : layers) {
        if (!cfg.skip_layers.contains(l.name)) active.push_back(&l);
    }
    NodeId loss = ce;
    if (active.empty()) return loss;
    const double per_layer = 1.0 / static_cast<double>(active.size());
    auto add_term = [&](double lambda, NodeId (*term)(Graph&, NodeId, std::size_t)) {
        if (lambda == 0.0) return;
        NodeId acc = term(g, active.front()->weight, cfg.channel_axis);
        for (std::size_t i = 1; i < active.size(); ++i) acc = g.add(acc, term(g, active[i]->weight, cfg.channel_axis));
        loss = g.add(loss, g.scale(acc, lambda * per_layer));
    };
    add_term(cfg.lambda1, &sym_loss1);
    add_term(cfg.lambda2, &sym_loss2);
    return loss;
}

std::string to_string(SatNLKind kind) {
    switch (kind) {
        case SatNLKind::tanh: return "tanh";
        case SatNLKind::alternative_1: return "alternative_1";
        case SatNLKind::alternative_2: return "alternative_2";
    }
    return "unknown";
}

SatNLKind parse_satnl_kind(const std::string& s) {
    if (s == "tanh") return SatNLKind::tanh;
    if (s == "alternative_1" || s == "erf") return SatNLKind::alternative_1;
    if (s == "alternative_2" || s == "gd") return SatNLKind::alternative_2;
    throw std::invalid_argument("unknown SatNL kind '" + s + "'");
}

double satnl_value(SatNLKind kind, double x) {
    switch (kind) {
        case SatNLKind::tanh: return odd_extend(x, &tanh_pos);
        case SatNLKind::alternative_1: return odd_extend(x, &erf_pos);
        case SatNLKind::alternative_2: return odd_extend(x, &gd_pos);
    }
    throw std::logic_error("satnl_value: unknown kind");
}

double satnl_derivative(SatNLKind kind, double x) {
    switch (kind) {
        case SatNLKind::tanh: {
            const double t = std::tanh(x);
            return 1.0 - t * t;
        }
        case SatNLKind::alternative_1: return std::exp(-0.25 * std::numbers::pi * x * x);
        case SatNLKind::alternative_2: return 2.0 / std::numbers::pi / std::cosh(x);
    }
    throw std::logic_error("satnl_derivative: unknown kind");
}

double satnl_inverse(SatNLKind kind, double y) {
    if (!(std::fabs(y) < 1.0)) throw std::domain_error("satnl_inverse: argument must lie in (-1, 1)");
    switch (kind) {
        case SatNLKind::tanh: return std::atanh(y);
        case SatNLKind::alternative_2: return std::asinh(std::tan(0.5 * std::numbers::pi * y));
        case SatNLKind::alternative_1: {
            // bisection on the monotone positive branch
            const double target = std::fabs(y);
            double lo = 0.0, hi = 1.0;
            while (erf_pos(hi) < target) hi *= 2.0;
            for (int i = 0; i < 200 && hi - lo > 0.0; ++i) {
                const double mid = 0.5 * (lo + hi);
                if (mid == lo || mid == hi) break;
                (erf_pos(mid) < target ? lo : hi) = mid;
            }
            return std::copysign(0.5 * (lo + hi), y);
        }
    }
    throw std::logic_error("satnl_inverse: unknown kind");
}

NodeId satnl_apply(Graph& g, NodeId w_latent, SatNLKind kind) {
    if (kind == SatNLKind::tanh) return g.tanh(w_latent);
    return g.elementwise(
        w_latent, [kind](double x) { return satnl_value(kind, x); },
        [kind](double x) { return satnl_derivative(kind, x); }, "satnl_" + to_string(kind));
}

std::vector<double> satnl_probe_grid(std::size_t points, double half_width) {
    if (points < 2) throw std::invalid_argument("satnl_probe_grid: need at least 2 points");
    std::vector<double> grid(points);
    for (std::size_t i = 0; i < points; ++i) {
        // mirrored construction keeps the grid exactly symmetric
        const double t = static_cast<double>(i) / static_cast<double>(points - 1);
        grid[i] = half_width * (2.0 * t - 1.0);
    }
    for (std::size_t i = 0; i < points / 2; ++i) grid[points - 1 - i] = -grid[i];
    if (points % 2 == 1) grid[points / 2] = 0.0;
    return grid;
}

SatNLValidity is_valid_satnl(const std::function<double(double)>& f, std::span<const double> grid, double bound) {
    if (grid.size() < 1000) throw std::invalid_argument("is_valid_satnl: probe grid needs at least 1000 points");
    std::vector<double> xs(grid.begin(), grid.end());
    std::sort(xs.begin(), xs.end());
    for (std::size_t i = 0; i < xs.size(); ++i) {
        if (xs[i] != -xs[xs.size() - 1 - i]) throw std::invalid_argument("is_valid_satnl: probe grid is not symmetric");
    }
    if (xs.front() > -10.0 || xs.back() < 10.0) throw std::invalid_argument("is_valid_satnl: grid must cover [-10, 10]");

    SatNLValidity out;
    auto fail = [&](std::string msg) {
        out.valid = false;
        out.violations.push_back(std::move(msg));
    };

    double worst_odd = 0.0, worst_x = 0.0;
    for (double x : xs) {
        const double e = std::fabs(f(-x) + f(x));
        if (e > worst_odd) {
            worst_odd = e;
            worst_x = x;
        }
    }
    if (worst_odd > 1e-12) {
        std::ostringstream os;
        os << "not odd: |f(-x) + f(x)| = " << worst_odd << " at x = " << worst_x;
        fail(os.str());
    }

    double sup = 0.0;
    for (double x : xs) sup = std::max(sup, std::fabs(f(x)));
    if (sup > bound + 1e-12) {
        std::ostringstream os;
        os << "unbounded: sup|f| = " << sup << " exceeds " << bound;
        fail(os.str());
    }
    const double tail = f(10.0) - f(9.0);
    if (!(tail < 1e-3)) {
        std::ostringstream os;
        os << "not saturating: f(10) - f(9) = " << tail;
        fail(os.str());
    }

    double prev_slope = std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i + 1 < xs.size(); ++i) {
        if (xs[i] < 0.0) continue;
        const double slope = (f(xs[i + 1]) - f(xs[i])) / (xs[i + 1] - xs[i]);
        if (slope > prev_slope + 1e-12) {
            std::ostringstream os;
            os << "slope increases at x = " << xs[i] << " (" << prev_slope << " -> " << slope << ")";
            fail(os.str());
            break;
        }
        prev_slope = slope;
    }
    return out;
}

Tensor init_latent(const Tensor& w_target, SatNLKind kind) {
    Tensor out = w_target;
    for (auto& v : out.data()) v = satnl_inverse(kind, std::clamp(v, -0.999, 0.999));
    return out;
}

}  // namespace robustq

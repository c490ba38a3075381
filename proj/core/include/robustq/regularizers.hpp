#pragma once

#include <functional>
#include <map>
#include <set>
#include <span>
#include <string>
#include <vector>

#include "robustq/autodiff.hpp"
#include "robustq/tensor.hpp"

namespace robustq {

struct SymRegConfig {
    double lambda1 = 0.1;
    double lambda2 = 0.1;
    std::size_t channel_axis = 0;
    std::set<std::string> skip_layers;
};

// Mirror-pair symmetry loss. Per channel the values are stably sorted and the
// i-th smallest is paired with the i-th largest:
//   (2 / (C N)) sum_c sum_{i<N/2} |w_(i) + w_(N-1-i)|
// The middle element of an odd channel is left out. Requires N >= 2.
NodeId sym_loss1(Graph& g, NodeId w, std::size_t channel_axis = 0);

// Relaxed 2:2 variant: the two smallest remaining values are grouped with the
// two largest remaining ones,
//   (4 / (C N)) sum_c sum_{i<N/4} |w_(2i) + w_(2i+1) + w_(N-1-2i) + w_(N-2-2i)|
// Middle leftovers when N % 4 != 0 are left out. Requires N >= 4.
NodeId sym_loss2(Graph& g, NodeId w, std::size_t channel_axis = 0);

struct LayerWeight {
    std::string name;
    NodeId weight;
};

// ce + lambda1 * mean_layers(sym_loss1) + lambda2 * mean_layers(sym_loss2).
// Layers named in cfg.skip_layers are ignored; a zero lambda drops its term.
NodeId total_loss(Graph& g, NodeId ce, std::span<const LayerWeight> layers, const SymRegConfig& cfg);

enum class SatNLKind {
    tanh,
    // erf(sqrt(pi) x / 2): unit slope at 0, Gaussian-fast saturation
    alternative_1,
    // (2/pi) atan(sinh x): Gudermannian scaled to (-1, 1)
    alternative_2,
};

std::string to_string(SatNLKind kind);
SatNLKind parse_satnl_kind(const std::string& s);

double satnl_value(SatNLKind kind, double x);
double satnl_derivative(SatNLKind kind, double x);
// Inverse on (-1, 1).
double satnl_inverse(SatNLKind kind, double y);

struct SatNLConfig {
    SatNLKind kind = SatNLKind::tanh;
    std::map<std::string, bool> layers;

    bool enabled_for(const std::string& layer) const {
        auto it = layers.find(layer);
        return it != layers.end() && it->second;
    }
};

// Effective weight f(w_latent) as a graph node.
NodeId satnl_apply(Graph& g, NodeId w_latent, SatNLKind kind);

struct SatNLValidity {
    bool valid = true;
    std::vector<std::string> violations;
};

std::vector<double> satnl_probe_grid(std::size_t points = 2001, double half_width = 10.0);

// Checks the three properties a weight nonlinearity needs: odd, bounded with
// saturation by x = 10, and non-increasing slope on x >= 0.
SatNLValidity is_valid_satnl(const std::function<double(double)>& f, std::span<const double> grid, double bound = 1.0);

// Latent weights whose image under f equals clamp(w_target, -0.999, 0.999).
Tensor init_latent(const Tensor& w_target, SatNLKind kind);

}  // namespace robustq

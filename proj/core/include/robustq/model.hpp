#pragma once

#include <functional>
#include <string>
#include <vector>

#include "robustq/autodiff.hpp"
#include "robustq/regularizers.hpp"
#include "robustq/rng.hpp"
#include "robustq/tensor.hpp"

namespace robustq {

enum class Architecture { mlp, smallcnn };

std::string to_string(Architecture a);
Architecture parse_architecture(const std::string& s);

enum class LayerKind { linear, conv };

struct LayerSpec {
    std::string name;
    LayerKind kind = LayerKind::linear;
    Shape weight_shape;  // [out, in] or [out, in, k, k]; axis 0 is the output channel
    bool relu = true;
    bool pool_after = false;  // 2x2 average pool then flatten (conv stack only)
};

// mlp widths: [inputs, hidden..., classes].
// smallcnn widths: [in_channels, conv1, conv2, hidden]; 3x3 convolutions with
// padding 1, one 2x2 average pool after conv2, then two linear layers.
struct ModelSpec {
    Architecture arch = Architecture::mlp;
    std::vector<std::size_t> widths{16, 64, 64, 4};
    std::size_t classes = 4;
    std::size_t image_size = 12;
    SatNLConfig satnl;

    std::vector<LayerSpec> layers() const;
    std::size_t parameter_count() const;
    Shape input_shape() const;  // per-sample
    void validate() const;
};

// Parameter names in their fixed order: "<layer>.weight" then "<layer>.bias".
std::vector<std::string> parameter_names(const ModelSpec& spec);

// Trainable state. Weight entries hold latent values when the layer has
// SatNL enabled, raw weights otherwise.
struct ModelParams {
    std::vector<Tensor> tensors;  // same order as parameter_names()
};

// He-normal weights (effective), zero biases; SatNL layers get the matching latents.
ModelParams init_params(const ModelSpec& spec, Rng& rng);

// Post-SatNL weight of every layer, in layer order.
std::vector<Tensor> effective_weights(const ModelSpec& spec, const ModelParams& params);

struct ForwardHooks {
    // Replaces a layer's effective weight (e.g. with a fake-quantized node).
    std::function<NodeId(Graph&, std::size_t layer, NodeId effective_weight)> weight;
    // Transforms the input of a layer before it is consumed.
    std::function<NodeId(Graph&, std::size_t layer, NodeId input)> activation;
};

struct ForwardResult {
    NodeId logits = 0;
    std::vector<LayerWeight> effective;  // pre-hook effective weights
    std::vector<NodeId> layer_inputs;    // post-hook
    std::vector<NodeId> layer_outputs;   // pre-activation (after bias)
};

ForwardResult build_forward(Graph& g, const ModelSpec& spec, std::span<const NodeId> params, NodeId input,
                            const ForwardHooks& hooks = {});

}  // namespace robustq

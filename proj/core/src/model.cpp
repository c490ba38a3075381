#include "robustq/model.hpp"

#include <cmath>
#include <stdexcept>

namespace robustq {

std::string to_string(Architecture a) { return a == Architecture::mlp ? "mlp" : "smallcnn"; }

Architecture parse_architecture(const std::string& s) {
    if (s == "mlp") return Architecture::mlp;
    if (s == "smallcnn" || s == "cnn") return Architecture::smallcnn;
    throw std::invalid_argument("unknown architecture '" + s + "'");
}

void ModelSpec::validate() const {
    if (arch == Architecture::mlp) {
        if (widths.size() < 2) throw std::invalid_argument("ModelSpec: mlp needs at least input and output widths");
        if (widths.back() != classes) throw std::invalid_argument("ModelSpec: last mlp width must equal classes");
    } else {
        if (widths.size() != 4) throw std::invalid_argument("ModelSpec: smallcnn widths are [in, conv1, conv2, hidden]");
        if (image_size < 4 || image_size % 2 != 0) throw std::invalid_argument("ModelSpec: image size must be even and >= 4");
    }
    for (auto w : widths) {
        if (w == 0) throw std::invalid_argument("ModelSpec: zero width");
    }
    if (parameter_count() > 1'000'000) throw std::invalid_argument("ModelSpec: more than 1e6 parameters");
}

std::vector<LayerSpec> ModelSpec::layers() const {
    std::vector<LayerSpec> out;
    if (arch == Architecture::mlp) {
        for (std::size_t i = 0; i + 1 < widths.size(); ++i) {
            const bool last = i + 2 == widths.size();
            out.push_back({"fc" + std::to_string(i + 1), LayerKind::linear, {widths[i + 1], widths[i]}, !last, false});
        }
        return out;
    }
    const std::size_t pooled = (image_size / 2) * (image_size / 2);
    out.push_back({"conv1", LayerKind::conv, {widths[1], widths[0], 3, 3}, true, false});
    out.push_back({"conv2", LayerKind::conv, {widths[2], widths[1], 3, 3}, true, true});
    out.push_back({"fc1", LayerKind::linear, {widths[3], widths[2] * pooled}, true, false});
    out.push_back({"fc2", LayerKind::linear, {classes, widths[3]}, false, false});
    return out;
}

std::size_t ModelSpec::parameter_count() const {
    std::size_t n = 0;
    for (const auto& l : layers()) n += shape_numel(l.weight_shape) + l.weight_shape[0];
    return n;
}

Shape ModelSpec::input_shape() const {
    if (arch == Architecture::mlp) return {widths.front()};
    return {widths.front(), image_size, image_size};
}

std::vector<std::string> parameter_names(const ModelSpec& spec) {
    std::vector<std::string> names;
    for (const auto& l : spec.layers()) {
        names.push_back(l.name + ".weight");
        names.push_back(l.name + ".bias");
    }
    return names;
}

ModelParams init_params(const ModelSpec& spec, Rng& rng) {
    spec.validate();
    ModelParams p;
    for (const auto& l : spec.layers()) {
        const std::size_t fan_in = shape_numel(l.weight_shape) / l.weight_shape[0];
        const double stddev = std::sqrt((l.relu ? 2.0 : 1.0) / static_cast<double>(fan_in));
        Tensor w(l.weight_shape);
        for (auto& v : w.data()) v = stddev * rng.normal();
        if (spec.satnl.enabled_for(l.name)) w = init_latent(w, spec.satnl.kind);
        p.tensors.push_back(std::move(w));
        p.tensors.push_back(Tensor::zeros({l.weight_shape[0]}));
    }
    return p;
}

std::vector<Tensor> effective_weights(const ModelSpec& spec, const ModelParams& params) {
    const auto layers = spec.layers();
    if (params.tensors.size() != 2 * layers.size()) throw std::invalid_argument("effective_weights: parameter count mismatch");
    std::vector<Tensor> out;
    for (std::size_t i = 0; i < layers.size(); ++i) {
        Tensor w = params.tensors[2 * i];
        if (spec.satnl.enabled_for(layers[i].name)) {
            for (auto& v : w.data()) v = satnl_value(spec.satnl.kind, v);
        }
        out.push_back(std::move(w));
    }
    return out;
}

ForwardResult build_forward(Graph& g, const ModelSpec& spec, std::span<const NodeId> params, NodeId input,
                            const ForwardHooks& hooks) {
    const auto layers = spec.layers();
    if (params.size() != 2 * layers.size()) {
        throw std::invalid_argument("build_forward: expected " + std::to_string(2 * layers.size()) + " parameters, got " +
                                    std::to_string(params.size()));
    }
    ForwardResult r;
    NodeId x = input;
    for (std::size_t i = 0; i < layers.size(); ++i) {
        const auto& l = layers[i];
        NodeId w = params[2 * i];
        if (spec.satnl.enabled_for(l.name)) w = satnl_apply(g, w, spec.satnl.kind);
        r.effective.push_back({l.name, w});
        if (hooks.weight) w = hooks.weight(g, i, w);

        if (l.kind == LayerKind::linear && g.value(x).rank() != 2) x = g.flatten(x);
        if (hooks.activation) x = hooks.activation(g, i, x);
        r.layer_inputs.push_back(x);

        NodeId y = l.kind == LayerKind::conv ? g.conv2d(x, w, {1, 1}) : g.matmul(x, g.transpose(w));
        y = g.add_bias(y, params[2 * i + 1]);
        r.layer_outputs.push_back(y);
        if (l.relu) y = g.relu(y);
        if (l.pool_after) y = g.flatten(g.avgpool2d(y, 2));
        x = y;
    }
    r.logits = x;
    return r;
}

}  // namespace robustq

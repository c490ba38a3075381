#pragma once

#include <cstddef>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "robustq/tensor.hpp"

namespace robustq {

using NodeId = std::size_t;

enum class OpKind {
    leaf,
    matmul,
    transpose,
    conv2d,
    add_bias,
    relu,
    tanh,
    flatten,
    avgpool2d,
    add,
    scale,
    sum,
    abs,
    softmax_cross_entropy,
    elementwise,
    custom,
};

std::string to_string(OpKind kind);

class Graph;

// Handed to a node's backward rule. `grad()` is dL/d(output); rules push
// contributions to their inputs through accumulate().
class BackwardContext {
public:
    BackwardContext(Graph& graph, NodeId node) : graph_(graph), node_(node) {}

    const Tensor& grad() const;
    const Tensor& value() const;
    const Tensor& input(std::size_t slot) const;
    bool needs_grad(std::size_t slot) const;
    void accumulate(std::size_t slot, const Tensor& contribution);

private:
    Graph& graph_;
    NodeId node_;
};

using BackwardFn = std::function<void(BackwardContext&)>;

// Tape of eagerly evaluated nodes. Inputs always precede the nodes that use
// them, so reverse insertion order is a valid topological order.
class Graph {
public:
    Graph() = default;
    Graph(const Graph&) = delete;
    Graph& operator=(const Graph&) = delete;
    Graph(Graph&&) = default;
    Graph& operator=(Graph&&) = default;

    NodeId constant(Tensor value);
    NodeId parameter(Tensor value);

    NodeId matmul(NodeId a, NodeId b);
    // 2-D only
    NodeId transpose(NodeId a);
    NodeId conv2d(NodeId x, NodeId w, kernels::Conv2dGeometry geo = {});
    // x[n,c] or x[n,c,h,w] plus b[c]
    NodeId add_bias(NodeId x, NodeId b);
    NodeId relu(NodeId x);
    NodeId tanh(NodeId x);
    // x[n,...] -> [n, prod(...)]
    NodeId flatten(NodeId x);
    NodeId avgpool2d(NodeId x, std::size_t kernel);
    NodeId add(NodeId a, NodeId b);
    NodeId scale(NodeId a, double factor);
    NodeId sum(NodeId a);
    // subgradient at 0 is 0
    NodeId abs(NodeId a);
    // mean cross-entropy over the batch
    NodeId softmax_cross_entropy(NodeId logits, std::span<const int> labels);

    // y = f(x) elementwise with derivative df.
    NodeId elementwise(NodeId x, std::function<double(double)> f, std::function<double(double)> df, std::string name);

    // Escape hatch for ops defined by other modules; value is already computed.
    NodeId custom(std::string name, std::vector<NodeId> inputs, Tensor value, BackwardFn backward);

    void backward(NodeId loss);

    const Tensor& value(NodeId id) const;
    // Zero tensor of the right shape if no gradient reached the node.
    const Tensor& grad(NodeId id) const;
    OpKind kind(NodeId id) const;
    const std::string& name(NodeId id) const;
    const std::vector<NodeId>& inputs(NodeId id) const;
    bool is_parameter(NodeId id) const;
    const std::vector<NodeId>& parameters() const noexcept { return parameters_; }
    std::size_t size() const noexcept { return nodes_.size(); }

private:
    friend class BackwardContext;

    struct Node {
        OpKind kind = OpKind::leaf;
        std::string name;
        std::vector<NodeId> inputs;
        Tensor value;
        Tensor grad;
        bool has_grad = false;
        bool requires_grad = false;
        bool trainable = false;
        BackwardFn backward;
    };

    NodeId push(OpKind kind, std::string name, std::vector<NodeId> inputs, Tensor value, BackwardFn backward);
    const Node& node(NodeId id) const;
    Node& node(NodeId id);

    std::vector<Node> nodes_;
    std::vector<NodeId> parameters_;
};

// Builds a scalar loss over parameter nodes created from `params`, in order.
using LossBuilder = std::function<NodeId(Graph&, std::span<const NodeId>)>;

// Central-difference check of the reverse-mode gradient. Returns
// max_i |g_ad - g_fd| / max(1e-8, |g_ad| + |g_fd|).
double finite_difference_check(const LossBuilder& loss_fn, const std::vector<Tensor>& params, double epsilon);

}  // namespace robustq

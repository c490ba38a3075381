#include "robustq/autodiff.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace robustq {

std::string to_string(OpKind kind) {
    switch (kind) {
        case OpKind::leaf: return "leaf";
        case OpKind::matmul: return "matmul";
        case OpKind::transpose: return "transpose";
        case OpKind::conv2d: return "conv2d";
        case OpKind::add_bias: return "add_bias";
        case OpKind::relu: return "relu";
        case OpKind::tanh: return "tanh";
        case OpKind::flatten: return "flatten";
        case OpKind::avgpool2d: return "avgpool2d";
        case OpKind::add: return "add";
        case OpKind::scale: return "scale";
        case OpKind::sum: return "sum";
        case OpKind::abs: return "abs";
        case OpKind::softmax_cross_entropy: return "softmax_cross_entropy";
        case OpKind::elementwise: return "elementwise";
        case OpKind::custom: return "custom";
    }
    return "unknown";
}

// ---------------------------------------------------------------------------
// BackwardContext

const Tensor& BackwardContext::grad() const { return graph_.node(node_).grad; }
const Tensor& BackwardContext::value() const { return graph_.node(node_).value; }

const Tensor& BackwardContext::input(std::size_t slot) const {
    return graph_.node(graph_.node(node_).inputs.at(slot)).value;
}

bool BackwardContext::needs_grad(std::size_t slot) const {
    return graph_.node(graph_.node(node_).inputs.at(slot)).requires_grad;
}

void BackwardContext::accumulate(std::size_t slot, const Tensor& contribution) {
    auto& target = graph_.node(graph_.node(node_).inputs.at(slot));
    if (!target.requires_grad) return;
    if (contribution.shape() != target.value.shape()) {
        throw std::logic_error("backward of " + graph_.node(node_).name + ": gradient shape " +
                               shape_to_string(contribution.shape()) + " does not match input " +
                               shape_to_string(target.value.shape()));
    }
    if (!target.has_grad) {
        target.grad = contribution;
        target.has_grad = true;
        return;
    }
    auto dst = target.grad.data();
    auto src = contribution.data();
    for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += src[i];
}

// ---------------------------------------------------------------------------
// Graph bookkeeping

const Graph::Node& Graph::node(NodeId id) const {
    if (id >= nodes_.size()) throw std::out_of_range("Graph: unknown node id " + std::to_string(id));
    return nodes_[id];
}

Graph::Node& Graph::node(NodeId id) {
    if (id >= nodes_.size()) throw std::out_of_range("Graph: unknown node id " + std::to_string(id));
    return nodes_[id];
}

NodeId Graph::push(OpKind kind, std::string name, std::vector<NodeId> inputs, Tensor value, BackwardFn backward) {
    for (NodeId in : inputs) {
        if (in >= nodes_.size()) throw std::out_of_range(name + ": input node " + std::to_string(in) + " does not exist");
    }
    if (!value.all_finite()) throw std::domain_error(name + ": produced a non-finite value");
    Node n;
    n.kind = kind;
    n.name = std::move(name);
    n.requires_grad = std::any_of(inputs.begin(), inputs.end(), [&](NodeId i) { return nodes_[i].requires_grad; });
    n.inputs = std::move(inputs);
    n.value = std::move(value);
    n.backward = std::move(backward);
    nodes_.push_back(std::move(n));
    return nodes_.size() - 1;
}

NodeId Graph::constant(Tensor value) { return push(OpKind::leaf, "constant", {}, std::move(value), nullptr); }

NodeId Graph::parameter(Tensor value) {
    const NodeId id = push(OpKind::leaf, "parameter", {}, std::move(value), nullptr);
    nodes_[id].requires_grad = true;
    nodes_[id].trainable = true;
    parameters_.push_back(id);
    return id;
}

const Tensor& Graph::value(NodeId id) const { return node(id).value; }

const Tensor& Graph::grad(NodeId id) const {
    auto& n = const_cast<Graph*>(this)->node(id);
    if (!n.has_grad) {
        n.grad = Tensor::zeros(n.value.shape());
        n.has_grad = true;
    }
    return n.grad;
}

OpKind Graph::kind(NodeId id) const { return node(id).kind; }
const std::string& Graph::name(NodeId id) const { return node(id).name; }
const std::vector<NodeId>& Graph::inputs(NodeId id) const { return node(id).inputs; }
bool Graph::is_parameter(NodeId id) const { return node(id).trainable; }

void Graph::backward(NodeId loss) {
    if (node(loss).value.numel() != 1) {
        throw std::invalid_argument("backward: loss must be a scalar, got shape " +
                                    shape_to_string(node(loss).value.shape()));
    }
    for (auto& n : nodes_) {
        n.has_grad = false;
        n.grad = Tensor();
    }
    auto& root = nodes_[loss];
    root.grad = Tensor(root.value.shape(), 1.0);
    root.has_grad = true;
    for (NodeId id = loss + 1; id-- > 0;) {
        auto& n = nodes_[id];
        if (!n.has_grad || !n.requires_grad || !n.backward) continue;
        BackwardContext ctx(*this, id);
        n.backward(ctx);
    }
}

// ---------------------------------------------------------------------------
// Operations

NodeId Graph::matmul(NodeId a, NodeId b) {
    Tensor out = kernels::matmul(value(a), value(b));
    return push(OpKind::matmul, "matmul", {a, b}, std::move(out), [](BackwardContext& ctx) {
        if (ctx.needs_grad(0)) ctx.accumulate(0, kernels::matmul_grad_lhs(ctx.grad(), ctx.input(1)));
        if (ctx.needs_grad(1)) ctx.accumulate(1, kernels::matmul_grad_rhs(ctx.input(0), ctx.grad()));
    });
}

namespace {
Tensor transpose2d(const Tensor& t) {
    const std::size_t r = t.dim(0), c = t.dim(1);
    Tensor out({c, r});
    for (std::size_t i = 0; i < r; ++i)
        for (std::size_t j = 0; j < c; ++j) out[j * r + i] = t[i * c + j];
    return out;
}
}  // namespace

NodeId Graph::transpose(NodeId a) {
    const Tensor& av = value(a);
    if (av.rank() != 2) throw std::invalid_argument("transpose: expected a matrix, got " + shape_to_string(av.shape()));
    return push(OpKind::transpose, "transpose", {a}, transpose2d(av), [](BackwardContext& ctx) {
        ctx.accumulate(0, transpose2d(ctx.grad()));
    });
}

NodeId Graph::conv2d(NodeId x, NodeId w, kernels::Conv2dGeometry geo) {
    Tensor out = kernels::conv2d(value(x), value(w), geo);
    return push(OpKind::conv2d, "conv2d", {x, w}, std::move(out), [geo](BackwardContext& ctx) {
        if (ctx.needs_grad(0))
            ctx.accumulate(0, kernels::conv2d_grad_input(ctx.grad(), ctx.input(1), ctx.input(0).shape(), geo));
        if (ctx.needs_grad(1))
            ctx.accumulate(1, kernels::conv2d_grad_weight(ctx.grad(), ctx.input(0), ctx.input(1).shape(), geo));
    });
}

NodeId Graph::add_bias(NodeId x, NodeId b) {
    const Tensor& xv = value(x);
    const Tensor& bv = value(b);
    if ((xv.rank() != 2 && xv.rank() != 4) || bv.rank() != 1 || xv.dim(1) != bv.dim(0)) {
        throw std::invalid_argument("add_bias: expected x[n,c] or x[n,c,h,w] with b[c], got x " +
                                    shape_to_string(xv.shape()) + " and b " + shape_to_string(bv.shape()));
    }
    const std::size_t n = xv.dim(0), c = xv.dim(1), inner = xv.numel() / (n * c);
    Tensor out = xv;
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < c; ++j)
            for (std::size_t k = 0; k < inner; ++k) out[(i * c + j) * inner + k] += bv[j];
    return push(OpKind::add_bias, "add_bias", {x, b}, std::move(out), [n, c, inner](BackwardContext& ctx) {
        if (ctx.needs_grad(0)) ctx.accumulate(0, ctx.grad());
        if (ctx.needs_grad(1)) {
            Tensor gb({c});
            const Tensor& g = ctx.grad();
            for (std::size_t i = 0; i < n; ++i)
                for (std::size_t j = 0; j < c; ++j)
                    for (std::size_t k = 0; k < inner; ++k) gb[j] += g[(i * c + j) * inner + k];
            ctx.accumulate(1, gb);
        }
    });
}

NodeId Graph::relu(NodeId x) {
    Tensor out = value(x);
    for (auto& v : out.data()) v = v > 0.0 ? v : 0.0;
    return push(OpKind::relu, "relu", {x}, std::move(out), [](BackwardContext& ctx) {
        Tensor g = ctx.grad();
        const Tensor& in = ctx.input(0);
        for (std::size_t i = 0; i < g.numel(); ++i)
            if (!(in[i] > 0.0)) g[i] = 0.0;
        ctx.accumulate(0, g);
    });
}

namespace {
// tanh(-x) == -tanh(x) bit-exactly
double odd_tanh(double x) { return std::copysign(std::tanh(std::fabs(x)), x); }
}  // namespace

NodeId Graph::tanh(NodeId x) {
    Tensor out = value(x);
    for (auto& v : out.data()) v = odd_tanh(v);
    return push(OpKind::tanh, "tanh", {x}, std::move(out), [](BackwardContext& ctx) {
        Tensor g = ctx.grad();
        const Tensor& y = ctx.value();
        for (std::size_t i = 0; i < g.numel(); ++i) g[i] *= 1.0 - y[i] * y[i];
        ctx.accumulate(0, g);
    });
}

NodeId Graph::flatten(NodeId x) {
    const Tensor& xv = value(x);
    if (xv.rank() < 2) throw std::invalid_argument("flatten: expected rank >= 2, got " + shape_to_string(xv.shape()));
    Tensor out = xv.reshaped({xv.dim(0), xv.numel() / xv.dim(0)});
    return push(OpKind::flatten, "flatten", {x}, std::move(out), [](BackwardContext& ctx) {
        ctx.accumulate(0, ctx.grad().reshaped(ctx.input(0).shape()));
    });
}

NodeId Graph::avgpool2d(NodeId x, std::size_t kernel) {
    Tensor out = kernels::avgpool2d(value(x), kernel);
    return push(OpKind::avgpool2d, "avgpool2d", {x}, std::move(out), [kernel](BackwardContext& ctx) {
        ctx.accumulate(0, kernels::avgpool2d_grad(ctx.grad(), ctx.input(0).shape(), kernel));
    });
}

NodeId Graph::add(NodeId a, NodeId b) {
    const Tensor& av = value(a);
    const Tensor& bv = value(b);
    if (av.shape() != bv.shape()) {
        throw std::invalid_argument("add: shape mismatch " + shape_to_string(av.shape()) + " vs " +
                                    shape_to_string(bv.shape()));
    }
    Tensor out = av;
    for (std::size_t i = 0; i < out.numel(); ++i) out[i] += bv[i];
    return push(OpKind::add, "add", {a, b}, std::move(out), [](BackwardContext& ctx) {
        ctx.accumulate(0, ctx.grad());
        ctx.accumulate(1, ctx.grad());
    });
}

NodeId Graph::scale(NodeId a, double factor) {
    Tensor out = value(a);
    for (auto& v : out.data()) v *= factor;
    return push(OpKind::scale, "scale", {a}, std::move(out), [factor](BackwardContext& ctx) {
        Tensor g = ctx.grad();
        for (auto& v : g.data()) v *= factor;
        ctx.accumulate(0, g);
    });
}

NodeId Graph::sum(NodeId a) {
    double acc = 0.0;
    for (double v : value(a).data()) acc += v;
    return push(OpKind::sum, "sum", {a}, Tensor::scalar(acc), [](BackwardContext& ctx) {
        ctx.accumulate(0, Tensor(ctx.input(0).shape(), ctx.grad().item()));
    });
}

NodeId Graph::abs(NodeId a) {
    Tensor out = value(a);
    for (auto& v : out.data()) v = std::fabs(v);
    return push(OpKind::abs, "abs", {a}, std::move(out), [](BackwardContext& ctx) {
        Tensor g = ctx.grad();
        const Tensor& in = ctx.input(0);
        for (std::size_t i = 0; i < g.numel(); ++i) g[i] *= in[i] > 0.0 ? 1.0 : (in[i] < 0.0 ? -1.0 : 0.0);
        ctx.accumulate(0, g);
    });
}

NodeId Graph::softmax_cross_entropy(NodeId logits, std::span<const int> labels) {
    const Tensor& z = value(logits);
    if (z.rank() != 2) {
        throw std::invalid_argument("softmax_cross_entropy: logits must be [batch, classes], got " +
                                    shape_to_string(z.shape()));
    }
    const std::size_t batch = z.dim(0), classes = z.dim(1);
    if (labels.empty()) throw std::invalid_argument("softmax_cross_entropy: empty batch");
    if (labels.size() != batch) {
        throw std::invalid_argument("softmax_cross_entropy: " + std::to_string(labels.size()) + " labels for " +
                                    std::to_string(batch) + " rows");
    }
    Tensor probs(z.shape());
    double loss = 0.0;
    for (std::size_t i = 0; i < batch; ++i) {
        const int label = labels[i];
        if (label < 0 || static_cast<std::size_t>(label) >= classes) {
            throw std::out_of_range("softmax_cross_entropy: label " + std::to_string(label) + " outside [0, " +
                                    std::to_string(classes) + ")");
        }
        const double* row = z.data().data() + i * classes;
        double mx = row[0];
        for (std::size_t j = 1; j < classes; ++j) mx = std::max(mx, row[j]);
        double denom = 0.0;
        for (std::size_t j = 0; j < classes; ++j) denom += std::exp(row[j] - mx);
        for (std::size_t j = 0; j < classes; ++j) probs[i * classes + j] = std::exp(row[j] - mx) / denom;
        loss += std::log(denom) - (row[label] - mx);
    }
    loss /= static_cast<double>(batch);
    std::vector<int> held(labels.begin(), labels.end());
    return push(OpKind::softmax_cross_entropy, "softmax_cross_entropy", {logits}, Tensor::scalar(loss),
                [probs = std::move(probs), held = std::move(held)](BackwardContext& ctx) {
                    const std::size_t batch = held.size();
                    const std::size_t classes = probs.numel() / batch;
                    const double scale = ctx.grad().item() / static_cast<double>(batch);
                    Tensor g = probs;
                    for (std::size_t i = 0; i < batch; ++i) g[i * classes + static_cast<std::size_t>(held[i])] -= 1.0;
                    for (auto& v : g.data()) v *= scale;
                    ctx.accumulate(0, g);
                });
}

NodeId Graph::elementwise(NodeId x, std::function<double(double)> f, std::function<double(double)> df,
                          std::string name) {
    Tensor out = value(x);
    for (auto& v : out.data()) v = f(v);
    return push(OpKind::elementwise, std::move(name), {x}, std::move(out), [df = std::move(df)](BackwardContext& ctx) {
        Tensor g = ctx.grad();
        const Tensor& in = ctx.input(0);
        for (std::size_t i = 0; i < g.numel(); ++i) g[i] *= df(in[i]);
        ctx.accumulate(0, g);
    });
}

NodeId Graph::custom(std::string name, std::vector<NodeId> inputs, Tensor value, BackwardFn backward) {
    return push(OpKind::custom, std::move(name), std::move(inputs), std::move(value), std::move(backward));
}

// ---------------------------------------------------------------------------

double finite_difference_check(const LossBuilder& loss_fn, const std::vector<Tensor>& params, double epsilon) {
    if (!(epsilon > 0.0)) throw std::invalid_argument("finite_difference_check: epsilon must be positive");

    auto evaluate = [&](const std::vector<Tensor>& ps) {
        Graph g;
        std::vector<NodeId> ids;
        ids.reserve(ps.size());
        for (const auto& p : ps) ids.push_back(g.parameter(p));
        return g.value(loss_fn(g, ids)).item();
    };

    std::vector<Tensor> analytic;
    {
        Graph g;
        std::vector<NodeId> ids;
        for (const auto& p : params) ids.push_back(g.parameter(p));
        const NodeId loss = loss_fn(g, ids);
        g.backward(loss);
        for (NodeId id : ids) analytic.push_back(g.grad(id));
    }

    double worst = 0.0;
    std::vector<Tensor> probe = params;
    for (std::size_t p = 0; p < params.size(); ++p) {
        for (std::size_t i = 0; i < params[p].numel(); ++i) {
            const double orig = params[p][i];
            probe[p][i] = orig + epsilon;
            const double up = evaluate(probe);
            probe[p][i] = orig - epsilon;
            const double down = evaluate(probe);
            probe[p][i] = orig;
            const double fd = (up - down) / (2.0 * epsilon);
            const double ad = analytic[p][i];
            const double rel = std::fabs(ad - fd) / std::max(1e-8, std::fabs(ad) + std::fabs(fd));
            worst = std::max(worst, rel);
        }
    }
    return worst;
}

}  // namespace robustq

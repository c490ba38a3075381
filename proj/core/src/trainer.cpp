#include "robustq/trainer.hpp"

#include "robustq/config.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>
#include <sstream>
#include <stdexcept>

namespace robustq {

double learning_rate(const TrainConfig& cfg, std::size_t step, std::size_t steps_per_epoch) {
    const std::size_t total = static_cast<std::size_t>(std::max(cfg.epochs, 1)) * steps_per_epoch;
    const std::size_t warmup = static_cast<std::size_t>(std::max(cfg.warmup_epochs, 0)) * steps_per_epoch;
    if (step < warmup) return cfg.lr * static_cast<double>(step + 1) / static_cast<double>(warmup);
    if (total <= warmup) return cfg.lr;
    const double progress = static_cast<double>(step - warmup) / static_cast<double>(total - warmup);
    return cfg.lr_floor + (cfg.lr - cfg.lr_floor) * 0.5 * (1.0 + std::cos(std::numbers::pi * std::min(progress, 1.0)));
}

std::set<std::string> default_symreg_skip(const ModelSpec& spec) {
    std::set<std::string> skip;
    const auto layers = spec.layers();
    for (std::size_t i = 0; i < layers.size(); ++i) {
        const std::size_t per_channel = shape_numel(layers[i].weight_shape) / layers[i].weight_shape[0];
        if (i + 1 == layers.size() || per_channel < 16) skip.insert(layers[i].name);
    }
    return skip;
}

void sgd_update(std::vector<Tensor>& params, const std::vector<Tensor>& grads, SgdState& state, const SgdStep& step) {
    if (grads.size() != params.size()) throw std::invalid_argument("sgd_update: gradient count mismatch");
    if (state.velocity.size() != params.size()) {
        state.velocity.clear();
        for (const auto& p : params) state.velocity.push_back(Tensor::zeros(p.shape()));
    }
    for (std::size_t k = 0; k < params.size(); ++k) {
        const bool decay = step.decay.empty() || step.decay.at(k);
        auto w = params[k].data();
        auto v = state.velocity[k].data();
        auto g = grads[k].data();
        for (std::size_t i = 0; i < w.size(); ++i) {
            const double d = decay ? g[i] + step.weight_decay * w[i] : g[i];
            v[i] = step.momentum * v[i] + d;
            w[i] -= step.lr * v[i];
        }
    }
}

std::vector<Tensor> sam_perturbation(const std::vector<Tensor>& params, const std::vector<Tensor>& grads,
                                     const SamConfig& sam) {
    std::vector<Tensor> eps;
    double norm2 = 0.0;
    for (std::size_t k = 0; k < params.size(); ++k) {
        for (std::size_t i = 0; i < params[k].numel(); ++i) {
            const double t = sam.adaptive ? std::fabs(params[k][i]) : 1.0;
            norm2 += (t * grads[k][i]) * (t * grads[k][i]);
        }
    }
    const double norm = std::sqrt(norm2);
    for (std::size_t k = 0; k < params.size(); ++k) {
        Tensor e = Tensor::zeros(params[k].shape());
        if (norm > 0.0) {
            for (std::size_t i = 0; i < e.numel(); ++i) {
                const double t = sam.adaptive ? std::fabs(params[k][i]) : 1.0;
                e[i] = sam.rho * t * t * grads[k][i] / norm;
            }
        }
        eps.push_back(std::move(e));
    }
    return eps;
}

void sam_step(std::vector<Tensor>& params, const std::vector<Tensor>& grads, const SamConfig& sam,
              const GradientClosure& closure, SgdState& state, const SgdStep& step) {
    if (!sam.enabled) throw std::invalid_argument("sam_step: SAM is not enabled");
    if (sam.rho < 0.0) throw std::invalid_argument("sam_step: rho must be >= 0");
    const auto eps = sam_perturbation(params, grads, sam);
    std::vector<Tensor> perturbed = params;
    for (std::size_t k = 0; k < params.size(); ++k) {
        // adding +0.0 would turn -0.0 into +0.0
        for (std::size_t i = 0; i < perturbed[k].numel(); ++i) {
            if (eps[k][i] != 0.0) perturbed[k][i] += eps[k][i];
        }
    }
    const auto sharp_grads = closure(perturbed);
    sgd_update(params, sharp_grads, state, step);
}

// ---------------------------------------------------------------------------
// Evaluation

std::vector<int> layer_bits(std::size_t layers, int bits, int pinned_bits) {
    std::vector<int> out(layers, bits);
    if (layers > 0) {
        out.front() = std::max(bits, pinned_bits);
        out.back() = std::max(bits, pinned_bits);
    }
    return out;
}

Tensor apply_weight_quant(const Tensor& effective, const WeightQuant& q) {
    if (q.single_level) return quantize_single_level(effective, q.params, q.scheme, *q.single_level);
    return quantize(effective, q.params, q.scheme);
}

namespace {

constexpr std::size_t kEvalBatch = 500;

ForwardHooks constant_quant_hooks(const NetworkQuant* quant) {
    ForwardHooks hooks;
    if (!quant) return hooks;
    hooks.weight = [quant](Graph& g, std::size_t layer, NodeId w) {
        const auto& lq = quant->at(layer);
        if (!lq.weight) return w;
        return g.constant(apply_weight_quant(g.value(w), *lq.weight));
    };
    hooks.activation = [quant](Graph& g, std::size_t layer, NodeId x) {
        const auto& lq = quant->at(layer);
        if (!lq.activation) return x;
        return g.constant(quantize(g.value(x), lq.activation->params, lq.activation->scheme));
    };
    return hooks;
}

std::vector<NodeId> constant_params(Graph& g, const ModelParams& params) {
    std::vector<NodeId> ids;
    for (const auto& t : params.tensors) ids.push_back(g.constant(t));
    return ids;
}

template <typename Fn>
void for_each_batch(const Dataset& data, std::size_t batch, Fn&& fn) {
    std::vector<std::size_t> idx;
    for (std::size_t start = 0; start < data.size(); start += batch) {
        const std::size_t end = std::min(start + batch, data.size());
        idx.resize(end - start);
        std::iota(idx.begin(), idx.end(), start);
        fn(data.subset(idx));
    }
}

std::size_t count_correct(const Tensor& logits, std::span<const int> labels) {
    const std::size_t classes = logits.dim(1);
    std::size_t correct = 0;
    for (std::size_t i = 0; i < labels.size(); ++i) {
        const double* row = logits.data().data() + i * classes;
        const auto best = static_cast<std::size_t>(std::max_element(row, row + classes) - row);
        if (static_cast<int>(best) == labels[i]) ++correct;
    }
    return correct;
}

void check_quant(const ModelSpec& spec, const NetworkQuant* quant) {
    if (quant && quant->size() != spec.layers().size()) {
        throw std::invalid_argument("evaluate: quantization config has " + std::to_string(quant->size()) +
                                    " layers, model has " + std::to_string(spec.layers().size()));
    }
}

}  // namespace

double evaluate(const ModelSpec& spec, const ModelParams& params, const Dataset& data, const NetworkQuant* quant) {
    check_quant(spec, quant);
    if (data.size() == 0) throw std::invalid_argument("evaluate: empty dataset");
    const auto hooks = constant_quant_hooks(quant);
    std::size_t correct = 0;
    for_each_batch(data, kEvalBatch, [&](const Dataset& batch) {
        Graph g;
        const auto ids = constant_params(g, params);
        const auto fwd = build_forward(g, spec, ids, g.constant(batch.inputs), hooks);
        correct += count_correct(g.value(fwd.logits), batch.labels);
    });
    return static_cast<double>(correct) / static_cast<double>(data.size());
}

double evaluate(const Checkpoint& ckpt, const Dataset& data, const NetworkQuant* quant) {
    const auto spec = load_model_spec(ckpt);
    return evaluate(spec, load_model_params(ckpt, spec), data, quant);
}

LayerTrace trace_layers(const ModelSpec& spec, const ModelParams& params, const Dataset& data,
                        const NetworkQuant* quant) {
    check_quant(spec, quant);
    const auto hooks = constant_quant_hooks(quant);
    const std::size_t n_layers = spec.layers().size();
    std::vector<std::vector<double>> ins(n_layers), outs(n_layers);
    std::vector<Shape> in_shapes(n_layers), out_shapes(n_layers);
    for_each_batch(data, kEvalBatch, [&](const Dataset& batch) {
        Graph g;
        const auto ids = constant_params(g, params);
        const auto fwd = build_forward(g, spec, ids, g.constant(batch.inputs), hooks);
        for (std::size_t l = 0; l < n_layers; ++l) {
            const Tensor& xi = g.value(fwd.layer_inputs[l]);
            const Tensor& yo = g.value(fwd.layer_outputs[l]);
            ins[l].insert(ins[l].end(), xi.data().begin(), xi.data().end());
            outs[l].insert(outs[l].end(), yo.data().begin(), yo.data().end());
            in_shapes[l] = xi.shape();
            out_shapes[l] = yo.shape();
        }
    });
    LayerTrace trace;
    for (std::size_t l = 0; l < n_layers; ++l) {
        in_shapes[l][0] = data.size();
        out_shapes[l][0] = data.size();
        trace.inputs.emplace_back(in_shapes[l], std::move(ins[l]));
        trace.outputs.emplace_back(out_shapes[l], std::move(outs[l]));
    }
    return trace;
}

// ---------------------------------------------------------------------------
// Shared optimisation loop

namespace {

struct Problem {
    std::vector<Tensor> params;
    std::vector<bool> decay;
    std::function<NodeId(Graph&, std::span<const NodeId>, const Dataset&)> loss;
    std::function<double(const std::vector<Tensor>&)> validate;
    std::function<void(std::vector<Tensor>&)> project;  // applied after every update
};

struct LoopResult {
    std::vector<Tensor> best_params;
    std::vector<EpochRecord> history;
    double best_val = -1.0;
    int best_epoch = 0;
};

bool all_finite(const std::vector<Tensor>& ts) {
    return std::all_of(ts.begin(), ts.end(), [](const Tensor& t) { return t.all_finite(); });
}

LoopResult run_loop(Problem& prob, const Dataset& train_set, const TrainConfig& cfg) {
    if (cfg.batch_size == 0) throw std::invalid_argument("train: batch size must be positive");
    if (cfg.epochs <= 0) throw std::invalid_argument("train: epochs must be positive");
    if (cfg.sam.rho < 0.0) throw std::invalid_argument("train: sam.rho must be >= 0");
    Rng rng = Rng(cfg.seed).fork(0xDA7A);
    const std::size_t n = train_set.size();
    const std::size_t steps_per_epoch = (n + cfg.batch_size - 1) / cfg.batch_size;

    auto gradients = [&](const std::vector<Tensor>& ps, const Dataset& batch, double* loss_out) {
        Graph g;
        std::vector<NodeId> ids;
        ids.reserve(ps.size());
        for (const auto& p : ps) ids.push_back(g.parameter(p));
        const NodeId loss = prob.loss(g, ids, batch);
        if (loss_out) *loss_out = g.value(loss).item();
        g.backward(loss);
        std::vector<Tensor> grads;
        grads.reserve(ids.size());
        for (NodeId id : ids) grads.push_back(g.grad(id));
        return grads;
    };

    SgdState state;
    LoopResult result;
    std::size_t step = 0;
    std::vector<std::size_t> idx;
    for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
        const auto perm = rng.permutation(n);
        double loss_sum = 0.0;
        std::size_t batches = 0;
        try {
            for (std::size_t start = 0; start < n; start += cfg.batch_size, ++step) {
                const std::size_t end = std::min(start + cfg.batch_size, n);
                idx.assign(perm.begin() + static_cast<std::ptrdiff_t>(start), perm.begin() + static_cast<std::ptrdiff_t>(end));
                const Dataset batch = train_set.subset(idx);
                double loss = 0.0;
                const auto grads = gradients(prob.params, batch, &loss);
                if (!std::isfinite(loss)) throw std::domain_error("non-finite loss");
                loss_sum += loss;
                ++batches;
                const SgdStep sgd{learning_rate(cfg, step, steps_per_epoch), cfg.momentum, cfg.weight_decay, prob.decay};
                if (cfg.sam.enabled) {
                    sam_step(prob.params, grads, cfg.sam,
                             [&](const std::vector<Tensor>& ps) { return gradients(ps, batch, nullptr); }, state, sgd);
                } else {
                    sgd_update(prob.params, grads, state, sgd);
                }
                if (prob.project) prob.project(prob.params);
                if (!all_finite(prob.params)) throw std::domain_error("non-finite parameters");
            }
        } catch (const std::domain_error& e) {
            throw std::runtime_error("training diverged at epoch " + std::to_string(epoch) + ": " + e.what());
        }
        const double val = prob.validate(prob.params);
        result.history.push_back({epoch, loss_sum / static_cast<double>(std::max<std::size_t>(batches, 1)), val});
        if (val > result.best_val) {
            result.best_val = val;
            result.best_epoch = epoch;
            result.best_params = prob.params;
        }
    }
    return result;
}

std::vector<Tensor> rounded(const std::vector<Tensor>& ts) {
    std::vector<Tensor> out;
    for (const auto& t : ts) out.push_back(round_to_f32(t));
    return out;
}

std::string format_double(double v) {
    std::ostringstream os;
    os.precision(17);
    os << v;
    return os.str();
}

std::map<std::string, std::string> describe(const TrainConfig& cfg) {
    std::map<std::string, std::string> m;
    m["train.epochs"] = std::to_string(cfg.epochs);
    m["train.batch_size"] = std::to_string(cfg.batch_size);
    m["train.lr"] = format_double(cfg.lr);
    m["train.weight_decay"] = format_double(cfg.weight_decay);
    m["train.momentum"] = format_double(cfg.momentum);
    m["train.warmup_epochs"] = std::to_string(cfg.warmup_epochs);
    m["train.lr_floor"] = format_double(cfg.lr_floor);
    m["sam.enabled"] = cfg.sam.enabled ? "true" : "false";
    m["sam.adaptive"] = cfg.sam.adaptive ? "true" : "false";
    m["sam.rho"] = format_double(cfg.sam.rho);
    m["symreg.enabled"] = cfg.symreg ? "true" : "false";
    m["lambda1"] = format_double(cfg.symreg_cfg.lambda1);
    m["lambda2"] = format_double(cfg.symreg_cfg.lambda2);
    std::string skip;
    for (const auto& s : cfg.symreg_cfg.skip_layers) skip += (skip.empty() ? "" : ",") + s;
    m["symreg.skip"] = skip;
    return m;
}

void stamp(Checkpoint& ckpt, const TrainConfig& cfg, const std::map<std::string, std::string>& extra, int epoch,
           double best_val) {
    auto desc = describe(cfg);
    for (const auto& [k, v] : extra) desc[k] = v;
    std::string flat;
    for (const auto& [k, v] : desc) flat += k + "=" + v + "\n";
    for (const auto& [k, v] : desc) ckpt.metadata[k] = v;
    ckpt.metadata["seed"] = std::to_string(cfg.seed);
    ckpt.metadata["config_hash"] = std::to_string(fnv1a64(flat));
    ckpt.metadata["epoch"] = std::to_string(epoch);
    ckpt.metadata["best_val_accuracy"] = format_double(best_val);
}

SymRegConfig effective_symreg(const ModelSpec& spec, const TrainConfig& cfg) {
    SymRegConfig s = cfg.symreg_cfg;
    for (const auto& name : default_symreg_skip(spec)) s.skip_layers.insert(name);
    return s;
}

NodeId training_loss(Graph& g, const ForwardResult& fwd, const Dataset& batch, const TrainConfig& cfg,
                     const SymRegConfig& symreg) {
    const NodeId ce = g.softmax_cross_entropy(fwd.logits, batch.labels);
    if (!cfg.symreg) return ce;
    return total_loss(g, ce, fwd.effective, symreg);
}

}  // namespace

TrainResult train(const ModelSpec& spec, const DataSplit& data, const TrainConfig& cfg,
                  const std::map<std::string, std::string>& metadata) {
    spec.validate();
    data.train.validate();
    if (data.train.classes != spec.classes || data.train.sample_shape() != spec.input_shape()) {
        throw std::invalid_argument("train: dataset (" + std::to_string(data.train.classes) + " classes, sample " +
                                    shape_to_string(data.train.sample_shape()) + ") does not match the model (" +
                                    std::to_string(spec.classes) + " classes, input " +
                                    shape_to_string(spec.input_shape()) + ")");
    }
    Rng init_rng = Rng(cfg.seed).fork(0x1417);
    const SymRegConfig symreg = effective_symreg(spec, cfg);

    Problem prob;
    prob.params = init_params(spec, init_rng).tensors;
    for (std::size_t i = 0; i < prob.params.size(); ++i) prob.decay.push_back(i % 2 == 0);
    prob.loss = [&](Graph& g, std::span<const NodeId> ids, const Dataset& batch) {
        const auto fwd = build_forward(g, spec, ids, g.constant(batch.inputs));
        return training_loss(g, fwd, batch, cfg, symreg);
    };
    prob.validate = [&](const std::vector<Tensor>& ps) {
        return evaluate(spec, ModelParams{rounded(ps)}, data.validation);
    };

    LoopResult loop = run_loop(prob, data.train, cfg);

    TrainResult out;
    out.history = std::move(loop.history);
    out.best_epoch = loop.best_epoch;
    out.best_val_accuracy = loop.best_val;
    store_model(out.checkpoint, spec, ModelParams{loop.best_params});
    TrainConfig recorded = cfg;
    recorded.symreg_cfg = symreg;
    stamp(out.checkpoint, recorded, metadata, loop.best_epoch, loop.best_val);
    return out;
}

// ---------------------------------------------------------------------------
// QAT

NodeId lsq_fake_quant(Graph& g, NodeId x, NodeId step, const QuantScheme& scheme,
                      const std::vector<std::int64_t>& zero_points) {
    scheme.validate();
    const Tensor& xv = g.value(x);
    const Tensor& sv = g.value(step);
    std::vector<std::vector<std::size_t>> groups;
    if (scheme.granularity.is_per_channel()) {
        groups = slice_groups(xv.shape(), *scheme.granularity.axis);
    } else {
        groups.emplace_back(xv.numel());
        std::iota(groups.back().begin(), groups.back().end(), std::size_t{0});
    }
    if (sv.numel() != groups.size() || zero_points.size() != groups.size()) {
        throw std::invalid_argument("lsq_fake_quant: " + std::to_string(sv.numel()) + " steps for " +
                                    std::to_string(groups.size()) + " slices");
    }
    const auto qmin = static_cast<double>(scheme.min_level());
    const auto qmax = static_cast<double>(scheme.max_level());
    const double levels = qmax;
    Tensor out(xv.shape());
    Tensor pass(xv.shape());   // d out / d x
    Tensor dstep(xv.shape());  // d out / d step, per element
    for (std::size_t s = 0; s < groups.size(); ++s) {
        const double st = sv[s];
        if (!(st > 0.0)) throw std::domain_error("lsq_fake_quant: non-positive step");
        const auto zp = static_cast<double>(zero_points[s]);
        for (auto i : groups[s]) {
            const double scaled = xv[i] / st;
            const double r = round_half_even(scaled);
            const double lvl = r + zp;
            if (scaled + zp < qmin || lvl < qmin) {
                out[i] = (qmin - zp) * st;
                dstep[i] = qmin - zp;
            } else if (scaled + zp > qmax || lvl > qmax) {
                out[i] = (qmax - zp) * st;
                dstep[i] = qmax - zp;
            } else {
                out[i] = r * st;
                pass[i] = 1.0;
                dstep[i] = r - scaled;
            }
        }
    }
    std::vector<double> gscale(groups.size());
    for (std::size_t s = 0; s < groups.size(); ++s) {
        gscale[s] = 1.0 / std::sqrt(levels * static_cast<double>(groups[s].size()));
    }
    return g.custom("lsq_fake_quant", {x, step}, std::move(out),
                    [groups = std::move(groups), pass = std::move(pass), dstep = std::move(dstep),
                     gscale = std::move(gscale)](BackwardContext& ctx) {
                        const Tensor& up = ctx.grad();
                        if (ctx.needs_grad(0)) {
                            Tensor gx = up;
                            for (std::size_t i = 0; i < gx.numel(); ++i) gx[i] *= pass[i];
                            ctx.accumulate(0, gx);
                        }
                        if (ctx.needs_grad(1)) {
                            Tensor gs({groups.size()});
                            for (std::size_t s = 0; s < groups.size(); ++s) {
                                double acc = 0.0;
                                for (auto i : groups[s]) acc += up[i] * dstep[i];
                                gs[s] = acc * gscale[s];
                            }
                            ctx.accumulate(1, gs);
                        }
                    });
}

namespace {

std::string qat_key(const std::string& layer, const char* what) { return "qat." + layer + "." + what; }

}  // namespace

bool has_qat_state(const Checkpoint& ckpt) { return ckpt.metadata.contains("qat.bits_w"); }

NetworkQuant load_qat_quant(const Checkpoint& ckpt) {
    if (!has_qat_state(ckpt)) throw std::invalid_argument("load_qat_quant: checkpoint has no QAT state");
    const auto spec = load_model_spec(ckpt);
    NetworkQuant quant;
    for (const auto& l : spec.layers()) {
        LayerQuant lq;
        const int wb = std::stoi(ckpt.meta(qat_key(l.name, "w_bits")));
        WeightQuant wq{QuantScheme::weight(wb), {}, std::nullopt};
        const Tensor& steps = ckpt.tensor(qat_key(l.name, "w_step"));
        wq.params.step.assign(steps.data().begin(), steps.data().end());
        wq.params.zero_point.assign(steps.numel(), 0);
        wq.params.degenerate.assign(steps.numel(), false);
        lq.weight = wq;
        if (ckpt.metadata.contains(qat_key(l.name, "a_bits"))) {
            const int ab = std::stoi(ckpt.meta(qat_key(l.name, "a_bits")));
            ActivationQuant aq{QuantScheme::activation(ab), {}};
            aq.params.step = {ckpt.tensor(qat_key(l.name, "a_step"))[0]};
            aq.params.zero_point = {std::stoll(ckpt.meta(qat_key(l.name, "a_zero_point")))};
            aq.params.degenerate = {false};
            lq.activation = aq;
        }
        quant.push_back(std::move(lq));
    }
    return quant;
}

constexpr int kMaxLearnedStepBits = 8;

TrainResult qat_finetune(const Checkpoint& ckpt, const DataSplit& data, const QatConfig& cfg) {
    const auto spec = load_model_spec(ckpt);
    const auto base = load_model_params(ckpt, spec);
    const auto layers = spec.layers();
    const std::size_t n_layers = layers.size();
    const auto wbits = layer_bits(n_layers, cfg.bits_w, cfg.pinned_bits);
    std::vector<std::optional<int>> abits(n_layers);
    if (cfg.bits_a) {
        const auto b = layer_bits(n_layers, *cfg.bits_a, cfg.pinned_bits);
        for (std::size_t i = 0; i < n_layers; ++i) abits[i] = b[i];
    }

    // Initial steps: minmax on effective weights, percentile calibration on activations.
    const auto eff = effective_weights(spec, base);
    const LayerTrace trace = trace_layers(spec, base, data.calibration);
    std::vector<Tensor> w_steps;
    std::vector<Tensor> a_steps;
    std::vector<std::vector<std::int64_t>> a_zero(n_layers);
    for (std::size_t l = 0; l < n_layers; ++l) {
        const auto p = fit_params(eff[l], QuantScheme::weight(wbits[l]));
        w_steps.emplace_back(Shape{p.step.size()}, p.step);
        if (abits[l]) {
            const auto ap = fit_activation_params(trace.inputs[l], *abits[l]);
            a_steps.push_back(Tensor::vector({ap.step[0]}));
            a_zero[l] = ap.zero_point;
        } else {
            a_steps.push_back(Tensor::vector({1.0}));
        }
    }

    TrainConfig tc = cfg.base;
    tc.lr = cfg.base.lr * cfg.lr_scale;
    tc.lr_floor = std::min(cfg.base.lr_floor, tc.lr);
    tc.epochs = cfg.epochs;
    tc.warmup_epochs = 0;
    const SymRegConfig symreg = effective_symreg(spec, tc);

    // Layout: [model params..., weight steps..., activation steps...]
    const std::size_t n_model = base.tensors.size();
    Problem prob;
    prob.params = base.tensors;
    for (auto& s : w_steps) prob.params.push_back(s);
    for (auto& s : a_steps) prob.params.push_back(s);
    for (std::size_t i = 0; i < prob.params.size(); ++i) prob.decay.push_back(i < n_model && i % 2 == 0);

    // Above 8 bits the clipped elements dominate the learned-step gradient and
    // the step runs away; such grids are fine enough to keep the calibrated step.
    auto step_node = [](Graph& g, NodeId step, int bits) {
        return bits > kMaxLearnedStepBits ? g.constant(g.value(step)) : step;
    };
    auto make_hooks = [&](std::span<const NodeId> ids) {
        ForwardHooks hooks;
        hooks.weight = [&, ids](Graph& g, std::size_t l, NodeId w) {
            return lsq_fake_quant(g, w, step_node(g, ids[n_model + l], wbits[l]), QuantScheme::weight(wbits[l]),
                                  std::vector<std::int64_t>(layers[l].weight_shape[0], 0));
        };
        hooks.activation = [&, ids](Graph& g, std::size_t l, NodeId x) {
            if (!abits[l]) return x;
            return lsq_fake_quant(g, x, step_node(g, ids[n_model + n_layers + l], *abits[l]),
                                  QuantScheme::activation(*abits[l]), a_zero[l]);
        };
        return hooks;
    };

    auto to_quant = [&](const std::vector<Tensor>& ps) {
        NetworkQuant q(n_layers);
        for (std::size_t l = 0; l < n_layers; ++l) {
            const Tensor steps = round_to_f32(ps[n_model + l]);
            WeightQuant wq{QuantScheme::weight(wbits[l]), {}, std::nullopt};
            wq.params.step.assign(steps.data().begin(), steps.data().end());
            wq.params.zero_point.assign(steps.numel(), 0);
            wq.params.degenerate.assign(steps.numel(), false);
            q[l].weight = wq;
            if (abits[l]) {
                ActivationQuant aq{QuantScheme::activation(*abits[l]), {}};
                aq.params = {{round_to_f32(ps[n_model + n_layers + l])[0]}, a_zero[l], {false}};
                q[l].activation = aq;
            }
        }
        return q;
    };

    prob.loss = [&](Graph& g, std::span<const NodeId> ids, const Dataset& batch) {
        const auto hooks = make_hooks(ids);
        const auto fwd = build_forward(g, spec, ids.subspan(0, n_model), g.constant(batch.inputs), hooks);
        return training_loss(g, fwd, batch, tc, symreg);
    };
    prob.project = [&](std::vector<Tensor>& ps) {
        for (std::size_t i = n_model; i < ps.size(); ++i) {
            for (auto& v : ps[i].data()) v = std::max(v, 1e-8);
        }
    };
    prob.validate = [&](const std::vector<Tensor>& ps) {
        std::vector<Tensor> model(ps.begin(), ps.begin() + static_cast<std::ptrdiff_t>(n_model));
        const auto q = to_quant(ps);
        return evaluate(spec, ModelParams{rounded(model)}, data.validation, &q);
    };

    LoopResult loop = run_loop(prob, data.train, tc);

    TrainResult out;
    out.history = std::move(loop.history);
    out.best_epoch = loop.best_epoch;
    out.best_val_accuracy = loop.best_val;
    out.checkpoint.metadata = ckpt.metadata;
    std::vector<Tensor> model(loop.best_params.begin(), loop.best_params.begin() + static_cast<std::ptrdiff_t>(n_model));
    store_model(out.checkpoint, spec, ModelParams{model});
    std::map<std::string, std::string> extra;
    extra["qat.bits_w"] = std::to_string(cfg.bits_w);
    extra["qat.bits_a"] = cfg.bits_a ? std::to_string(*cfg.bits_a) : "FP";
    extra["qat.epochs"] = std::to_string(cfg.epochs);
    for (std::size_t l = 0; l < n_layers; ++l) {
        out.checkpoint.set_tensor(qat_key(layers[l].name, "w_step"), loop.best_params[n_model + l]);
        extra[qat_key(layers[l].name, "w_bits")] = std::to_string(wbits[l]);
        if (abits[l]) {
            out.checkpoint.set_tensor(qat_key(layers[l].name, "a_step"), loop.best_params[n_model + n_layers + l]);
            extra[qat_key(layers[l].name, "a_bits")] = std::to_string(*abits[l]);
            extra[qat_key(layers[l].name, "a_zero_point")] = std::to_string(a_zero[l][0]);
        }
    }
    stamp(out.checkpoint, tc, extra, loop.best_epoch, loop.best_val);
    return out;
}

}  // namespace robustq

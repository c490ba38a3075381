#include "robustq/harness.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <numeric>
#include <stdexcept>

#include "robustq/parallel.hpp"
#include "robustq/regularizers.hpp"
#include "robustq/rng.hpp"

namespace robustq {

std::optional<int> parse_bits(const std::string& s) {
    std::string up;
    for (char c : s) up += static_cast<char>(std::toupper(static_cast<unsigned char>(c)));
    if (up == "FP") return std::nullopt;
    try {
        std::size_t used = 0;
        const int b = std::stoi(s, &used);
        if (used != s.size()) throw std::invalid_argument(s);
        QuantScheme{b}.validate();
        return b;
    } catch (const std::invalid_argument&) {
        throw std::invalid_argument("bit-width must be an integer in [2, 30] or FP, got '" + s + "'");
    } catch (const std::out_of_range&) {
        throw std::invalid_argument("bit-width out of range: '" + s + "'");
    }
}

std::string bits_label(const std::optional<int>& bits) { return bits ? std::to_string(*bits) : "FP"; }

// ---------------------------------------------------------------------------
// Config

Config preset_config(const std::string& name) {
    Config c;
    if (name == "baseline") return c;
    if (name == "symreg") {
        c.set("symreg.enabled", "true");
        c.set("lambda1", "1.0");
        c.set("lambda2", "1.0");
    } else if (name == "satnl") {
        c.set("satnl.layers", "hidden");
    } else if (name == "robust") {
        c.set("symreg.enabled", "true");
        c.set("lambda1", "1.0");
        c.set("lambda2", "1.0");
        c.set("satnl.layers", "hidden");
        c.set("sam.enabled", "true");
        c.set("sam.adaptive", "true");
        c.set("sam.rho", "0.5");
    } else {
        throw std::invalid_argument("unknown preset '" + name + "' (expected baseline, symreg, satnl or robust)");
    }
    return c;
}

Config resolve_preset(const Config& cfg) {
    const std::string name = cfg.get_string("preset", "baseline");
    Config out = preset_config(name);
    out.merge(cfg);
    out.get_string("preset", name);
    return out;
}

namespace {

std::vector<std::size_t> to_sizes(const std::vector<std::int64_t>& v, const std::string& key) {
    std::vector<std::size_t> out;
    for (auto x : v) {
        if (x <= 0) throw std::invalid_argument("config: '" + key + "' entries must be positive");
        out.push_back(static_cast<std::size_t>(x));
    }
    return out;
}

std::size_t positive(std::int64_t v, const std::string& key) {
    if (v <= 0) throw std::invalid_argument("config: '" + key + "' must be positive");
    return static_cast<std::size_t>(v);
}

}  // namespace

ModelSpec model_from_config(const Config& cfg) {
    ModelSpec spec;
    spec.arch = parse_architecture(cfg.get_string("model.arch", "mlp"));
    const std::vector<std::int64_t> default_widths =
        spec.arch == Architecture::mlp ? std::vector<std::int64_t>{16, 64, 64, 4} : std::vector<std::int64_t>{1, 4, 8, 32};
    spec.widths = to_sizes(cfg.get_ints("model.widths", default_widths), "model.widths");
    spec.classes = positive(cfg.get_int("model.classes", 4), "model.classes");
    spec.image_size = positive(cfg.get_int("model.image_size", 12), "model.image_size");
    spec.satnl.kind = parse_satnl_kind(cfg.get_string("satnl.kind", "tanh"));
    const auto layers = spec.layers();
    const auto wanted = cfg.get_strings("satnl.layers", {"none"});
    for (std::size_t i = 0; i < layers.size(); ++i) {
        bool on = false;
        for (const auto& w : wanted) {
            if (w == "all" || w == layers[i].name || (w == "hidden" && i + 1 < layers.size())) on = true;
        }
        if (on) spec.satnl.layers[layers[i].name] = true;
    }
    for (const auto& w : wanted) {
        const bool known = w == "all" || w == "none" || w == "hidden" ||
                           std::any_of(layers.begin(), layers.end(), [&](const LayerSpec& l) { return l.name == w; });
        if (!known) throw std::invalid_argument("config: satnl.layers names unknown layer '" + w + "'");
    }
    spec.validate();
    return spec;
}

DataSplit data_from_config(const Config& cfg) {
    const std::string kind = cfg.get_string("data.kind", "blobs");
    const std::uint64_t seed = cfg.get_uint("data.seed", 1);
    Dataset all;
    if (kind == "blobs") {
        BlobsConfig b;
        b.samples = positive(cfg.get_int("data.samples", 4000), "data.samples");
        b.classes = positive(cfg.get_int("model.classes", 4), "model.classes");
        b.features = positive(cfg.get_int("data.features", 16), "data.features");
        b.separation = cfg.get_double("data.separation", b.separation);
        b.noise = cfg.get_double("data.noise", b.noise);
        b.seed = seed;
        all = make_blobs(b);
    } else if (kind == "patterns") {
        PatternsConfig p;
        p.samples = positive(cfg.get_int("data.samples", 2000), "data.samples");
        p.image_size = positive(cfg.get_int("model.image_size", 12), "model.image_size");
        p.noise = cfg.get_double("data.noise", p.noise);
        p.seed = seed;
        all = make_patterns(p);
    } else if (kind == "idx") {
        const std::string images = cfg.get_string("data.images", "");
        const std::string labels = cfg.get_string("data.labels", "");
        if (images.empty() || labels.empty()) throw std::invalid_argument("config: data.kind = idx needs data.images and data.labels");
        all = load_idx(images, labels, static_cast<std::size_t>(cfg.get_uint("data.limit", 0)));
    } else {
        throw std::invalid_argument("config: unknown data.kind '" + kind + "' (expected blobs, patterns or idx)");
    }
    // An MLP sees images as flat feature vectors.
    if (cfg.get_string("model.arch", "mlp") == "mlp" && all.inputs.rank() > 2) {
        const std::size_t n = all.size();
        all.inputs = all.inputs.reshaped({n, all.inputs.numel() / n});
    }
    return split_dataset(all, cfg.get_double("data.val_fraction", 0.25),
                         static_cast<std::size_t>(cfg.get_uint("data.calibration", 256)), seed);
}

TrainConfig train_from_config(const Config& cfg, const ModelSpec& spec, std::uint64_t seed) {
    TrainConfig t;
    t.seed = seed;
    t.epochs = static_cast<int>(cfg.get_int("train.epochs", t.epochs));
    t.batch_size = positive(cfg.get_int("train.batch_size", static_cast<std::int64_t>(t.batch_size)), "train.batch_size");
    t.lr = cfg.get_double("train.lr", t.lr);
    t.weight_decay = cfg.get_double("train.weight_decay", t.weight_decay);
    t.momentum = cfg.get_double("train.momentum", t.momentum);
    t.warmup_epochs = static_cast<int>(cfg.get_int("train.warmup_epochs", t.warmup_epochs));
    t.lr_floor = cfg.get_double("train.lr_floor", t.lr_floor);
    t.sam.enabled = cfg.get_bool("sam.enabled", false);
    t.sam.adaptive = cfg.get_bool("sam.adaptive", false);
    t.sam.rho = cfg.get_double("sam.rho", t.sam.rho);
    t.symreg = cfg.get_bool("symreg.enabled", false);
    t.symreg_cfg.lambda1 = cfg.get_double("lambda1", t.symreg_cfg.lambda1);
    t.symreg_cfg.lambda2 = cfg.get_double("lambda2", t.symreg_cfg.lambda2);
    for (const auto& s : cfg.get_strings("symreg.skip", {})) t.symreg_cfg.skip_layers.insert(s);
    for (const auto& s : default_symreg_skip(spec)) t.symreg_cfg.skip_layers.insert(s);
    if (t.epochs <= 0) throw std::invalid_argument("config: train.epochs must be positive");
    if (t.sam.rho < 0.0) throw std::invalid_argument("config: sam.rho must be >= 0");
    return t;
}

std::vector<Checkpoint> train_models(const Config& cfg, const ModelSpec& spec, const DataSplit& data,
                                     const std::vector<std::uint64_t>& seeds, std::size_t jobs) {
    std::vector<TrainConfig> configs;
    for (auto s : seeds) configs.push_back(train_from_config(cfg, spec, s));
    std::map<std::string, std::string> meta;
    for (const auto& [k, v] : cfg.resolved()) meta["config." + k] = v;
    return parallel_map(jobs, seeds.size(), [&](std::size_t i) { return train(spec, data, configs[i], meta).checkpoint; });
}

// ---------------------------------------------------------------------------
// PTQ

NetworkQuant build_ptq_quant(const ModelSpec& spec, const ModelParams& params, const Dataset& calibration,
                             const PtqOptions& opt) {
    const std::size_t n = spec.layers().size();
    NetworkQuant quant(n);
    if (opt.bits_w) {
        const auto eff = effective_weights(spec, params);
        const auto bits = layer_bits(n, *opt.bits_w, opt.pinned_bits);
        for (std::size_t l = 0; l < n; ++l) {
            const auto scheme = QuantScheme::weight(bits[l], opt.fit);
            auto p = fit_params(eff[l], scheme);
            if (opt.step_ratio != 1.0) p = scale_step(p, opt.step_ratio);
            quant[l].weight = WeightQuant{scheme, std::move(p), std::nullopt};
        }
    }
    if (opt.bits_a) {
        if (calibration.size() == 0) throw std::invalid_argument("ptq: activation quantization needs calibration data");
        const auto trace = trace_layers(spec, params, calibration);
        const auto bits = layer_bits(n, *opt.bits_a, opt.pinned_bits);
        for (std::size_t l = 0; l < n; ++l) {
            quant[l].activation = ActivationQuant{QuantScheme::activation(bits[l]), fit_activation_params(trace.inputs[l], bits[l])};
        }
    }
    return quant;
}

double channel_mean_abs(const Tensor& w) {
    const auto groups = slice_groups(w.shape(), 0);
    double acc = 0.0;
    for (const auto& g : groups) {
        double m = 0.0;
        for (auto i : g) m += w[i];
        acc += std::fabs(m / static_cast<double>(g.size()));
    }
    return acc / static_cast<double>(groups.size());
}

ReportRow PtqResult::row() const {
    ReportRow r;
    r.set("fp_accuracy", fp_accuracy);
    r.set("accuracy", quant_accuracy);
    r.set("drop", drop());
    r.set("drift_max", drift_max_all);
    r.set("weight_mean_abs", weight_mean_abs_regularized);
    for (std::size_t l = 0; l < layers.size(); ++l) r.set("drift_max_" + layers[l], drift_max[l]);
    return r;
}

PtqResult ptq_pipeline(const Checkpoint& ckpt, const DataSplit& data, const PtqOptions& opt) {
    const auto spec = load_model_spec(ckpt);
    const auto params = load_model_params(ckpt, spec);
    const auto layers = spec.layers();
    PtqResult res;
    res.fp_accuracy = evaluate(spec, params, data.validation);
    const auto quant = build_ptq_quant(spec, params, data.calibration, opt);
    res.quant_accuracy = (opt.bits_w || opt.bits_a) ? evaluate(spec, params, data.validation, &quant) : res.fp_accuracy;

    const auto eff = effective_weights(spec, params);
    const auto skip = default_symreg_skip(spec);
    std::vector<double> mu(layers.size(), 0.0);
    if (opt.bits_w && data.calibration.size() > 0) {
        const auto trace = trace_layers(spec, params, data.calibration);
        for (std::size_t l = 0; l < layers.size(); ++l) {
            const auto d = trace.inputs[l].data();
            mu[l] = std::accumulate(d.begin(), d.end(), 0.0) / static_cast<double>(d.size());
        }
    }
    double mean_acc = 0.0;
    std::size_t mean_n = 0;
    for (std::size_t l = 0; l < layers.size(); ++l) {
        res.layers.push_back(layers[l].name);
        double worst = 0.0;
        if (quant[l].weight) {
            const Tensor drift = bias_drift(eff[l], apply_weight_quant(eff[l], *quant[l].weight), mu[l]);
            for (double v : drift.data()) worst = std::max(worst, std::fabs(v));
        }
        res.drift_max.push_back(worst);
        res.drift_max_all = std::max(res.drift_max_all, worst);
        res.weight_mean_abs.push_back(channel_mean_abs(eff[l]));
        if (!skip.contains(layers[l].name)) {
            mean_acc += res.weight_mean_abs.back();
            ++mean_n;
        }
    }
    res.weight_mean_abs_regularized = mean_n ? mean_acc / static_cast<double>(mean_n) : 0.0;
    return res;
}

// ---------------------------------------------------------------------------
// Sweeps

Report sweep_bits(const Checkpoint& ckpt, const DataSplit& data, const std::vector<std::optional<int>>& bits,
                  SweepMode mode, int pinned_bits) {
    const auto spec = load_model_spec(ckpt);
    const auto params = load_model_params(ckpt, spec);
    const double fp = evaluate(spec, params, data.validation);
    const bool quant_acts = mode == SweepMode::qat && has_qat_state(ckpt) && ckpt.meta("qat.bits_a") != "FP";
    Report rep("sweep-bits");
    rep.set_meta("mode", mode == SweepMode::qat ? "qat" : "ptq");
    for (const auto& b : bits) {
        PtqOptions opt;
        opt.bits_w = b;
        opt.bits_a = quant_acts ? b : std::nullopt;
        opt.pinned_bits = pinned_bits;
        double acc = fp;
        if (b) {
            const auto q = build_ptq_quant(spec, params, data.calibration, opt);
            acc = evaluate(spec, params, data.validation, &q);
        }
        ReportRow r;
        r.set("bits_w", bits_label(b));
        r.set("bits_a", bits_label(opt.bits_a));
        r.set("accuracy", acc);
        r.set("fp_accuracy", fp);
        r.set("drop", fp - acc);
        rep.add(std::move(r));
    }
    return rep;
}

std::vector<double> default_step_ratios() {
    std::vector<double> r{0.5};
    for (int i = 0; i <= 20; ++i) r.push_back(0.8 + 0.02 * i);
    r.push_back(2.0);
    return r;
}

double curve_area(const std::vector<double>& x, const std::vector<double>& y, double lo, double hi) {
    if (x.size() != y.size()) throw std::invalid_argument("curve_area: x and y differ in length");
    std::vector<std::size_t> order(x.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(), [&](auto a, auto b) { return x[a] < x[b]; });
    const double tol = 1e-12;
    double area = 0.0;
    bool have_prev = false;
    double px = 0.0, py = 0.0;
    for (auto i : order) {
        if (x[i] < lo - tol || x[i] > hi + tol) continue;
        if (have_prev) area += 0.5 * (x[i] - px) * (y[i] + py);
        px = x[i];
        py = y[i];
        have_prev = true;
    }
    return area;
}

StepSweep sweep_step_ratio(const Checkpoint& ckpt, const DataSplit& data, int bits, const std::vector<double>& ratios,
                           int pinned_bits) {
    const auto spec = load_model_spec(ckpt);
    const auto params = load_model_params(ckpt, spec);
    const double fp = evaluate(spec, params, data.validation);
    PtqOptions opt;
    opt.bits_w = bits;
    opt.pinned_bits = pinned_bits;
    const auto fitted = build_ptq_quant(spec, params, data.calibration, opt);
    StepSweep out{Report("sweep-step"), 0.0};
    std::vector<double> acc;
    for (double ratio : ratios) {
        NetworkQuant q = fitted;
        for (auto& lq : q) lq.weight->params = scale_step(lq.weight->params, ratio);
        acc.push_back(evaluate(spec, params, data.validation, &q));
        ReportRow r;
        r.set("bits_w", bits);
        r.set("ratio", ratio);
        r.set("accuracy", acc.back());
        r.set("fp_accuracy", fp);
        out.report.add(std::move(r));
    }
    out.area = curve_area(ratios, acc, 0.8, 1.2);
    out.report.set_meta("area_0.8_1.2", format_number(out.area));
    return out;
}

// ---------------------------------------------------------------------------
// Single-level probe

double LevelProbe::drop_at(std::int64_t level) const {
    for (std::size_t i = 0; i < levels.size(); ++i) {
        if (levels[i] == level) return fp_accuracy - accuracy[i];
    }
    throw std::out_of_range("level probe has no level " + std::to_string(level));
}

double LevelProbe::near_zero_drop() const { return 0.5 * (drop_at(-1) + drop_at(1)); }

double LevelProbe::outermost_drop() const {
    const auto [lo, hi] = std::minmax_element(levels.begin(), levels.end());
    return 0.5 * (drop_at(*lo) + drop_at(*hi));
}

LevelProbe probe_single_level(const Checkpoint& ckpt, const DataSplit& data, int bits) {
    const auto spec = load_model_spec(ckpt);
    const auto params = load_model_params(ckpt, spec);
    const auto eff = effective_weights(spec, params);
    const auto scheme = QuantScheme::weight(bits);
    scheme.validate();
    NetworkQuant q(eff.size());
    for (std::size_t l = 0; l < eff.size(); ++l) q[l].weight = WeightQuant{scheme, fit_params(eff[l], scheme), std::nullopt};

    LevelProbe out{Report("probe-level"), evaluate(spec, params, data.validation), {}, {}};
    for (std::int64_t level = scheme.min_level(); level <= scheme.max_level(); ++level) {
        for (auto& lq : q) lq.weight->single_level = level;
        out.levels.push_back(level);
        out.accuracy.push_back(evaluate(spec, params, data.validation, &q));
        ReportRow r;
        r.set("bits_w", bits);
        r.set_int("level", level);
        r.set("accuracy", out.accuracy.back());
        r.set("fp_accuracy", out.fp_accuracy);
        r.set("drop", out.fp_accuracy - out.accuracy.back());
        out.report.add(std::move(r));
    }
    return out;
}

// ---------------------------------------------------------------------------
// KL propagation

double histogram_kl(const Tensor& p_samples, const Tensor& q_samples, std::size_t bins, double smoothing) {
    if (p_samples.numel() == 0 || q_samples.numel() == 0) throw std::invalid_argument("histogram_kl: empty sample set");
    if (bins == 0) throw std::invalid_argument("histogram_kl: zero bins");
    const auto pd = p_samples.data();
    const auto qd = q_samples.data();
    const double lo = std::min(*std::min_element(pd.begin(), pd.end()), *std::min_element(qd.begin(), qd.end()));
    const double hi = std::max(*std::max_element(pd.begin(), pd.end()), *std::max_element(qd.begin(), qd.end()));
    if (!(hi > lo)) return 0.0;
    auto hist = [&](std::span<const double> xs) {
        std::vector<double> h(bins, 0.0);
        for (double x : xs) {
            auto b = static_cast<std::size_t>((x - lo) / (hi - lo) * static_cast<double>(bins));
            h[std::min(b, bins - 1)] += 1.0;
        }
        const double total = static_cast<double>(xs.size()) + smoothing * static_cast<double>(bins);
        for (auto& v : h) v = (v + smoothing) / total;
        return h;
    };
    const auto p = hist(pd);
    const auto q = hist(qd);
    double kl = 0.0;
    for (std::size_t i = 0; i < bins; ++i) kl += p[i] * std::log(p[i] / q[i]);
    return std::max(kl, 0.0);
}

KlResult kl_propagation(const Checkpoint& ckpt, const Dataset& probe, const std::optional<int>& bits_w, int pinned_bits) {
    if (probe.size() == 0) throw std::invalid_argument("kl_propagation: empty probe batch");
    const auto spec = load_model_spec(ckpt);
    const auto params = load_model_params(ckpt, spec);
    PtqOptions opt;
    opt.bits_w = bits_w;
    opt.pinned_bits = pinned_bits;
    const auto quant = build_ptq_quant(spec, params, probe, opt);
    const auto fp = trace_layers(spec, params, probe);
    const auto qt = trace_layers(spec, params, probe, bits_w ? &quant : nullptr);
    KlResult out{Report("kl"), {}, {}};
    const auto layers = spec.layers();
    for (std::size_t l = 0; l < layers.size(); ++l) {
        out.layers.push_back(layers[l].name);
        out.kl.push_back(histogram_kl(fp.outputs[l], qt.outputs[l]));
        ReportRow r;
        r.set("bits_w", bits_label(bits_w));
        r.set_int("depth", static_cast<std::int64_t>(l + 1));
        r.set("layer", layers[l].name);
        r.set("kl", out.kl.back());
        out.report.add(std::move(r));
    }
    return out;
}

// ---------------------------------------------------------------------------
// Error-model curves

ErrorCurves error_curves(const std::vector<double>& d_grid, const std::vector<int>& bits_list) {
    ErrorCurves out{Report("error-curves"), verify_dominance(d_grid, bits_list)};
    for (const auto& row : out.dominance.rows) {
        ReportRow r;
        r.set("d", row.d);
        r.set("bits", row.bits);
        r.set("alpha_normal", row.alpha_normal);
        r.set("total_normal", row.total_normal);
        r.set("alpha_clamped", row.alpha_clamped);
        r.set("total_clamped", row.total_clamped);
        r.set("holds", row.holds ? "true" : "false");
        out.report.add(std::move(r));
    }
    out.report.set_meta("dominance", out.dominance.ok() ? "ok" : "violated");
    for (const auto& v : out.dominance.violations) out.report.set_meta("violation" + v, "clamped > normal");
    return out;
}

// ---------------------------------------------------------------------------
// Gradient checks

namespace {

// Smooth nonlinear reduction so every output element contributes a distinct gradient.
NodeId probe_sum(Graph& g, NodeId y) {
    return g.sum(g.elementwise(
        y, [](double x) { return 0.5 * x * x + 0.3 * x; }, [](double x) { return x + 0.3; }, "probe"));
}

Tensor random_tensor(Rng& rng, Shape shape) {
    Tensor t(std::move(shape));
    for (auto& v : t.data()) v = rng.normal();
    return t;
}

struct GradCase {
    std::string op;
    std::vector<Shape> shapes;
    LossBuilder loss;
};

std::vector<GradCase> grad_cases() {
    static const std::vector<int> labels{0, 2, 1, 2};
    std::vector<GradCase> c;
    c.push_back({"matmul", {{3, 4}, {4, 2}}, [](Graph& g, std::span<const NodeId> p) { return probe_sum(g, g.matmul(p[0], p[1])); }});
    c.push_back({"transpose", {{3, 4}}, [](Graph& g, std::span<const NodeId> p) { return probe_sum(g, g.transpose(p[0])); }});
    c.push_back({"conv2d", {{2, 2, 5, 5}, {3, 2, 3, 3}},
                 [](Graph& g, std::span<const NodeId> p) { return probe_sum(g, g.conv2d(p[0], p[1], {1, 1})); }});
    c.push_back({"conv2d_stride2", {{1, 2, 6, 6}, {2, 2, 3, 3}},
                 [](Graph& g, std::span<const NodeId> p) { return probe_sum(g, g.conv2d(p[0], p[1], {2, 0})); }});
    c.push_back({"add_bias", {{3, 4}, {4}}, [](Graph& g, std::span<const NodeId> p) { return probe_sum(g, g.add_bias(p[0], p[1])); }});
    c.push_back({"add_bias_4d", {{2, 3, 2, 2}, {3}},
                 [](Graph& g, std::span<const NodeId> p) { return probe_sum(g, g.add_bias(p[0], p[1])); }});
    c.push_back({"relu", {{4, 5}}, [](Graph& g, std::span<const NodeId> p) { return probe_sum(g, g.relu(p[0])); }});
    c.push_back({"tanh", {{4, 5}}, [](Graph& g, std::span<const NodeId> p) { return probe_sum(g, g.tanh(p[0])); }});
    c.push_back({"flatten", {{2, 3, 2, 2}}, [](Graph& g, std::span<const NodeId> p) { return probe_sum(g, g.flatten(p[0])); }});
    c.push_back({"avgpool2d", {{2, 2, 4, 4}}, [](Graph& g, std::span<const NodeId> p) { return probe_sum(g, g.avgpool2d(p[0], 2)); }});
    c.push_back({"add", {{3, 3}, {3, 3}}, [](Graph& g, std::span<const NodeId> p) { return probe_sum(g, g.add(p[0], p[1])); }});
    c.push_back({"scale", {{3, 3}}, [](Graph& g, std::span<const NodeId> p) { return probe_sum(g, g.scale(p[0], -1.7)); }});
    c.push_back({"sum", {{3, 3}}, [](Graph& g, std::span<const NodeId> p) { return probe_sum(g, g.sum(p[0])); }});
    c.push_back({"abs", {{4, 5}}, [](Graph& g, std::span<const NodeId> p) { return probe_sum(g, g.abs(p[0])); }});
    c.push_back({"softmax_cross_entropy", {{4, 3}},
                 [](Graph& g, std::span<const NodeId> p) { return g.softmax_cross_entropy(p[0], labels); }});
    c.push_back({"elementwise", {{4, 5}}, [](Graph& g, std::span<const NodeId> p) {
                     return probe_sum(g, satnl_apply(g, p[0], SatNLKind::alternative_1));
                 }});
    c.push_back({"elementwise_alt2", {{4, 5}}, [](Graph& g, std::span<const NodeId> p) {
                     return probe_sum(g, satnl_apply(g, p[0], SatNLKind::alternative_2));
                 }});
    c.push_back({"custom", {{3, 4}}, [](Graph& g, std::span<const NodeId> p) {
                     Tensor v = g.value(p[0]);
                     for (auto& x : v.data()) x = x * x * x + x;
                     const NodeId y = g.custom("cube", {p[0]}, std::move(v), [](BackwardContext& ctx) {
                         Tensor gx = ctx.input(0);
                         for (std::size_t i = 0; i < gx.numel(); ++i) gx[i] = (3.0 * gx[i] * gx[i] + 1.0) * ctx.grad()[i];
                         ctx.accumulate(0, gx);
                     });
                     return probe_sum(g, y);
                 }});
    c.push_back({"sym_loss1", {{3, 8}}, [](Graph& g, std::span<const NodeId> p) { return sym_loss1(g, p[0]); }});
    c.push_back({"sym_loss2", {{3, 8}}, [](Graph& g, std::span<const NodeId> p) { return sym_loss2(g, p[0]); }});
    return c;
}

}  // namespace

std::vector<GradcheckRow> gradcheck_suite(std::uint64_t seed, int points, double epsilon) {
    std::vector<GradcheckRow> rows;
    Rng rng(seed);
    for (const auto& c : grad_cases()) {
        GradcheckRow row{c.op, 0.0};
        for (int k = 0; k < points; ++k) {
            std::vector<Tensor> params;
            for (const auto& s : c.shapes) params.push_back(random_tensor(rng, s));
            row.max_relative_error = std::max(row.max_relative_error, finite_difference_check(c.loss, params, epsilon));
        }
        rows.push_back(row);
    }
    return rows;
}

}  // namespace robustq

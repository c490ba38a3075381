// Acceptance run: one PASS/FAIL line per criterion.
//
//   robustq_acceptance [--only 1,2,...] [--expect-fail 1,3]
//
// Criteria listed in --expect-fail still print their real verdict; they only
// stop counting towards the exit code. A listed criterion that passes is an
// error too, so the list cannot go stale silently.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <functional>
#include <memory>
#include <optional>
#include <set>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include "../common/oracles.hpp"
#include "robustq/checkpoint.hpp"
#include "robustq/error_model.hpp"
#include "robustq/harness.hpp"
#include "robustq/regularizers.hpp"

namespace rq = robustq;

namespace {

struct Verdict {
    bool pass = false;
    std::string detail;
};

std::string fmt(const char* f, double a) {
    char buf[64];
    std::snprintf(buf, sizeof buf, f, a);
    return buf;
}

std::string join(const std::vector<std::string>& parts, const char* sep = ", ") {
    std::string out;
    for (std::size_t i = 0; i < parts.size(); ++i) out += (i ? sep : "") + parts[i];
    return out;
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

const std::vector<std::uint64_t> kSeeds{1, 2, 3, 4, 5};

// ---------------------------------------------------------------------------
// Shared desk-scale experiments

struct Experiment {
    rq::Config cfg;
    rq::ModelSpec spec;
    rq::DataSplit data;
    std::vector<rq::Checkpoint> models;
};

Experiment run_experiment(const std::string& text) {
    Experiment e;
    e.cfg = rq::resolve_preset(rq::Config::parse(text, "acceptance"));
    e.spec = rq::model_from_config(e.cfg);
    e.data = rq::data_from_config(e.cfg);
    e.models = rq::train_models(e.cfg, e.spec, e.data, kSeeds, 1);
    return e;
}

const char* kBlobsMlp = "model.arch = mlp\nmodel.widths = 16,64,64,4\ndata.kind = blobs\ntrain.epochs = 30\n";
const char* kPatternsMlp =
    "model.arch = mlp\nmodel.widths = 144,64,64,4\ndata.kind = patterns\ndata.noise = 0.8\ndata.samples = 4000\n"
    "train.epochs = 30\n";
const char* kPatternsCnn =
    "model.arch = smallcnn\ndata.kind = patterns\ndata.noise = 1.0\ndata.samples = 3000\ntrain.epochs = 30\n";

struct Pair {
    Experiment baseline;
    Experiment robust;
};

Pair& pair_for(const std::string& base, const std::string& preset) {
    static std::vector<std::pair<std::string, std::unique_ptr<Pair>>> cache;
    const std::string key = base + "|" + preset;
    for (auto& [k, p] : cache) {
        if (k == key) return *p;
    }
    auto p = std::make_unique<Pair>();
    p->baseline = run_experiment(base + "preset = baseline\n");
    p->robust = run_experiment(base + "preset = " + preset + "\n");
    cache.emplace_back(key, std::move(p));
    return *cache.back().second;
}

// Counts seeds where better(robust, baseline) holds. Notes read "robust vs baseline".
template <typename Metric, typename Better>
int count_seeds(const Pair& p, Metric metric, Better better, std::vector<std::string>& notes) {
    int wins = 0;
    for (std::size_t i = 0; i < kSeeds.size(); ++i) {
        const double b = metric(p.baseline, p.baseline.models[i]);
        const double r = metric(p.robust, p.robust.models[i]);
        const bool ok = better(r, b);
        wins += ok;
        notes.push_back("s" + std::to_string(kSeeds[i]) + " " + fmt("%.4g", r) + " vs " + fmt("%.4g", b) +
                        (ok ? " yes" : " no"));
    }
    return wins;
}

double drop_3bit(const Experiment& e, const rq::Checkpoint& ck) {
    rq::PtqOptions o;
    o.bits_w = 3;
    return rq::ptq_pipeline(ck, e.data, o).drop();
}

double step_area_4bit(const Experiment& e, const rq::Checkpoint& ck) {
    return rq::sweep_step_ratio(ck, e.data, 4, rq::default_step_ratios()).area;
}

// Direction-agnostic comparisons carry float noise from fp - acc, hence the tolerance.
constexpr double kTie = 1e-12;

// ---------------------------------------------------------------------------
// Criteria

Verdict error_model_oracle() {
    const auto t0 = std::chrono::steady_clock::now();
    std::vector<std::string> bad;
    double worst = 0.0;
    for (std::optional<double> d : {std::optional<double>{}, std::optional<double>{1.0}, std::optional<double>{2.0},
                                    std::optional<double>{3.0}}) {
        for (int b = 2; b <= 8; ++b) {
            const double alpha = rq::optimal_alpha(b, d ? rq::ErrorModel::clamped(*d) : rq::ErrorModel::normal());
            const double model = d ? rq::quant_error_clamped(alpha, *d, b).total : rq::quant_error_normal(alpha, b).total;
            const double mc = rq::mc_quant_error({10'000'000, alpha, b, d, 20240611});
            const double rel = std::fabs(mc - model) / model;
            worst = std::max(worst, rel);
            if (rel > (b == 2 ? 0.10 : 0.05)) bad.push_back((d ? "d=" + fmt("%g", *d) : std::string("normal")) +
                                                             " b=" + std::to_string(b) + " " + fmt("%.1f%%", 100 * rel));
        }
    }
    const double secs = seconds_since(t0);
    Verdict v{bad.empty() && secs <= 120.0, fmt("worst %.1f%%", 100 * worst) + fmt(", %.0fs", secs)};
    if (!bad.empty()) v.detail += "; outside tolerance: " + join(bad);
    return v;
}

Verdict dominance() {
    std::vector<double> grid;
    for (int i = 0; i <= 35; ++i) grid.push_back(0.5 + 0.1 * i);
    std::vector<int> bits{2, 3, 4, 5, 6, 7, 8};
    const auto rep = rq::verify_dominance(grid, bits);
    double d4 = 0.0;
    for (const auto& r : rep.rows) {
        if (std::fabs(r.d - 4.0) < 1e-9) d4 = std::max(d4, std::fabs(r.total_clamped - r.total_normal));
    }
    Verdict v{rep.ok() && rep.rows.size() == grid.size() * bits.size() && d4 <= 1e-4,
              std::to_string(rep.rows.size()) + " points, " + std::to_string(rep.violations.size()) +
                  " violations, d=4 max gap " + fmt("%.2e", d4)};
    if (!rep.ok()) v.detail += "; " + join(rep.violations);
    return v;
}

double sym_value(const rq::Tensor& w, bool relaxed) {
    rq::Graph g;
    const auto id = g.constant(w);
    return g.value(relaxed ? rq::sym_loss2(g, id) : rq::sym_loss1(g, id)).item();
}

Verdict symreg_correctness() {
    rq::Rng rng(31);
    bool mirror_zero = true;
    for (int i = 0; i < 100; ++i) mirror_zero &= sym_value(rq::oracle::mirror_tensor(4, 8, rng), false) == 0.0;
    const double five = sym_value(rq::Tensor::matrix({{1, 2, 3, 4}}), false);

    int violations = 0;
    double worst_ratio = 0.0;
    for (int i = 0; i < 1000; ++i) {
        const std::size_t c = 1 + rng.below(4), n = 4 * (1 + rng.below(6));
        const auto w = rq::oracle::normal_tensor({c, n}, rng);
        const double s1 = sym_value(w, false), s2 = sym_value(w, true);
        if (s2 > s1 + 1e-12) ++violations;
        if (s1 > 0) worst_ratio = std::max(worst_ratio, s2 / s1);
    }

    double fd = 0.0;
    for (int i = 0; i < 20; ++i) {
        // distinct, well-separated values keep the probe away from sort ties and kinks
        rq::Tensor w({2, 8});
        for (std::size_t k = 0; k < 2; ++k) {
            auto perm = rng.permutation(8);
            for (std::size_t j = 0; j < 8; ++j) w[k * 8 + j] = 0.37 * perm[j] - 0.5 + 0.05 * rng.uniform() + 0.013 * j;
        }
        for (bool relaxed : {false, true}) {
            auto f = [relaxed](rq::Graph& g, std::span<const rq::NodeId> p) {
                return relaxed ? rq::sym_loss2(g, p[0]) : rq::sym_loss1(g, p[0]);
            };
            fd = std::max(fd, rq::finite_difference_check(f, {w}, 1e-6));
        }
    }
    return {mirror_zero && five == 5.0 && violations == 0 && fd <= 1e-4,
            std::string("mirror ") + (mirror_zero ? "0" : "nonzero") + ", [1,2,3,4] -> " + fmt("%g", five) +
                ", sym2 > sym1 on " + std::to_string(violations) + "/1000 (max sym2/sym1 " + fmt("%.3f", worst_ratio) +
                "), gradcheck " + fmt("%.1e", fd)};
}

Verdict autodiff() {
    const auto rows = rq::gradcheck_suite(7, 10, 1e-5);
    double worst = 0.0;
    std::string worst_op;
    for (const auto& r : rows) {
        if (r.max_relative_error >= worst) {
            worst = r.max_relative_error;
            worst_op = r.op;
        }
    }
    // 100 optimizer steps on the reference MLP with SAM at rho = 0 against plain SGD
    auto cfg = rq::resolve_preset(rq::Config::parse(std::string(kBlobsMlp) + "data.samples = 800\n"));
    const auto spec = rq::model_from_config(cfg);
    const auto data = rq::data_from_config(cfg);
    auto plain = rq::train_from_config(cfg, spec, 3);
    plain.epochs = 11;  // 600 samples / 64 per batch = 10 steps per epoch
    auto sam = plain;
    sam.sam = {true, false, 0.0};
    const auto a = rq::train(spec, data, plain), b = rq::train(spec, data, sam);
    // metadata records the SAM settings, so only tensors and losses are compared
    bool same = a.checkpoint.tensors == b.checkpoint.tensors && a.history.size() == b.history.size();
    for (std::size_t i = 0; i < a.history.size(); ++i) same &= a.history[i].train_loss == b.history[i].train_loss;
    return {worst <= 1e-4 && same, std::to_string(rows.size()) + " ops, worst " + worst_op + " " + fmt("%.1e", worst) +
                                        ", SAM rho=0 " + (same ? "bit-identical" : "DIFFERS") + " over 110 steps"};
}

Verdict bias_drift_mechanism() {
    const auto t0 = std::chrono::steady_clock::now();
    auto& p = pair_for(kBlobsMlp, "symreg");
    int both = 0;
    std::vector<std::string> notes;
    for (std::size_t i = 0; i < kSeeds.size(); ++i) {
        rq::PtqOptions o;
        o.bits_w = 4;
        const auto b = rq::ptq_pipeline(p.baseline.models[i], p.baseline.data, o);
        const auto r = rq::ptq_pipeline(p.robust.models[i], p.robust.data, o);
        const bool ok = r.weight_mean_abs_regularized < b.weight_mean_abs_regularized && r.drift_max_all < b.drift_max_all;
        both += ok;
        notes.push_back("s" + std::to_string(kSeeds[i]) + (ok ? " yes" : " no") + " (mean " +
                        fmt("%.3g", r.weight_mean_abs_regularized) + "/" + fmt("%.3g", b.weight_mean_abs_regularized) +
                        ", drift " + fmt("%.3g", r.drift_max_all) + "/" + fmt("%.3g", b.drift_max_all) + ")");
    }
    const double secs = seconds_since(t0);
    return {both >= 4 && secs <= 600.0,
            std::to_string(both) + "/5 seeds; " + join(notes, "; ") + fmt("; %.0fs", secs)};
}

Verdict ptq_direction() {
    std::vector<std::string> mlp_notes, cnn_notes;
    const int mlp = count_seeds(pair_for(kPatternsMlp, "robust"), drop_3bit,
                                [](double r, double b) { return r <= b + kTie; }, mlp_notes);
    const int cnn = count_seeds(pair_for(kPatternsCnn, "robust"), drop_3bit,
                                [](double r, double b) { return r <= b + kTie; }, cnn_notes);
    return {mlp >= 4 && cnn >= 4, "3-bit drop robust<=baseline: MLP " + std::to_string(mlp) + "/5 [" +
                                      join(mlp_notes) + "], CNN " + std::to_string(cnn) + "/5 [" + join(cnn_notes) + "]"};
}

Verdict step_robustness() {
    std::vector<std::string> notes, cnn_notes;
    auto ge = [](double r, double b) { return r >= b - kTie; };
    const int wins = count_seeds(pair_for(kPatternsMlp, "robust"), step_area_4bit, ge, notes);
    const int cnn = count_seeds(pair_for(kPatternsCnn, "robust"), step_area_4bit, ge, cnn_notes);
    return {wins >= 4, "4-bit area robust>=baseline: MLP " + std::to_string(wins) + "/5 [" + join(notes) +
                           "] (CNN, informational: " + std::to_string(cnn) + "/5)"};
}

Verdict single_level() {
    auto count = [](const Experiment& e, std::vector<std::string>& notes) {
        int wins = 0;
        for (std::size_t i = 0; i < kSeeds.size(); ++i) {
            const auto probe = rq::probe_single_level(e.models[i], e.data, 4);
            const bool ok = probe.near_zero_drop() >= probe.outermost_drop() - kTie;
            wins += ok;
            notes.push_back("s" + std::to_string(kSeeds[i]) + " " + fmt("%.4g", probe.near_zero_drop()) +
                            (ok ? ">=" : "<") + fmt("%.4g", probe.outermost_drop()));
        }
        return wins;
    };
    std::vector<std::string> notes, cnn_notes;
    const int wins = count(pair_for(kPatternsMlp, "robust").baseline, notes);
    const int cnn = count(pair_for(kPatternsCnn, "robust").baseline, cnn_notes);
    return {wins >= 4, "baseline near-zero drop >= outermost: MLP " + std::to_string(wins) + "/5 [" + join(notes) +
                           "] (CNN, informational: " + std::to_string(cnn) + "/5)"};
}

Verdict kl_propagation() {
    bool nonneg = true;
    double fp_max = 0.0;
    auto final_kl = [&](const Experiment& e, const rq::Checkpoint& ck) {
        const auto q = rq::kl_propagation(ck, e.data.validation, 4);
        for (double k : q.kl) nonneg &= k >= 0.0;
        for (double k : rq::kl_propagation(ck, e.data.validation, std::nullopt).kl) fp_max = std::max(fp_max, k);
        return q.final_layer();
    };
    std::vector<std::string> notes, cnn_notes;
    auto le = [](double r, double b) { return r <= b; };
    const int wins = count_seeds(pair_for(kPatternsMlp, "robust"), final_kl, le, notes);
    const int cnn = count_seeds(pair_for(kPatternsCnn, "robust"), final_kl, le, cnn_notes);
    return {wins >= 4 && nonneg && fp_max <= 1e-9,
            "final-layer KL robust<=baseline: MLP " + std::to_string(wins) + "/5 [" + join(notes) + "]; all KL >= 0: " +
                (nonneg ? "yes" : "no") + "; FP/FP max " + fmt("%.1e", fp_max) + " (CNN, informational: " +
                std::to_string(cnn) + "/5)"};
}

Verdict quantizer_algebra() {
    rq::Rng rng(101);
    int odd = 0, mono = 0, idem = 0, half = 0, uni = 0;
    for (int trial = 0; trial < 1000; ++trial) {
        const int bits = 2 + static_cast<int>(rng.below(7));
        const std::size_t c = 1 + rng.below(6), n = 2 + rng.below(40);
        const auto scheme = rq::QuantScheme::weight(bits);
        const auto t = rq::oracle::normal_tensor({c, n}, rng, std::exp(rng.uniform(-3, 3)));
        const auto p = rq::fit_params(t, scheme);
        const auto q = rq::quantize(t, p, scheme);

        rq::Tensor neg = t;
        for (auto& v : neg.data()) v = -v;
        const auto qn = rq::quantize(neg, p, scheme);
        bool ok_odd = true, ok_mono = true, ok_half = true;
        for (std::size_t k = 0; k < c; ++k) {
            std::vector<std::size_t> idx(n);
            for (std::size_t i = 0; i < n; ++i) idx[i] = k * n + i;
            std::sort(idx.begin(), idx.end(), [&](auto a, auto b) { return t[a] < t[b]; });
            for (std::size_t i = 1; i < n; ++i) ok_mono &= q[idx[i - 1]] <= q[idx[i]];
            for (auto i : idx) {
                ok_odd &= qn[i] == -q[i];
                // minmax fit: every element is in range
                ok_half &= std::fabs(q[i] - t[i]) <= 0.5 * p.step[k] * (1 + 1e-12);
            }
        }
        odd += ok_odd;
        mono += ok_mono;
        half += ok_half;
        idem += rq::quantize(q, p, scheme) == q;

        rq::Tensor merged = t;
        for (auto l = scheme.min_level(); l <= scheme.max_level(); ++l) {
            const auto part = rq::quantize_single_level(t, p, scheme, l);
            for (std::size_t i = 0; i < t.numel(); ++i) {
                if (part[i] != t[i]) merged[i] = part[i];
            }
        }
        uni += merged == q;
    }

    // byte-exact checkpoint round trip through a file
    auto& models = pair_for(kPatternsCnn, "robust").robust.models;
    bool bytes_ok = true;
    const auto path = std::filesystem::temp_directory_path() / "robustq_acceptance.rqck";
    for (const auto& ck : models) {
        rq::save_checkpoint(ck, path);
        std::ifstream in(path, std::ios::binary);
        std::stringstream ss;
        ss << in.rdbuf();
        const auto back = rq::load_checkpoint(path);
        bytes_ok &= ss.str() == rq::encode_checkpoint(ck) && rq::encode_checkpoint(back) == ss.str() && back == ck;
    }
    std::filesystem::remove(path);

    const bool all = odd == 1000 && mono == 1000 && idem == 1000 && half == 1000 && uni == 1000 && bytes_ok;
    return {all, "odd " + std::to_string(odd) + ", monotone " + std::to_string(mono) + ", idempotent " +
                     std::to_string(idem) + ", half-step " + std::to_string(half) + ", union " + std::to_string(uni) +
                     " of 1000; checkpoint round trip " + (bytes_ok ? "byte-exact" : "MISMATCH")};
}

Verdict satnl_validity() {
    const auto grid = rq::satnl_probe_grid();
    bool kinds = true;
    for (auto k : {rq::SatNLKind::tanh, rq::SatNLKind::alternative_1, rq::SatNLKind::alternative_2}) {
        kinds &= rq::is_valid_satnl([k](double x) { return rq::satnl_value(k, x); }, grid).valid;
    }
    const bool identity = rq::is_valid_satnl([](double x) { return x; }, grid).valid;
    const bool relu = rq::is_valid_satnl([](double x) { return std::max(0.0, x); }, grid).valid;

    // every SatNL layer of the robust models, plus a model with SatNL everywhere
    std::size_t checked = 0;
    double max_abs = 0.0;
    auto inspect = [&](const rq::Checkpoint& ck) {
        const auto spec = rq::load_model_spec(ck);
        const auto eff = rq::effective_weights(spec, rq::load_model_params(ck, spec));
        const auto layers = spec.layers();
        for (std::size_t l = 0; l < layers.size(); ++l) {
            if (!spec.satnl.enabled_for(layers[l].name)) continue;
            for (double v : eff[l].data()) max_abs = std::max(max_abs, std::fabs(v));
            checked += eff[l].numel();
        }
    };
    for (const auto& ck : pair_for(kPatternsMlp, "robust").robust.models) inspect(ck);
    for (const auto& ck : pair_for(kPatternsCnn, "robust").robust.models) inspect(ck);
    const auto all = run_experiment(std::string(kBlobsMlp) + "satnl.layers = all\ntrain.epochs = 10\n");
    inspect(all.models.front());

    return {kinds && !identity && !relu && checked > 0 && max_abs < 1.0,
            std::string("tanh/alt1/alt2 ") + (kinds ? "valid" : "INVALID") + ", identity " +
                (identity ? "valid" : "invalid") + ", relu " + (relu ? "valid" : "invalid") + "; " +
                std::to_string(checked) + " effective weights, max |w| " + fmt("%.6f", max_abs)};
}

struct Criterion {
    int id;
    const char* name;
    std::function<Verdict()> run;
};

std::set<int> parse_ids(const char* s) {
    std::set<int> out;
    std::stringstream ss(s);
    std::string item;
    while (std::getline(ss, item, ',')) {
        if (!item.empty()) out.insert(std::stoi(item));
    }
    return out;
}

}  // namespace

int main(int argc, char** argv) {
    std::set<int> only, expect_fail;
    for (int i = 1; i < argc; ++i) {
        if (!std::strcmp(argv[i], "--only") && i + 1 < argc) {
            only = parse_ids(argv[++i]);
        } else if (!std::strcmp(argv[i], "--expect-fail") && i + 1 < argc) {
            expect_fail = parse_ids(argv[++i]);
        } else {
            std::fprintf(stderr, "usage: %s [--only 1,2,...] [--expect-fail 1,3]\n", argv[0]);
            return 2;
        }
    }

    const std::vector<Criterion> criteria{
        {1, "error-model oracle equivalence", error_model_oracle},
        {2, "dominance of the clamped error", dominance},
        {3, "SymReg correctness", symreg_correctness},
        {4, "autodiff gradients and SAM rho=0", autodiff},
        {5, "bias-drift mechanism", bias_drift_mechanism},
        {6, "PTQ robustness direction", ptq_direction},
        {7, "step-size robustness", step_robustness},
        {8, "single-level sensitivity", single_level},
        {9, "KL propagation", kl_propagation},
        {10, "quantizer algebra and checkpoint round trip", quantizer_algebra},
        {11, "SatNL validity", satnl_validity},
    };

    int unexpected = 0, passed = 0, ran = 0;
    for (const auto& c : criteria) {
        if (!only.empty() && !only.count(c.id)) continue;
        ++ran;
        Verdict v;
        try {
            v = c.run();
        } catch (const std::exception& e) {
            v = {false, std::string("error: ") + e.what()};
        }
        passed += v.pass;
        const bool expected = expect_fail.count(c.id) > 0;
        const char* tag = v.pass ? (expected ? "PASS (listed as expected failure)" : "PASS")
                                 : (expected ? "FAIL (expected)" : "FAIL");
        unexpected += v.pass == expected;
        std::printf("criterion %2d %s: %s -- %s\n", c.id, tag, c.name, v.detail.c_str());
        std::fflush(stdout);
    }
    std::printf("%d/%d criteria passed\n", passed, ran);
    return unexpected == 0 ? 0 : 1;
}

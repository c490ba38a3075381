// rqlab: experiment driver. Every subcommand reads a flat key=value config,
// applies `--key value` overrides and writes a CSV report.
//
// exit codes: 0 success, 1 check/dominance failure or runtime error, 2 usage error

#include <CLI11.hpp>

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include "robustq/harness.hpp"
#include "robustq/parallel.hpp"

namespace rq = robustq;

namespace {

struct UsageError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct CommonArgs {
    std::string config_path;
    std::vector<std::uint64_t> seeds;
    std::string out;
    std::size_t jobs = 1;
    std::vector<std::string> extras;
};

void add_common(CLI::App* sub, CommonArgs& args) {
    sub->add_option("--config", args.config_path, "key=value config file")->check(CLI::ExistingFile);
    sub->add_option("--seed", args.seeds, "seed (repeatable; overrides `seeds`)");
    sub->add_option("--out", args.out, "output path (CSV report; checkpoint for train)");
    sub->add_option("--jobs", args.jobs, "worker threads")->check(CLI::PositiveNumber);
    sub->allow_extras();
}

rq::Config build_config(const CommonArgs& args) {
    rq::Config cfg = args.config_path.empty() ? rq::Config{} : rq::Config::load(args.config_path);
    for (std::size_t i = 0; i < args.extras.size(); ++i) {
        std::string key = args.extras[i];
        if (key.rfind("--", 0) != 0) throw UsageError("unexpected argument '" + key + "'");
        key.erase(0, 2);
        std::string value;
        if (const auto eq = key.find('='); eq != std::string::npos) {
            value = key.substr(eq + 1);
            key.erase(eq);
        } else {
            if (i + 1 >= args.extras.size()) throw UsageError("override --" + key + " needs a value");
            value = args.extras[++i];
        }
        cfg.set(key, value);
    }
    if (!args.seeds.empty()) {
        std::string joined;
        for (auto s : args.seeds) joined += (joined.empty() ? "" : ",") + std::to_string(s);
        cfg.set("seeds", joined);
    }
    return rq::resolve_preset(cfg);
}

std::vector<std::uint64_t> seeds_of(const rq::Config& cfg) {
    std::vector<std::uint64_t> out;
    for (auto s : cfg.get_ints("seeds", {0})) {
        if (s < 0) throw std::invalid_argument("config: seeds must be non-negative");
        out.push_back(static_cast<std::uint64_t>(s));
    }
    return out;
}

std::vector<std::optional<int>> bits_list(const rq::Config& cfg, const std::string& key, const std::string& fallback) {
    std::vector<std::optional<int>> out;
    for (const auto& s : cfg.get_strings(key, rq::split_list(fallback))) out.push_back(rq::parse_bits(s));
    return out;
}

struct Model {
    std::uint64_t seed;
    rq::Checkpoint ckpt;
};

// Checkpoints listed under `ckpt`, or freshly trained ones for every seed.
std::vector<Model> acquire_models(const rq::Config& cfg, const rq::DataSplit& data, std::size_t jobs) {
    std::vector<Model> out;
    const auto paths = cfg.get_strings("ckpt", {});
    if (!paths.empty()) {
        for (const auto& p : paths) {
            auto ck = rq::load_checkpoint(p);
            out.push_back({std::stoull(ck.meta("seed", "0")), std::move(ck)});
        }
        return out;
    }
    const auto spec = rq::model_from_config(cfg);
    const auto seeds = seeds_of(cfg);
    auto ckpts = rq::train_models(cfg, spec, data, seeds, jobs);
    for (std::size_t i = 0; i < seeds.size(); ++i) out.push_back({seeds[i], std::move(ckpts[i])});
    return out;
}

void emit(rq::Report& rep, const rq::Config& cfg, const std::string& out) {
    rep.echo_config(cfg.resolved());
    rep.set_meta("config_hash", std::to_string(cfg.hash()));
    if (out.empty() || out == "-") {
        std::cout << rep.to_csv(rq::utc_timestamp());
    } else {
        rep.write(out);
        std::cerr << "wrote " << rep.size() << " rows to " << out << "\n";
    }
}

rq::ReportRow with_seed(std::uint64_t seed, const rq::ReportRow& row) {
    rq::ReportRow r;
    r.set_int("seed", static_cast<std::int64_t>(seed));
    for (const auto& [k, v] : row.cells()) r.set(k, v);
    return r;
}

int cmd_train(const CommonArgs& args) {
    const auto cfg = build_config(args);
    const auto spec = rq::model_from_config(cfg);
    const auto data = rq::data_from_config(cfg);
    const auto seeds = seeds_of(cfg);
    std::vector<rq::TrainConfig> tcs;
    for (auto s : seeds) tcs.push_back(rq::train_from_config(cfg, spec, s));
    std::map<std::string, std::string> meta;
    for (const auto& [k, v] : cfg.resolved()) meta["config." + k] = v;
    auto results = rq::parallel_map(args.jobs, seeds.size(), [&](std::size_t i) { return rq::train(spec, data, tcs[i], meta); });

    const bool qat = cfg.get_bool("qat.enabled", false);
    if (qat) {
        rq::QatConfig qc;
        qc.bits_w = *rq::parse_bits(cfg.get_string("qat.bits_w", "4"));
        qc.bits_a = rq::parse_bits(cfg.get_string("qat.bits_a", "4"));
        qc.epochs = static_cast<int>(cfg.get_int("qat.epochs", qc.epochs));
        qc.lr_scale = cfg.get_double("qat.lr_scale", qc.lr_scale);
        results = rq::parallel_map(args.jobs, seeds.size(), [&](std::size_t i) {
            rq::QatConfig c = qc;
            c.base = tcs[i];
            return rq::qat_finetune(results[i].checkpoint, data, c);
        });
    }

    const std::string base = args.out.empty() ? "model.rqck" : args.out;
    rq::Report rep("train");
    for (std::size_t i = 0; i < seeds.size(); ++i) {
        std::filesystem::path path = base;
        if (seeds.size() > 1) {
            path = std::filesystem::path(base).replace_extension("");
            path += "_seed" + std::to_string(seeds[i]) + std::filesystem::path(base).extension().string();
        }
        rq::save_checkpoint(results[i].checkpoint, path);
        std::cerr << "seed " << seeds[i] << ": best validation accuracy " << results[i].best_val_accuracy << " at epoch "
                  << results[i].best_epoch << " -> " << path.string() << "\n";
        for (const auto& h : results[i].history) {
            rq::ReportRow r;
            r.set_int("seed", static_cast<std::int64_t>(seeds[i]));
            r.set("phase", qat ? "qat" : "train");
            r.set("epoch", h.epoch);
            r.set("train_loss", h.train_loss);
            r.set("val_accuracy", h.val_accuracy);
            rep.add(std::move(r));
        }
    }
    emit(rep, cfg, base + ".csv");
    return 0;
}

int cmd_ptq(const CommonArgs& args) {
    const auto cfg = build_config(args);
    const auto data = rq::data_from_config(cfg);
    const auto bw = bits_list(cfg, "bits_w", "4");
    const auto ba = bits_list(cfg, "bits_a", "FP");
    const auto fit = rq::parse_fit_method(cfg.get_string("fit", "minmax"));
    const int pinned = static_cast<int>(cfg.get_int("pinned_bits", 8));
    const auto models = acquire_models(cfg, data, args.jobs);
    rq::Report rep("ptq");
    for (const auto& m : models) {
        for (const auto& w : bw) {
            for (const auto& a : ba) {
                const auto res = rq::ptq_pipeline(m.ckpt, data, {w, a, fit, pinned, 1.0});
                rq::ReportRow r;
                r.set_int("seed", static_cast<std::int64_t>(m.seed));
                r.set("bits_w", rq::bits_label(w));
                r.set("bits_a", rq::bits_label(a));
                r.set("fit", rq::to_string(fit));
                const auto cells = res.row();
                for (const auto& [k, v] : cells.cells()) r.set(k, v);
                rep.add(std::move(r));
            }
        }
    }
    emit(rep, cfg, args.out);
    return 0;
}

int cmd_sweep_bits(const CommonArgs& args) {
    const auto cfg = build_config(args);
    const auto data = rq::data_from_config(cfg);
    const auto bits = bits_list(cfg, "bits", "2,3,4,5,6,7,8,16,FP");
    const std::string mode = cfg.get_string("mode", "ptq");
    if (mode != "ptq" && mode != "qat") throw UsageError("mode must be ptq or qat");
    const int pinned = static_cast<int>(cfg.get_int("pinned_bits", 8));
    const auto models = acquire_models(cfg, data, args.jobs);
    auto reports = rq::parallel_map(args.jobs, models.size(), [&](std::size_t i) {
        return rq::sweep_bits(models[i].ckpt, data, bits, mode == "qat" ? rq::SweepMode::qat : rq::SweepMode::ptq, pinned);
    });
    rq::Report rep("sweep-bits");
    rep.set_meta("mode", mode);
    for (std::size_t i = 0; i < models.size(); ++i) {
        for (const auto& row : reports[i].rows()) rep.add(with_seed(models[i].seed, row));
    }
    emit(rep, cfg, args.out);
    return 0;
}

int cmd_sweep_step(const CommonArgs& args) {
    const auto cfg = build_config(args);
    const auto data = rq::data_from_config(cfg);
    const int bits = static_cast<int>(cfg.get_int("bits_w", 4));
    const auto ratios = cfg.get_doubles("ratios", rq::default_step_ratios());
    for (double r : ratios) {
        if (r < 0.5 || r > 2.0) throw UsageError("ratios must lie in [0.5, 2.0]");
    }
    const int pinned = static_cast<int>(cfg.get_int("pinned_bits", 8));
    const auto models = acquire_models(cfg, data, args.jobs);
    auto sweeps = rq::parallel_map(args.jobs, models.size(),
                                   [&](std::size_t i) { return rq::sweep_step_ratio(models[i].ckpt, data, bits, ratios, pinned); });
    rq::Report rep("sweep-step");
    for (std::size_t i = 0; i < models.size(); ++i) {
        rep.set_meta("area_0.8_1.2.seed" + std::to_string(models[i].seed), rq::format_number(sweeps[i].area));
        for (const auto& row : sweeps[i].report.rows()) rep.add(with_seed(models[i].seed, row));
    }
    emit(rep, cfg, args.out);
    return 0;
}

int cmd_probe_level(const CommonArgs& args) {
    const auto cfg = build_config(args);
    const auto data = rq::data_from_config(cfg);
    const int bits = static_cast<int>(cfg.get_int("bits_w", 4));
    const auto models = acquire_models(cfg, data, args.jobs);
    auto probes = rq::parallel_map(args.jobs, models.size(),
                                   [&](std::size_t i) { return rq::probe_single_level(models[i].ckpt, data, bits); });
    rq::Report rep("probe-level");
    for (std::size_t i = 0; i < models.size(); ++i) {
        const auto s = std::to_string(models[i].seed);
        rep.set_meta("near_zero_drop.seed" + s, rq::format_number(probes[i].near_zero_drop()));
        rep.set_meta("outermost_drop.seed" + s, rq::format_number(probes[i].outermost_drop()));
        for (const auto& row : probes[i].report.rows()) rep.add(with_seed(models[i].seed, row));
    }
    emit(rep, cfg, args.out);
    return 0;
}

int cmd_kl(const CommonArgs& args) {
    const auto cfg = build_config(args);
    const auto data = rq::data_from_config(cfg);
    const auto bits = rq::parse_bits(cfg.get_string("bits_w", "4"));
    const int pinned = static_cast<int>(cfg.get_int("pinned_bits", 8));
    const auto n_probe = static_cast<std::size_t>(cfg.get_uint("probe.samples", 256));
    std::vector<std::size_t> idx;
    for (std::size_t i = 0; i < std::min(n_probe, data.validation.size()); ++i) idx.push_back(i);
    const auto probe = data.validation.subset(idx);
    const auto models = acquire_models(cfg, data, args.jobs);
    rq::Report rep("kl");
    for (const auto& m : models) {
        const auto res = rq::kl_propagation(m.ckpt, probe, bits, pinned);
        for (const auto& row : res.report.rows()) rep.add(with_seed(m.seed, row));
    }
    emit(rep, cfg, args.out);
    return 0;
}

int cmd_error_curves(const CommonArgs& args) {
    const auto cfg = build_config(args);
    std::vector<double> grid;
    for (int i = 0; i <= 35; ++i) grid.push_back(0.5 + 0.1 * i);
    grid = cfg.get_doubles("d_grid", grid);
    std::vector<int> bits;
    for (auto b : cfg.get_ints("bits", {2, 3, 4, 5, 6, 7, 8})) bits.push_back(static_cast<int>(b));
    auto curves = rq::error_curves(grid, bits);
    emit(curves.report, cfg, args.out);
    if (!curves.dominance.ok()) {
        for (const auto& v : curves.dominance.violations) std::cerr << "dominance violated at " << v << "\n";
        return 1;
    }
    return 0;
}

int cmd_gradcheck(const CommonArgs& args) {
    const auto cfg = build_config(args);
    const auto seeds = seeds_of(cfg);
    const int points = static_cast<int>(cfg.get_int("points", 10));
    const double eps = cfg.get_double("epsilon", 1e-6);
    const double tol = cfg.get_double("tolerance", 1e-4);
    rq::Report rep("gradcheck");
    bool ok = true;
    for (const auto& row : rq::gradcheck_suite(seeds.front(), points, eps)) {
        const bool pass = row.max_relative_error <= tol;
        ok = ok && pass;
        rq::ReportRow r;
        r.set("op", row.op);
        r.set("max_relative_error", row.max_relative_error);
        r.set("pass", pass ? "true" : "false");
        rep.add(std::move(r));
    }
    emit(rep, cfg, args.out);
    return ok ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"rqlab: quantization-robustness experiments"};
    app.require_subcommand(1);
    CommonArgs args;

    struct Entry {
        const char* name;
        const char* help;
        int (*run)(const CommonArgs&);
    };
    const Entry entries[] = {
        {"train", "train models (one per seed) and save checkpoints", cmd_train},
        {"ptq", "post-training quantization accuracy and bias drift", cmd_ptq},
        {"sweep-bits", "one checkpoint evaluated across bit-widths", cmd_sweep_bits},
        {"sweep-step", "accuracy vs. weight step-size ratio", cmd_sweep_step},
        {"probe-level", "single-level quantization sensitivity", cmd_probe_level},
        {"kl", "layer-wise KL divergence, FP vs. weight-quantized", cmd_kl},
        {"error-curves", "analytic quantization error, normal vs. clamped", cmd_error_curves},
        {"gradcheck", "finite-difference check of every autodiff op", cmd_gradcheck},
    };
    std::vector<std::pair<CLI::App*, const Entry*>> subs;
    for (const auto& e : entries) {
        auto* sub = app.add_subcommand(e.name, e.help);
        add_common(sub, args);
        subs.emplace_back(sub, &e);
    }

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 2;
    }

    try {
        for (auto& [sub, entry] : subs) {
            if (!sub->parsed()) continue;
            args.extras = sub->remaining();
            return entry->run(args);
        }
    } catch (const UsageError& e) {
        std::cerr << "usage error: " << e.what() << "\n";
        return 2;
    } catch (const std::invalid_argument& e) {
        std::cerr << "usage error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 2;
}

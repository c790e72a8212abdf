#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>
#include <fmt/format.h>
#include <fmt/ostream.h>

#include "qhd/experiments.hpp"
#include "qhd/homodyne.hpp"
#include "qhd/limits.hpp"
#include "qhd/nn/model_io.hpp"
#include "qhd/receiver.hpp"
#include "qhd/sweep_config.hpp"

using namespace qhd;
namespace fs = std::filesystem;

namespace {

// Writes to `path`, or stdout when it is empty or "-".
template <class Fn>
void write_output(const std::string& path, Fn&& body) {
    if (path.empty() || path == "-") {
        body(std::cout);
        return;
    }
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write " + path);
    body(out);
    if (!out) throw std::runtime_error("write failed: " + path);
}

EpochCallback progress(bool quiet) {
    if (quiet) return nullptr;
    return [](std::size_t epoch, double loss) { fmt::print(stderr, "epoch {:4d}  loss {:.6g}\n", epoch + 1, loss); };
}

struct LimitsArgs {
    double min_db = -15.0, max_db = 9.0, step_db = 0.25;
    std::string out;
};

struct GenArgs {
    double alpha_db = 0.0;
    std::size_t per_key = 200;
    std::size_t width = 30;
    std::uint64_t seed = 1;
    std::string role = "test";
    std::string out;
};

struct TrainArgs {
    std::string train, target, model_out;
    std::optional<std::size_t> epochs;
    std::uint64_t seed = 1;
    std::optional<double> learning_rate;
    std::optional<std::size_t> batch_size;
    std::optional<std::size_t> held_out;
    std::string init;
    bool keep_reading = false;
    bool quiet = false;
};

struct EvalArgs {
    std::string test, model_in, gnn_in, report;
    bool no_gnn = false;
};

struct SweepArgs {
    std::string config, kind, out;
    std::optional<std::uint64_t> seed;
    std::optional<std::size_t> replicates, gnn_epochs, cnn_epochs, per_key, test_per_key, workers;
    std::vector<double> message_db, target_db;
    std::vector<std::size_t> widths;
    bool plot = false, quiet = false;
};

nn::InitScheme parse_init(const std::string& s) {
    if (s == "he-normal") return nn::InitScheme::he_normal;
    if (s == "glorot-uniform") return nn::InitScheme::glorot_uniform;
    throw CLI::ValidationError("--init", "expected he-normal or glorot-uniform");
}

int run_limits(const LimitsArgs& a) {
    const auto rows = limits_table(a.min_db, a.max_db, a.step_db);
    write_output(a.out, [&](std::ostream& os) { write_limits_csv(os, rows); });
    return 0;
}

int run_gen(const GenArgs& a) {
    const auto ds = generate_dataset(a.alpha_db, a.per_key, LoScan::from_width(a.width), a.seed, parse_role(a.role));
    save_dataset(ds, a.out);
    fmt::print(stderr, "wrote {} images ({}x{}) to {}\n", ds.entries.size(), a.width, a.width, a.out);
    return 0;
}

int run_train_gnn(const TrainArgs& a) {
    const auto noisy = load_dataset(a.train);
    const auto target = load_dataset(a.target);
    GnnConfig cfg;
    cfg.input_width = noisy.width();
    cfg.seed = a.seed;
    if (a.epochs) cfg.epochs = *a.epochs;
    if (a.learning_rate) cfg.learning_rate = *a.learning_rate;
    if (a.batch_size) cfg.batch_size = *a.batch_size;
    if (!a.init.empty()) cfg.init = parse_init(a.init);
    if (a.keep_reading) cfg.dropout_reading = DropoutReading::keep_probability;
    cfg.on_epoch = progress(a.quiet);
    const auto trained = train_gnn(noisy, target, cfg);
    nn::save_model(trained.net, a.model_out);
    return 0;
}

int run_train_cnn(const TrainArgs& a) {
    const auto labeled = load_dataset(a.train);
    CnnConfig cfg;
    cfg.input_width = labeled.width();
    cfg.per_key = labeled.per_key();
    if (a.held_out) cfg.held_out_per_key = *a.held_out;
    cfg.seed = a.seed;
    if (a.epochs) cfg.epochs = *a.epochs;
    if (a.learning_rate) cfg.learning_rate = *a.learning_rate;
    if (a.batch_size) cfg.batch_size = *a.batch_size;
    if (!a.init.empty()) cfg.init = parse_init(a.init);
    if (a.keep_reading) cfg.dropout_reading = DropoutReading::keep_probability;
    cfg.on_epoch = progress(a.quiet);
    const auto trained = train_cnn(labeled, cfg);
    nn::save_model(trained.net, a.model_out);
    fmt::print(stderr, "held-out accuracy {:.4f} ({}/{})\n", trained.held_out_accuracy(), trained.held_out_correct,
               trained.held_out_total);
    return 0;
}

int run_eval(const EvalArgs& a) {
    const auto test = load_dataset(a.test);
    const nn::Shape3 shape{1, test.width(), test.width()};
    const auto cnn = nn::load_model(a.model_in, shape);
    std::optional<nn::Network> gnn;
    if (!a.no_gnn) {
        if (a.gnn_in.empty()) throw CLI::RequiredError("--gnn-in (or pass --no-gnn)");
        gnn = nn::load_model(a.gnn_in, shape);
    }
    const auto report = evaluate(test, cnn, gnn ? &*gnn : nullptr);
    fmt::print("{}: p_network {:.4g}  p_err {:.4g}  p_relative {:.4g}  (relative HD limit {:.4g})\n",
               report.with_gnn ? "hd-gnn-cnn" : "hd-cnn", report.p_network, report.p_err, report.p_relative,
               report.p_relative_hd);
    if (!a.report.empty()) {
        const bool json = fs::path(a.report).extension() == ".json";
        write_output(a.report, [&](std::ostream& os) {
            json ? write_report_json(os, report) : write_report_csv(os, report);
        });
    }
    return 0;
}

int run_sweep_cmd(const SweepArgs& a) {
    ExperimentConfig cfg;
    if (!a.config.empty()) {
        cfg = load_config(a.config);
    } else if (!a.kind.empty()) {
        cfg.spec = SweepSpec::defaults(parse_sweep_kind(a.kind));
    } else {
        throw CLI::RequiredError("--config or --kind");
    }
    auto& s = cfg.spec;
    if (!a.message_db.empty()) s.message_db = a.message_db;
    if (!a.target_db.empty()) s.target_db = a.target_db;
    if (!a.widths.empty()) s.widths = a.widths;
    if (a.seed) s.base_seed = *a.seed;
    if (a.replicates) s.replicates = *a.replicates;
    if (a.gnn_epochs) s.gnn_epochs = *a.gnn_epochs;
    if (a.cnn_epochs) s.cnn_epochs = *a.cnn_epochs;
    if (a.per_key) s.train_per_key = *a.per_key;
    if (a.test_per_key) s.test_per_key = *a.test_per_key;
    if (!a.out.empty()) cfg.output_dir = a.out;
    if (const auto p = s.problems(); !p.empty()) throw ConfigError(p);

    RunConfigOptions opts;
    opts.plot = a.plot;
    opts.workers = a.workers;
    opts.log = a.quiet ? nullptr : &std::cerr;
    const auto result = run_config(cfg, opts);
    fmt::print("{}\n", (result.run_dir / "results.csv").string());
    for (const auto& e : result.outcome.errors) fmt::print(stderr, "failed: {}\n", e);
    return result.exit_status();
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Machine-learning aided homodyne receiver for QPSK coherent states"};
    app.require_subcommand(1);

    LimitsArgs limits;
    auto* c_limits = app.add_subcommand("limits", "homodyne and Helstrom error limits as CSV");
    c_limits->add_option("--min-db", limits.min_db, "first amplitude (dB)")->capture_default_str();
    c_limits->add_option("--max-db", limits.max_db, "last amplitude (dB)")->capture_default_str();
    c_limits->add_option("--step-db", limits.step_db, "grid step (dB)")->capture_default_str();
    c_limits->add_option("--out", limits.out, "output CSV (default stdout)");

    GenArgs gen;
    auto* c_gen = app.add_subcommand("gen", "simulate a labeled homodyne image dataset");
    c_gen->add_option("--alpha-db", gen.alpha_db, "signal amplitude (dB)")->required();
    c_gen->add_option("--per-key", gen.per_key, "images per QPSK key")->capture_default_str();
    c_gen->add_option("--width", gen.width, "image width; the scan covers width^2/900 of 2 pi")
        ->capture_default_str()
        ->check(CLI::Range(1, 30));
    c_gen->add_option("--seed", gen.seed)->capture_default_str();
    c_gen->add_option("--role", gen.role, "gnn-input, gnn-target, cnn-train or test")->capture_default_str();
    c_gen->add_option("--out", gen.out, "dataset file")->required();

    TrainArgs tg, tc;
    auto add_train_flags = [](CLI::App* c, TrainArgs& t) {
        c->add_option("--train", t.train, "training dataset")->required()->check(CLI::ExistingFile);
        c->add_option("--model-out", t.model_out, "trained model file")->required();
        c->add_option("--epochs", t.epochs);
        c->add_option("--seed", t.seed)->capture_default_str();
        c->add_option("--learning-rate", t.learning_rate);
        c->add_option("--batch-size", t.batch_size);
        c->add_option("--init", t.init, "he-normal (default) or glorot-uniform");
        c->add_flag("--keep-reading", t.keep_reading, "read dropout rates as keep probabilities");
        c->add_flag("-q,--quiet", t.quiet, "no per-epoch progress");
    };
    auto* c_tg = app.add_subcommand("train-gnn", "train the denoising network");
    add_train_flags(c_tg, tg);
    c_tg->add_option("--target", tg.target, "clean target dataset, paired by index")
        ->required()
        ->check(CLI::ExistingFile);
    auto* c_tc = app.add_subcommand("train-cnn", "train the classifier (per key: last held-out images are kept back)");
    add_train_flags(c_tc, tc);
    c_tc->add_option("--held-out", tc.held_out, "held-out images per key (default 30)");

    EvalArgs ev;
    auto* c_eval = app.add_subcommand("eval", "error probabilities of a receiver on a test set");
    c_eval->add_option("--test", ev.test, "test dataset")->required()->check(CLI::ExistingFile);
    c_eval->add_option("--model-in", ev.model_in, "classifier model")->required()->check(CLI::ExistingFile);
    c_eval->add_option("--gnn-in", ev.gnn_in, "denoiser model")->check(CLI::ExistingFile);
    c_eval->add_flag("--no-gnn", ev.no_gnn, "classify the raw images (hd-cnn)");
    c_eval->add_option("--report", ev.report, "report file; .json for JSON, anything else for CSV");

    SweepArgs sw;
    auto* c_sweep = app.add_subcommand("sweep", "run or resume an experiment sweep");
    c_sweep->add_option("--config", sw.config, "JSON experiment config")->check(CLI::ExistingFile);
    c_sweep->add_option("--kind", sw.kind, "target-amplitude, scan-range or message-amplitude (default grids)");
    c_sweep->add_option("--message-db", sw.message_db)->delimiter(',');
    c_sweep->add_option("--target-db", sw.target_db)->delimiter(',');
    c_sweep->add_option("--widths", sw.widths)->delimiter(',');
    c_sweep->add_option("--seed", sw.seed);
    c_sweep->add_option("--replicates", sw.replicates);
    c_sweep->add_option("--gnn-epochs", sw.gnn_epochs);
    c_sweep->add_option("--cnn-epochs", sw.cnn_epochs);
    c_sweep->add_option("--per-key", sw.per_key, "training images per key");
    c_sweep->add_option("--test-per-key", sw.test_per_key);
    c_sweep->add_option("--out", sw.out, "run root directory");
    c_sweep->add_option("--workers", sw.workers, "parallel jobs (0 = all cores)");
    c_sweep->add_flag("--plot", sw.plot, "also write plot.svg");
    c_sweep->add_flag("-q,--quiet", sw.quiet);

    CLI11_PARSE(app, argc, argv);
    try {
        if (*c_limits) return run_limits(limits);
        if (*c_gen) return run_gen(gen);
        if (*c_tg) return run_train_gnn(tg);
        if (*c_tc) return run_train_cnn(tc);
        if (*c_eval) return run_eval(ev);
        if (*c_sweep) return run_sweep_cmd(sw);
    } catch (const CLI::Error& e) {
        return app.exit(e);
    } catch (const ConfigError& e) {
        fmt::print(stderr, "{}\n", e.what());
        return 2;
    } catch (const std::exception& e) {
        fmt::print(stderr, "error: {}\n", e.what());
        return 1;
    }
    return 0;
}

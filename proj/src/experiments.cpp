#include "qhd/experiments.hpp"

#include <atomic>
#include <bit>
#include <cmath>
#include <fstream>
#include <map>
#include <mutex>
#include <numbers>
#include <sstream>
#include <stdexcept>
#include <thread>

#include <fmt/format.h>
#include <fmt/ostream.h>

#include "qhd/detail/atomic_file.hpp"
#include "qhd/detail/seed.hpp"
#include "qhd/limits.hpp"
#include "qhd/nn/model_io.hpp"

namespace qhd {

namespace fs = std::filesystem;

std::string_view to_string(SweepKind kind) noexcept {
    switch (kind) {
        case SweepKind::target_amplitude: return "target-amplitude";
        case SweepKind::scan_range: return "scan-range";
        case SweepKind::message_amplitude: return "message-amplitude";
    }
    return "?";
}

SweepKind parse_sweep_kind(std::string_view text) {
    for (auto k : {SweepKind::target_amplitude, SweepKind::scan_range, SweepKind::message_amplitude}) {
        if (text == to_string(k)) return k;
    }
    throw std::invalid_argument("unknown sweep kind '" + std::string(text) + "'");
}

std::string_view to_string(Variant v) noexcept { return v == Variant::hd_cnn ? "hd-cnn" : "hd-gnn-cnn"; }

Variant parse_variant(std::string_view text) {
    if (text == "hd-cnn") return Variant::hd_cnn;
    if (text == "hd-gnn-cnn") return Variant::hd_gnn_cnn;
    throw std::invalid_argument("unknown variant '" + std::string(text) + "'");
}

std::vector<double> uniform_grid(double first, double last, std::size_t count) {
    if (count == 0) return {};
    if (count == 1) return {first};
    std::vector<double> out(count);
    const double step = (last - first) / static_cast<double>(count - 1);
    for (std::size_t i = 0; i < count; ++i) out[i] = first + step * static_cast<double>(i);
    out.back() = last;
    return out;
}

SweepSpec SweepSpec::defaults(SweepKind kind) {
    SweepSpec s;
    s.kind = kind;
    switch (kind) {
        case SweepKind::target_amplitude:
            s.message_db = {-12.0, -10.5, -9.3};
            s.target_db = uniform_grid(-15.0, 9.08, 17);
            s.widths = {30};
            break;
        case SweepKind::scan_range:
            s.message_db = {-10.5, -9.3};
            s.target_db = {9.0};
            for (std::size_t w = 28; w >= 4; w -= 2) s.widths.push_back(w);
            break;
        case SweepKind::message_amplitude:
            s.message_db = uniform_grid(-15.0, -9.12, 15);
            s.target_db = {9.0};
            s.widths = {30};
            break;
    }
    return s;
}

std::vector<std::string> SweepSpec::problems() const {
    std::vector<std::string> out;
    auto check_levels = [&](const std::vector<double>& v, const char* name) {
        if (v.empty()) out.push_back(fmt::format("{}: needs at least one level", name));
        for (double d : v) {
            if (!std::isfinite(d)) out.push_back(fmt::format("{}: level {} is not finite", name, d));
        }
        for (std::size_t i = 0; i < v.size(); ++i) {
            for (std::size_t j = i + 1; j < v.size(); ++j) {
                if (v[i] == v[j]) out.push_back(fmt::format("{}: level {} is listed twice", name, v[i]));
            }
        }
    };
    check_levels(message_db, "message_db");
    check_levels(target_db, "target_db");
    if (widths.empty()) out.push_back("widths: needs at least one width");
    for (auto w : widths) {
        if (w < 4 || w > 30 || w % 2 != 0) out.push_back(fmt::format("widths: {} is not an even width in [4, 30]", w));
    }
    for (std::size_t i = 0; i < widths.size(); ++i) {
        for (std::size_t j = i + 1; j < widths.size(); ++j) {
            if (widths[i] == widths[j]) out.push_back(fmt::format("widths: {} is listed twice", widths[i]));
        }
    }
    if (kind != SweepKind::target_amplitude && target_db.size() > 1) {
        out.push_back(fmt::format("target_db: a {} sweep uses a single target level", to_string(kind)));
    }
    if (kind != SweepKind::scan_range && widths.size() > 1) {
        out.push_back(fmt::format("widths: a {} sweep uses a single width", to_string(kind)));
    }
    if (train_per_key == 0) out.push_back("train_per_key: must be positive");
    if (test_per_key == 0) out.push_back("test_per_key: must be positive");
    if (cnn_held_out_per_key >= train_per_key) {
        out.push_back("cnn_held_out_per_key: must be smaller than train_per_key");
    }
    if (replicates == 0) out.push_back("replicates: must be positive");
    if (!(gnn.learning_rate > 0.0)) out.push_back("gnn.learning_rate: must be positive");
    if (!(cnn.learning_rate > 0.0)) out.push_back("cnn.learning_rate: must be positive");
    if (gnn.batch_size == 0) out.push_back("gnn.batch_size: must be positive");
    if (cnn.batch_size == 0) out.push_back("cnn.batch_size: must be positive");
    if (!(gnn.adam_epsilon > 0.0)) out.push_back("gnn.adam_epsilon: must be positive");
    if (!(cnn.adam_epsilon > 0.0)) out.push_back("cnn.adam_epsilon: must be positive");
    if (!(gnn.dropout_rate >= 0.0 && gnn.dropout_rate < 1.0)) out.push_back("gnn.dropout_rate: must lie in [0, 1)");
    return out;
}

void SweepSpec::validate() const {
    const auto p = problems();
    if (p.empty()) return;
    std::string msg = "invalid sweep:";
    for (const auto& s : p) msg += "\n  " + s;
    throw std::invalid_argument(msg);
}

void write_results(std::ostream& out, const std::vector<ResultRow>& rows) {
    out << kResultsHeader << '\n';
    for (const auto& r : rows) {
        out << fmt::format("{:.17g},{},{:.17g},{:.17g},{:.17g},{:.17g},{:.17g},{},{}\n", r.coordinate,
                           to_string(r.variant), r.p_network, r.p_err, r.p_relative, r.p_relative_hd, r.p_hel, r.seed,
                           r.replicate);
    }
}

std::vector<ResultRow> read_results(std::istream& in) {
    std::string line;
    if (!std::getline(in, line) || line != kResultsHeader) throw std::runtime_error("results: missing or unexpected header");
    std::vector<ResultRow> rows;
    std::size_t line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        std::vector<std::string> cells;
        std::stringstream ss(line);
        for (std::string cell; std::getline(ss, cell, ',');) cells.push_back(cell);
        if (cells.size() != 9) throw std::runtime_error(fmt::format("results line {}: expected 9 fields", line_no));
        try {
            ResultRow r;
            r.coordinate = std::stod(cells[0]);
            r.variant = parse_variant(cells[1]);
            r.p_network = std::stod(cells[2]);
            r.p_err = std::stod(cells[3]);
            r.p_relative = std::stod(cells[4]);
            r.p_relative_hd = std::stod(cells[5]);
            r.p_hel = std::stod(cells[6]);
            r.seed = std::stoull(cells[7]);
            r.replicate = std::stoull(cells[8]);
            rows.push_back(r);
        } catch (const std::exception& e) {
            throw std::runtime_error(fmt::format("results line {}: {}", line_no, e.what()));
        }
    }
    return rows;
}

void emit_results(const std::vector<ResultRow>& rows, const fs::path& path) {
    if (rows.empty()) throw std::invalid_argument("emit_results: no rows");
    detail::write_atomically(path, [&](std::ostream& out) { write_results(out, rows); }, false);
}

std::vector<ResultRow> load_results(const fs::path& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open " + path.string());
    return read_results(in);
}

namespace {

// Seed sub-streams inside one replicate.
enum : std::uint64_t { kInputSet = 1, kTargetSet = 2, kTestSet = 3, kCnnModel = 4, kGnnModel = 5 };

std::uint64_t bits(double v) { return std::bit_cast<std::uint64_t>(v); }

std::string level_tag(double db) { return fmt::format("{}", db); }

struct Job {
    double message_db;
    double target_db;
    std::size_t width;
    std::size_t replicate;
    double coordinate;

    [[nodiscard]] std::string id() const {
        return fmt::format("m{}_a{}_w{}_r{}", level_tag(message_db), level_tag(target_db), width, replicate);
    }
};

double coordinate_of(const SweepSpec& spec, double message_db, double target_db, std::size_t width) {
    switch (spec.kind) {
        case SweepKind::target_amplitude: return target_db;
        case SweepKind::scan_range: return LoScan::from_width(width).gamma_max() / std::numbers::pi;
        case SweepKind::message_amplitude: return message_db;
    }
    return 0.0;
}

std::vector<Job> plan_jobs(const SweepSpec& spec) {
    std::vector<Job> jobs;
    for (double a : spec.target_db) {
        for (auto w : spec.widths) {
            for (double m : spec.message_db) {
                for (std::size_t r = 0; r < spec.replicates; ++r) {
                    jobs.push_back({m, a, w, r, coordinate_of(spec, m, a, w)});
                }
            }
        }
    }
    return jobs;
}

class RunLayout {
public:
    explicit RunLayout(fs::path root) : root_(std::move(root)) {}

    [[nodiscard]] fs::path input_set(double m, std::size_t r) const {
        return root_ / "datasets" / fmt::format("input_m{}_r{}.qhd", level_tag(m), r);
    }
    [[nodiscard]] fs::path target_set(double a, std::size_t r) const {
        return root_ / "datasets" / fmt::format("target_a{}_r{}.qhd", level_tag(a), r);
    }
    [[nodiscard]] fs::path test_set(double m, std::size_t r) const {
        return root_ / "datasets" / fmt::format("test_m{}_r{}.qhd", level_tag(m), r);
    }
    [[nodiscard]] fs::path cnn(double a, std::size_t w, std::size_t r) const {
        return root_ / "models" / fmt::format("cnn_a{}_w{}_r{}.qnn", level_tag(a), w, r);
    }
    [[nodiscard]] fs::path gnn(const Job& j) const {
        return root_ / "models" /
               fmt::format("gnn_m{}_a{}_w{}_r{}.qnn", level_tag(j.message_db), level_tag(j.target_db), j.width,
                           j.replicate);
    }
    [[nodiscard]] fs::path row(const Job& j) const { return root_ / "rows" / (j.id() + ".csv"); }
    [[nodiscard]] fs::path row_error(const Job& j) const { return root_ / "rows" / (j.id() + ".error"); }
    [[nodiscard]] const fs::path& root() const { return root_; }

private:
    fs::path root_;
};

class Logger {
public:
    explicit Logger(std::ostream* out) : out_(out) {}
    template <class... Args>
    void operator()(fmt::format_string<Args...> f, Args&&... args) {
        if (!out_) return;
        const auto line = fmt::format(f, std::forward<Args>(args)...);
        std::lock_guard lock(mu_);
        *out_ << line << std::endl;
    }

private:
    std::ostream* out_;
    std::mutex mu_;
};

// Runs every task on a bounded pool; returns the failure message per task
// (empty string on success). Task order does not affect any result.
std::vector<std::string> run_pool(const std::vector<std::function<void()>>& tasks, std::size_t workers) {
    std::vector<std::string> failures(tasks.size());
    if (tasks.empty()) return failures;
    if (workers == 0) workers = std::max(1u, std::thread::hardware_concurrency());
    workers = std::min(workers, tasks.size());
    std::atomic<std::size_t> next{0};
    auto worker = [&] {
        for (std::size_t i; (i = next.fetch_add(1)) < tasks.size();) {
            try {
                tasks[i]();
            } catch (const std::exception& e) {
                failures[i] = e.what();
                if (failures[i].empty()) failures[i] = "unknown failure";
            }
        }
    };
    if (workers == 1) {
        worker();
        return failures;
    }
    std::vector<std::jthread> pool;
    for (std::size_t w = 0; w < workers; ++w) pool.emplace_back(worker);
    pool.clear();
    return failures;
}

HomodyneDataset sliced(const fs::path& path, std::size_t width) {
    auto ds = load_dataset(path);
    return width == ds.width() ? ds : slice_scan(ds, width);
}

ResultRow row_for(const Job& job, const EvalReport& report, Variant v, std::uint64_t seed) {
    ResultRow r;
    r.coordinate = job.coordinate;
    r.variant = v;
    r.p_network = report.p_network;
    r.p_err = report.p_err;
    r.p_relative = report.p_relative;
    r.p_relative_hd = report.p_relative_hd;
    r.p_hel = report.p_hel;
    r.seed = seed;
    r.replicate = job.replicate;
    return r;
}

}  // namespace

SweepOutcome run_sweep(const SweepSpec& spec, const SweepOptions& opts) {
    spec.validate();
    if (opts.run_dir.empty()) throw std::invalid_argument("run_sweep: no run directory");
    const RunLayout layout(opts.run_dir);
    for (const char* sub : {"datasets", "models", "rows"}) fs::create_directories(opts.run_dir / sub);
    Logger log(opts.log);

    const auto jobs = plan_jobs(spec);
    SweepOutcome outcome;
    std::vector<const Job*> pending;
    for (const auto& j : jobs) {
        if (fs::exists(layout.row(j))) {
            ++outcome.jobs_skipped;
        } else {
            pending.push_back(&j);
        }
    }
    log("sweep {}: {} jobs, {} already done", to_string(spec.kind), jobs.size(), outcome.jobs_skipped);

    // Failures of shared prerequisites, keyed by artifact path.
    std::map<fs::path, std::string> broken;
    auto run_phase = [&](const std::map<fs::path, std::function<void()>>& work) {
        std::vector<fs::path> keys;
        std::vector<std::function<void()>> tasks;
        for (const auto& [path, fn] : work) {
            keys.push_back(path);
            tasks.push_back(fn);
        }
        const auto failures = run_pool(tasks, opts.workers);
        for (std::size_t i = 0; i < keys.size(); ++i) {
            if (!failures[i].empty()) {
                broken[keys[i]] = failures[i];
                log("failed: {}: {}", keys[i].filename().string(), failures[i]);
            }
        }
    };
    auto require = [&](const fs::path& p) {
        if (auto it = broken.find(p); it != broken.end()) {
            throw std::runtime_error("prerequisite " + p.filename().string() + " failed: " + it->second);
        }
    };

    // Phase 1: full-scan datasets.
    std::map<fs::path, std::function<void()>> datasets;
    auto want_dataset = [&](const fs::path& path, double db, std::size_t per_key, std::uint64_t seed,
                            DatasetRole role) {
        if (fs::exists(path) || datasets.contains(path)) return;
        datasets[path] = [=, &log] {
            save_dataset(generate_dataset(db, per_key, LoScan::full(), seed, role), path);
            log("dataset {}", path.filename().string());
        };
    };
    for (const Job* j : pending) {
        const auto seed = spec.replicate_seed(j->replicate);
        want_dataset(layout.input_set(j->message_db, j->replicate), j->message_db, spec.train_per_key,
                     detail::derive_seed(seed, {kInputSet, bits(j->message_db)}), DatasetRole::gnn_input);
        want_dataset(layout.target_set(j->target_db, j->replicate), j->target_db, spec.train_per_key,
                     detail::derive_seed(seed, {kTargetSet, bits(j->target_db)}), DatasetRole::gnn_target);
        want_dataset(layout.test_set(j->message_db, j->replicate), j->message_db, spec.test_per_key,
                     detail::derive_seed(seed, {kTestSet, bits(j->message_db)}), DatasetRole::test);
    }
    run_phase(datasets);

    // Phase 2: one CNN per (target level, width, replicate), trained on the target set.
    std::map<fs::path, std::function<void()>> cnns;
    for (const Job* j : pending) {
        const auto path = layout.cnn(j->target_db, j->width, j->replicate);
        if (fs::exists(path) || cnns.contains(path)) continue;
        const Job job = *j;
        cnns[path] = [&, job, path] {
            const auto source = layout.target_set(job.target_db, job.replicate);
            require(source);
            CnnConfig cfg = spec.cnn;
            cfg.input_width = job.width;
            cfg.epochs = spec.cnn_epochs;
            cfg.per_key = spec.train_per_key;
            cfg.held_out_per_key = spec.cnn_held_out_per_key;
            cfg.seed = detail::derive_seed(spec.replicate_seed(job.replicate),
                                           {kCnnModel, bits(job.target_db), job.width});
            cfg.on_epoch = nullptr;
            const auto trained = train_cnn(sliced(source, job.width), cfg);
            nn::save_model(trained.net, path);
            log("cnn {}: held-out accuracy {:.4f}", path.filename().string(), trained.held_out_accuracy());
        };
    }
    run_phase(cnns);

    // Phase 3: per job, train (or reuse) the GNN and evaluate both variants.
    std::vector<std::function<void()>> job_tasks;
    for (const Job* j : pending) {
        const Job job = *j;
        job_tasks.push_back([&, job] {
            const auto seed = spec.replicate_seed(job.replicate);
            const auto cnn_path = layout.cnn(job.target_db, job.width, job.replicate);
            const auto test_path = layout.test_set(job.message_db, job.replicate);
            require(cnn_path);
            require(test_path);
            const auto gnn_path = layout.gnn(job);
            const nn::Shape3 shape{1, job.width, job.width};
            nn::Network gnn = [&] {
                if (fs::exists(gnn_path)) return nn::load_model(gnn_path, shape);
                const auto input_path = layout.input_set(job.message_db, job.replicate);
                const auto target_path = layout.target_set(job.target_db, job.replicate);
                require(input_path);
                require(target_path);
                GnnConfig cfg = spec.gnn;
                cfg.input_width = job.width;
                cfg.epochs = spec.gnn_epochs;
                cfg.seed = detail::derive_seed(seed, {kGnnModel, bits(job.message_db), bits(job.target_db), job.width});
                cfg.on_epoch = nullptr;
                auto trained = train_gnn(sliced(input_path, job.width), sliced(target_path, job.width), cfg);
                nn::save_model(trained.net, gnn_path);
                log("gnn {}: final loss {:.6g}", gnn_path.filename().string(), trained.loss_history.empty()
                                                                                    ? 0.0
                                                                                    : trained.loss_history.back());
                return std::move(trained.net);
            }();
            const auto cnn = nn::load_model(cnn_path, shape);
            const auto test = sliced(test_path, job.width);
            const std::vector<ResultRow> rows{row_for(job, evaluate(test, cnn), Variant::hd_cnn, seed),
                                              row_for(job, evaluate(test, cnn, &gnn), Variant::hd_gnn_cnn, seed)};
            emit_results(rows, layout.row(job));
            fs::remove(layout.row_error(job));
            log("row {}: p_relative hd-cnn {:.4g}, hd-gnn-cnn {:.4g}", job.id(), rows[0].p_relative,
                rows[1].p_relative);
        });
    }
    const auto failures = run_pool(job_tasks, opts.workers);
    for (std::size_t i = 0; i < pending.size(); ++i) {
        if (failures[i].empty()) continue;
        const auto msg = pending[i]->id() + ": " + failures[i];
        outcome.errors.push_back(msg);
        detail::write_atomically(layout.row_error(*pending[i]), [&](std::ostream& out) { out << failures[i] << '\n'; },
                                 false);
        log("job failed: {}", msg);
    }
    outcome.jobs_run = pending.size() - outcome.errors.size();

    // Assemble results in job order from the per-job fragments.
    std::map<double, std::vector<ResultRow>> by_level;
    for (const auto& j : jobs) {
        if (!fs::exists(layout.row(j))) continue;
        for (const auto& r : load_results(layout.row(j))) {
            outcome.rows.push_back(r);
            by_level[j.message_db].push_back(r);
        }
    }
    for (double m : spec.message_db) {
        if (by_level.contains(m)) outcome.series.push_back({fmt::format("|alpha_m| = {} dB", m), by_level[m]});
    }
    if (!outcome.rows.empty()) {
        emit_results(outcome.rows, opts.run_dir / "results.csv");
        if (spec.message_db.size() > 1 && spec.kind != SweepKind::message_amplitude) {
            for (const auto& [m, rows] : by_level) {
                emit_results(rows, opts.run_dir / fmt::format("results_m{}.csv", level_tag(m)));
            }
        }
        if (opts.plot) {
            PlotLabels labels;
            switch (spec.kind) {
                case SweepKind::target_amplitude:
                    labels = {"relative error vs target amplitude", "|alpha'| (dB)"};
                    break;
                case SweepKind::scan_range: labels = {"relative error vs LO scan range", "scan range (x pi)"}; break;
                case SweepKind::message_amplitude:
                    labels = {"relative error vs message amplitude", "|alpha_m| (dB)"};
                    break;
            }
            auto series = outcome.series;
            if (spec.kind == SweepKind::message_amplitude) {
                // a single curve over all message levels
                series = {RowSeries{fmt::format("|alpha'| = {} dB", spec.target_db.front()), outcome.rows}};
            }
            emit_plot(series, labels, opts.run_dir / "plot.svg");
        }
    }
    log("sweep done: {} rows, {} failed jobs", outcome.rows.size(), outcome.errors.size());
    return outcome;
}

namespace {

SweepOutcome run_kind(SweepKind kind, const SweepSpec& spec, const SweepOptions& opts) {
    if (spec.kind != kind) {
        throw std::invalid_argument(fmt::format("expected a {} sweep, got {}", to_string(kind), to_string(spec.kind)));
    }
    return run_sweep(spec, opts);
}

}  // namespace

SweepOutcome sweep_target_amplitude(const SweepSpec& spec, const SweepOptions& opts) {
    return run_kind(SweepKind::target_amplitude, spec, opts);
}
SweepOutcome sweep_scan_range(const SweepSpec& spec, const SweepOptions& opts) {
    return run_kind(SweepKind::scan_range, spec, opts);
}
SweepOutcome sweep_message_amplitude(const SweepSpec& spec, const SweepOptions& opts) {
    return run_kind(SweepKind::message_amplitude, spec, opts);
}

}  // namespace qhd

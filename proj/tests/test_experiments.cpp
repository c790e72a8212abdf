#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <numbers>
#include <sstream>

#include "qhd/experiments.hpp"
#include "qhd/limits.hpp"
#include "qhd/sweep_config.hpp"

using namespace qhd;
namespace fs = std::filesystem;

namespace {

fs::path scratch_dir(const std::string& name) {
    auto dir = fs::temp_directory_path() / ("qhd_test_experiments_" + name);
    fs::remove_all(dir);
    fs::create_directories(dir);
    return dir;
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    return {std::istreambuf_iterator<char>(in), {}};
}

std::size_t line_count(const fs::path& p) {
    std::ifstream in(p);
    std::size_t n = 0;
    for (std::string line; std::getline(in, line);) ++n;
    return n;
}

// Small enough to run in a couple of seconds.
SweepSpec tiny_spec(std::vector<double> message_db = {-10.5}) {
    auto s = SweepSpec::defaults(SweepKind::message_amplitude);
    s.message_db = std::move(message_db);
    s.widths = {8};
    s.train_per_key = 12;
    s.cnn_held_out_per_key = 4;
    s.test_per_key = 10;
    s.gnn_epochs = 2;
    s.cnn_epochs = 2;
    s.replicates = 1;
    s.base_seed = 5;
    return s;
}

SweepOutcome run_in(const fs::path& dir, const SweepSpec& spec, bool plot = false) {
    SweepOptions opts;
    opts.run_dir = dir;
    opts.workers = 1;
    opts.plot = plot;
    return run_sweep(spec, opts);
}

ResultRow sample_row() {
    ResultRow r;
    r.coordinate = -10.5;
    r.variant = Variant::hd_gnn_cnn;
    r.p_network = 0.1 / 3.0;
    r.p_err = std::nextafter(0.2, 1.0);
    r.p_relative = 1e-300;
    r.p_relative_hd = 0.0106;
    r.p_hel = 7.85e-56;
    r.seed = 18446744073709551615ull;
    r.replicate = 2;
    return r;
}

}  // namespace

TEST_CASE("uniform grid") {
    const auto g = uniform_grid(-15.0, 9.08, 17);
    REQUIRE(g.size() == 17);
    CHECK(g.front() == -15.0);
    CHECK(g.back() == 9.08);
    CHECK(g[1] - g[0] == doctest::Approx(1.505));
    CHECK(uniform_grid(1.0, 2.0, 1) == std::vector<double>{1.0});
    CHECK(uniform_grid(1.0, 2.0, 0).empty());
}

TEST_CASE("default sweeps") {
    const auto t = SweepSpec::defaults(SweepKind::target_amplitude);
    CHECK(t.message_db == std::vector<double>{-12.0, -10.5, -9.3});
    CHECK(t.target_db.size() == 17);
    CHECK(t.planned_jobs() == 51 * 3);
    CHECK(t.problems().empty());

    const auto s = SweepSpec::defaults(SweepKind::scan_range);
    CHECK(s.widths.size() == 13);
    CHECK(s.widths.front() == 28);
    CHECK(s.widths.back() == 4);
    CHECK(s.problems().empty());

    auto m = SweepSpec::defaults(SweepKind::message_amplitude);
    CHECK(m.message_db.size() == 15);
    CHECK(m.message_db.back() == -9.12);
    m.replicates = 2;
    CHECK(m.planned_jobs() * 2 == 60);
    CHECK(m.gnn_epochs == 150);
    CHECK(m.train_per_key == 200);
    CHECK(m.test_per_key == 90);
}

TEST_CASE("sweep validation lists every problem") {
    auto s = SweepSpec::defaults(SweepKind::message_amplitude);
    s.message_db = {-10.5, -10.5};
    s.target_db = {1.0, 2.0};
    s.widths = {7};
    s.replicates = 0;
    const auto p = s.problems();
    CHECK(p.size() == 4);
    CHECK_THROWS_AS(s.validate(), std::invalid_argument);

    auto scan = SweepSpec::defaults(SweepKind::scan_range);
    scan.widths = {32, 4, 4};
    CHECK(scan.problems().size() == 2);
}

TEST_CASE("sweep kind and variant names") {
    for (auto k : {SweepKind::target_amplitude, SweepKind::scan_range, SweepKind::message_amplitude}) {
        CHECK(parse_sweep_kind(to_string(k)) == k);
    }
    CHECK_THROWS_AS(parse_sweep_kind("fig4"), std::invalid_argument);
    CHECK(parse_variant("hd-cnn") == Variant::hd_cnn);
    CHECK(parse_variant("hd-gnn-cnn") == Variant::hd_gnn_cnn);
    CHECK_THROWS_AS(parse_variant("gnn"), std::invalid_argument);
}

TEST_CASE("results csv round trip is exact") {
    const std::vector<ResultRow> rows{sample_row(), ResultRow{}};
    std::stringstream ss;
    write_results(ss, rows);
    std::string first;
    std::getline(ss, first);
    CHECK(first == kResultsHeader);
    ss.seekg(0);
    CHECK(read_results(ss) == rows);

    std::stringstream bad_header("coordinate,variant\n");
    CHECK_THROWS(read_results(bad_header));
    std::stringstream short_line(std::string(kResultsHeader) + "\n1,hd-cnn,0.1\n");
    CHECK_THROWS(read_results(short_line));
    std::stringstream bad_variant(std::string(kResultsHeader) + "\n1,cnn,0,0,0,0,0,0,0\n");
    CHECK_THROWS(read_results(bad_variant));
}

TEST_CASE("emit results") {
    const auto dir = scratch_dir("emit");
    const auto path = dir / "r.csv";
    emit_results({sample_row(), sample_row()}, path);
    CHECK(line_count(path) == 3);
    CHECK(load_results(path).size() == 2);
    CHECK_THROWS_AS(emit_results({}, dir / "empty.csv"), std::invalid_argument);
    CHECK_FALSE(fs::exists(dir / "empty.csv"));
    CHECK_THROWS(emit_results({sample_row()}, path / "nested.csv"));
}

TEST_CASE("single point sweep") {
    const auto dir = scratch_dir("single");
    const auto spec = tiny_spec();
    const auto t0 = std::chrono::steady_clock::now();
    const auto out = run_in(dir, spec, true);
    CHECK(std::chrono::steady_clock::now() - t0 < std::chrono::minutes(1));

    CHECK(out.errors.empty());
    CHECK(out.jobs_run == 1);
    REQUIRE(out.rows.size() == 2);
    CHECK(line_count(dir / "results.csv") == 3);
    CHECK(load_results(dir / "results.csv") == out.rows);
    CHECK(fs::exists(dir / "plot.svg"));
    CHECK(fs::exists(dir / "models" / "gnn_m-10.5_a9_w8_r0.qnn"));
    CHECK(fs::exists(dir / "models" / "cnn_a9_w8_r0.qnn"));

    const auto& plain = out.rows[0];
    const auto& aided = out.rows[1];
    CHECK(plain.variant == Variant::hd_cnn);
    CHECK(aided.variant == Variant::hd_gnn_cnn);
    const auto level = Amplitude::from_db(-10.5);
    for (const auto& r : out.rows) {
        CHECK(r.coordinate == -10.5);
        CHECK(r.seed == spec.replicate_seed(0));
        CHECK(r.p_hel == p_err_helstrom(level));
        CHECK(r.p_relative_hd == doctest::Approx(p_err_homodyne(level) - p_err_helstrom(level)).epsilon(1e-12));
        CHECK(r.p_relative == doctest::Approx(r.p_err - r.p_hel).epsilon(1e-12));
        CHECK(r.p_relative >= r.p_relative_hd - 1e-15);
        CHECK(r.p_network >= 0.0);
        CHECK(r.p_network <= 1.0);
    }
}

TEST_CASE("sweeps are idempotent, resumable and reproducible") {
    const auto dir = scratch_dir("resume");
    const auto spec = tiny_spec({-12.0, -10.5});
    const auto first = run_in(dir, spec);
    REQUIRE(first.errors.empty());
    REQUIRE(first.rows.size() == 4);
    CHECK(first.series.size() == 2);
    CHECK(first.rows[0].p_hel != first.rows[2].p_hel);
    const auto csv = slurp(dir / "results.csv");

    SUBCASE("second run is a no-op") {
        const auto again = run_in(dir, spec);
        CHECK(again.jobs_run == 0);
        CHECK(again.jobs_skipped == 2);
        CHECK(slurp(dir / "results.csv") == csv);
    }
    SUBCASE("a deleted row is regenerated alone") {
        fs::remove(dir / "rows" / "m-12_a9_w8_r0.csv");
        fs::remove(dir / "models" / "gnn_m-12_a9_w8_r0.qnn");
        const auto again = run_in(dir, spec);
        CHECK(again.jobs_run == 1);
        CHECK(again.jobs_skipped == 1);
        CHECK(slurp(dir / "results.csv") == csv);
    }
    SUBCASE("a fresh directory gives byte-identical results") {
        const auto other = scratch_dir("resume_copy");
        run_in(other, spec);
        CHECK(slurp(other / "results.csv") == csv);
    }
    SUBCASE("a failing job is isolated") {
        fs::remove(dir / "rows" / "m-12_a9_w8_r0.csv");
        fs::remove(dir / "models" / "gnn_m-12_a9_w8_r0.qnn");
        std::ofstream(dir / "datasets" / "input_m-12_r0.qhd", std::ios::trunc) << "garbage";
        const auto again = run_in(dir, spec);
        CHECK(again.errors.size() == 1);
        CHECK(again.jobs_run == 0);
        CHECK(fs::exists(dir / "rows" / "m-12_a9_w8_r0.error"));
        CHECK(again.rows.size() == 2);
        CHECK(line_count(dir / "results.csv") == 3);
    }
}

TEST_CASE("per-level results for target sweeps") {
    const auto dir = scratch_dir("levels");
    auto spec = tiny_spec({-12.0, -10.5});
    spec.kind = SweepKind::target_amplitude;
    spec.target_db = {3.0};
    const auto out = run_in(dir, spec);
    REQUIRE(out.errors.empty());
    CHECK(out.rows[0].coordinate == 3.0);
    CHECK(line_count(dir / "results_m-12.csv") == 3);
    CHECK(line_count(dir / "results_m-10.5.csv") == 3);
}

TEST_CASE("scan sweep coordinates are scan ranges in units of pi") {
    const auto dir = scratch_dir("scan");
    auto spec = tiny_spec();
    spec.kind = SweepKind::scan_range;
    spec.widths = {28};
    spec.train_per_key = 6;
    spec.cnn_held_out_per_key = 2;
    spec.test_per_key = 2;
    spec.gnn_epochs = 1;
    spec.cnn_epochs = 1;
    const auto out = run_in(dir, spec);
    REQUIRE(out.rows.size() == 2);
    CHECK(out.rows[0].coordinate == doctest::Approx(784.0 / 900.0 * 2.0).epsilon(1e-15));
    CHECK(std::round(out.rows[0].coordinate * 1000) / 1000 == 1.742);
}

TEST_CASE("sweep wrappers check the kind") {
    SweepOptions opts;
    opts.run_dir = scratch_dir("wrappers");
    CHECK_THROWS_AS(sweep_scan_range(tiny_spec(), opts), std::invalid_argument);
    CHECK_THROWS_AS(sweep_target_amplitude(tiny_spec(), opts), std::invalid_argument);
    CHECK_THROWS_AS(run_sweep(tiny_spec(), SweepOptions{}), std::invalid_argument);
}

TEST_CASE("plot svg") {
    auto a = sample_row();
    auto b = sample_row();
    b.variant = Variant::hd_cnn;
    b.p_relative = 0.3;
    auto c = b;
    c.coordinate = -9.0;
    std::stringstream ss;
    write_plot_svg(ss, {RowSeries{"m = -10.5 dB", {a, b, c}}}, {"title & more", "x"});
    const auto svg = ss.str();
    CHECK(svg.rfind("<svg", 0) == 0);
    CHECK(svg.find("</svg>") != std::string::npos);
    CHECK(svg.find("title &amp; more") != std::string::npos);
    CHECK(svg.find("Helstrom limit") != std::string::npos);
    CHECK(svg.find("polyline") != std::string::npos);
    std::stringstream empty;
    CHECK_THROWS(write_plot_svg(empty, {}, {}));
}

TEST_CASE("config parsing") {
    const auto cfg = parse_config(R"({
        "sweep": "scan-range",
        "widths": [20, 8],
        "seed": 9,
        "replicates": 1,
        "output_dir": "out",
        "workers": 2,
        "gnn": {"learning_rate": 0.001, "init": "glorot-uniform", "dropout_reading": "keep"},
        "cnn": {"fc_units": [40, 5], "dropout_rates": [0.5, 0.1]}
    })");
    CHECK(cfg.spec.kind == SweepKind::scan_range);
    CHECK(cfg.spec.message_db == std::vector<double>{-10.5, -9.3});
    CHECK(cfg.spec.widths == std::vector<std::size_t>{20, 8});
    CHECK(cfg.spec.base_seed == 9);
    CHECK(cfg.workers == 2);
    CHECK(cfg.output_dir == "out");
    CHECK(cfg.spec.gnn.learning_rate == 0.001);
    CHECK(cfg.spec.gnn.init == nn::InitScheme::glorot_uniform);
    CHECK(cfg.spec.gnn.dropout_reading == DropoutReading::keep_probability);
    CHECK(cfg.spec.cnn.fc_units == std::array<std::size_t, 2>{40, 5});
    CHECK(cfg.spec.cnn.dropout_rates == std::array<double, 2>{0.5, 0.1});
    CHECK(run_directory(cfg) == fs::path("out") / (config_hash(cfg.spec) + "-s9"));
}

TEST_CASE("config errors are itemized") {
    auto problems_of = [](std::string_view text) {
        try {
            parse_config(text);
        } catch (const ConfigError& e) {
            return e.problems();
        }
        return std::vector<std::string>{};
    };
    auto unknown = problems_of(R"({"sweep": "message-amplitude", "epochs": 3})");
    REQUIRE(unknown.size() == 1);
    CHECK(unknown[0].find("'epochs'") != std::string::npos);

    auto nested = problems_of(R"({"sweep": "message-amplitude", "gnn": {"lr": 3}})");
    REQUIRE(nested.size() == 1);
    CHECK(nested[0].find("gnn.lr") != std::string::npos);

    CHECK(problems_of(R"({"seed": 1})").size() == 1);
    CHECK(problems_of(R"({"sweep": "fig5"})").size() == 1);
    CHECK(problems_of("{").size() == 1);
    CHECK(problems_of("[]").size() == 1);
    CHECK(problems_of(R"({"sweep": "message-amplitude", "seed": -1, "widths": "30", "cnn": 4})").size() == 3);
    CHECK(problems_of(R"({"sweep": "message-amplitude", "replicates": 0, "message_db": []})").size() == 2);
    CHECK(problems_of(R"({"sweep": "target-amplitude", "gnn": {"init": "zeros"}})").size() == 1);
    CHECK(problems_of(R"({"sweep": "target-amplitude", "cnn": {"fc_units": [1, 2, 3]}})").size() == 1);
    CHECK(problems_of(R"({"sweep": "target-amplitude"})").empty());
}

TEST_CASE("config hash and snapshot") {
    const auto a = SweepSpec::defaults(SweepKind::message_amplitude);
    auto b = a;
    b.base_seed = 2;
    CHECK(config_hash(a) == config_hash(a));
    CHECK(config_hash(a).size() == 16);
    CHECK(config_hash(a) != config_hash(b));
    CHECK(canonical_json(a).find("\"sweep\": \"message-amplitude\"") != std::string::npos);

    // parsing the canonical form reproduces the spec
    const auto round = parse_config(canonical_json(b));
    CHECK(canonical_json(round.spec) == canonical_json(b));
}

TEST_CASE("run_config") {
    const auto dir = scratch_dir("config");
    ExperimentConfig cfg;
    cfg.spec = tiny_spec();
    cfg.output_dir = dir;
    cfg.workers = 1;
    const auto result = run_config(cfg);
    CHECK(result.exit_status() == 0);
    CHECK(result.run_dir == run_directory(cfg));
    CHECK(slurp(result.run_dir / "config.snapshot") == canonical_json(cfg.spec));
    CHECK(fs::exists(result.run_dir / "results.csv"));

    // a different config cannot reuse the directory
    fs::create_directories(dir / "clash");
    std::ofstream(dir / "clash" / "config.snapshot") << "{}";
    ExperimentConfig other = cfg;
    other.output_dir = dir / "clash-root";
    const auto clash_dir = run_directory(other);
    fs::create_directories(clash_dir);
    std::ofstream(clash_dir / "config.snapshot") << "{}";
    CHECK_THROWS_AS(run_config(other), std::runtime_error);

    const auto file = dir / "cfg.json";
    std::ofstream(file) << R"({"sweep": "message-amplitude", "bogus": 1})";
    CHECK_THROWS_AS(run_config(file), ConfigError);
    CHECK_THROWS_AS(load_config(dir / "absent.json"), ConfigError);
}

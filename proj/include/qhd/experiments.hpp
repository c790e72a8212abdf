#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <string>
#include <string_view>
#include <vector>

#include "qhd/receiver.hpp"

namespace qhd {

enum class SweepKind : std::uint8_t { target_amplitude, scan_range, message_amplitude };

std::string_view to_string(SweepKind kind) noexcept;
SweepKind parse_sweep_kind(std::string_view text);

/// One sweep: every (coordinate, message level, replicate) point trains a GNN
/// (and reuses a CNN per target level, width and replicate) and reports both
/// receiver variants.
struct SweepSpec {
    SweepKind kind = SweepKind::message_amplitude;
    std::vector<double> message_db;      ///< |alpha_m| levels
    std::vector<double> target_db;       ///< |alpha'| levels
    std::vector<std::size_t> widths;     ///< image widths (scan range)
    std::size_t train_per_key = 200;
    std::size_t test_per_key = 90;
    std::size_t cnn_held_out_per_key = 30;
    std::size_t gnn_epochs = 150;
    std::size_t cnn_epochs = 10;
    std::uint64_t base_seed = 1;
    std::size_t replicates = 3;
    GnnConfig gnn;  ///< optimizer and dropout knobs; width, epochs and seed are set per job
    CnnConfig cnn;

    /// Default grids for each sweep kind.
    static SweepSpec defaults(SweepKind kind);

    /// Every violated invariant, one message each; empty when valid.
    [[nodiscard]] std::vector<std::string> problems() const;
    void validate() const;

    /// Number of (GNN, evaluation) jobs; each yields one row per variant.
    [[nodiscard]] std::size_t planned_jobs() const noexcept {
        return target_db.size() * widths.size() * message_db.size() * replicates;
    }

    /// Seed of replicate r; all datasets and models of that replicate derive from it.
    [[nodiscard]] std::uint64_t replicate_seed(std::size_t r) const noexcept { return base_seed + r; }
};

/// `count` values uniform over [first, last], endpoints included.
std::vector<double> uniform_grid(double first, double last, std::size_t count);

enum class Variant : std::uint8_t { hd_cnn, hd_gnn_cnn };

std::string_view to_string(Variant v) noexcept;
Variant parse_variant(std::string_view text);

struct ResultRow {
    double coordinate = 0.0;  ///< dB for amplitude sweeps, gamma_max / pi for the scan-range sweep
    Variant variant = Variant::hd_cnn;
    double p_network = 0.0;
    double p_err = 0.0;
    double p_relative = 0.0;
    double p_relative_hd = 0.0;
    double p_hel = 0.0;
    std::uint64_t seed = 0;
    std::size_t replicate = 0;

    friend bool operator==(const ResultRow&, const ResultRow&) = default;
};

inline constexpr std::string_view kResultsHeader =
    "coordinate,variant,p_network,p_err,p_relative,p_relative_hd,p_hel,seed,replicate";

void write_results(std::ostream& out, const std::vector<ResultRow>& rows);
std::vector<ResultRow> read_results(std::istream& in);

/// Writes the CSV atomically; rejects an empty row set or an unwritable path.
void emit_results(const std::vector<ResultRow>& rows, const std::filesystem::path& path);
std::vector<ResultRow> load_results(const std::filesystem::path& path);

/// Rows sharing one curve label (usually one message level), for plotting.
struct RowSeries {
    std::string label;
    std::vector<ResultRow> rows;
};

struct PlotLabels {
    std::string title;
    std::string x_label;
};

/// SVG line plot of p_relative against the coordinate, one line per
/// (series, variant), plus each series' relative homodyne limit and the zero
/// Helstrom baseline. Replicates are averaged per coordinate.
void write_plot_svg(std::ostream& out, const std::vector<RowSeries>& series, const PlotLabels& labels);
void emit_plot(const std::vector<RowSeries>& series, const PlotLabels& labels, const std::filesystem::path& path);

struct SweepOptions {
    std::filesystem::path run_dir;
    std::size_t workers = 0;  ///< 0 picks the hardware concurrency
    bool plot = false;
    std::ostream* log = nullptr;
};

struct SweepOutcome {
    std::vector<ResultRow> rows;     ///< in job order
    std::vector<RowSeries> series;   ///< same rows grouped by message level
    std::vector<std::string> errors; ///< one per failed job
    std::size_t jobs_run = 0;
    std::size_t jobs_skipped = 0;    ///< already had their row artifact
};

/// Runs (or resumes) a sweep inside opts.run_dir:
///   datasets/  full-scan training and test sets
///   models/    trained CNNs and GNNs
///   rows/      one CSV fragment per job
///   results.csv, and per-message-level CSVs when there are several levels
/// Jobs whose row fragment exists are skipped. A failing job records
/// rows/<job>.error and leaves the other jobs alone.
SweepOutcome run_sweep(const SweepSpec& spec, const SweepOptions& opts);

SweepOutcome sweep_target_amplitude(const SweepSpec& spec, const SweepOptions& opts);
SweepOutcome sweep_scan_range(const SweepSpec& spec, const SweepOptions& opts);
SweepOutcome sweep_message_amplitude(const SweepSpec& spec, const SweepOptions& opts);

}  // namespace qhd

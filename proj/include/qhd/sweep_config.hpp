#pragma once

#include <filesystem>
#include <iosfwd>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "qhd/experiments.hpp"

namespace qhd {

/// Experiment config file (JSON). Keys:
///   sweep                 "target-amplitude" | "scan-range" | "message-amplitude" (required)
///   message_db, target_db arrays of dB levels; widths: array of even widths in [4, 30]
///   train_per_key, test_per_key, cnn_held_out_per_key, gnn_epochs, cnn_epochs,
///   seed, replicates      non-negative integers
///   output_dir            run root, default "runs"; workers: pool size, 0 = all cores
///   gnn, cnn              objects: learning_rate, batch_size, adam_epsilon,
///                         dropout_reading ("drop" | "keep"), init ("he-normal" | "glorot-uniform");
///                         gnn also dropout_rate and center_input (bool);
///                         cnn also fc_units [2], dropout_rates [2]
/// Omitted grids fall back to the sweep kind's defaults.
struct ExperimentConfig {
    SweepSpec spec;
    std::filesystem::path output_dir = "runs";
    std::size_t workers = 0;
};

class ConfigError : public std::invalid_argument {
public:
    explicit ConfigError(std::vector<std::string> problems);
    [[nodiscard]] const std::vector<std::string>& problems() const noexcept { return problems_; }

private:
    std::vector<std::string> problems_;
};

/// Throws ConfigError listing every problem found (syntax, unknown keys,
/// wrong types, and sweep invariants).
ExperimentConfig parse_config(std::string_view json_text);
ExperimentConfig load_config(const std::filesystem::path& path);

/// Stable JSON rendering of every setting that affects results.
std::string canonical_json(const SweepSpec& spec);
/// 16 hex digits of the 64-bit FNV-1a hash of canonical_json(spec).
std::string config_hash(const SweepSpec& spec);
/// output_dir / "<hash>-s<seed>"
std::filesystem::path run_directory(const ExperimentConfig& cfg);

struct RunConfigOptions {
    bool plot = false;
    std::optional<std::size_t> workers;
    std::ostream* log = nullptr;
};

struct RunConfigResult {
    std::filesystem::path run_dir;
    SweepOutcome outcome;
    [[nodiscard]] int exit_status() const noexcept { return outcome.errors.empty() ? 0 : 1; }
};

/// Loads, validates and executes a config. Writes config.snapshot into the
/// run directory and refuses a directory whose snapshot differs.
RunConfigResult run_config(const ExperimentConfig& cfg, const RunConfigOptions& opts = {});
RunConfigResult run_config(const std::filesystem::path& config_path, const RunConfigOptions& opts = {});

}  // namespace qhd

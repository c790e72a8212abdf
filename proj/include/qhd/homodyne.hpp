#pragma once

#include <cstdint>
#include <filesystem>
#include <random>
#include <string>
#include <string_view>
#include <vector>

#include "qhd/limits.hpp"

namespace qhd {

/// Scanned local-oscillator geometry. Sample i of a trace is taken at LO
/// phase gamma_max * i / total_points (half-open grid). A scan produced from
/// the 900-point reference grid has gamma_max = (M/900) * 2pi.
class LoScan {
public:
    static constexpr std::size_t kReferencePoints = 900;
    static constexpr double kDefaultLoAmplitude = 100.0;

    /// First width*width points of the 900-point 2pi reference grid.
    static LoScan from_width(std::size_t width, double lo_amplitude = kDefaultLoAmplitude);
    static LoScan full(double lo_amplitude = kDefaultLoAmplitude) { return from_width(30, lo_amplitude); }

    [[nodiscard]] std::size_t total_points() const noexcept { return total_points_; }
    [[nodiscard]] std::size_t width() const noexcept { return width_; }
    [[nodiscard]] double gamma_max() const noexcept { return gamma_max_; }
    [[nodiscard]] double lo_amplitude() const noexcept { return lo_amplitude_; }
    [[nodiscard]] double gamma(std::size_t i) const noexcept {
        return gamma_max_ * static_cast<double>(i) / static_cast<double>(total_points_);
    }
    [[nodiscard]] bool is_full() const noexcept { return total_points_ == kReferencePoints; }

    friend bool operator==(const LoScan&, const LoScan&) = default;

private:
    LoScan(std::size_t width, double lo_amplitude);
    std::size_t width_ = 0;
    std::size_t total_points_ = 0;
    double gamma_max_ = 0.0;
    double lo_amplitude_ = kDefaultLoAmplitude;
};

enum class PixelUnits : std::uint8_t { raw_counts, normalized };

struct QuadratureImage {
    std::size_t width = 0;
    std::vector<double> pixels;  // row-major, width*width
    PixelUnits units = PixelUnits::normalized;
};

enum class DatasetRole : std::uint8_t { gnn_input, gnn_target, cnn_train, test };

std::string_view to_string(DatasetRole role) noexcept;
DatasetRole parse_role(std::string_view text);

struct LabeledImage {
    QuadratureImage image;
    QpskKey key;
};

/// Entries are stored in four equal key blocks: key 1 first, then 2, 3, 4.
struct HomodyneDataset {
    std::vector<LabeledImage> entries;
    double signal_db = 0.0;
    LoScan scan = LoScan::full();
    std::uint64_t seed = 0;
    DatasetRole role = DatasetRole::test;

    [[nodiscard]] std::size_t per_key() const noexcept { return entries.size() / QpskKey::kCount; }
    [[nodiscard]] std::size_t width() const noexcept { return scan.width(); }
};

/// Expected balanced-detector difference count 2*beta*|alpha|*cos(gamma - phi).
double homodyne_mean(Amplitude a, double phi, double gamma, double beta) noexcept;

/// One balanced-detector difference count at a fixed LO phase.
double sample_count(Amplitude a, double phi, double gamma, double beta, std::mt19937_64& rng);

/// One Gaussian draw per scan point with mean homodyne_mean and std beta.
std::vector<double> sample_trace(QpskKey key, Amplitude a, const LoScan& scan, std::mt19937_64& rng);

/// Noise-free mean trace, in raw counts.
std::vector<double> mean_trace(QpskKey key, Amplitude a, const LoScan& scan);

// Fixed quadrature window mapped onto pixel range [0,1].
inline constexpr double kQuadratureWindow = 10.0;

double count_to_pixel(double count, double beta) noexcept;
/// Inverse of count_to_pixel for unclamped pixels.
double pixel_to_count(double pixel, double beta) noexcept;

/// Maps counts to pixels and reshapes row-major; rejects non-square lengths.
QuadratureImage normalize_to_image(const std::vector<double>& raw, double beta);

/// Normalized noise-free image of a key, used as a reconstruction reference.
QuadratureImage noiseless_image(QpskKey key, Amplitude a, const LoScan& scan);

/// Per-entry stream seed for entry index i of a dataset seeded with `seed`.
std::uint64_t entry_seed(std::uint64_t seed, std::size_t entry_index) noexcept;

HomodyneDataset generate_dataset(double signal_db, std::size_t n_per_key, const LoScan& scan,
                                 std::uint64_t seed, DatasetRole role = DatasetRole::test);

/// Keeps the first width^2 samples of every trace of a full-scan dataset.
HomodyneDataset slice_scan(const HomodyneDataset& ds, std::size_t target_width);

void save_dataset(const HomodyneDataset& ds, const std::filesystem::path& path);
HomodyneDataset load_dataset(const std::filesystem::path& path);
/// `<basename>.meta.json` next to a dataset file.
std::filesystem::path metadata_path(const std::filesystem::path& dataset_path);

}  // namespace qhd

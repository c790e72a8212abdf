#include "qhd/homodyne.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numbers>
#include <stdexcept>

#include <nlohmann/json.hpp>

#include "qhd/detail/atomic_file.hpp"
#include "qhd/detail/binary_io.hpp"
#include "qhd/detail/seed.hpp"

namespace qhd {

namespace {

std::size_t exact_sqrt(std::size_t n) {
    auto r = static_cast<std::size_t>(std::llround(std::sqrt(static_cast<double>(n))));
    return r * r == n ? r : 0;
}

constexpr char kDatasetMagic[] = "QHD1";

}  // namespace

LoScan::LoScan(std::size_t width, double lo_amplitude)
    : width_(width),
      total_points_(width * width),
      gamma_max_(static_cast<double>(width * width) / static_cast<double>(kReferencePoints) * 2.0 *
                 std::numbers::pi),
      lo_amplitude_(lo_amplitude) {}

LoScan LoScan::from_width(std::size_t width, double lo_amplitude) {
    if (width < 4 || width * width > kReferencePoints) {
        throw std::invalid_argument("scan width must satisfy 16 <= width^2 <= 900, got " +
                                    std::to_string(width));
    }
    if (!(lo_amplitude > 0.0) || !std::isfinite(lo_amplitude)) {
        throw std::invalid_argument("local oscillator amplitude must be positive");
    }
    return LoScan(width, lo_amplitude);
}

std::string_view to_string(DatasetRole role) noexcept {
    switch (role) {
        case DatasetRole::gnn_input: return "gnn-input";
        case DatasetRole::gnn_target: return "gnn-target";
        case DatasetRole::cnn_train: return "cnn-train";
        case DatasetRole::test: return "test";
    }
    return "test";
}

DatasetRole parse_role(std::string_view text) {
    for (auto r : {DatasetRole::gnn_input, DatasetRole::gnn_target, DatasetRole::cnn_train, DatasetRole::test}) {
        if (to_string(r) == text) return r;
    }
    throw std::invalid_argument("unknown dataset role: " + std::string(text));
}

double homodyne_mean(Amplitude a, double phi, double gamma, double beta) noexcept {
    return 2.0 * beta * a.linear() * std::cos(gamma - phi);
}

std::vector<double> mean_trace(QpskKey key, Amplitude a, const LoScan& scan) {
    std::vector<double> trace(scan.total_points());
    for (std::size_t i = 0; i < trace.size(); ++i) {
        trace[i] = homodyne_mean(a, key.phase(), scan.gamma(i), scan.lo_amplitude());
    }
    return trace;
}

double sample_count(Amplitude a, double phi, double gamma, double beta, std::mt19937_64& rng) {
    std::normal_distribution<double> noise(homodyne_mean(a, phi, gamma, beta), beta);
    return noise(rng);
}

std::vector<double> sample_trace(QpskKey key, Amplitude a, const LoScan& scan, std::mt19937_64& rng) {
    std::vector<double> trace(scan.total_points());
    for (std::size_t i = 0; i < trace.size(); ++i) {
        trace[i] = sample_count(a, key.phase(), scan.gamma(i), scan.lo_amplitude(), rng);
    }
    return trace;
}

double count_to_pixel(double count, double beta) noexcept {
    const double q = count / (2.0 * beta);
    return std::clamp((q + kQuadratureWindow) / (2.0 * kQuadratureWindow), 0.0, 1.0);
}

double pixel_to_count(double pixel, double beta) noexcept {
    const double q = pixel * 2.0 * kQuadratureWindow - kQuadratureWindow;
    return q * 2.0 * beta;
}

QuadratureImage normalize_to_image(const std::vector<double>& raw, double beta) {
    const auto width = exact_sqrt(raw.size());
    if (width == 0) {
        throw std::invalid_argument("trace length " + std::to_string(raw.size()) + " is not a perfect square");
    }
    QuadratureImage img{width, std::vector<double>(raw.size()), PixelUnits::normalized};
    std::transform(raw.begin(), raw.end(), img.pixels.begin(),
                   [beta](double n) { return count_to_pixel(n, beta); });
    return img;
}

QuadratureImage noiseless_image(QpskKey key, Amplitude a, const LoScan& scan) {
    return normalize_to_image(mean_trace(key, a, scan), scan.lo_amplitude());
}

std::uint64_t entry_seed(std::uint64_t seed, std::size_t entry_index) noexcept {
    return detail::derive_seed(seed, {static_cast<std::uint64_t>(entry_index)});
}

HomodyneDataset generate_dataset(double signal_db, std::size_t n_per_key, const LoScan& scan,
                                 std::uint64_t seed, DatasetRole role) {
    if (n_per_key == 0) throw std::invalid_argument("generate_dataset: n_per_key must be >= 1");
    const auto amplitude = Amplitude::from_db(signal_db);
    HomodyneDataset ds{{}, signal_db, scan, seed, role};
    ds.entries.reserve(n_per_key * QpskKey::kCount);
    std::size_t index = 0;
    for (auto key : all_keys()) {
        for (std::size_t i = 0; i < n_per_key; ++i, ++index) {
            std::mt19937_64 rng(entry_seed(seed, index));
            ds.entries.push_back(
                {normalize_to_image(sample_trace(key, amplitude, scan, rng), scan.lo_amplitude()), key});
        }
    }
    return ds;
}

HomodyneDataset slice_scan(const HomodyneDataset& ds, std::size_t target_width) {
    if (!ds.scan.is_full()) throw std::invalid_argument("slice_scan requires a full 900-point scan");
    if (target_width % 2 != 0 || target_width < 4 || target_width > 30) {
        throw std::invalid_argument("slice width must be even and in [4,30], got " + std::to_string(target_width));
    }
    HomodyneDataset out{{}, ds.signal_db, LoScan::from_width(target_width, ds.scan.lo_amplitude()), ds.seed,
                        ds.role};
    const auto keep = target_width * target_width;
    out.entries.reserve(ds.entries.size());
    for (const auto& e : ds.entries) {
        QuadratureImage img{target_width, {e.image.pixels.begin(), e.image.pixels.begin() + keep},
                            e.image.units};
        out.entries.push_back({std::move(img), e.key});
    }
    return out;
}

std::filesystem::path metadata_path(const std::filesystem::path& dataset_path) {
    auto p = dataset_path;
    p.replace_extension(".meta.json");
    return p;
}

void save_dataset(const HomodyneDataset& ds, const std::filesystem::path& path) {
    const auto w = ds.width();
    for (const auto& e : ds.entries) {
        if (e.image.width != w || e.image.pixels.size() != w * w) {
            throw std::invalid_argument("save_dataset: entry geometry does not match the scan");
        }
    }
    detail::write_atomically(path, [&](std::ostream& out) {
        detail::write_magic(out, {kDatasetMagic, 4});
        detail::write_le<std::uint32_t>(out, static_cast<std::uint32_t>(w));
        detail::write_le<std::uint32_t>(out, static_cast<std::uint32_t>(ds.per_key()));
        detail::write_f64(out, ds.signal_db);
        detail::write_le<std::uint64_t>(out, ds.seed);
        for (const auto& e : ds.entries) {
            out.put(static_cast<char>(e.key.index()));
            detail::write_f64s(out, e.image.pixels);
        }
    });
    nlohmann::ordered_json meta;
    meta["magic"] = "QHD1";
    meta["width"] = w;
    meta["per_key"] = ds.per_key();
    meta["signal_db"] = ds.signal_db;
    meta["seed"] = ds.seed;
    meta["role"] = std::string(to_string(ds.role));
    meta["total_points"] = ds.scan.total_points();
    meta["gamma_max"] = ds.scan.gamma_max();
    meta["lo_amplitude"] = ds.scan.lo_amplitude();
    detail::write_atomically(
        metadata_path(path), [&](std::ostream& out) { out << meta.dump(2) << '\n'; }, false);
}

HomodyneDataset load_dataset(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open dataset " + path.string());
    detail::expect_magic(in, {kDatasetMagic, 4});
    const auto width = detail::read_le<std::uint32_t>(in);
    const auto per_key = detail::read_le<std::uint32_t>(in);
    const double signal_db = detail::read_f64(in);
    const auto seed = detail::read_le<std::uint64_t>(in);

    double beta = LoScan::kDefaultLoAmplitude;
    auto role = DatasetRole::test;
    if (std::ifstream meta_in(metadata_path(path)); meta_in) {
        const auto meta = nlohmann::json::parse(meta_in);
        if (meta.contains("lo_amplitude")) beta = meta.at("lo_amplitude").get<double>();
        if (meta.contains("role")) role = parse_role(meta.at("role").get<std::string>());
    }
    HomodyneDataset ds{{}, signal_db, LoScan::from_width(width, beta), seed, role};
    const std::size_t n = static_cast<std::size_t>(per_key) * QpskKey::kCount;
    ds.entries.reserve(n);
    for (std::size_t i = 0; i < n; ++i) {
        const int key_byte = in.get();
        if (key_byte == std::char_traits<char>::eof()) throw std::runtime_error("dataset truncated");
        QuadratureImage img{width, std::vector<double>(std::size_t{width} * width), PixelUnits::normalized};
        detail::read_f64s(in, img.pixels);
        ds.entries.push_back({std::move(img), QpskKey::from_index(key_byte)});
    }
    detail::expect_eof(in);
    for (std::size_t i = 0; i < n; ++i) {
        if (ds.entries[i].key.label() != i / per_key) {
            throw std::runtime_error("dataset entries are not grouped in equal key blocks");
        }
    }
    return ds;
}

}  // namespace qhd

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <numbers>
#include <set>

#include "qhd/homodyne.hpp"

using namespace qhd;
namespace fs = std::filesystem;

namespace {

fs::path scratch_dir(const std::string& name) {
    auto dir = fs::temp_directory_path() / ("qhd_test_homodyne_" + name);
    fs::remove_all(dir);
    fs::create_directories(dir);
    return dir;
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    return {std::istreambuf_iterator<char>(in), {}};
}

}  // namespace

TEST_CASE("scan geometry") {
    const auto full = LoScan::full();
    CHECK(full.total_points() == 900);
    CHECK(full.gamma_max() == doctest::Approx(2 * std::numbers::pi).epsilon(1e-15));
    CHECK(full.gamma(450) == doctest::Approx(std::numbers::pi).epsilon(1e-15));
    CHECK(full.lo_amplitude() == 100.0);
    const auto s28 = LoScan::from_width(28);
    CHECK(s28.gamma_max() / std::numbers::pi == doctest::Approx(784.0 / 450.0).epsilon(1e-15));
    CHECK(LoScan::from_width(4).total_points() == 16);
    CHECK_THROWS_AS(LoScan::from_width(3), std::invalid_argument);
    CHECK_THROWS_AS(LoScan::from_width(31), std::invalid_argument);
    CHECK_THROWS_AS(LoScan::from_width(30, 0.0), std::invalid_argument);
}

TEST_CASE("homodyne mean") {
    const auto a = Amplitude::from_linear(0.5);
    CHECK(homodyne_mean(a, 1.0, 1.0, 100.0) == doctest::Approx(100.0));
    CHECK(std::fabs(homodyne_mean(a, 1.0, 1.0 + std::numbers::pi / 2, 100.0)) < 1e-12);
    const double phi = qpsk_phase(2);
    CHECK(homodyne_mean(Amplitude::from_db(-10.5), phi, phi, 100.0) ==
          doctest::Approx(17.825018762674911).epsilon(1e-14));
}

TEST_CASE("sampler statistics at fixed LO phase") {
    std::mt19937_64 rng(7);
    const double beta = 100.0;
    const auto a = Amplitude::from_db(-10.5);
    const double phi = qpsk_phase(1);
    const int n = 100000;
    double sum = 0.0, sum2 = 0.0;
    for (int i = 0; i < n; ++i) {
        const double v = sample_count(a, phi, phi, beta, rng);
        sum += v;
        sum2 += v * v;
    }
    const double mean = sum / n;
    const double var = (sum2 - n * mean * mean) / (n - 1);
    CHECK(std::fabs(mean - homodyne_mean(a, phi, phi, beta)) < 5.0 * beta / std::sqrt(n));
    CHECK(std::fabs(var / (beta * beta) - 1.0) < 0.05);
}

TEST_CASE("vacuum traces are zero-mean with std beta") {
    std::mt19937_64 rng(11);
    const auto scan = LoScan::full();
    double sum = 0.0, sum2 = 0.0;
    const int traces = 50;
    for (int t = 0; t < traces; ++t) {
        for (double v : sample_trace(QpskKey::from_index(3), Amplitude{}, scan, rng)) {
            sum += v;
            sum2 += v * v;
        }
    }
    const double n = traces * 900.0;
    CHECK(std::fabs(sum / n) < 5.0 * 100.0 / std::sqrt(n));
    CHECK(std::fabs(sum2 / n / 1e4 - 1.0) < 0.05);
}

TEST_CASE("pixel normalization") {
    const double beta = 100.0;
    CHECK(count_to_pixel(0.0, beta) == 0.5);
    CHECK(count_to_pixel(2 * beta * 10.0, beta) == 1.0);
    CHECK(count_to_pixel(2 * beta * 25.0, beta) == 1.0);
    CHECK(count_to_pixel(-2 * beta * 25.0, beta) == 0.0);
    const double q9 = db_to_linear(9.0);
    CHECK(count_to_pixel(2 * beta * q9, beta) == doctest::Approx(0.89716411736214075).epsilon(1e-14));

    std::mt19937_64 rng(3);
    std::uniform_real_distribution<double> u(1e-9, 1.0 - 1e-9);
    for (int i = 0; i < 1000; ++i) {
        const double p = u(rng);
        CHECK(std::fabs(count_to_pixel(pixel_to_count(p, beta), beta) - p) < 1e-14);
    }

    const auto img = normalize_to_image(std::vector<double>(16, 0.0), beta);
    CHECK(img.width == 4);
    CHECK(img.units == PixelUnits::normalized);
    CHECK_THROWS_AS(normalize_to_image(std::vector<double>(15, 0.0), beta), std::invalid_argument);
}

TEST_CASE("row-major reshape follows LO phase order") {
    const auto scan = LoScan::from_width(4);
    const auto key = QpskKey::from_index(1);
    const auto a = Amplitude::from_linear(5.0);
    const auto img = noiseless_image(key, a, scan);
    for (std::size_t i = 0; i < 16; ++i) {
        CHECK(img.pixels[i] == count_to_pixel(homodyne_mean(a, key.phase(), scan.gamma(i), 100.0), 100.0));
    }
}

TEST_CASE("dataset generation") {
    const auto scan = LoScan::full();
    const auto ds = generate_dataset(-10.5, 90, scan, 42);
    CHECK(ds.entries.size() == 360);
    CHECK(ds.per_key() == 90);
    for (std::size_t i = 0; i < ds.entries.size(); ++i) {
        CHECK(ds.entries[i].key.label() == i / 90);
        CHECK(ds.entries[i].image.width == 30);
        for (double p : ds.entries[i].image.pixels) {
            CHECK(p >= 0.0);
            CHECK(p <= 1.0);
        }
    }
    const auto again = generate_dataset(-10.5, 90, scan, 42);
    for (std::size_t i = 0; i < ds.entries.size(); ++i) CHECK(ds.entries[i].image.pixels == again.entries[i].image.pixels);
    CHECK_THROWS_AS(generate_dataset(-10.5, 0, scan, 1), std::invalid_argument);
}

TEST_CASE("datasets with different seeds share no image") {
    const auto scan = LoScan::from_width(8);
    const auto a = generate_dataset(-10.5, 50, scan, 1);
    const auto b = generate_dataset(-10.5, 50, scan, 2);
    std::set<std::vector<double>> seen;
    for (const auto& e : a.entries) seen.insert(e.image.pixels);
    CHECK(seen.size() == a.entries.size());
    for (const auto& e : b.entries) CHECK(seen.count(e.image.pixels) == 0);
}

TEST_CASE("slice_scan") {
    const auto ds = generate_dataset(-9.3, 3, LoScan::full(), 5);
    const auto same = slice_scan(ds, 30);
    for (std::size_t i = 0; i < ds.entries.size(); ++i) {
        CHECK(same.entries[i].image.pixels == ds.entries[i].image.pixels);
        CHECK(same.entries[i].key == ds.entries[i].key);
    }
    const auto s28 = slice_scan(ds, 28);
    CHECK(s28.width() == 28);
    CHECK(s28.scan.gamma_max() / std::numbers::pi == doctest::Approx(1.7422222222222).epsilon(1e-12));
    CHECK(std::round(s28.scan.gamma_max() / std::numbers::pi * 100) / 100 == 1.74);
    CHECK(std::round(slice_scan(ds, 24).scan.gamma_max() / std::numbers::pi * 100) / 100 == 1.28);
    for (std::size_t i = 0; i < ds.entries.size(); ++i) {
        CHECK(std::equal(s28.entries[i].image.pixels.begin(), s28.entries[i].image.pixels.end(),
                         ds.entries[i].image.pixels.begin()));
    }
    CHECK_THROWS_AS(slice_scan(ds, 27), std::invalid_argument);
    CHECK_THROWS_AS(slice_scan(ds, 2), std::invalid_argument);
    CHECK_THROWS_AS(slice_scan(s28, 20), std::invalid_argument);
}

TEST_CASE("dataset file round trip") {
    const auto dir = scratch_dir("io");
    auto ds = generate_dataset(-12.0, 5, LoScan::from_width(10), 99, DatasetRole::gnn_input);
    save_dataset(ds, dir / "a.qhd");
    CHECK(fs::file_size(dir / "a.qhd") == 4 + 4 + 4 + 8 + 8 + 20 * (1 + 8 * 100));
    CHECK(fs::exists(dir / "a.meta.json"));
    const auto raw = slurp(dir / "a.qhd");
    CHECK(raw.substr(0, 4) == "QHD1");
    CHECK(static_cast<unsigned char>(raw[4]) == 10);  // little-endian width

    const auto back = load_dataset(dir / "a.qhd");
    CHECK(back.signal_db == -12.0);
    CHECK(back.seed == 99);
    CHECK(back.role == DatasetRole::gnn_input);
    CHECK(back.scan == ds.scan);
    REQUIRE(back.entries.size() == ds.entries.size());
    for (std::size_t i = 0; i < ds.entries.size(); ++i) {
        CHECK(back.entries[i].key == ds.entries[i].key);
        CHECK(back.entries[i].image.pixels == ds.entries[i].image.pixels);
    }

    // identical generation parameters give byte-identical files
    save_dataset(generate_dataset(-12.0, 5, LoScan::from_width(10), 99, DatasetRole::gnn_input), dir / "b.qhd");
    CHECK(slurp(dir / "b.qhd") == raw);

    std::ofstream(dir / "bad.qhd", std::ios::binary) << raw.substr(0, raw.size() - 3);
    CHECK_THROWS(load_dataset(dir / "bad.qhd"));
    std::ofstream(dir / "magic.qhd", std::ios::binary) << "XXXX" << raw.substr(4);
    CHECK_THROWS(load_dataset(dir / "magic.qhd"));
}

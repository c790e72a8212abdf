#pragma once

#include <cstdint>
#include <filesystem>
#include <numbers>
#include <ostream>
#include <utility>
#include <vector>

namespace qhd {

/// One of the four QPSK constellation symbols. Index k is 1-based and the
/// carrier phase is (k - 1/2) * pi/2, i.e. pi/4, 3pi/4, 5pi/4, 7pi/4.
class QpskKey {
public:
    static constexpr int kCount = 4;

    /// Throws std::invalid_argument for k outside {1,2,3,4}.
    static QpskKey from_index(int k);
    /// Zero-based variant used for class labels and array offsets.
    static QpskKey from_label(std::size_t label);

    [[nodiscard]] int index() const noexcept { return k_; }
    [[nodiscard]] std::size_t label() const noexcept { return static_cast<std::size_t>(k_ - 1); }
    [[nodiscard]] double phase() const noexcept {
        return (k_ - 0.5) * std::numbers::pi / 2.0;
    }

    friend bool operator==(QpskKey, QpskKey) = default;

private:
    explicit constexpr QpskKey(int k) noexcept : k_(k) {}
    int k_;
};

/// All four keys in index order.
std::vector<QpskKey> all_keys();

/// Phase of symbol k in radians; rejects k outside {1,2,3,4}.
double qpsk_phase(int k);

/// Coherent-state magnitude |alpha|. Decibels follow the amplitude
/// convention 10*log10(|alpha|).
class Amplitude {
public:
    constexpr Amplitude() = default;

    static Amplitude from_linear(double linear);
    static Amplitude from_db(double db);

    [[nodiscard]] double linear() const noexcept { return linear_; }
    /// Throws std::domain_error when the amplitude is zero.
    [[nodiscard]] double db() const;

private:
    explicit constexpr Amplitude(double linear) noexcept : linear_(linear) {}
    double linear_ = 0.0;
};

double db_to_linear(double db) noexcept;
double linear_to_db(double linear);

/// Complementary error function, (2/sqrt(pi)) * integral_u^inf exp(-t^2) dt.
double erfc_eval(double u) noexcept;

/// Homodyne (standard quantum) limit for QPSK.
double p_err_homodyne(Amplitude a) noexcept;

/// Helstrom limit for QPSK. Evaluated with every cosh/sinh term pre-scaled by
/// exp(-|alpha|^2) and rearranged to avoid cancellation, so it stays finite
/// and relatively accurate for arbitrarily large amplitudes.
double p_err_helstrom(Amplitude a) noexcept;

struct ErrorBounds {
    double p_hd = 0.0;
    double p_hel = 0.0;
};

ErrorBounds error_bounds(Amplitude a) noexcept;

/// 1 - (1 - p_hd)(1 - p_network). Rejects arguments outside [0,1].
double combine_error(double p_hd, double p_network);

struct RelativeErrors {
    double p_relative = 0.0;     ///< p_err - p_hel
    double p_relative_hd = 0.0;  ///< p_hd - p_hel
};

RelativeErrors relative_errors(double p_err, double p_hd, double p_hel) noexcept;

struct LimitsRow {
    double alpha_db = 0.0;
    double alpha_linear = 0.0;
    double p_hd = 0.0;
    double p_hel = 0.0;
    double relative_hd = 0.0;
};

/// Grid min_db, min_db + step, ... up to and including max_db (within
/// half a step of rounding). Points are computed as min_db + i*step.
std::vector<LimitsRow> limits_table(double min_db, double max_db, double step_db);

void write_limits_csv(std::ostream& out, const std::vector<LimitsRow>& rows);

}  // namespace qhd

#include "qhd/limits.hpp"

#include <algorithm>
#include <cmath>
#include <fmt/format.h>
#include <stdexcept>
#include <string>

namespace qhd {

QpskKey QpskKey::from_index(int k) {
    if (k < 1 || k > kCount) {
        throw std::invalid_argument("QPSK key index must be in {1,2,3,4}, got " + std::to_string(k));
    }
    return QpskKey(k);
}

QpskKey QpskKey::from_label(std::size_t label) {
    if (label >= static_cast<std::size_t>(kCount)) {
        throw std::invalid_argument("QPSK label must be in [0,4), got " + std::to_string(label));
    }
    return QpskKey(static_cast<int>(label) + 1);
}

std::vector<QpskKey> all_keys() {
    return {QpskKey::from_index(1), QpskKey::from_index(2), QpskKey::from_index(3),
            QpskKey::from_index(4)};
}

double qpsk_phase(int k) { return QpskKey::from_index(k).phase(); }

Amplitude Amplitude::from_linear(double linear) {
    if (!(linear >= 0.0) || !std::isfinite(linear)) {
        throw std::invalid_argument("amplitude must be finite and non-negative");
    }
    return Amplitude(linear);
}

Amplitude Amplitude::from_db(double db) { return from_linear(db_to_linear(db)); }

double Amplitude::db() const { return linear_to_db(linear_); }

double db_to_linear(double db) noexcept { return std::pow(10.0, db / 10.0); }

double linear_to_db(double linear) {
    if (!(linear > 0.0)) {
        throw std::domain_error("linear_to_db requires a positive amplitude");
    }
    return 10.0 * std::log10(linear);
}

double erfc_eval(double u) noexcept { return std::erfc(u); }

double p_err_homodyne(Amplitude a) noexcept {
    const double e = erfc_eval(a.linear() / std::numbers::sqrt2);
    return e * (1.0 - 0.25 * e);
}

namespace {

// Below this |alpha|^2 the four roots are summed directly; above it the
// result is small and the cancellation-free expansion is used instead.
constexpr double kHelstromSwitch = 2.0;

// sinh(x) - sin(x) = 2 * sum_n x^(4n+3) / (4n+3)!, for small x.
double sinh_minus_sin(double x) {
    if (x >= kHelstromSwitch) return std::sinh(x) - std::sin(x);
    const double x4 = x * x * x * x;
    double term = x * x * x / 6.0;
    double sum = 0.0;
    for (int n = 0; n < 20 && term > 0.0; ++n) {
        sum += term;
        term *= x4 / static_cast<double>((4 * n + 4) * (4 * n + 5) * (4 * n + 6) * (4 * n + 7));
    }
    return 2.0 * sum;
}

double helstrom_direct(double x) {
    // Each term of the printed form multiplied by exp(-x) under its root.
    const double decay = std::exp(-x);
    const double em1 = std::expm1(-x);
    const double ch_plus_c = 0.5 * (1.0 + decay * decay) + decay * std::cos(x);
    const double sh_plus_s = -0.5 * std::expm1(-2.0 * x) + decay * std::sin(x);
    // cosh - cos = 2 sinh^2(x/2) + 2 sin^2(x/2)
    const double half_sin = std::sin(0.5 * x);
    const double ch_minus_c = 0.5 * em1 * em1 + 2.0 * decay * half_sin * half_sin;
    const double sh_minus_s = decay * sinh_minus_sin(x);
    const double sum = std::sqrt(ch_plus_c) + std::sqrt(sh_plus_s) + std::sqrt(ch_minus_c) + std::sqrt(sh_minus_s);
    return 1.0 - sum * sum / 8.0;
}

double helstrom_tail(double x) {
    // With e = exp(-2x), the scaled cosh/sinh terms are (1 +- e)/2. Expanding
    // the squared sum S^2 around its limit 8 gives
    //   8 - S^2 = -2(d1 + d2) - 2(4(d1 + d2) + hu*hv) / (uv + 2)
    // with d1, d2 the deviations of sqrt(ch^2 - c^2), sqrt(sh^2 - s^2) from
    // 1/2. Every term is O(e), so relative precision survives down to e/2.
    const double e = std::exp(-2.0 * x);
    const double sin_x = std::sin(x);
    const double eps1 = -0.5 * e * std::cos(2.0 * x) + 0.25 * e * e;  // ch^2 - c^2 - 1/4
    const double eps2 = -e * (0.5 + sin_x * sin_x) + 0.25 * e * e;    // sh^2 - s^2 - 1/4
    auto dev = [](double eps) { return eps / (std::sqrt(0.25 + eps) + 0.5); };
    const double d1 = dev(eps1);
    const double d2 = dev(eps2);
    const double hu = e + 2.0 * d1;   // (sqrt(ch+c) + sqrt(ch-c))^2 - 2
    const double hv = -e + 2.0 * d2;  // (sqrt(sh+s) + sqrt(sh-s))^2 - 2
    const double uv = std::sqrt((2.0 + hu) * (2.0 + hv));
    return (-2.0 * (d1 + d2) - 2.0 * (4.0 * (d1 + d2) + hu * hv) / (uv + 2.0)) / 8.0;
}

}  // namespace

double p_err_helstrom(Amplitude a) noexcept {
    const double x = a.linear() * a.linear();
    const double p = x < kHelstromSwitch ? helstrom_direct(x) : helstrom_tail(x);
    return std::clamp(p, 0.0, 1.0);
}

ErrorBounds error_bounds(Amplitude a) noexcept { return {p_err_homodyne(a), p_err_helstrom(a)}; }

double combine_error(double p_hd, double p_network) {
    auto in_unit = [](double p) { return p >= 0.0 && p <= 1.0; };
    if (!in_unit(p_hd) || !in_unit(p_network)) {
        throw std::invalid_argument("combine_error: probabilities must lie in [0,1]");
    }
    // a + b(1 - a) == 1 - (1 - a)(1 - b), exact for b == 0
    return p_hd + p_network * (1.0 - p_hd);
}

RelativeErrors relative_errors(double p_err, double p_hd, double p_hel) noexcept {
    return {p_err - p_hel, p_hd - p_hel};
}

std::vector<LimitsRow> limits_table(double min_db, double max_db, double step_db) {
    if (!(step_db > 0.0) || !(max_db >= min_db)) {
        throw std::invalid_argument("limits_table: need step > 0 and max >= min");
    }
    const auto n = static_cast<std::size_t>(std::floor((max_db - min_db) / step_db + 0.5)) + 1;
    std::vector<LimitsRow> rows;
    rows.reserve(n);
    for (std::size_t i = 0; i < n; ++i) {
        const double db = min_db + static_cast<double>(i) * step_db;
        const auto a = Amplitude::from_db(db);
        const auto b = error_bounds(a);
        rows.push_back({db, a.linear(), b.p_hd, b.p_hel, b.p_hd - b.p_hel});
    }
    return rows;
}

void write_limits_csv(std::ostream& out, const std::vector<LimitsRow>& rows) {
    out << "alpha_db,alpha_linear,p_hd,p_hel,relative_hd\n";
    for (const auto& r : rows) {
        out << fmt::format("{:.17g},{:.17g},{:.17g},{:.17g},{:.17g}\n", r.alpha_db, r.alpha_linear,
                           r.p_hd, r.p_hel, r.relative_hd);
    }
}

}  // namespace qhd

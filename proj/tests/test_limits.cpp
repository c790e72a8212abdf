#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <numbers>
#include <sstream>

#include "qhd/limits.hpp"

using namespace qhd;

namespace {

// Independent erfc reference: Maclaurin series for |u| <= 3, Laplace
// continued fraction beyond, both in long double.
long double erfc_reference(long double u) {
    if (u < 0) return 2.0L - erfc_reference(-u);
    const long double inv_sqrt_pi = 0.564189583547756286948079451560772586L;
    if (u <= 3.0L) {
        long double term = u;  // (-1)^n u^(2n+1) / n!
        long double sum = u;
        for (int n = 1; n < 200; ++n) {
            term *= -u * u / n;
            const long double add = term / (2 * n + 1);
            sum += add;
            if (std::fabs(add) < 1e-30L) break;
        }
        return 1.0L - 2.0L * inv_sqrt_pi * sum;
    }
    long double frac = u;
    for (int k = 300; k >= 1; --k) frac = u + (k / 2.0L) / frac;
    return std::exp(-u * u) * inv_sqrt_pi / frac;
}

}  // namespace

TEST_CASE("qpsk phases") {
    CHECK(qpsk_phase(1) == doctest::Approx(std::numbers::pi / 4).epsilon(1e-15));
    CHECK(qpsk_phase(3) == doctest::Approx(5 * std::numbers::pi / 4).epsilon(1e-15));
    CHECK(qpsk_phase(4) == doctest::Approx(7 * std::numbers::pi / 4).epsilon(1e-15));
    for (int k = 1; k <= 4; ++k) CHECK(QpskKey::from_index(k).phase() == (k - 0.5) * std::numbers::pi / 2);
    CHECK_THROWS_AS(qpsk_phase(0), std::invalid_argument);
    CHECK_THROWS_AS(qpsk_phase(5), std::invalid_argument);
    CHECK_THROWS_AS(QpskKey::from_label(4), std::invalid_argument);
    CHECK(QpskKey::from_label(2).index() == 3);
}

TEST_CASE("decibel conversions") {
    CHECK(db_to_linear(0.0) == 1.0);
    CHECK(db_to_linear(10.0) == doctest::Approx(10.0).epsilon(1e-15));
    // mpmath: 10^(-1.05)
    CHECK(std::fabs(db_to_linear(-10.5) - 0.08912509381337455) < 1e-16);
    CHECK_THROWS_AS(linear_to_db(0.0), std::domain_error);
    CHECK_THROWS_AS(Amplitude::from_linear(-1.0), std::invalid_argument);
    CHECK_THROWS((void)Amplitude::from_linear(0.0).db());
    for (double db = -20.0; db <= 20.0; db += 0.37) {
        CHECK(std::fabs(linear_to_db(db_to_linear(db)) - db) < 1e-12);
    }
}

TEST_CASE("erfc against series/continued-fraction oracle") {
    CHECK(erfc_eval(0.0) == 1.0);
    CHECK(erfc_eval(20.0) < 1e-170);
    // mpmath, 40 digits
    CHECK(std::fabs(erfc_eval(0.70711) - 0.31730830492307194) < 1e-15);
    double worst = 0.0;
    for (int i = -6000; i <= 6000; ++i) {
        const double u = i * 1e-3;
        worst = std::max(worst, std::fabs(erfc_eval(u) - static_cast<double>(erfc_reference(u))));
    }
    CHECK(worst < 1e-12);
    for (double u = 0.0; u <= 5.0; u += 0.01) CHECK(std::fabs(erfc_eval(u) + erfc_eval(-u) - 2.0) < 1e-12);
}

TEST_CASE("homodyne limit values") {
    CHECK(std::fabs(p_err_homodyne(Amplitude{}) - 0.75) < 1e-12);
    // mpmath evaluations of erfc(a/sqrt2)(1 - erfc(a/sqrt2)/4)
    CHECK(std::fabs(p_err_homodyne(Amplitude::from_linear(1.0)) - 0.29213901826285898) < 1e-13);
    CHECK(std::fabs(p_err_homodyne(Amplitude::from_db(-10.5)) - 0.71323037587265563) < 1e-13);
}

TEST_CASE("helstrom limit values") {
    CHECK(std::fabs(p_err_helstrom(Amplitude{}) - 0.75) < 1e-12);
    // mpmath evaluation of the printed closed form
    CHECK(std::fabs(p_err_helstrom(Amplitude::from_linear(1.0)) - 0.092421415604458983) < 1e-13);
    const auto a93 = Amplitude::from_db(-9.3);
    CHECK(std::fabs(p_err_homodyne(a93) - p_err_helstrom(a93) - 0.014735738131017209) < 1e-12);
    const auto a105 = Amplitude::from_db(-10.5);
    CHECK(std::fabs(p_err_homodyne(a105) - p_err_helstrom(a105) - 0.010631771633046935) < 1e-12);
}

TEST_CASE("helstrom matches the direct closed form for moderate amplitudes") {
    // literal transcription in long double; fine while cosh does not overflow
    auto direct = [](long double a) {
        const long double x = a * a;
        const long double s = std::sqrt(std::cosh(x) + std::cos(x)) + std::sqrt(std::sinh(x) + std::sin(x)) +
                              std::sqrt(std::cosh(x) - std::cos(x)) + std::sqrt(std::sinh(x) - std::sin(x));
        return 1.0L - std::exp(-x) * s * s / 8.0L;
    };
    for (double a = 0.0; a <= 1.6; a += 0.005) {
        CHECK(std::fabs(p_err_helstrom(Amplitude::from_linear(a)) - static_cast<double>(direct(a))) < 1e-14);
    }
}

TEST_CASE("helstrom keeps relative precision in the tail") {
    // mpmath at 300 digits
    struct Ref {
        double linear;
        double p;
    };
    const Ref refs[] = {
        {0.05, 0.72410989219368297539},
        {0.3, 0.56823595046204923796},
        {1.3, 0.018967422059689160882},
        {1.42, 0.0092224020491505525594},
        {1.5, 0.005639665870710402729},
        {1.8, 0.00076705845402400112374},
        {2.0, 1.678006606666146622e-4},
        {3.0, 7.6149899050657949801e-9},
        {5.0, 9.6437492398195889151e-23},
        {db_to_linear(3.0), 1.7427379044102245103e-4},
        {db_to_linear(9.0), 7.847139975427285347e-56},
        {db_to_linear(9.08), 6.8864340707857830341e-58},
    };
    for (const auto& r : refs) {
        CHECK(std::fabs(p_err_helstrom(Amplitude::from_linear(r.linear)) / r.p - 1.0) < 1e-12);
    }
}

TEST_CASE("helstrom stays finite for huge amplitudes") {
    for (double a : {20.0, 30.0, 1e3, 1e6}) {
        const double p = p_err_helstrom(Amplitude::from_linear(a));
        CHECK(std::isfinite(p));
        CHECK(p >= 0.0);
        CHECK(p < 1e-300);
    }
}

TEST_CASE("bounds ordering and monotonicity over the dB grid") {
    double prev_hd = 1.0, prev_hel = 1.0;
    for (int i = 0; i <= 96; ++i) {
        const auto a = Amplitude::from_db(-15.0 + 0.25 * i);
        const auto b = error_bounds(a);
        CHECK(0.0 <= b.p_hel);
        CHECK(b.p_hel <= b.p_hd);
        CHECK(b.p_hd <= 0.75);
        CHECK(b.p_hd < prev_hd);
        CHECK(b.p_hel < prev_hel);
        prev_hd = b.p_hd;
        prev_hel = b.p_hel;
    }
}

TEST_CASE("combine_error") {
    CHECK(combine_error(0.75, 0.0) == 0.75);
    CHECK(combine_error(0.0, 1.0) == 1.0);
    CHECK(combine_error(0.75, 0.1) == doctest::Approx(0.775).epsilon(1e-15));
    CHECK_THROWS_AS(combine_error(-0.1, 0.2), std::invalid_argument);
    CHECK_THROWS_AS(combine_error(0.1, 1.2), std::invalid_argument);
    for (int i = 0; i <= 20; ++i) {
        for (int j = 0; j <= 20; ++j) {
            const double p = i / 20.0, q = j / 20.0;
            CHECK(combine_error(p, q) == doctest::Approx(combine_error(q, p)).epsilon(1e-15));
            CHECK(combine_error(p, q) >= std::max(p, q) - 1e-15);
            if (j < 20) CHECK(combine_error(p, q) <= combine_error(p, (j + 1) / 20.0));
        }
        CHECK(combine_error(i / 20.0, 0.0) == i / 20.0);
    }
}

TEST_CASE("relative errors") {
    const auto z = relative_errors(0.75, 0.75, 0.75);
    CHECK(z.p_relative == 0.0);
    CHECK(z.p_relative_hd == 0.0);
    const auto a = Amplitude::from_db(-10.5);
    const auto b = error_bounds(a);
    const auto r = relative_errors(b.p_hd, b.p_hd, b.p_hel);
    CHECK(r.p_relative == r.p_relative_hd);
    CHECK(r.p_relative_hd == doctest::Approx(1.1e-2).epsilon(0.05));
}

TEST_CASE("limits table csv") {
    const auto rows = limits_table(-15.0, 9.0, 0.25);
    CHECK(rows.size() == 97);
    CHECK(rows.back().alpha_db == doctest::Approx(9.0));
    std::ostringstream out;
    write_limits_csv(out, limits_table(0.0, 1.0, 0.5));
    std::istringstream in(out.str());
    std::string line;
    std::getline(in, line);
    CHECK(line == "alpha_db,alpha_linear,p_hd,p_hel,relative_hd");
    int n = 0;
    while (std::getline(in, line)) ++n;
    CHECK(n == 3);
    CHECK_THROWS(limits_table(0.0, 1.0, 0.0));
}

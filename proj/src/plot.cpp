#include <algorithm>
#include <array>
#include <cmath>
#include <map>
#include <ostream>
#include <stdexcept>

#include <fmt/format.h>

#include "qhd/detail/atomic_file.hpp"
#include "qhd/experiments.hpp"

namespace qhd {

namespace {

constexpr double kWidth = 720, kHeight = 480;
constexpr double kLeft = 80, kRight = 230, kTop = 40, kBottom = 60;
constexpr std::array<std::string_view, 6> kColors{"#d62728", "#2ca02c", "#1f77b4", "#9467bd", "#ff7f0e", "#8c564b"};

struct Curve {
    std::string label;
    std::string_view color;
    std::string_view dash;
    std::vector<std::pair<double, double>> points;
};

// Averages over replicates; map keeps coordinates sorted.
std::vector<std::pair<double, double>> averaged(const std::vector<ResultRow>& rows, Variant v, bool hd_limit) {
    std::map<double, std::pair<double, std::size_t>> acc;
    for (const auto& r : rows) {
        if (!hd_limit && r.variant != v) continue;
        auto& [sum, n] = acc[r.coordinate];
        sum += hd_limit ? r.p_relative_hd : r.p_relative;
        ++n;
    }
    std::vector<std::pair<double, double>> out;
    for (const auto& [x, s] : acc) out.emplace_back(x, s.first / static_cast<double>(s.second));
    return out;
}

std::string escape(std::string_view s) {
    std::string out;
    for (char c : s) {
        switch (c) {
            case '&': out += "&amp;"; break;
            case '<': out += "&lt;"; break;
            case '>': out += "&gt;"; break;
            case '"': out += "&quot;"; break;
            default: out += c;
        }
    }
    return out;
}

double nice_step(double span, int target_ticks) {
    const double raw = span / target_ticks;
    const double mag = std::pow(10.0, std::floor(std::log10(raw)));
    for (double m : {1.0, 2.0, 5.0, 10.0}) {
        if (m * mag >= raw) return m * mag;
    }
    return 10.0 * mag;
}

}  // namespace

void write_plot_svg(std::ostream& out, const std::vector<RowSeries>& series, const PlotLabels& labels) {
    std::vector<Curve> curves;
    for (std::size_t i = 0; i < series.size(); ++i) {
        const auto color = kColors[i % kColors.size()];
        const auto& s = series[i];
        auto add = [&](std::string suffix, std::string_view dash, std::vector<std::pair<double, double>> pts) {
            if (!pts.empty()) curves.push_back({s.label + suffix, color, dash, std::move(pts)});
        };
        add(" hd-gnn-cnn", "", averaged(s.rows, Variant::hd_gnn_cnn, false));
        add(" hd-cnn", "6,4", averaged(s.rows, Variant::hd_cnn, false));
        add(" HD limit", "2,3", averaged(s.rows, Variant::hd_cnn, true));
    }
    if (curves.empty()) throw std::invalid_argument("plot needs at least one row");

    double x0 = INFINITY, x1 = -INFINITY, y1 = 0.0;
    for (const auto& c : curves) {
        for (auto [x, y] : c.points) {
            x0 = std::min(x0, x);
            x1 = std::max(x1, x);
            y1 = std::max(y1, y);
        }
    }
    if (x1 == x0) {
        x0 -= 1.0;
        x1 += 1.0;
    }
    if (y1 <= 0.0) y1 = 1.0;
    const double ystep = nice_step(y1, 5);
    y1 = std::ceil(y1 / ystep) * ystep;
    const double y0 = 0.0;
    const double pw = kWidth - kLeft - kRight, ph = kHeight - kTop - kBottom;
    auto sx = [&](double x) { return kLeft + (x - x0) / (x1 - x0) * pw; };
    auto sy = [&](double y) { return kTop + (1.0 - (y - y0) / (y1 - y0)) * ph; };

    out << fmt::format(R"(<svg xmlns="http://www.w3.org/2000/svg" width="{}" height="{}" font-family="sans-serif" font-size="12">)",
                       kWidth, kHeight)
        << '\n';
    out << fmt::format(R"(<rect width="{}" height="{}" fill="white"/>)", kWidth, kHeight) << '\n';
    out << fmt::format(R"(<text x="{}" y="22" text-anchor="middle" font-size="14">{}</text>)", kLeft + pw / 2,
                       escape(labels.title))
        << '\n';

    // axes and ticks
    out << fmt::format(R"(<rect x="{}" y="{}" width="{}" height="{}" fill="none" stroke="black"/>)", kLeft, kTop, pw, ph)
        << '\n';
    for (double y = y0; y <= y1 + ystep * 1e-9; y += ystep) {
        out << fmt::format(R"(<line x1="{:.2f}" y1="{:.2f}" x2="{:.2f}" y2="{:.2f}" stroke="#ddd"/>)", kLeft, sy(y),
                           kLeft + pw, sy(y))
            << '\n';
        out << fmt::format(R"(<text x="{:.2f}" y="{:.2f}" text-anchor="end">{:.3g}</text>)", kLeft - 6, sy(y) + 4, y)
            << '\n';
    }
    const double xstep = nice_step(x1 - x0, 6);
    for (double x = std::ceil(x0 / xstep) * xstep; x <= x1 + xstep * 1e-9; x += xstep) {
        out << fmt::format(R"(<line x1="{:.2f}" y1="{:.2f}" x2="{:.2f}" y2="{:.2f}" stroke="black"/>)", sx(x),
                           kTop + ph, sx(x), kTop + ph + 5)
            << '\n';
        out << fmt::format(R"(<text x="{:.2f}" y="{:.2f}" text-anchor="middle">{:.3g}</text>)", sx(x), kTop + ph + 18,
                           x)
            << '\n';
    }
    out << fmt::format(R"(<text x="{:.2f}" y="{:.2f}" text-anchor="middle">{}</text>)", kLeft + pw / 2,
                       kHeight - 15, escape(labels.x_label))
        << '\n';
    out << fmt::format(R"svg(<text transform="translate(20 {:.2f}) rotate(-90)" text-anchor="middle">relative P_err</text>)svg",
                       kTop + ph / 2)
        << '\n';

    // Helstrom baseline sits at zero by construction
    out << fmt::format(R"(<line x1="{:.2f}" y1="{:.2f}" x2="{:.2f}" y2="{:.2f}" stroke="black" stroke-width="2"/>)",
                       kLeft, sy(0.0), kLeft + pw, sy(0.0))
        << '\n';

    double ly = kTop + 10;
    auto legend = [&](std::string_view color, std::string_view dash, std::string_view text) {
        const double lx = kLeft + pw + 15;
        out << fmt::format(R"(<line x1="{:.2f}" y1="{:.2f}" x2="{:.2f}" y2="{:.2f}" stroke="{}" stroke-width="2")", lx,
                           ly, lx + 30, ly, color);
        if (!dash.empty()) out << fmt::format(R"( stroke-dasharray="{}")", dash);
        out << "/>\n";
        out << fmt::format(R"(<text x="{:.2f}" y="{:.2f}">{}</text>)", lx + 36, ly + 4, escape(text)) << '\n';
        ly += 18;
    };
    for (const auto& c : curves) {
        out << R"(<polyline fill="none" stroke-width="2" stroke=")" << c.color << '"';
        if (!c.dash.empty()) out << R"( stroke-dasharray=")" << c.dash << '"';
        out << R"( points=")";
        for (std::size_t i = 0; i < c.points.size(); ++i) {
            out << (i ? " " : "") << fmt::format("{:.2f},{:.2f}", sx(c.points[i].first), sy(c.points[i].second));
        }
        out << "\"/>\n";
        legend(c.color, c.dash, c.label);
    }
    legend("black", "", "Helstrom limit");
    out << "</svg>\n";
}

void emit_plot(const std::vector<RowSeries>& series, const PlotLabels& labels, const std::filesystem::path& path) {
    detail::write_atomically(path, [&](std::ostream& out) { write_plot_svg(out, series, labels); }, false);
}

}  // namespace qhd

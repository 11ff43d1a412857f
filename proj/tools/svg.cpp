#include "svg.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <sstream>
#include <stdexcept>

namespace gpbp::cli {

namespace {

constexpr double kWidth = 640, kHeight = 420;
constexpr double kLeft = 70, kRight = 150, kTop = 40, kBottom = 55;

const char* const kPalette[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b", "#17becf", "#7f7f7f"};

std::string escape(const std::string& s) {
    std::string out;
    for (char c : s) {
        switch (c) {
        case '<': out += "&lt;"; break;
        case '>': out += "&gt;"; break;
        case '&': out += "&amp;"; break;
        case '"': out += "&quot;"; break;
        default: out += c;
        }
    }
    return out;
}

std::string num(double x) {
    std::ostringstream s;
    s.precision(4);
    s << x;
    return s.str();
}

struct Range {
    double lo = std::numeric_limits<double>::infinity();
    double hi = -std::numeric_limits<double>::infinity();

    void add(double v) {
        lo = std::min(lo, v);
        hi = std::max(hi, v);
    }
    bool valid() const { return lo <= hi; }
    void pad() {
        if (!valid()) lo = 0, hi = 1;
        if (hi == lo) {
            const double d = lo == 0.0 ? 1.0 : std::abs(lo) * 0.1;
            lo -= d;
            hi += d;
        }
    }
};

std::ofstream open(const std::filesystem::path& path) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write " + path.string());
    return out;
}

void header(std::ostream& out, const std::string& title) {
    out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << kWidth << "\" height=\"" << kHeight
        << "\" font-family=\"sans-serif\" font-size=\"12\">\n"
        << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n"
        << "<text x=\"" << kWidth / 2 << "\" y=\"22\" text-anchor=\"middle\" font-size=\"14\">" << escape(title)
        << "</text>\n";
}

void axis_labels(std::ostream& out, const std::string& xl, const std::string& yl) {
    const double pw = kWidth - kLeft - kRight, ph = kHeight - kTop - kBottom;
    out << "<text x=\"" << kLeft + pw / 2 << "\" y=\"" << kHeight - 12 << "\" text-anchor=\"middle\">" << escape(xl)
        << "</text>\n";
    out << "<text transform=\"translate(16," << kTop + ph / 2 << ") rotate(-90)\" text-anchor=\"middle\">"
        << escape(yl) << "</text>\n";
}

}  // namespace

void write_line_svg(const std::filesystem::path& path, const LinePlot& plot) {
    auto ty = [&](double v) { return plot.log_y ? std::log10(v) : v; };
    auto usable = [&](double x, double y) { return std::isfinite(x) && std::isfinite(y) && (!plot.log_y || y > 0.0); };

    Range xr, yr;
    for (const auto& s : plot.series)
        for (std::size_t k = 0; k < s.x.size() && k < s.y.size(); ++k) {
            if (!usable(s.x[k], s.y[k])) continue;
            xr.add(s.x[k]);
            const double e = k < s.err.size() && std::isfinite(s.err[k]) ? s.err[k] : 0.0;
            yr.add(ty(s.y[k] + e));
            if (!plot.log_y || s.y[k] - e > 0.0) yr.add(ty(s.y[k] - e));
        }
    xr.pad();
    yr.pad();

    const double pw = kWidth - kLeft - kRight, ph = kHeight - kTop - kBottom;
    auto px = [&](double x) { return kLeft + (x - xr.lo) / (xr.hi - xr.lo) * pw; };
    auto py = [&](double y) { return kTop + ph - (ty(y) - yr.lo) / (yr.hi - yr.lo) * ph; };

    auto out = open(path);
    header(out, plot.title);
    out << "<rect x=\"" << kLeft << "\" y=\"" << kTop << "\" width=\"" << pw << "\" height=\"" << ph
        << "\" fill=\"none\" stroke=\"black\"/>\n";
    for (int t = 0; t <= 5; ++t) {
        const double xv = xr.lo + (xr.hi - xr.lo) * t / 5.0;
        const double yv = yr.lo + (yr.hi - yr.lo) * t / 5.0;
        const double x = kLeft + pw * t / 5.0, y = kTop + ph - ph * t / 5.0;
        out << "<line x1=\"" << x << "\" y1=\"" << kTop + ph << "\" x2=\"" << x << "\" y2=\"" << kTop + ph + 5
            << "\" stroke=\"black\"/><text x=\"" << x << "\" y=\"" << kTop + ph + 18 << "\" text-anchor=\"middle\">"
            << num(xv) << "</text>\n";
        out << "<line x1=\"" << kLeft - 5 << "\" y1=\"" << y << "\" x2=\"" << kLeft << "\" y2=\"" << y
            << "\" stroke=\"black\"/><text x=\"" << kLeft - 8 << "\" y=\"" << y + 4 << "\" text-anchor=\"end\">"
            << num(plot.log_y ? std::pow(10.0, yv) : yv) << "</text>\n";
    }
    axis_labels(out, plot.x_label, plot.y_label);

    for (std::size_t si = 0; si < plot.series.size(); ++si) {
        const auto& s = plot.series[si];
        const char* color = kPalette[si % std::size(kPalette)];
        out << "<polyline fill=\"none\" stroke=\"" << color << "\" stroke-width=\"1.5\" points=\"";
        for (std::size_t k = 0; k < s.x.size() && k < s.y.size(); ++k)
            if (usable(s.x[k], s.y[k])) out << px(s.x[k]) << ',' << py(s.y[k]) << ' ';
        out << "\"/>\n";
        for (std::size_t k = 0; k < s.err.size() && k < s.y.size() && k < s.x.size(); ++k) {
            if (!usable(s.x[k], s.y[k]) || !(s.err[k] > 0.0)) continue;
            const double lo = plot.log_y ? std::max(s.y[k] - s.err[k], std::pow(10.0, yr.lo)) : s.y[k] - s.err[k];
            out << "<line x1=\"" << px(s.x[k]) << "\" y1=\"" << py(lo) << "\" x2=\"" << px(s.x[k]) << "\" y2=\""
                << py(s.y[k] + s.err[k]) << "\" stroke=\"" << color << "\"/>\n";
        }
        const double ly = kTop + 14 + 18.0 * static_cast<double>(si);
        out << "<line x1=\"" << kWidth - kRight + 10 << "\" y1=\"" << ly << "\" x2=\"" << kWidth - kRight + 30
            << "\" y2=\"" << ly << "\" stroke=\"" << color << "\" stroke-width=\"2\"/><text x=\""
            << kWidth - kRight + 35 << "\" y=\"" << ly + 4 << "\">" << escape(s.label) << "</text>\n";
    }
    out << "</svg>\n";
}

void write_heatmap_svg(const std::filesystem::path& path, const Heatmap& map) {
    if (map.z.size() != map.y.size()) throw std::invalid_argument("heatmap: z rows do not match y");
    Range zr;
    for (const auto& row : map.z) {
        if (row.size() != map.x.size()) throw std::invalid_argument("heatmap: z columns do not match x");
        for (double v : row)
            if (std::isfinite(v) && (!map.log_z || v > 0.0)) zr.add(map.log_z ? std::log10(v) : v);
    }
    zr.pad();

    const double pw = kWidth - kLeft - kRight, ph = kHeight - kTop - kBottom;
    const double cw = pw / std::max<std::size_t>(1, map.x.size()), ch = ph / std::max<std::size_t>(1, map.y.size());
    auto color = [&](double v) {
        if (!std::isfinite(v) || (map.log_z && v <= 0.0)) return std::string("#bbbbbb");
        const double t = std::clamp(((map.log_z ? std::log10(v) : v) - zr.lo) / (zr.hi - zr.lo), 0.0, 1.0);
        // Dark blue (low) to yellow (high).
        const int r = static_cast<int>(255 * t), g = static_cast<int>(40 + 200 * t), b = static_cast<int>(140 * (1 - t));
        std::ostringstream s;
        s << "rgb(" << r << ',' << g << ',' << b << ')';
        return s.str();
    };

    auto out = open(path);
    header(out, map.title);
    for (std::size_t r = 0; r < map.y.size(); ++r) {
        for (std::size_t c = 0; c < map.x.size(); ++c) {
            const double v = map.z[r][c];
            // Row 0 at the bottom.
            out << "<rect x=\"" << kLeft + cw * c << "\" y=\"" << kTop + ph - ch * (r + 1) << "\" width=\"" << cw
                << "\" height=\"" << ch << "\" fill=\"" << color(v) << "\"><title>" << num(v) << "</title></rect>\n";
        }
        out << "<text x=\"" << kLeft - 6 << "\" y=\"" << kTop + ph - ch * (r + 0.5) + 4 << "\" text-anchor=\"end\">"
            << num(map.y[r]) << "</text>\n";
    }
    for (std::size_t c = 0; c < map.x.size(); ++c)
        out << "<text x=\"" << kLeft + cw * (c + 0.5) << "\" y=\"" << kTop + ph + 16 << "\" text-anchor=\"middle\">"
            << num(map.x[c]) << "</text>\n";
    axis_labels(out, map.x_label, map.y_label);

    // Color bar.
    const double bx = kWidth - kRight + 20;
    for (int k = 0; k < 20; ++k) {
        const double t = (k + 0.5) / 20.0;
        const double v = zr.lo + t * (zr.hi - zr.lo);
        out << "<rect x=\"" << bx << "\" y=\"" << kTop + ph - ph * (k + 1) / 20.0 << "\" width=\"18\" height=\""
            << ph / 20.0 + 0.5 << "\" fill=\"" << color(map.log_z ? std::pow(10.0, v) : v) << "\"/>\n";
    }
    out << "<text x=\"" << bx + 22 << "\" y=\"" << kTop + ph << "\">" << num(map.log_z ? std::pow(10.0, zr.lo) : zr.lo)
        << "</text>\n<text x=\"" << bx + 22 << "\" y=\"" << kTop + 10 << "\">"
        << num(map.log_z ? std::pow(10.0, zr.hi) : zr.hi) << "</text>\n</svg>\n";
}

}  // namespace gpbp::cli

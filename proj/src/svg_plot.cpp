#include "mumab/svg_plot.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <stdexcept>

namespace mumab {

namespace {

constexpr double kPanelW = 760.0;
constexpr double kPanelH = 420.0;
constexpr double kLeft = 76.0;
constexpr double kRight = 24.0;
constexpr double kTop = 40.0;
constexpr double kBottom = 52.0;

std::string fmt(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%g", v);
    return buf;
}

std::string escape(const std::string& s) {
    std::string out;
    for (char c : s) {
        switch (c) {
            case '&': out += "&amp;"; break;
            case '<': out += "&lt;"; break;
            case '>': out += "&gt;"; break;
            default: out += c;
        }
    }
    return out;
}

// ~5 round-valued ticks covering [lo, hi]
std::vector<double> nice_ticks(double lo, double hi) {
    if (!(hi > lo)) hi = lo + 1.0;
    double span = hi - lo;
    double raw = span / 5.0;
    double mag = std::pow(10.0, std::floor(std::log10(raw)));
    double step = mag;
    for (double mult : {1.0, 2.0, 5.0, 10.0}) {
        if (mag * mult >= raw) {
            step = mag * mult;
            break;
        }
    }
    std::vector<double> ticks;
    double first = std::ceil(lo / step) * step;
    for (double v = first; v <= hi + step * 1e-9; v += step) ticks.push_back(v == 0.0 ? 0.0 : v);
    return ticks;
}

struct Panel {
    double y_offset;
    bool log_x;
    double x_lo, x_hi, y_lo, y_hi;

    double tx(double x) const {
        double v = log_x ? std::log10(x) : x;
        double lo = log_x ? std::log10(x_lo) : x_lo;
        double hi = log_x ? std::log10(x_hi) : x_hi;
        if (hi <= lo) hi = lo + 1.0;
        return kLeft + (v - lo) / (hi - lo) * (kPanelW - kLeft - kRight);
    }
    double ty(double y) const {
        double hi = y_hi > y_lo ? y_hi : y_lo + 1.0;
        return y_offset + kPanelH - kBottom - (y - y_lo) / (hi - y_lo) * (kPanelH - kTop - kBottom);
    }
};

void draw_panel(std::string& svg, const Panel& p, const std::string& title, const std::string& x_label,
                const std::string& y_label, const std::vector<PlotSeries>& series) {
    const double x0 = kLeft;
    const double x1 = kPanelW - kRight;
    const double y0 = p.y_offset + kTop;
    const double y1 = p.y_offset + kPanelH - kBottom;

    svg += "<rect x='" + fmt(x0) + "' y='" + fmt(y0) + "' width='" + fmt(x1 - x0) + "' height='" +
           fmt(y1 - y0) + "' fill='white' stroke='#444'/>\n";
    svg += "<text x='" + fmt((x0 + x1) / 2) + "' y='" + fmt(p.y_offset + 22.0) +
           "' text-anchor='middle' font-size='15' font-family='sans-serif'>" + escape(title) + "</text>\n";

    if (p.log_x) {
        int e_lo = static_cast<int>(std::floor(std::log10(std::max(p.x_lo, 1.0))));
        int e_hi = static_cast<int>(std::ceil(std::log10(std::max(p.x_hi, 10.0))));
        for (int e = e_lo; e <= e_hi; ++e) {
            double v = std::pow(10.0, e);
            if (v < p.x_lo || v > p.x_hi) continue;
            double x = p.tx(v);
            svg += "<line x1='" + fmt(x) + "' y1='" + fmt(y1) + "' x2='" + fmt(x) + "' y2='" + fmt(y1 + 5) +
                   "' stroke='#444'/>\n";
            svg += "<text x='" + fmt(x) + "' y='" + fmt(y1 + 20) +
                   "' text-anchor='middle' font-size='12' font-family='sans-serif'>1e" + std::to_string(e) +
                   "</text>\n";
        }
    } else {
        for (double v : nice_ticks(p.x_lo, p.x_hi)) {
            double x = p.tx(v);
            svg += "<line x1='" + fmt(x) + "' y1='" + fmt(y1) + "' x2='" + fmt(x) + "' y2='" + fmt(y1 + 5) +
                   "' stroke='#444'/>\n";
            svg += "<text x='" + fmt(x) + "' y='" + fmt(y1 + 20) +
                   "' text-anchor='middle' font-size='12' font-family='sans-serif'>" + fmt(v) + "</text>\n";
        }
    }
    for (double v : nice_ticks(p.y_lo, p.y_hi)) {
        double y = p.ty(v);
        svg += "<line x1='" + fmt(x0 - 5) + "' y1='" + fmt(y) + "' x2='" + fmt(x0) + "' y2='" + fmt(y) +
               "' stroke='#444'/>\n";
        svg += "<text x='" + fmt(x0 - 9) + "' y='" + fmt(y + 4) +
               "' text-anchor='end' font-size='12' font-family='sans-serif'>" + fmt(v) + "</text>\n";
    }
    svg += "<text x='" + fmt((x0 + x1) / 2) + "' y='" + fmt(y1 + 40) +
           "' text-anchor='middle' font-size='13' font-family='sans-serif'>" + escape(x_label) + "</text>\n";
    svg += "<text x='18' y='" + fmt((y0 + y1) / 2) + "' text-anchor='middle' font-size='13' "
           "font-family='sans-serif' transform='rotate(-90 18 " + fmt((y0 + y1) / 2) + ")'>" +
           escape(y_label) + "</text>\n";

    double legend_y = y0 + 16.0;
    for (const PlotSeries& s : series) {
        std::string pts;
        for (const auto& [x, y] : s.points) {
            if (p.log_x && x < 1.0) continue;
            pts += fmt(p.tx(x)) + "," + fmt(p.ty(y)) + " ";
        }
        if (pts.empty()) continue;
        svg += "<polyline fill='none' stroke='" + s.color + "' stroke-width='1.6' points='" + pts + "'/>\n";
        svg += "<line x1='" + fmt(x0 + 10) + "' y1='" + fmt(legend_y) + "' x2='" + fmt(x0 + 34) + "' y2='" +
               fmt(legend_y) + "' stroke='" + s.color + "' stroke-width='2'/>\n";
        svg += "<text x='" + fmt(x0 + 40) + "' y='" + fmt(legend_y + 4) +
               "' font-size='12' font-family='sans-serif'>" + escape(s.label) + "</text>\n";
        legend_y += 16.0;
    }
}

} // namespace

std::string render_plot_svg(const std::string& title, const std::string& x_label,
                            const std::string& y_label, const std::vector<PlotSeries>& series,
                            bool with_log_panel) {
    bool any = false;
    double x_lo = std::numeric_limits<double>::infinity(), x_hi = -x_lo;
    double y_lo = 0.0, y_hi = -std::numeric_limits<double>::infinity();
    for (const PlotSeries& s : series) {
        for (const auto& [x, y] : s.points) {
            any = true;
            x_lo = std::min(x_lo, x);
            x_hi = std::max(x_hi, x);
            y_hi = std::max(y_hi, y);
        }
    }
    if (!any) throw std::invalid_argument("render_plot_svg: no data points");

    double total_h = with_log_panel ? 2 * kPanelH + 8 : kPanelH;
    std::string svg = "<svg xmlns='http://www.w3.org/2000/svg' width='" + fmt(kPanelW) + "' height='" +
                      fmt(total_h) + "' viewBox='0 0 " + fmt(kPanelW) + " " + fmt(total_h) + "'>\n";
    svg += "<rect width='100%' height='100%' fill='white'/>\n";

    Panel linear{0.0, false, x_lo, x_hi, y_lo, y_hi};
    draw_panel(svg, linear, title, x_label, y_label, series);
    if (with_log_panel) {
        Panel logp{kPanelH + 8, true, std::max(x_lo, 1.0), std::max(x_hi, 10.0), y_lo, y_hi};
        draw_panel(svg, logp, title + " (log x)", x_label + " (log scale)", y_label, series);
    }
    svg += "</svg>\n";
    return svg;
}

} // namespace mumab

#pragma once

#include <string>
#include <utility>
#include <vector>

namespace mumab {

struct PlotSeries {
    std::string label;
    std::string color;
    std::vector<std::pair<double, double>> points;  // (x, y), x ascending
};

// Self-contained SVG: one linear-axes panel, plus an optional second panel
// with a log10 x axis (points with x < 1 are skipped there).
std::string render_plot_svg(const std::string& title, const std::string& x_label,
                            const std::string& y_label, const std::vector<PlotSeries>& series,
                            bool with_log_panel);

} // namespace mumab

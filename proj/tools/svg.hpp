#pragma once

#include <filesystem>
#include <string>
#include <vector>

namespace gpbp::cli {

struct Series {
    std::string label;
    std::vector<double> x;
    std::vector<double> y;
    std::vector<double> err;  // optional symmetric error bars, same length as y
};

struct LinePlot {
    std::string title;
    std::string x_label;
    std::string y_label;
    bool log_y = false;
    std::vector<Series> series;
};

/// Polyline chart with axes, ticks and a legend. Non-finite points are dropped
/// (and, with log_y, nonpositive ones).
void write_line_svg(const std::filesystem::path& path, const LinePlot& plot);

struct Heatmap {
    std::string title;
    std::string x_label;
    std::string y_label;
    std::vector<double> x;                // column coordinates
    std::vector<double> y;                // row coordinates
    std::vector<std::vector<double>> z;   // z[row][col]; NaN renders grey
    bool log_z = false;
};

void write_heatmap_svg(const std::filesystem::path& path, const Heatmap& map);

}  // namespace gpbp::cli

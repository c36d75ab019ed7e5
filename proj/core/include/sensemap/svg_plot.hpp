#pragma once

#include <string>
#include <utility>
#include <vector>

namespace sensemap {

struct PlotSeries {
    std::string name;
    std::vector<std::pair<double, double>> points;
};

/// Minimal static line chart (axes, ticks, legend), written as an SVG file.
void write_line_chart(const std::string& path, const std::string& title,
                      const std::string& x_label, const std::string& y_label,
                      const std::vector<PlotSeries>& series);

} // namespace sensemap

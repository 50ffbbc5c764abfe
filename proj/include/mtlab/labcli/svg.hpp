#pragma once

#include <string>
#include <vector>

namespace mtlab::labcli {

// One polyline on a plot.
struct Series {
    std::string label;
    std::vector<double> x;
    std::vector<double> y; // same length as x
};

// A self-contained static vector plot: axes, ticks, legend, one polyline per
// series. Deterministic output for identical input.
std::string line_plot_svg(const std::string& title, const std::string& x_label,
                          const std::string& y_label, const std::vector<Series>& series);

} // namespace mtlab::labcli

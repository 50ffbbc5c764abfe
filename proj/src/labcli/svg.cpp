#include "mtlab/labcli/svg.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <stdexcept>

namespace mtlab::labcli {

namespace {

const char* kPalette[] = {"#1f77b4", "#ff7f0e", "#2ca02c", "#d62728",
                          "#9467bd", "#8c564b", "#e377c2", "#7f7f7f"};

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

std::string num(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.2f", v);
    return buf;
}

std::string tick_label(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.4g", v);
    return buf;
}

} // namespace

std::string line_plot_svg(const std::string& title, const std::string& x_label,
                          const std::string& y_label, const std::vector<Series>& series) {
    if (series.empty())
        throw std::invalid_argument("plot: no series");
    double x_min = 0, x_max = 0, y_min = 0, y_max = 0;
    bool first = true;
    for (const Series& s : series) {
        if (s.x.size() != s.y.size())
            throw std::invalid_argument("plot: series '" + s.label + "' has ragged data");
        for (std::size_t i = 0; i < s.x.size(); ++i) {
            if (first) {
                x_min = x_max = s.x[i];
                y_min = y_max = s.y[i];
                first = false;
            }
            x_min = std::min(x_min, s.x[i]);
            x_max = std::max(x_max, s.x[i]);
            y_min = std::min(y_min, s.y[i]);
            y_max = std::max(y_max, s.y[i]);
        }
    }
    if (first)
        throw std::invalid_argument("plot: all series empty");
    if (x_max == x_min) {
        x_min -= 1.0;
        x_max += 1.0;
    }
    if (y_max == y_min) {
        y_min -= 1.0;
        y_max += 1.0;
    }

    const double width = 640, height = 400;
    const double left = 64, right = width - 170, top = 40, bottom = height - 52;
    auto px = [&](double x) { return left + (x - x_min) / (x_max - x_min) * (right - left); };
    auto py = [&](double y) { return bottom - (y - y_min) / (y_max - y_min) * (bottom - top); };

    std::string svg;
    svg += "<svg xmlns=\"http://www.w3.org/2000/svg\" viewBox=\"0 0 640 400\" "
           "font-family=\"sans-serif\" font-size=\"12\">\n";
    svg += "<rect width=\"640\" height=\"400\" fill=\"white\"/>\n";
    svg += "<text x=\"320\" y=\"20\" text-anchor=\"middle\" font-size=\"15\">" +
           escape(title) + "</text>\n";

    // axes
    svg += "<line x1=\"" + num(left) + "\" y1=\"" + num(bottom) + "\" x2=\"" + num(right) +
           "\" y2=\"" + num(bottom) + "\" stroke=\"black\"/>\n";
    svg += "<line x1=\"" + num(left) + "\" y1=\"" + num(top) + "\" x2=\"" + num(left) +
           "\" y2=\"" + num(bottom) + "\" stroke=\"black\"/>\n";

    for (int t = 0; t <= 4; ++t) {
        double fx = x_min + (x_max - x_min) * t / 4.0;
        double fy = y_min + (y_max - y_min) * t / 4.0;
        svg += "<line x1=\"" + num(px(fx)) + "\" y1=\"" + num(bottom) + "\" x2=\"" +
               num(px(fx)) + "\" y2=\"" + num(bottom + 5) + "\" stroke=\"black\"/>\n";
        svg += "<text x=\"" + num(px(fx)) + "\" y=\"" + num(bottom + 18) +
               "\" text-anchor=\"middle\">" + tick_label(fx) + "</text>\n";
        svg += "<line x1=\"" + num(left - 5) + "\" y1=\"" + num(py(fy)) + "\" x2=\"" +
               num(left) + "\" y2=\"" + num(py(fy)) + "\" stroke=\"black\"/>\n";
        svg += "<text x=\"" + num(left - 8) + "\" y=\"" + num(py(fy) + 4) +
               "\" text-anchor=\"end\">" + tick_label(fy) + "</text>\n";
    }
    svg += "<text x=\"" + num((left + right) / 2) + "\" y=\"" + num(height - 14) +
           "\" text-anchor=\"middle\">" + escape(x_label) + "</text>\n";
    svg += "<text x=\"16\" y=\"" + num((top + bottom) / 2) +
           "\" text-anchor=\"middle\" transform=\"rotate(-90 16 " + num((top + bottom) / 2) +
           ")\">" + escape(y_label) + "</text>\n";

    // curves and legend
    for (std::size_t si = 0; si < series.size(); ++si) {
        const Series& s = series[si];
        const char* color = kPalette[si % (sizeof kPalette / sizeof kPalette[0])];
        if (!s.x.empty()) {
            std::string points;
            for (std::size_t i = 0; i < s.x.size(); ++i) {
                if (i)
                    points += ' ';
                points += num(px(s.x[i])) + "," + num(py(s.y[i]));
            }
            svg += std::string("<polyline fill=\"none\" stroke=\"") + color +
                   "\" stroke-width=\"1.5\" points=\"" + points + "\"/>\n";
            for (std::size_t i = 0; i < s.x.size(); ++i)
                svg += std::string("<circle cx=\"") + num(px(s.x[i])) + "\" cy=\"" +
                       num(py(s.y[i])) + "\" r=\"2.5\" fill=\"" + color + "\"/>\n";
        }
        double ly = top + 16.0 * static_cast<double>(si);
        svg += std::string("<line x1=\"") + num(right + 10) + "\" y1=\"" + num(ly) +
               "\" x2=\"" + num(right + 30) + "\" y2=\"" + num(ly) + "\" stroke=\"" + color +
               "\" stroke-width=\"1.5\"/>\n";
        svg += "<text x=\"" + num(right + 36) + "\" y=\"" + num(ly + 4) + "\">" +
               escape(s.label) + "</text>\n";
    }
    svg += "</svg>\n";
    return svg;
}

} // namespace mtlab::labcli

#pragma once

// Minimal SVG line-plot emitter for erosion and shift curves. No styling
// guarantees; it exists so a CSV does not need a plotting tool to eyeball.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <ostream>
#include <string>
#include <utility>
#include <vector>

namespace evenpad {

struct Series {
    std::string label;
    std::vector<std::pair<double, double>> points;
};

inline void write_svg_lines(std::ostream& os, const std::vector<Series>& series, const std::string& title,
                            bool log_y = false) {
    constexpr double width = 640, height = 400, margin = 48;
    double x0 = std::numeric_limits<double>::infinity(), x1 = -x0, y0 = x0, y1 = -x0;
    auto ty = [&](double y) { return log_y ? std::log10(std::max(y, 1e-300)) : y; };
    for (const auto& s : series) {
        for (const auto& [x, y] : s.points) {
            x0 = std::min(x0, x);
            x1 = std::max(x1, x);
            y0 = std::min(y0, ty(y));
            y1 = std::max(y1, ty(y));
        }
    }
    if (!(x1 > x0)) {
        x1 = x0 + 1.0;
    }
    if (!(y1 > y0)) {
        y1 = y0 + 1.0;
    }
    auto px = [&](double x) { return margin + (x - x0) / (x1 - x0) * (width - 2 * margin); };
    auto py = [&](double y) { return height - margin - (ty(y) - y0) / (y1 - y0) * (height - 2 * margin); };

    static const char* colors[] = {"#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd", "#8c564b", "#e377c2"};
    os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << width << "\" height=\"" << height << "\">\n";
    os << "<text x=\"" << margin << "\" y=\"20\" font-size=\"14\">" << title << "</text>\n";
    os << "<rect x=\"" << margin << "\" y=\"" << margin << "\" width=\"" << width - 2 * margin << "\" height=\""
       << height - 2 * margin << "\" fill=\"none\" stroke=\"#888\"/>\n";
    for (std::size_t i = 0; i < series.size(); ++i) {
        const char* color = colors[i % std::size(colors)];
        os << "<polyline fill=\"none\" stroke=\"" << color << "\" points=\"";
        for (const auto& [x, y] : series[i].points) {
            os << px(x) << ',' << py(y) << ' ';
        }
        os << "\"/>\n";
        os << "<text x=\"" << width - margin + 4 << "\" y=\"" << margin + 14.0 * static_cast<double>(i + 1)
           << "\" font-size=\"11\" fill=\"" << color << "\">" << series[i].label << "</text>\n";
    }
    os << "</svg>\n";
}

}  // namespace evenpad

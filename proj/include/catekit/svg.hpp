// Minimal standalone SVG line plots (polyline-based, no plotting
// dependency). Output bytes are deterministic for fixed input.
#pragma once

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace catekit {

struct SvgSeries {
    std::string label;
    std::vector<std::pair<double, double>> points;  // (x, y); NaN y breaks the line
};

namespace detail {
inline std::string svg_num(double v) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.6g", v);
    return buf;
}
}  // namespace detail

inline std::string render_line_plot_svg(const std::string& title, const std::string& x_label,
                                        const std::string& y_label,
                                        const std::vector<SvgSeries>& series, double x_min = 0.0,
                                        double x_max = 1.0, double x_tick = 0.05) {
    static const char* kColors[] = {"#2a7fff", "#e06020", "#20a050", "#a040c0",
                                    "#c0b020", "#d04040", "#40b0c0"};
    const double width = 640, height = 420;
    const double ml = 64, mr = 160, mt = 36, mb = 48;  // margins; right holds the legend
    const double plot_w = width - ml - mr, plot_h = height - mt - mb;

    double y_min = 0.0, y_max = 0.0;
    bool any = false;
    for (const auto& s : series) {
        for (const auto& [x, y] : s.points) {
            if (std::isnan(y)) continue;
            y_min = any ? std::min(y_min, y) : y;
            y_max = any ? std::max(y_max, y) : y;
            any = true;
        }
    }
    if (!any) {
        y_min = 0.0;
        y_max = 1.0;
    }
    if (y_max == y_min) y_max = y_min + 1.0;
    const double pad = 0.05 * (y_max - y_min);
    y_min = std::min(0.0, y_min - pad);
    y_max += pad;

    auto sx = [&](double x) { return ml + (x - x_min) / (x_max - x_min) * plot_w; };
    auto sy = [&](double y) { return mt + plot_h - (y - y_min) / (y_max - y_min) * plot_h; };

    std::string svg;
    svg += "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" + detail::svg_num(width) +
           "\" height=\"" + detail::svg_num(height) + "\">\n";
    svg += "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
    svg += "<text x=\"" + detail::svg_num(width / 2) + "\" y=\"20\" text-anchor=\"middle\" "
           "font-family=\"sans-serif\" font-size=\"14\">" + title + "</text>\n";

    // axes
    svg += "<line x1=\"" + detail::svg_num(ml) + "\" y1=\"" + detail::svg_num(mt + plot_h) +
           "\" x2=\"" + detail::svg_num(ml + plot_w) + "\" y2=\"" + detail::svg_num(mt + plot_h) +
           "\" stroke=\"black\"/>\n";
    svg += "<line x1=\"" + detail::svg_num(ml) + "\" y1=\"" + detail::svg_num(mt) + "\" x2=\"" +
           detail::svg_num(ml) + "\" y2=\"" + detail::svg_num(mt + plot_h) +
           "\" stroke=\"black\"/>\n";

    // x ticks at every grid step
    const int n_ticks = static_cast<int>(std::round((x_max - x_min) / x_tick));
    for (int i = 0; i <= n_ticks; ++i) {
        const double x = x_min + x_tick * i;
        const double px = sx(x);
        svg += "<line x1=\"" + detail::svg_num(px) + "\" y1=\"" + detail::svg_num(mt + plot_h) +
               "\" x2=\"" + detail::svg_num(px) + "\" y2=\"" + detail::svg_num(mt + plot_h + 4) +
               "\" stroke=\"black\"/>\n";
        if (i % 4 == 0) {
            svg += "<text x=\"" + detail::svg_num(px) + "\" y=\"" + detail::svg_num(mt + plot_h + 18) +
                   "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"10\">" +
                   detail::svg_num(x) + "</text>\n";
        }
    }
    // y ticks
    for (int i = 0; i <= 5; ++i) {
        const double y = y_min + (y_max - y_min) * i / 5.0;
        const double py = sy(y);
        svg += "<line x1=\"" + detail::svg_num(ml - 4) + "\" y1=\"" + detail::svg_num(py) +
               "\" x2=\"" + detail::svg_num(ml) + "\" y2=\"" + detail::svg_num(py) +
               "\" stroke=\"black\"/>\n";
        svg += "<text x=\"" + detail::svg_num(ml - 8) + "\" y=\"" + detail::svg_num(py + 3) +
               "\" text-anchor=\"end\" font-family=\"sans-serif\" font-size=\"10\">" +
               detail::svg_num(y) + "</text>\n";
    }
    svg += "<text x=\"" + detail::svg_num(ml + plot_w / 2) + "\" y=\"" +
           detail::svg_num(height - 10) +
           "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"12\">" + x_label +
           "</text>\n";
    svg += "<text x=\"14\" y=\"" + detail::svg_num(mt + plot_h / 2) +
           "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"12\" transform=\"rotate(-90 14 " +
           detail::svg_num(mt + plot_h / 2) + ")\">" + y_label + "</text>\n";

    for (std::size_t k = 0; k < series.size(); ++k) {
        const char* color = kColors[k % (sizeof(kColors) / sizeof(kColors[0]))];
        std::string pts;
        auto flush = [&]() {
            if (!pts.empty()) {
                svg += "<polyline fill=\"none\" stroke=\"" + std::string(color) +
                       "\" stroke-width=\"1.5\" points=\"" + pts + "\"/>\n";
                pts.clear();
            }
        };
        for (const auto& [x, y] : series[k].points) {
            if (std::isnan(y)) {
                flush();
                continue;
            }
            pts += detail::svg_num(sx(x)) + "," + detail::svg_num(sy(y)) + " ";
        }
        flush();
        const double ly = mt + 16.0 * static_cast<double>(k);
        svg += "<line x1=\"" + detail::svg_num(ml + plot_w + 10) + "\" y1=\"" + detail::svg_num(ly) +
               "\" x2=\"" + detail::svg_num(ml + plot_w + 30) + "\" y2=\"" + detail::svg_num(ly) +
               "\" stroke=\"" + color + "\" stroke-width=\"2\"/>\n";
        svg += "<text x=\"" + detail::svg_num(ml + plot_w + 34) + "\" y=\"" + detail::svg_num(ly + 4) +
               "\" font-family=\"sans-serif\" font-size=\"11\">" + series[k].label + "</text>\n";
    }
    svg += "</svg>\n";
    return svg;
}

inline void write_line_plot_svg(const std::string& path, const std::string& title,
                                const std::string& x_label, const std::string& y_label,
                                const std::vector<SvgSeries>& series, double x_min = 0.0,
                                double x_max = 1.0, double x_tick = 0.05) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write svg file: " + path);
    out << render_line_plot_svg(title, x_label, y_label, series, x_min, x_max, x_tick);
}

}  // namespace catekit

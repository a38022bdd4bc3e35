#pragma once

// Minimal SVG line/scatter chart for the report figures.

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <string>
#include <utility>
#include <vector>

#include "qct/core.hpp"
#include "qct/text.hpp"

namespace qct::svg {

struct series {
    std::string name;
    std::vector<std::pair<double, double>> points;
    std::string color = "#1f77b4";
    bool markers = false; // scatter instead of polyline
    bool dotted = false;
};

struct chart {
    std::string title;
    std::string x_label;
    std::string y_label;
    std::vector<series> data;
    double width = 640;
    double height = 420;
};

namespace detail {

inline std::string esc(const std::string& s)
{
    std::string out;
    for (const char c : s) {
        switch (c) {
        case '<': out += "&lt;"; break;
        case '>': out += "&gt;"; break;
        case '&': out += "&amp;"; break;
        default: out += c;
        }
    }
    return out;
}

inline std::string fmt(double v) { return text::format_fixed(v, 2); }

/// Roughly five round tick values covering [lo, hi].
inline std::vector<double> ticks(double lo, double hi)
{
    const double span = hi - lo;
    const double raw = span / 5.0;
    const double mag = std::pow(10.0, std::floor(std::log10(raw)));
    double step = mag;
    for (const double m : {1.0, 2.0, 5.0, 10.0})
        if (m * mag >= raw) {
            step = m * mag;
            break;
        }
    std::vector<double> out;
    for (double t = std::ceil(lo / step) * step; t <= hi + 1e-9 * span; t += step)
        out.push_back(std::abs(t) < 1e-12 * span ? 0.0 : t);
    return out;
}

} // namespace detail

inline std::string render(const chart& c)
{
    double xmin = std::numeric_limits<double>::infinity(), xmax = -xmin;
    double ymin = xmin, ymax = -xmin;
    for (const auto& s : c.data)
        for (const auto& [x, y] : s.points) {
            xmin = std::min(xmin, x);
            xmax = std::max(xmax, x);
            ymin = std::min(ymin, y);
            ymax = std::max(ymax, y);
        }
    if (!(xmin <= xmax)) {
        xmin = ymin = 0.0;
        xmax = ymax = 1.0;
    }
    if (xmax == xmin)
        xmax = xmin + 1.0;
    if (ymax == ymin)
        ymax = ymin + 1.0;
    const double pad_y = 0.05 * (ymax - ymin);
    ymin -= pad_y;
    ymax += pad_y;

    const double left = 70, right = 20, top = 40, bottom = 55;
    const double pw = c.width - left - right, ph = c.height - top - bottom;
    const auto px = [&](double x) { return left + (x - xmin) / (xmax - xmin) * pw; };
    const auto py = [&](double y) { return top + (1.0 - (y - ymin) / (ymax - ymin)) * ph; };
    using detail::fmt;

    std::string s;
    s += "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" + fmt(c.width) + "\" height=\"" +
         fmt(c.height) + "\" font-family=\"sans-serif\" font-size=\"12\">\n";
    s += "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
    s += "<text x=\"" + fmt(c.width / 2) + "\" y=\"22\" text-anchor=\"middle\" font-size=\"14\">" +
         detail::esc(c.title) + "</text>\n";
    s += "<rect x=\"" + fmt(left) + "\" y=\"" + fmt(top) + "\" width=\"" + fmt(pw) + "\" height=\"" +
         fmt(ph) + "\" fill=\"none\" stroke=\"black\"/>\n";
    for (const double t : detail::ticks(xmin, xmax))
        s += "<text x=\"" + fmt(px(t)) + "\" y=\"" + fmt(top + ph + 16) + "\" text-anchor=\"middle\">" +
             text::format_number(t) + "</text>\n";
    for (const double t : detail::ticks(ymin, ymax))
        s += "<text x=\"" + fmt(left - 6) + "\" y=\"" + fmt(py(t) + 4) + "\" text-anchor=\"end\">" +
             text::format_number(t) + "</text>\n";
    s += "<text x=\"" + fmt(left + pw / 2) + "\" y=\"" + fmt(c.height - 12) + "\" text-anchor=\"middle\">" +
         detail::esc(c.x_label) + "</text>\n";
    s += "<text transform=\"translate(16," + fmt(top + ph / 2) + ") rotate(-90)\" text-anchor=\"middle\">" +
         detail::esc(c.y_label) + "</text>\n";

    double legend_y = top + 16;
    for (const auto& ser : c.data) {
        if (ser.markers) {
            for (const auto& [x, y] : ser.points)
                s += "<circle cx=\"" + fmt(px(x)) + "\" cy=\"" + fmt(py(y)) + "\" r=\"3.5\" fill=\"" +
                     ser.color + "\"/>\n";
        } else if (!ser.points.empty()) {
            s += "<polyline fill=\"none\" stroke=\"" + ser.color + "\" stroke-width=\"1.5\"";
            if (ser.dotted)
                s += " stroke-dasharray=\"2,3\"";
            s += " points=\"";
            for (const auto& [x, y] : ser.points)
                s += fmt(px(x)) + "," + fmt(py(y)) + " ";
            s += "\"/>\n";
        }
        if (!ser.name.empty()) {
            s += "<text x=\"" + fmt(left + 10) + "\" y=\"" + fmt(legend_y) + "\" fill=\"" + ser.color + "\">" +
                 detail::esc(ser.name) + "</text>\n";
            legend_y += 15;
        }
    }
    s += "</svg>\n";
    return s;
}

inline void write(const chart& c, const std::string& path)
{
    std::ofstream out(path, std::ios::trunc);
    if (!out)
        throw error(error_kind::io, "cannot write " + path);
    out << render(c);
}

} // namespace qct::svg

// SPDX-License-Identifier: Apache-2.0
#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "suica/pipeline.hpp"

namespace suica::pipeline {

namespace {

// Viridis sampled at nine evenly spaced stops.
constexpr std::array<std::array<double, 3>, 9> kStops = {{
    {68, 1, 84}, {71, 44, 122}, {59, 81, 139}, {44, 113, 142}, {33, 144, 141},
    {39, 173, 129}, {92, 200, 99}, {170, 220, 50}, {253, 231, 37},
}};

std::string color(double t) {
    t = std::clamp(t, 0.0, 1.0) * static_cast<double>(kStops.size() - 1);
    const std::size_t i = std::min(static_cast<std::size_t>(t), kStops.size() - 2);
    const double f = t - static_cast<double>(i);
    char buf[16];
    int rgb[3];
    for (int c = 0; c < 3; ++c)
        rgb[c] = static_cast<int>(std::lround(kStops[i][static_cast<std::size_t>(c)] * (1 - f) +
                                              kStops[i + 1][static_cast<std::size_t>(c)] * f));
    std::snprintf(buf, sizeof buf, "#%02x%02x%02x", rgb[0], rgb[1], rgb[2]);
    return buf;
}

std::string num(double v, const char* f = "%.2f") {
    char buf[40];
    std::snprintf(buf, sizeof buf, f, v);
    return buf;
}

std::string escape(const std::string& s) {
    std::string out;
    for (char c : s) {
        if (c == '<') out += "&lt;";
        else if (c == '>') out += "&gt;";
        else if (c == '&') out += "&amp;";
        else out += c;
    }
    return out;
}

}  // namespace

void emit_heatmap(const Matrix<double>& coords, const Vector<double>& values, const std::filesystem::path& path,
                  const std::string& title) {
    if (coords.cols() != 2 || coords.rows() != values.size()) throw DataError("emit_heatmap: shape mismatch");
    if (!coords.allFinite() || !values.allFinite()) throw DataError("emit_heatmap: non-finite input");
    const Index n = values.size();
    const double size = 400.0, pad = 10.0, top = 30.0;
    double lo = 0.0, hi = 0.0, x0 = 0.0, x1 = 1.0, y0 = 0.0, y1 = 1.0;
    if (n > 0) {
        lo = values.minCoeff();
        hi = values.maxCoeff();
        x0 = coords.col(0).minCoeff();
        x1 = coords.col(0).maxCoeff();
        y0 = coords.col(1).minCoeff();
        y1 = coords.col(1).maxCoeff();
    }
    const double span = std::max(x1 - x0, y1 - y0) > 0 ? std::max(x1 - x0, y1 - y0) : 1.0;
    const double radius = std::max(1.5, 0.5 * size / std::sqrt(static_cast<double>(std::max<Index>(n, 1))));
    const bool constant = hi == lo;

    std::ostringstream s;
    s << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"520\" height=\"" << num(size + top + 2 * pad, "%.0f")
      << "\">\n<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
    s << "<text x=\"" << num(pad) << "\" y=\"20\" font-family=\"sans-serif\" font-size=\"14\">" << escape(title)
      << "</text>\n";
    for (Index i = 0; i < n; ++i) {
        const double px = pad + radius + (coords(i, 0) - x0) / span * (size - 2 * radius);
        const double py = top + pad + radius + (y1 - coords(i, 1)) / span * (size - 2 * radius);
        const double t = constant ? 0.5 : (values(i) - lo) / (hi - lo);
        s << "<circle cx=\"" << num(px) << "\" cy=\"" << num(py) << "\" r=\"" << num(radius) << "\" fill=\""
          << color(t) << "\"/>\n";
    }
    // Legend: a stepped color bar with the value range.
    const double lx = pad + size + 20, ly = top + pad, lh = 200, steps = 32;
    if (constant) {
        s << "<rect x=\"" << num(lx) << "\" y=\"" << num(ly) << "\" width=\"20\" height=\"20\" fill=\"" << color(0.5)
          << "\"/>\n";
        s << "<text x=\"" << num(lx + 26) << "\" y=\"" << num(ly + 15)
          << "\" font-family=\"sans-serif\" font-size=\"12\">" << num(lo, "%.4g") << "</text>\n";
    } else {
        for (int k = 0; k < steps; ++k) {
            const double t = 1.0 - (k + 0.5) / steps;
            s << "<rect x=\"" << num(lx) << "\" y=\"" << num(ly + k * lh / steps) << "\" width=\"20\" height=\""
              << num(lh / steps + 0.5) << "\" fill=\"" << color(t) << "\"/>\n";
        }
        s << "<text x=\"" << num(lx + 26) << "\" y=\"" << num(ly + 10)
          << "\" font-family=\"sans-serif\" font-size=\"12\">" << num(hi, "%.4g") << "</text>\n";
        s << "<text x=\"" << num(lx + 26) << "\" y=\"" << num(ly + lh)
          << "\" font-family=\"sans-serif\" font-size=\"12\">" << num(lo, "%.4g") << "</text>\n";
    }
    s << "</svg>\n";

    std::ofstream out(path, std::ios::binary);
    if (!out) throw DataError(path.string() + ": cannot open for writing");
    out << s.str();
    if (!out) throw DataError(path.string() + ": write failed");
}

}  // namespace suica::pipeline

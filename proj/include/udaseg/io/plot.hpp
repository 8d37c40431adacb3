#ifndef UDASEG_IO_PLOT_HPP
#define UDASEG_IO_PLOT_HPP

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <limits>
#include <string>
#include <vector>

#include "udaseg/core/tensor.hpp"
#include "udaseg/io/png_io.hpp"

namespace udaseg {

namespace plot_detail {

struct Canvas {
    int64_t h, w;
    Tensor img;  // (3, h, w)

    Canvas(int64_t height, int64_t width) : h(height), w(width), img(Tensor::full({3, height, width}, 1.0)) {}

    void set(int64_t y, int64_t x, const std::array<double, 3>& rgb) {
        if (y < 0 || y >= h || x < 0 || x >= w) return;
        for (int c = 0; c < 3; ++c) img(c, y, x) = rgb[static_cast<size_t>(c)];
    }

    void line(double x0, double y0, double x1, double y1, const std::array<double, 3>& rgb) {
        const double dx = x1 - x0, dy = y1 - y0;
        const int steps = static_cast<int>(std::max(std::abs(dx), std::abs(dy))) + 1;
        for (int i = 0; i <= steps; ++i) {
            const double t = static_cast<double>(i) / steps;
            set(static_cast<int64_t>(std::lround(y0 + t * dy)), static_cast<int64_t>(std::lround(x0 + t * dx)), rgb);
        }
    }

    void rect(int64_t y0, int64_t x0, int64_t hh, int64_t ww, const std::array<double, 3>& rgb) {
        for (int64_t y = y0; y < y0 + hh; ++y) {
            for (int64_t x = x0; x < x0 + ww; ++x) set(y, x, rgb);
        }
    }
};

// 3x5 glyphs for 0-9 . - e, row-major bits.
inline const uint16_t* glyph(char ch) {
    static const uint16_t digits[10][5] = {
        {0b111, 0b101, 0b101, 0b101, 0b111}, {0b010, 0b110, 0b010, 0b010, 0b111},
        {0b111, 0b001, 0b111, 0b100, 0b111}, {0b111, 0b001, 0b111, 0b001, 0b111},
        {0b101, 0b101, 0b111, 0b001, 0b001}, {0b111, 0b100, 0b111, 0b001, 0b111},
        {0b111, 0b100, 0b111, 0b101, 0b111}, {0b111, 0b001, 0b010, 0b010, 0b010},
        {0b111, 0b101, 0b111, 0b101, 0b111}, {0b111, 0b101, 0b111, 0b001, 0b111}};
    static const uint16_t dot[5] = {0b000, 0b000, 0b000, 0b000, 0b010};
    static const uint16_t minus[5] = {0b000, 0b000, 0b111, 0b000, 0b000};
    static const uint16_t expo[5] = {0b000, 0b111, 0b110, 0b100, 0b111};
    static const uint16_t blank[5] = {0, 0, 0, 0, 0};
    if (ch >= '0' && ch <= '9') return digits[ch - '0'];
    if (ch == '.') return dot;
    if (ch == '-') return minus;
    if (ch == 'e' || ch == 'E') return expo;
    return blank;
}

inline void draw_text(Canvas& cv, int64_t y, int64_t x, const std::string& text, const std::array<double, 3>& rgb) {
    for (size_t i = 0; i < text.size(); ++i) {
        const uint16_t* g = glyph(text[i]);
        for (int ry = 0; ry < 5; ++ry) {
            for (int rx = 0; rx < 3; ++rx) {
                if (g[ry] & (1u << (2 - rx))) cv.set(y + ry, x + static_cast<int64_t>(i) * 4 + rx, rgb);
            }
        }
    }
}

inline std::string format_number(double v) {
    char buf[24];
    std::snprintf(buf, sizeof(buf), "%.3g", v);
    return buf;
}

inline std::array<double, 3> palette(size_t i) {
    static const std::array<double, 3> colors[] = {{0.85, 0.25, 0.2},  {0.2, 0.4, 0.8},  {0.15, 0.6, 0.3},
                                                   {0.75, 0.55, 0.1}, {0.55, 0.25, 0.7}, {0.1, 0.6, 0.6}};
    return colors[i % 6];
}

} // namespace plot_detail

struct PlotSeries {
    std::string name;
    std::vector<double> values;
};

/// Render line series to a PNG: framed plot area, light grid, one polyline
/// per series, legend squares top-right, y-range printed at the axis ends.
inline void render_line_plot(const std::string& path, const std::vector<PlotSeries>& series, int64_t height = 480,
                             int64_t width = 800) {
    plot_detail::Canvas cv(height, width);
    const int64_t m = 24;  // margin
    const std::array<double, 3> black = {0, 0, 0};
    const std::array<double, 3> grey = {0.85, 0.85, 0.85};

    double lo = std::numeric_limits<double>::infinity(), hi = -std::numeric_limits<double>::infinity();
    size_t max_len = 0;
    for (const auto& s : series) {
        for (double v : s.values) {
            if (std::isfinite(v)) {
                lo = std::min(lo, v);
                hi = std::max(hi, v);
            }
        }
        max_len = std::max(max_len, s.values.size());
    }
    if (!std::isfinite(lo) || max_len == 0) {
        lo = 0.0;
        hi = 1.0;
    }
    if (hi - lo < 1e-12) hi = lo + 1.0;

    const int64_t py0 = m, py1 = height - m, px0 = m, px1 = width - m;
    for (int g = 1; g < 4; ++g) {
        const int64_t gy = py0 + g * (py1 - py0) / 4;
        cv.line(px0, gy, px1, gy, grey);
    }
    cv.line(px0, py0, px1, py0, black);
    cv.line(px0, py1, px1, py1, black);
    cv.line(px0, py0, px0, py1, black);
    cv.line(px1, py0, px1, py1, black);

    auto sx = [&](size_t i) {
        return static_cast<double>(px0) +
               (max_len <= 1 ? 0.0
                             : static_cast<double>(i) / static_cast<double>(max_len - 1) * static_cast<double>(px1 - px0));
    };
    auto sy = [&](double v) {
        return static_cast<double>(py1) - (v - lo) / (hi - lo) * static_cast<double>(py1 - py0);
    };

    for (size_t si = 0; si < series.size(); ++si) {
        const auto& vals = series[si].values;
        const auto color = plot_detail::palette(si);
        for (size_t i = 1; i < vals.size(); ++i) {
            if (!std::isfinite(vals[i - 1]) || !std::isfinite(vals[i])) continue;
            cv.line(sx(i - 1), sy(vals[i - 1]), sx(i), sy(vals[i]), color);
        }
        cv.rect(py0 + 6 + static_cast<int64_t>(si) * 10, px1 - 18, 6, 12, color);
    }
    plot_detail::draw_text(cv, py0 - 8, px0, plot_detail::format_number(hi), black);
    plot_detail::draw_text(cv, py1 + 3, px0, plot_detail::format_number(lo), black);
    write_png(path, cv.img);
}

/// Horizontal panel strip (inputs, masks, reconstructions); single-channel
/// panels are expanded to gray RGB. Panels must share spatial dims.
inline void render_panel_row(const std::string& path, const std::vector<Tensor>& panels) {
    if (panels.empty()) throw std::invalid_argument("render_panel_row: no panels");
    const int64_t h = panels[0].dim(1), w = panels[0].dim(2);
    const int64_t sep = 2;
    const int64_t n = static_cast<int64_t>(panels.size());
    Tensor out = Tensor::full({3, h, n * w + (n - 1) * sep}, 1.0);
    for (int64_t p = 0; p < n; ++p) {
        const Tensor& panel = panels[static_cast<size_t>(p)];
        if (panel.dim(1) != h || panel.dim(2) != w) {
            throw std::invalid_argument("render_panel_row: panel sizes differ");
        }
        const int64_t x0 = p * (w + sep);
        for (int64_t y = 0; y < h; ++y) {
            for (int64_t x = 0; x < w; ++x) {
                for (int c = 0; c < 3; ++c) {
                    const double v = panel.dim(0) == 3 ? panel(c, y, x) : panel(0, y, x);
                    out(c, y, x0 + x) = std::min(1.0, std::max(0.0, v));
                }
            }
        }
    }
    write_png(path, out);
}

} // namespace udaseg

#endif // UDASEG_IO_PLOT_HPP

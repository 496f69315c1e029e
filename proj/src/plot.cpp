#include "mm/plot.hpp"

#include "mm/image.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdio>
#include <limits>

namespace mm {

namespace {

// 5x7 glyphs, one bit per pixel, rows top to bottom.
struct Glyph {
    char c;
    uint8_t rows[7];
};

const Glyph kFont[] = {
    {'0', {0x0e, 0x11, 0x13, 0x15, 0x19, 0x11, 0x0e}},
    {'1', {0x04, 0x0c, 0x04, 0x04, 0x04, 0x04, 0x0e}},
    {'2', {0x0e, 0x11, 0x01, 0x02, 0x04, 0x08, 0x1f}},
    {'3', {0x1f, 0x02, 0x04, 0x02, 0x01, 0x11, 0x0e}},
    {'4', {0x02, 0x06, 0x0a, 0x12, 0x1f, 0x02, 0x02}},
    {'5', {0x1f, 0x10, 0x1e, 0x01, 0x01, 0x11, 0x0e}},
    {'6', {0x06, 0x08, 0x10, 0x1e, 0x11, 0x11, 0x0e}},
    {'7', {0x1f, 0x01, 0x02, 0x04, 0x08, 0x08, 0x08}},
    {'8', {0x0e, 0x11, 0x11, 0x0e, 0x11, 0x11, 0x0e}},
    {'9', {0x0e, 0x11, 0x11, 0x0f, 0x01, 0x02, 0x0c}},
    {'.', {0x00, 0x00, 0x00, 0x00, 0x00, 0x0c, 0x0c}},
    {'-', {0x00, 0x00, 0x00, 0x1f, 0x00, 0x00, 0x00}},
    {'+', {0x00, 0x04, 0x04, 0x1f, 0x04, 0x04, 0x00}},
    {'_', {0x00, 0x00, 0x00, 0x00, 0x00, 0x00, 0x1f}},
    {'/', {0x01, 0x01, 0x02, 0x04, 0x08, 0x10, 0x10}},
    {':', {0x00, 0x0c, 0x0c, 0x00, 0x0c, 0x0c, 0x00}},
    {'(', {0x02, 0x04, 0x08, 0x08, 0x08, 0x04, 0x02}},
    {')', {0x08, 0x04, 0x02, 0x02, 0x02, 0x04, 0x08}},
    {'A', {0x0e, 0x11, 0x11, 0x1f, 0x11, 0x11, 0x11}},
    {'B', {0x1e, 0x11, 0x11, 0x1e, 0x11, 0x11, 0x1e}},
    {'C', {0x0e, 0x11, 0x10, 0x10, 0x10, 0x11, 0x0e}},
    {'D', {0x1e, 0x11, 0x11, 0x11, 0x11, 0x11, 0x1e}},
    {'E', {0x1f, 0x10, 0x10, 0x1e, 0x10, 0x10, 0x1f}},
    {'F', {0x1f, 0x10, 0x10, 0x1e, 0x10, 0x10, 0x10}},
    {'G', {0x0e, 0x11, 0x10, 0x17, 0x11, 0x11, 0x0f}},
    {'H', {0x11, 0x11, 0x11, 0x1f, 0x11, 0x11, 0x11}},
    {'I', {0x0e, 0x04, 0x04, 0x04, 0x04, 0x04, 0x0e}},
    {'J', {0x07, 0x02, 0x02, 0x02, 0x02, 0x12, 0x0c}},
    {'K', {0x11, 0x12, 0x14, 0x18, 0x14, 0x12, 0x11}},
    {'L', {0x10, 0x10, 0x10, 0x10, 0x10, 0x10, 0x1f}},
    {'M', {0x11, 0x1b, 0x15, 0x15, 0x11, 0x11, 0x11}},
    {'N', {0x11, 0x19, 0x15, 0x13, 0x11, 0x11, 0x11}},
    {'O', {0x0e, 0x11, 0x11, 0x11, 0x11, 0x11, 0x0e}},
    {'P', {0x1e, 0x11, 0x11, 0x1e, 0x10, 0x10, 0x10}},
    {'Q', {0x0e, 0x11, 0x11, 0x11, 0x15, 0x12, 0x0d}},
    {'R', {0x1e, 0x11, 0x11, 0x1e, 0x14, 0x12, 0x11}},
    {'S', {0x0f, 0x10, 0x10, 0x0e, 0x01, 0x01, 0x1e}},
    {'T', {0x1f, 0x04, 0x04, 0x04, 0x04, 0x04, 0x04}},
    {'U', {0x11, 0x11, 0x11, 0x11, 0x11, 0x11, 0x0e}},
    {'V', {0x11, 0x11, 0x11, 0x11, 0x11, 0x0a, 0x04}},
    {'W', {0x11, 0x11, 0x11, 0x15, 0x15, 0x1b, 0x11}},
    {'X', {0x11, 0x11, 0x0a, 0x04, 0x0a, 0x11, 0x11}},
    {'Y', {0x11, 0x11, 0x0a, 0x04, 0x04, 0x04, 0x04}},
    {'Z', {0x1f, 0x01, 0x02, 0x04, 0x08, 0x10, 0x1f}},
    {' ', {0, 0, 0, 0, 0, 0, 0}},
};

const Glyph* find_glyph(char c) {
    c = static_cast<char>(std::toupper(static_cast<unsigned char>(c)));
    for (const auto& g : kFont)
        if (g.c == c) return &g;
    return nullptr;
}

std::string fmt_num(double v) {
    char buf[32];
    if (std::abs(v) >= 1000 || (std::abs(v) < 0.01 && v != 0))
        std::snprintf(buf, sizeof(buf), "%.2e", v);
    else
        std::snprintf(buf, sizeof(buf), "%.4g", v);
    return buf;
}

}  // namespace

Canvas::Canvas(int width, int height) : w_(width), h_(height) {
    img_ = Tensor::full({3, height, width}, Real(1));
}

void Canvas::fill(Real r, Real g, Real b) {
    Real* d = img_.data();
    int64_t plane = static_cast<int64_t>(w_) * h_;
    for (int64_t i = 0; i < plane; ++i) {
        d[i] = r;
        d[plane + i] = g;
        d[2 * plane + i] = b;
    }
}

void Canvas::pixel(int x, int y, Real r, Real g, Real b) {
    if (x < 0 || x >= w_ || y < 0 || y >= h_) return;
    Real* d = img_.data();
    int64_t plane = static_cast<int64_t>(w_) * h_;
    int64_t i = static_cast<int64_t>(y) * w_ + x;
    d[i] = r;
    d[plane + i] = g;
    d[2 * plane + i] = b;
}

void Canvas::line(int x0, int y0, int x1, int y1, Real r, Real g, Real b) {
    int dx = std::abs(x1 - x0), dy = -std::abs(y1 - y0);
    int sx = x0 < x1 ? 1 : -1, sy = y0 < y1 ? 1 : -1;
    int err = dx + dy;
    while (true) {
        pixel(x0, y0, r, g, b);
        if (x0 == x1 && y0 == y1) break;
        int e2 = 2 * err;
        if (e2 >= dy) {
            err += dy;
            x0 += sx;
        }
        if (e2 <= dx) {
            err += dx;
            y0 += sy;
        }
    }
}

void Canvas::disc(int cx, int cy, int radius, Real r, Real g, Real b) {
    for (int y = -radius; y <= radius; ++y)
        for (int x = -radius; x <= radius; ++x)
            if (x * x + y * y <= radius * radius) pixel(cx + x, cy + y, r, g, b);
}

void Canvas::text(int x, int y, const std::string& s, Real r, Real g, Real b) {
    int cx = x;
    for (char c : s) {
        if (const Glyph* gl = find_glyph(c)) {
            for (int row = 0; row < 7; ++row)
                for (int col = 0; col < 5; ++col)
                    if (gl->rows[row] & (1 << (4 - col))) pixel(cx + col, y + row, r, g, b);
        }
        cx += 6;
    }
}

void Canvas::save(const std::string& path) const { save_png_rgb8(path, img_); }

void render_plot(const std::vector<Series>& series, const PlotSpec& spec,
                 const std::string& path) {
    check(!series.empty(), "render_plot: no data series");
    Canvas cv(spec.width, spec.height);
    const int ml = 70, mr = 20, mt = 30, mb = 45;
    const int px0 = ml, px1 = spec.width - mr, py0 = spec.height - mb, py1 = mt;

    double xmin = std::numeric_limits<double>::infinity(), xmax = -xmin;
    double ymin = xmin, ymax = -xmin;
    for (const auto& s : series)
        for (size_t i = 0; i < s.x.size(); ++i) {
            if (!std::isfinite(s.x[i]) || !std::isfinite(s.y[i])) continue;
            xmin = std::min(xmin, s.x[i]);
            xmax = std::max(xmax, s.x[i]);
            ymin = std::min(ymin, s.y[i]);
            ymax = std::max(ymax, s.y[i]);
        }
    if (!std::isfinite(xmin)) xmin = 0, xmax = 1, ymin = 0, ymax = 1;
    if (xmax == xmin) xmax = xmin + 1;
    if (ymax == ymin) ymax = ymin + 1;
    double xpad = 0.05 * (xmax - xmin), ypad = 0.08 * (ymax - ymin);
    xmin -= xpad, xmax += xpad, ymin -= ypad, ymax += ypad;

    auto tx = [&](double v) {
        return px0 + static_cast<int>((v - xmin) / (xmax - xmin) * (px1 - px0));
    };
    auto ty = [&](double v) {
        return py0 - static_cast<int>((v - ymin) / (ymax - ymin) * (py0 - py1));
    };

    cv.line(px0, py0, px1, py0, 0, 0, 0);
    cv.line(px0, py0, px0, py1, 0, 0, 0);
    for (int i = 0; i <= 4; ++i) {
        double xv = xmin + (xmax - xmin) * i / 4;
        double yv = ymin + (ymax - ymin) * i / 4;
        cv.line(tx(xv), py0, tx(xv), py0 + 4, 0, 0, 0);
        cv.text(tx(xv) - 12, py0 + 8, fmt_num(xv), 0, 0, 0);
        cv.line(px0 - 4, ty(yv), px0, ty(yv), 0, 0, 0);
        cv.text(4, ty(yv) - 3, fmt_num(yv), 0, 0, 0);
    }
    cv.text(px0, 8, spec.title, 0, 0, 0);
    cv.text((px0 + px1) / 2 - 3 * static_cast<int>(spec.xlabel.size()),
            spec.height - 14, spec.xlabel, 0, 0, 0);
    cv.text(4, py1 - 14, spec.ylabel, 0, 0, 0);

    static const Real palette[][3] = {{0.8, 0.1, 0.1}, {0.1, 0.3, 0.8}, {0.1, 0.6, 0.2},
                                      {0.7, 0.4, 0.0}, {0.5, 0.1, 0.6}, {0.0, 0.5, 0.5}};
    for (size_t si = 0; si < series.size(); ++si) {
        const auto& s = series[si];
        const Real* col = palette[si % 6];
        int prevx = 0, prevy = 0;
        bool has_prev = false;
        for (size_t i = 0; i < s.x.size(); ++i) {
            if (!std::isfinite(s.x[i]) || !std::isfinite(s.y[i])) {
                has_prev = false;
                continue;
            }
            int X = tx(s.x[i]), Y = ty(s.y[i]);
            if (spec.scatter) {
                cv.disc(X, Y, 3, col[0], col[1], col[2]);
                if (spec.label_points)
                    cv.text(X + 6, Y - 3, s.label, col[0], col[1], col[2]);
            } else {
                if (has_prev) cv.line(prevx, prevy, X, Y, col[0], col[1], col[2]);
                prevx = X, prevy = Y, has_prev = true;
            }
        }
        if (!spec.scatter)
            cv.text(px1 - 6 * static_cast<int>(s.label.size()) - 4,
                    py1 + 10 * static_cast<int>(si), s.label, col[0], col[1], col[2]);
    }
    cv.save(path);
}

}  // namespace mm

#pragma once

#include "mm/tensor.hpp"

#include <string>
#include <vector>

namespace mm {

// Minimal deterministic raster plotting, enough for scatter charts and line
// charts written as PNG files.
class Canvas {
public:
    Canvas(int width, int height);

    void fill(Real r, Real g, Real b);
    void pixel(int x, int y, Real r, Real g, Real b);
    void line(int x0, int y0, int x1, int y1, Real r, Real g, Real b);
    void disc(int cx, int cy, int radius, Real r, Real g, Real b);
    // 5x7 bitmap font, upper-case letters, digits and basic punctuation.
    void text(int x, int y, const std::string& s, Real r, Real g, Real b);

    int width() const { return w_; }
    int height() const { return h_; }
    void save(const std::string& path) const;

private:
    int w_, h_;
    Tensor img_;
};

struct Series {
    std::string label;
    std::vector<double> x, y;
};

struct PlotSpec {
    std::string title, xlabel, ylabel;
    bool scatter = false;          // points only
    bool label_points = false;     // write the series label next to each point
    int width = 720, height = 480;
};

void render_plot(const std::vector<Series>& series, const PlotSpec& spec,
                 const std::string& path);

}  // namespace mm

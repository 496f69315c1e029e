#include "mm/flow.hpp"

#include "mm/image.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstring>

namespace mm {

namespace {

struct Gray {
    int h = 0, w = 0;
    std::vector<Real> v;
    Real at(int y, int x) const {
        y = std::clamp(y, 0, h - 1);
        x = std::clamp(x, 0, w - 1);
        return v[static_cast<size_t>(y) * w + x];
    }
};

Gray to_gray_plane(const Tensor& img) {
    Tensor g = to_gray(img);
    Gray out;
    out.h = g.dim(1);
    out.w = g.dim(2);
    out.v = g.vec();
    return out;
}

Gray downsample_half(const Gray& in) {
    Gray out;
    out.h = std::max(1, in.h / 2);
    out.w = std::max(1, in.w / 2);
    out.v.resize(static_cast<size_t>(out.h) * out.w);
    // 3x3 binomial smoothing before 2x subsampling.
    for (int y = 0; y < out.h; ++y)
        for (int x = 0; x < out.w; ++x) {
            int sy = 2 * y, sx = 2 * x;
            Real s = 0;
            static const Real k[3] = {0.25, 0.5, 0.25};
            for (int dy = -1; dy <= 1; ++dy)
                for (int dx = -1; dx <= 1; ++dx)
                    s += k[dy + 1] * k[dx + 1] * in.at(sy + dy, sx + dx);
            out.v[static_cast<size_t>(y) * out.w + x] = s;
        }
    return out;
}

Real sample_bilinear(const Gray& g, Real y, Real x) {
    int x0 = static_cast<int>(std::floor(x));
    int y0 = static_cast<int>(std::floor(y));
    Real fx = x - x0, fy = y - y0;
    Real a = g.at(y0, x0), b = g.at(y0, x0 + 1);
    Real c = g.at(y0 + 1, x0), d = g.at(y0 + 1, x0 + 1);
    return (1 - fy) * ((1 - fx) * a + fx * b) + fy * ((1 - fx) * c + fx * d);
}

// One pyramid level: several warp/re-linearization passes, each solving the
// variational (Horn-Schunck) equations for a flow increment with Jacobi
// iterations. The per-level iteration budget is split across the warps.
void solve_level(const Gray& a, const Gray& b, std::vector<Real>& u, std::vector<Real>& v,
                 int iterations, Real alpha) {
    const int h = a.h, w = a.w;
    const size_t npx = static_cast<size_t>(h) * w;
    const int warps = 5;
    const int inner = std::max(1, iterations);

    Gray warped;
    warped.h = h;
    warped.w = w;
    warped.v.resize(npx);
    std::vector<Real> ix(npx), iy(npx), it(npx);
    std::vector<Real> du2(npx), dv2(npx);

    // classic weighted 8-neighborhood average
    auto avg = [&](const std::vector<Real>& f, int y, int x) {
        auto get = [&](int yy, int xx) {
            yy = std::clamp(yy, 0, h - 1);
            xx = std::clamp(xx, 0, w - 1);
            return f[static_cast<size_t>(yy) * w + xx];
        };
        return (get(y - 1, x) + get(y + 1, x) + get(y, x - 1) + get(y, x + 1)) / Real(6) +
               (get(y - 1, x - 1) + get(y - 1, x + 1) + get(y + 1, x - 1) +
                get(y + 1, x + 1)) /
                   Real(12);
    };

    // The smoothness term acts on the total flow; the data term is
    // re-linearized around the flow (u0,v0) at each warp.
    std::vector<Real> u0(npx), v0(npx);
    for (int warp = 0; warp < warps; ++warp) {
        u0 = u;
        v0 = v;
        for (int y = 0; y < h; ++y)
            for (int x = 0; x < w; ++x) {
                size_t i = static_cast<size_t>(y) * w + x;
                warped.v[i] = sample_bilinear(b, y + v0[i], x + u0[i]);
            }
        for (int y = 0; y < h; ++y)
            for (int x = 0; x < w; ++x) {
                size_t i = static_cast<size_t>(y) * w + x;
                ix[i] = Real(0.25) * (a.at(y, x + 1) - a.at(y, x - 1) + warped.at(y, x + 1) -
                                      warped.at(y, x - 1));
                iy[i] = Real(0.25) * (a.at(y + 1, x) - a.at(y - 1, x) + warped.at(y + 1, x) -
                                      warped.at(y - 1, x));
                it[i] = warped.v[i] - a.v[i];
            }
        for (int iter = 0; iter < inner; ++iter) {
            for (int y = 0; y < h; ++y)
                for (int x = 0; x < w; ++x) {
                    size_t i = static_cast<size_t>(y) * w + x;
                    Real ubar = avg(u, y, x), vbar = avg(v, y, x);
                    Real num = ix[i] * (ubar - u0[i]) + iy[i] * (vbar - v0[i]) + it[i];
                    Real den = alpha + ix[i] * ix[i] + iy[i] * iy[i];
                    du2[i] = ubar - ix[i] * num / den;
                    dv2[i] = vbar - iy[i] * num / den;
                }
            u.swap(du2);
            v.swap(dv2);
        }
    }
}

FlowField estimate_builtin(const Tensor& frame_a, const Tensor& frame_b,
                           const FlowOptions& opts) {
    Gray a0 = to_gray_plane(frame_a), b0 = to_gray_plane(frame_b);
    std::vector<Gray> pa{a0}, pb{b0};
    for (int l = 1; l < opts.pyramid_levels; ++l) {
        if (pa.back().h < 8 || pa.back().w < 8) break;
        pa.push_back(downsample_half(pa.back()));
        pb.push_back(downsample_half(pb.back()));
    }

    int levels = static_cast<int>(pa.size());
    std::vector<Real> u, v;
    for (int l = levels - 1; l >= 0; --l) {
        const Gray& a = pa[static_cast<size_t>(l)];
        const Gray& b = pb[static_cast<size_t>(l)];
        size_t npx = static_cast<size_t>(a.h) * a.w;
        if (l == levels - 1) {
            u.assign(npx, 0);
            v.assign(npx, 0);
        } else {
            // Upsample the previous level's flow and scale displacements by 2.
            const Gray& prev_a = pa[static_cast<size_t>(l + 1)];
            std::vector<Real> u2(npx), v2(npx);
            Gray gu{prev_a.h, prev_a.w, u}, gv{prev_a.h, prev_a.w, v};
            for (int y = 0; y < a.h; ++y)
                for (int x = 0; x < a.w; ++x) {
                    size_t i = static_cast<size_t>(y) * a.w + x;
                    u2[i] = 2 * sample_bilinear(gu, (y - Real(0.5)) / 2, (x - Real(0.5)) / 2);
                    v2[i] = 2 * sample_bilinear(gv, (y - Real(0.5)) / 2, (x - Real(0.5)) / 2);
                }
            u.swap(u2);
            v.swap(v2);
        }
        solve_level(a, b, u, v, opts.iterations, opts.smoothness);
    }

    FlowField out;
    out.h = a0.h;
    out.w = a0.w;
    out.u = std::move(u);
    out.v = std::move(v);
    return out;
}

}  // namespace

FlowField estimate_flow(const Tensor& frame_a, const Tensor& frame_b,
                        const std::string& method, const FlowOptions& opts) {
    check(frame_a.defined() && frame_b.defined() && frame_a.ndim() == 3 &&
              frame_a.shape() == frame_b.shape(),
          "estimate_flow: frames must share one shape");
    if (method == "builtin") return estimate_builtin(frame_a, frame_b, opts);
    if (method.rfind("external:", 0) == 0) {
        FlowField f = load_flow_file(method.substr(9));
        check(f.h == frame_a.dim(1) && f.w == frame_a.dim(2),
              "estimate_flow: precomputed flow shape does not match the frames");
        return f;
    }
    throw std::invalid_argument("estimate_flow: unknown method '" + method + "'");
}

FrameMagnitude bidirectional_magnitude(const FlowField* fl_prev, const FlowField* fl_next) {
    check(fl_prev != nullptr || fl_next != nullptr,
          "bidirectional_magnitude: both flows absent");
    if (fl_prev && fl_next)
        check(fl_prev->h == fl_next->h && fl_prev->w == fl_next->w,
              "bidirectional_magnitude: flow shape mismatch");
    const FlowField* any = fl_prev ? fl_prev : fl_next;
    FrameMagnitude m;
    m.h = any->h;
    m.w = any->w;
    size_t npx = static_cast<size_t>(m.h) * m.w;
    m.values.resize(npx);
    for (size_t i = 0; i < npx; ++i) {
        if (fl_prev && fl_next) {
            Real mp = std::sqrt(fl_prev->u[i] * fl_prev->u[i] + fl_prev->v[i] * fl_prev->v[i]);
            Real mn = std::sqrt(fl_next->u[i] * fl_next->u[i] + fl_next->v[i] * fl_next->v[i]);
            m.values[i] = (mp + mn) / Real(2);
        } else {
            m.values[i] = std::sqrt(any->u[i] * any->u[i] + any->v[i] * any->v[i]);
        }
    }
    return m;
}

FlowField load_flow_file(const std::string& path) {
    std::FILE* f = std::fopen(path.c_str(), "rb");
    if (!f) throw std::runtime_error("missing precomputed flow file: " + path);
    char magic[4];
    uint32_t h = 0, w = 0;
    bool ok = std::fread(magic, 1, 4, f) == 4 && std::memcmp(magic, "FLOW", 4) == 0 &&
              std::fread(&h, 4, 1, f) == 1 && std::fread(&w, 4, 1, f) == 1;
    FlowField out;
    if (ok) {
        out.h = static_cast<int>(h);
        out.w = static_cast<int>(w);
        size_t npx = static_cast<size_t>(h) * w;
        std::vector<float> buf(npx);
        out.u.resize(npx);
        out.v.resize(npx);
        ok = std::fread(buf.data(), 4, npx, f) == npx;
        if (ok) {
            std::copy(buf.begin(), buf.end(), out.u.begin());
            ok = std::fread(buf.data(), 4, npx, f) == npx;
            std::copy(buf.begin(), buf.end(), out.v.begin());
        }
    }
    std::fclose(f);
    if (!ok) throw std::runtime_error("corrupt flow file: " + path);
    for (size_t i = 0; i < out.u.size(); ++i)
        check(std::isfinite(out.u[i]) && std::isfinite(out.v[i]),
              "flow file contains non-finite values: " + path);
    return out;
}

void save_flow_file(const std::string& path, const FlowField& flow) {
    std::FILE* f = std::fopen(path.c_str(), "wb");
    if (!f) throw std::runtime_error("cannot write flow file: " + path);
    uint32_t h = static_cast<uint32_t>(flow.h), w = static_cast<uint32_t>(flow.w);
    size_t npx = static_cast<size_t>(h) * w;
    std::vector<float> buf(npx);
    bool ok = std::fwrite("FLOW", 1, 4, f) == 4 && std::fwrite(&h, 4, 1, f) == 1 &&
              std::fwrite(&w, 4, 1, f) == 1;
    std::copy(flow.u.begin(), flow.u.end(), buf.begin());
    ok = ok && std::fwrite(buf.data(), 4, npx, f) == npx;
    std::copy(flow.v.begin(), flow.v.end(), buf.begin());
    ok = ok && std::fwrite(buf.data(), 4, npx, f) == npx;
    std::fclose(f);
    if (!ok) throw std::runtime_error("short write on flow file: " + path);
}

}  // namespace mm

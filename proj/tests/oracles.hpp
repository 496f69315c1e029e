#pragma once

// Independent scalar reference implementations used as test oracles. These
// deliberately avoid the library's im2col/GEMM path and any shared helpers so
// that agreement is meaningful.

#include "mm/rng.hpp"
#include "mm/tensor.hpp"

#include <cmath>
#include <functional>
#include <vector>

namespace oracle {

using mm::Real;
using mm::Tensor;

inline Tensor naive_conv2d(const Tensor& x, const Tensor& w, const Tensor& b, int stride,
                           int pad) {
    int N = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
    int Co = w.dim(0), k = w.dim(2);
    int Ho = (H + 2 * pad - k) / stride + 1;
    int Wo = (W + 2 * pad - k) / stride + 1;
    Tensor y = Tensor::zeros({N, Co, Ho, Wo});
    for (int n = 0; n < N; ++n)
        for (int co = 0; co < Co; ++co)
            for (int oy = 0; oy < Ho; ++oy)
                for (int ox = 0; ox < Wo; ++ox) {
                    Real acc = b.defined() ? b.data()[co] : Real(0);
                    for (int ci = 0; ci < C; ++ci)
                        for (int ky = 0; ky < k; ++ky)
                            for (int kx = 0; kx < k; ++kx) {
                                int iy = oy * stride - pad + ky;
                                int ix = ox * stride - pad + kx;
                                if (iy < 0 || iy >= H || ix < 0 || ix >= W) continue;
                                acc += x.data()[((int64_t(n) * C + ci) * H + iy) * W + ix] *
                                       w.data()[((int64_t(co) * C + ci) * k + ky) * k + kx];
                            }
                    y.data()[((int64_t(n) * Co + co) * Ho + oy) * Wo + ox] = acc;
                }
    return y;
}

inline Tensor naive_conv_transpose2d(const Tensor& x, const Tensor& w, const Tensor& b,
                                     int stride, int pad) {
    int N = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
    int Co = w.dim(1), k = w.dim(2);
    int Ho = (H - 1) * stride + k - 2 * pad;
    int Wo = (W - 1) * stride + k - 2 * pad;
    Tensor y = Tensor::zeros({N, Co, Ho, Wo});
    for (int n = 0; n < N; ++n) {
        for (int co = 0; co < Co; ++co) {
            Real* plane = y.data() + (int64_t(n) * Co + co) * Ho * Wo;
            if (b.defined())
                for (int64_t i = 0; i < int64_t(Ho) * Wo; ++i) plane[i] = b.data()[co];
        }
        for (int ci = 0; ci < C; ++ci)
            for (int iy = 0; iy < H; ++iy)
                for (int ix = 0; ix < W; ++ix) {
                    Real v = x.data()[((int64_t(n) * C + ci) * H + iy) * W + ix];
                    for (int co = 0; co < Co; ++co)
                        for (int ky = 0; ky < k; ++ky)
                            for (int kx = 0; kx < k; ++kx) {
                                int oy = iy * stride - pad + ky;
                                int ox = ix * stride - pad + kx;
                                if (oy < 0 || oy >= Ho || ox < 0 || ox >= Wo) continue;
                                y.data()[((int64_t(n) * Co + co) * Ho + oy) * Wo + ox] +=
                                    v * w.data()[((int64_t(ci) * Co + co) * k + ky) * k + kx];
                            }
                }
    }
    return y;
}

inline Tensor random_tensor(std::vector<int> shape, mm::RngStream& rng, Real lo = -1,
                            Real hi = 1, bool requires_grad = false) {
    Tensor t = Tensor::zeros(std::move(shape), requires_grad);
    for (Real& v : t.vec()) v = rng.uniform(lo, hi);
    return t;
}

struct GradCheck {
    double max_rel_err = 0;
    int checked = 0;
};

// Central-difference check of `analytic` (captured gradient of `param`)
// against fresh evaluations of `loss_fn` at sampled coordinates.
inline GradCheck fd_gradcheck(Tensor param, const std::vector<Real>& analytic,
                              const std::function<Real()>& loss_fn, int samples,
                              mm::RngStream& rng, Real h_base = 1e-5) {
    GradCheck res;
    int64_t n = param.numel();
    for (int s = 0; s < samples; ++s) {
        int64_t i = rng.uniform_int(0, n - 1);
        Real save = param.data()[i];
        Real h = h_base * std::max(Real(1), std::abs(save));
        param.data()[i] = save + h;
        Real lp = loss_fn();
        param.data()[i] = save - h;
        Real lm = loss_fn();
        param.data()[i] = save;
        Real fd = (lp - lm) / (2 * h);
        Real g = analytic[static_cast<size_t>(i)];
        Real denom = std::max({std::abs(fd), std::abs(g), Real(1e-6)});
        res.max_rel_err = std::max(res.max_rel_err, double(std::abs(fd - g) / denom));
        ++res.checked;
    }
    return res;
}

inline double max_abs_diff(const Tensor& a, const Tensor& b) {
    double m = 0;
    for (int64_t i = 0; i < a.numel(); ++i)
        m = std::max(m, double(std::abs(a.data()[i] - b.data()[i])));
    return m;
}

}  // namespace oracle

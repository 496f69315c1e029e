#include "mm/tensor.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <unordered_set>

namespace mm {

void check(bool cond, const std::string& msg) {
    if (!cond) throw std::invalid_argument(msg);
}

namespace {

thread_local bool g_grad_enabled = true;

using MatRM = Eigen::Matrix<Real, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapRM = Eigen::Map<MatRM>;
using CMapRM = Eigen::Map<const MatRM>;

std::shared_ptr<TensorImpl> make_impl(std::vector<int> shape) {
    auto impl = std::make_shared<TensorImpl>();
    impl->shape = std::move(shape);
    impl->val.assign(static_cast<size_t>(impl->numel()), Real(0));
    return impl;
}

struct Dims4 {
    int n, c, h, w;
};

Dims4 dims4(const Tensor& t, const char* what) {
    check(t.defined() && t.ndim() == 4, std::string(what) + ": expected a 4-d tensor");
    return {t.dim(0), t.dim(1), t.dim(2), t.dim(3)};
}

int conv_out(int in, int k, int stride, int pad) {
    return (in + 2 * pad - k) / stride + 1;
}

// Caffe-layout im2col: rows are (c,ky,kx) taps, columns are output positions.
void im2col(const Real* src, int c, int h, int w, int k, int stride, int pad,
            int ho, int wo, Real* cols) {
    for (int ci = 0; ci < c; ++ci) {
        for (int ky = 0; ky < k; ++ky) {
            for (int kx = 0; kx < k; ++kx) {
                Real* row = cols + (static_cast<int64_t>(ci) * k * k + ky * k + kx) *
                                       static_cast<int64_t>(ho) * wo;
                const Real* plane = src + static_cast<int64_t>(ci) * h * w;
                for (int oy = 0; oy < ho; ++oy) {
                    int iy = oy * stride - pad + ky;
                    if (iy < 0 || iy >= h) {
                        std::fill(row, row + wo, Real(0));
                        row += wo;
                        continue;
                    }
                    const Real* src_row = plane + static_cast<int64_t>(iy) * w;
                    for (int ox = 0; ox < wo; ++ox) {
                        int ix = ox * stride - pad + kx;
                        *row++ = (ix < 0 || ix >= w) ? Real(0) : src_row[ix];
                    }
                }
            }
        }
    }
}

void col2im(const Real* cols, int c, int h, int w, int k, int stride, int pad,
            int ho, int wo, Real* dst) {
    for (int ci = 0; ci < c; ++ci) {
        for (int ky = 0; ky < k; ++ky) {
            for (int kx = 0; kx < k; ++kx) {
                const Real* row = cols + (static_cast<int64_t>(ci) * k * k + ky * k + kx) *
                                             static_cast<int64_t>(ho) * wo;
                Real* plane = dst + static_cast<int64_t>(ci) * h * w;
                for (int oy = 0; oy < ho; ++oy) {
                    int iy = oy * stride - pad + ky;
                    if (iy < 0 || iy >= h) {
                        row += wo;
                        continue;
                    }
                    Real* dst_row = plane + static_cast<int64_t>(iy) * w;
                    for (int ox = 0; ox < wo; ++ox) {
                        int ix = ox * stride - pad + kx;
                        if (ix >= 0 && ix < w) dst_row[ix] += row[ox];
                    }
                    row += wo;
                }
            }
        }
    }
}

}  // namespace

Tensor make_result(std::vector<int> shape, std::vector<Tensor> inputs) {
    auto impl = make_impl(std::move(shape));
    if (g_grad_enabled) {
        bool needs = false;
        for (const auto& in : inputs)
            if (in.defined() && in.requires_grad()) needs = true;
        if (needs) {
            impl->requires_grad = true;
            impl->inputs = std::move(inputs);
        }
    }
    return Tensor(std::move(impl));
}

NoGradGuard::NoGradGuard() : prev_(g_grad_enabled) { g_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { g_grad_enabled = prev_; }
bool grad_enabled() { return g_grad_enabled; }

Tensor Tensor::zeros(std::vector<int> shape, bool requires_grad) {
    Tensor t(make_impl(std::move(shape)));
    t.impl_->requires_grad = requires_grad;
    return t;
}

Tensor Tensor::full(std::vector<int> shape, Real value) {
    Tensor t(make_impl(std::move(shape)));
    std::fill(t.impl_->val.begin(), t.impl_->val.end(), value);
    return t;
}

Tensor Tensor::from_vec(std::vector<int> shape, std::vector<Real> values) {
    Tensor t(make_impl(std::move(shape)));
    check(static_cast<int64_t>(values.size()) == t.numel(), "from_vec: size mismatch");
    t.impl_->val = std::move(values);
    return t;
}

const std::vector<int>& Tensor::shape() const { return impl_->shape; }
int Tensor::ndim() const { return static_cast<int>(impl_->shape.size()); }
int Tensor::dim(int i) const { return impl_->shape.at(static_cast<size_t>(i)); }
int64_t Tensor::numel() const { return impl_ ? impl_->numel() : 0; }
Real* Tensor::data() { return impl_->val.data(); }
const Real* Tensor::data() const { return impl_->val.data(); }
std::vector<Real>& Tensor::vec() { return impl_->val; }
const std::vector<Real>& Tensor::vec() const { return impl_->val; }

Real Tensor::item() const {
    check(numel() == 1, "item: tensor is not a scalar");
    return impl_->val[0];
}

bool Tensor::requires_grad() const { return impl_ && impl_->requires_grad; }

Tensor& Tensor::set_requires_grad(bool v) {
    impl_->requires_grad = v;
    return *this;
}

const std::vector<Real>& Tensor::grad() const { return impl_->grad; }
std::vector<Real>& Tensor::grad_mut() {
    impl_->ensure_grad();
    return impl_->grad;
}

void Tensor::zero_grad() {
    if (impl_) impl_->grad.assign(impl_->val.size(), Real(0));
}

Tensor Tensor::detach() const {
    Tensor t(make_impl(impl_->shape));
    t.impl_->val = impl_->val;
    return t;
}

Tensor Tensor::clone() const { return detach(); }

void Tensor::backward() {
    check(defined() && numel() == 1, "backward: expected a scalar loss");
    // Post-order DFS, then run backward functions in reverse.
    std::vector<TensorImpl*> order;
    std::unordered_set<TensorImpl*> seen;
    std::vector<std::pair<TensorImpl*, size_t>> stack;
    stack.emplace_back(impl_.get(), 0);
    seen.insert(impl_.get());
    while (!stack.empty()) {
        auto& [node, idx] = stack.back();
        if (idx < node->inputs.size()) {
            TensorImpl* child = node->inputs[idx++].impl();
            if (child && !seen.count(child)) {
                seen.insert(child);
                stack.emplace_back(child, 0);
            }
        } else {
            order.push_back(node);
            stack.pop_back();
        }
    }
    impl_->grad.assign(1, Real(1));
    for (auto it = order.rbegin(); it != order.rend(); ++it) {
        if ((*it)->backward_fn && !(*it)->grad.empty()) (*it)->backward_fn();
    }
}

// ---------------------------------------------------------------------------
// elementwise

namespace {

template <class Fwd, class Bwd>
Tensor unary_op(const Tensor& a, Fwd fwd, Bwd bwd) {
    Tensor out = make_result(a.shape(), {a});
    const Real* x = a.data();
    Real* y = out.data();
    int64_t n = a.numel();
    for (int64_t i = 0; i < n; ++i) y[i] = fwd(x[i]);
    if (out.requires_grad()) {
        TensorImpl* o = out.impl();
        TensorImpl* ai = a.impl();
        o->backward_fn = [o, ai, bwd]() {
            if (!ai->requires_grad) return;
            ai->ensure_grad();
            int64_t n = o->numel();
            for (int64_t i = 0; i < n; ++i)
                ai->grad[i] += o->grad[i] * bwd(ai->val[i], o->val[i]);
        };
    }
    return out;
}

}  // namespace

Tensor add(const Tensor& a, const Tensor& b) {
    check(a.shape() == b.shape(), "add: shape mismatch");
    Tensor out = make_result(a.shape(), {a, b});
    const Real* pa = a.data();
    const Real* pb = b.data();
    Real* y = out.data();
    int64_t n = a.numel();
    for (int64_t i = 0; i < n; ++i) y[i] = pa[i] + pb[i];
    if (out.requires_grad()) {
        TensorImpl* o = out.impl();
        TensorImpl* ai = a.impl();
        TensorImpl* bi = b.impl();
        o->backward_fn = [o, ai, bi]() {
            int64_t n = o->numel();
            if (ai->requires_grad) {
                ai->ensure_grad();
                for (int64_t i = 0; i < n; ++i) ai->grad[i] += o->grad[i];
            }
            if (bi->requires_grad) {
                bi->ensure_grad();
                for (int64_t i = 0; i < n; ++i) bi->grad[i] += o->grad[i];
            }
        };
    }
    return out;
}

Tensor sub(const Tensor& a, const Tensor& b) {
    check(a.shape() == b.shape(), "sub: shape mismatch");
    Tensor out = make_result(a.shape(), {a, b});
    const Real* pa = a.data();
    const Real* pb = b.data();
    Real* y = out.data();
    int64_t n = a.numel();
    for (int64_t i = 0; i < n; ++i) y[i] = pa[i] - pb[i];
    if (out.requires_grad()) {
        TensorImpl* o = out.impl();
        TensorImpl* ai = a.impl();
        TensorImpl* bi = b.impl();
        o->backward_fn = [o, ai, bi]() {
            int64_t n = o->numel();
            if (ai->requires_grad) {
                ai->ensure_grad();
                for (int64_t i = 0; i < n; ++i) ai->grad[i] += o->grad[i];
            }
            if (bi->requires_grad) {
                bi->ensure_grad();
                for (int64_t i = 0; i < n; ++i) bi->grad[i] -= o->grad[i];
            }
        };
    }
    return out;
}

Tensor mul(const Tensor& a, const Tensor& b) {
    check(a.shape() == b.shape(), "mul: shape mismatch");
    Tensor out = make_result(a.shape(), {a, b});
    const Real* pa = a.data();
    const Real* pb = b.data();
    Real* y = out.data();
    int64_t n = a.numel();
    for (int64_t i = 0; i < n; ++i) y[i] = pa[i] * pb[i];
    if (out.requires_grad()) {
        TensorImpl* o = out.impl();
        TensorImpl* ai = a.impl();
        TensorImpl* bi = b.impl();
        o->backward_fn = [o, ai, bi]() {
            int64_t n = o->numel();
            if (ai->requires_grad) {
                ai->ensure_grad();
                for (int64_t i = 0; i < n; ++i) ai->grad[i] += o->grad[i] * bi->val[i];
            }
            if (bi->requires_grad) {
                bi->ensure_grad();
                for (int64_t i = 0; i < n; ++i) bi->grad[i] += o->grad[i] * ai->val[i];
            }
        };
    }
    return out;
}

Tensor scale(const Tensor& a, Real c) {
    return unary_op(
        a, [c](Real x) { return x * c; }, [c](Real, Real) { return c; });
}

Tensor add_scalar(const Tensor& a, Real c) {
    return unary_op(
        a, [c](Real x) { return x + c; }, [](Real, Real) { return Real(1); });
}

Tensor square(const Tensor& a) {
    return unary_op(
        a, [](Real x) { return x * x; }, [](Real x, Real) { return 2 * x; });
}

Tensor sqrt_t(const Tensor& a) {
    return unary_op(
        a, [](Real x) { return std::sqrt(x); },
        [](Real, Real y) { return Real(0.5) / y; });
}

Tensor abs_t(const Tensor& a) {
    return unary_op(
        a, [](Real x) { return std::abs(x); },
        [](Real x, Real) { return x > 0 ? Real(1) : (x < 0 ? Real(-1) : Real(0)); });
}

Tensor leaky_relu(const Tensor& a, Real slope) {
    return unary_op(
        a, [slope](Real x) { return x > 0 ? x : slope * x; },
        [slope](Real x, Real) { return x > 0 ? Real(1) : slope; });
}

// ---------------------------------------------------------------------------
// convolution

namespace {
// im2col scratch, reused across calls; conv forward/backward never nest.
thread_local std::vector<Real> g_cols_scratch;
thread_local std::vector<Real> g_cols_scratch2;
}  // namespace

Tensor conv2d(const Tensor& x, const Tensor& w, const Tensor& b, int stride, int pad) {
    Dims4 xd = dims4(x, "conv2d input");
    Dims4 wd = dims4(w, "conv2d weight");
    check(wd.c == xd.c, "conv2d: channel mismatch");
    check(wd.h == wd.w, "conv2d: non-square kernel");
    if (b.defined()) check(b.numel() == wd.n, "conv2d: bias size mismatch");
    const int k = wd.h;
    const int ho = conv_out(xd.h, k, stride, pad);
    const int wo = conv_out(xd.w, k, stride, pad);
    check(ho > 0 && wo > 0, "conv2d: output would be empty");

    std::vector<Tensor> inputs = {x, w};
    if (b.defined()) inputs.push_back(b);
    Tensor out = make_result({xd.n, wd.n, ho, wo}, std::move(inputs));

    const int64_t kk = static_cast<int64_t>(xd.c) * k * k;
    const int64_t pcount = static_cast<int64_t>(ho) * wo;
    std::vector<Real>& cols = g_cols_scratch;
    cols.resize(static_cast<size_t>(kk * pcount));
    CMapRM wmat(w.data(), wd.n, kk);
    for (int n = 0; n < xd.n; ++n) {
        const Real* xn = x.data() + static_cast<int64_t>(n) * xd.c * xd.h * xd.w;
        im2col(xn, xd.c, xd.h, xd.w, k, stride, pad, ho, wo, cols.data());
        MapRM ymat(out.data() + static_cast<int64_t>(n) * wd.n * pcount, wd.n, pcount);
        CMapRM cmat(cols.data(), kk, pcount);
        ymat.noalias() = wmat * cmat;
        if (b.defined()) {
            const Real* pb = b.data();
            for (int co = 0; co < wd.n; ++co)
                ymat.row(co).array() += pb[co];
        }
    }

    if (out.requires_grad()) {
        TensorImpl* o = out.impl();
        TensorImpl* xi = x.impl();
        TensorImpl* wi = w.impl();
        TensorImpl* bi = b.defined() ? b.impl() : nullptr;
        o->backward_fn = [o, xi, wi, bi, xd, wd, k, stride, pad, ho, wo]() {
            const int64_t kk = static_cast<int64_t>(xd.c) * k * k;
            const int64_t pcount = static_cast<int64_t>(ho) * wo;
            CMapRM wmat(wi->val.data(), wd.n, kk);
            std::vector<Real>& cols = g_cols_scratch;
            cols.resize(static_cast<size_t>(kk * pcount));
            if (xi->requires_grad) xi->ensure_grad();
            if (wi->requires_grad) wi->ensure_grad();
            if (bi && bi->requires_grad) bi->ensure_grad();
            for (int n = 0; n < xd.n; ++n) {
                CMapRM gy(o->grad.data() + static_cast<int64_t>(n) * wd.n * pcount, wd.n,
                          pcount);
                if (wi->requires_grad || bi) {
                    if (wi->requires_grad) {
                        const Real* xn =
                            xi->val.data() + static_cast<int64_t>(n) * xd.c * xd.h * xd.w;
                        im2col(xn, xd.c, xd.h, xd.w, k, stride, pad, ho, wo, cols.data());
                        CMapRM cmat(cols.data(), kk, pcount);
                        MapRM gw(wi->grad.data(), wd.n, kk);
                        gw.noalias() += gy * cmat.transpose();
                    }
                    if (bi && bi->requires_grad) {
                        for (int co = 0; co < wd.n; ++co) bi->grad[co] += gy.row(co).sum();
                    }
                }
                if (xi->requires_grad) {
                    g_cols_scratch2.resize(static_cast<size_t>(kk * pcount));
                    MapRM gcols(g_cols_scratch2.data(), kk, pcount);
                    gcols.noalias() = wmat.transpose() * gy;
                    Real* gx = xi->grad.data() + static_cast<int64_t>(n) * xd.c * xd.h * xd.w;
                    col2im(g_cols_scratch2.data(), xd.c, xd.h, xd.w, k, stride, pad, ho, wo, gx);
                }
            }
        };
    }
    return out;
}

Tensor conv_transpose2d(const Tensor& x, const Tensor& w, const Tensor& b, int stride,
                        int pad) {
    Dims4 xd = dims4(x, "conv_transpose2d input");
    Dims4 wd = dims4(w, "conv_transpose2d weight");  // (Cin,Cout,k,k)
    check(wd.n == xd.c, "conv_transpose2d: channel mismatch");
    check(wd.h == wd.w, "conv_transpose2d: non-square kernel");
    const int k = wd.h;
    const int cout = wd.c;
    if (b.defined()) check(b.numel() == cout, "conv_transpose2d: bias size mismatch");
    const int ho = (xd.h - 1) * stride + k - 2 * pad;
    const int wo = (xd.w - 1) * stride + k - 2 * pad;
    check(ho > 0 && wo > 0, "conv_transpose2d: output would be empty");

    std::vector<Tensor> inputs = {x, w};
    if (b.defined()) inputs.push_back(b);
    Tensor out = make_result({xd.n, cout, ho, wo}, std::move(inputs));

    // Forward of a transposed conv is col2im of W^T * X.
    const int64_t kk = static_cast<int64_t>(cout) * k * k;
    const int64_t pin = static_cast<int64_t>(xd.h) * xd.w;
    CMapRM wmat(w.data(), xd.c, kk);
    for (int n = 0; n < xd.n; ++n) {
        CMapRM xmat(x.data() + static_cast<int64_t>(n) * xd.c * pin, xd.c, pin);
        g_cols_scratch.resize(static_cast<size_t>(kk * pin));
        MapRM cols(g_cols_scratch.data(), kk, pin);
        cols.noalias() = wmat.transpose() * xmat;
        Real* yn = out.data() + static_cast<int64_t>(n) * cout * ho * wo;
        col2im(cols.data(), cout, ho, wo, k, stride, pad, xd.h, xd.w, yn);
        if (b.defined()) {
            const Real* pb = b.data();
            for (int co = 0; co < cout; ++co) {
                Real* plane = yn + static_cast<int64_t>(co) * ho * wo;
                for (int64_t i = 0; i < static_cast<int64_t>(ho) * wo; ++i) plane[i] += pb[co];
            }
        }
    }

    if (out.requires_grad()) {
        TensorImpl* o = out.impl();
        TensorImpl* xi = x.impl();
        TensorImpl* wi = w.impl();
        TensorImpl* bi = b.defined() ? b.impl() : nullptr;
        o->backward_fn = [o, xi, wi, bi, xd, cout, k, stride, pad, ho, wo]() {
            const int64_t kk = static_cast<int64_t>(cout) * k * k;
            const int64_t pin = static_cast<int64_t>(xd.h) * xd.w;
            std::vector<Real>& cols = g_cols_scratch;
            cols.resize(static_cast<size_t>(kk * pin));
            if (xi->requires_grad) xi->ensure_grad();
            if (wi->requires_grad) wi->ensure_grad();
            if (bi && bi->requires_grad) bi->ensure_grad();
            CMapRM wmat(wi->val.data(), xd.c, kk);
            for (int n = 0; n < xd.n; ++n) {
                const Real* gyn = o->grad.data() + static_cast<int64_t>(n) * cout * ho * wo;
                im2col(gyn, cout, ho, wo, k, stride, pad, xd.h, xd.w, cols.data());
                CMapRM cmat(cols.data(), kk, pin);
                if (xi->requires_grad) {
                    MapRM gx(xi->grad.data() + static_cast<int64_t>(n) * xd.c * pin, xd.c,
                             pin);
                    gx.noalias() += wmat * cmat;
                }
                if (wi->requires_grad) {
                    CMapRM xmat(xi->val.data() + static_cast<int64_t>(n) * xd.c * pin, xd.c,
                                pin);
                    MapRM gw(wi->grad.data(), xd.c, kk);
                    gw.noalias() += xmat * cmat.transpose();
                }
                if (bi && bi->requires_grad) {
                    for (int co = 0; co < cout; ++co) {
                        const Real* plane = gyn + static_cast<int64_t>(co) * ho * wo;
                        Real s = 0;
                        for (int64_t i = 0; i < static_cast<int64_t>(ho) * wo; ++i)
                            s += plane[i];
                        bi->grad[co] += s;
                    }
                }
            }
        };
    }
    return out;
}

// ---------------------------------------------------------------------------
// shape ops

Tensor concat_channels(const std::vector<Tensor>& xs) {
    check(!xs.empty(), "concat_channels: empty input list");
    Dims4 d0 = dims4(xs[0], "concat_channels");
    int ctotal = 0;
    for (const auto& t : xs) {
        Dims4 d = dims4(t, "concat_channels");
        check(d.n == d0.n && d.h == d0.h && d.w == d0.w,
              "concat_channels: spatial/batch mismatch");
        ctotal += d.c;
    }
    Tensor out = make_result({d0.n, ctotal, d0.h, d0.w}, xs);
    const int64_t plane = static_cast<int64_t>(d0.h) * d0.w;
    for (int n = 0; n < d0.n; ++n) {
        Real* dst = out.data() + static_cast<int64_t>(n) * ctotal * plane;
        for (const auto& t : xs) {
            int c = t.dim(1);
            const Real* src = t.data() + static_cast<int64_t>(n) * c * plane;
            std::copy(src, src + c * plane, dst);
            dst += c * plane;
        }
    }
    if (out.requires_grad()) {
        TensorImpl* o = out.impl();
        std::vector<TensorImpl*> parts;
        for (const auto& t : xs) parts.push_back(t.impl());
        o->backward_fn = [o, parts, d0, ctotal, plane]() {
            for (int n = 0; n < d0.n; ++n) {
                const Real* gsrc = o->grad.data() + static_cast<int64_t>(n) * ctotal * plane;
                for (TensorImpl* p : parts) {
                    int c = p->shape[1];
                    if (p->requires_grad) {
                        p->ensure_grad();
                        Real* gdst = p->grad.data() + static_cast<int64_t>(n) * c * plane;
                        for (int64_t i = 0; i < c * plane; ++i) gdst[i] += gsrc[i];
                    }
                    gsrc += c * plane;
                }
            }
        };
    }
    return out;
}

Tensor avg_pool2d(const Tensor& x, int factor) {
    Dims4 d = dims4(x, "avg_pool2d");
    check(factor >= 1 && d.h % factor == 0 && d.w % factor == 0,
          "avg_pool2d: size not divisible by factor");
    int ho = d.h / factor, wo = d.w / factor;
    Tensor out = make_result({d.n, d.c, ho, wo}, {x});
    const Real inv = Real(1) / (static_cast<Real>(factor) * factor);
    for (int n = 0; n < d.n; ++n)
        for (int c = 0; c < d.c; ++c) {
            const Real* src =
                x.data() + (static_cast<int64_t>(n) * d.c + c) * d.h * d.w;
            Real* dst = out.data() + (static_cast<int64_t>(n) * d.c + c) * ho * wo;
            for (int oy = 0; oy < ho; ++oy)
                for (int ox = 0; ox < wo; ++ox) {
                    Real s = 0;
                    for (int fy = 0; fy < factor; ++fy)
                        for (int fx = 0; fx < factor; ++fx)
                            s += src[(oy * factor + fy) * static_cast<int64_t>(d.w) +
                                     ox * factor + fx];
                    dst[oy * static_cast<int64_t>(wo) + ox] = s * inv;
                }
        }
    if (out.requires_grad()) {
        TensorImpl* o = out.impl();
        TensorImpl* xi = x.impl();
        o->backward_fn = [o, xi, d, factor, ho, wo, inv]() {
            if (!xi->requires_grad) return;
            xi->ensure_grad();
            for (int n = 0; n < d.n; ++n)
                for (int c = 0; c < d.c; ++c) {
                    Real* gx = xi->grad.data() +
                               (static_cast<int64_t>(n) * d.c + c) * d.h * d.w;
                    const Real* gy =
                        o->grad.data() + (static_cast<int64_t>(n) * d.c + c) * ho * wo;
                    for (int oy = 0; oy < ho; ++oy)
                        for (int ox = 0; ox < wo; ++ox) {
                            Real g = gy[oy * static_cast<int64_t>(wo) + ox] * inv;
                            for (int fy = 0; fy < factor; ++fy)
                                for (int fx = 0; fx < factor; ++fx)
                                    gx[(oy * factor + fy) * static_cast<int64_t>(d.w) +
                                       ox * factor + fx] += g;
                        }
                }
        };
    }
    return out;
}

namespace {

// Mirror index into [0, n); falls back to edge replication when the pad is
// wider than the image.
int pad_index(int i, int n) {
    if (n == 1) return 0;
    while (i < 0 || i >= n) {
        if (i < 0) i = -i;
        if (i >= n) i = 2 * (n - 1) - i;
    }
    return i;
}

}  // namespace

Tensor pad2d(const Tensor& x, int top, int bottom, int left, int right) {
    Dims4 d = dims4(x, "pad2d");
    check(top >= 0 && bottom >= 0 && left >= 0 && right >= 0, "pad2d: negative pad");
    int ho = d.h + top + bottom, wo = d.w + left + right;
    Tensor out = make_result({d.n, d.c, ho, wo}, {x});
    std::vector<int> ymap(static_cast<size_t>(ho)), xmap(static_cast<size_t>(wo));
    for (int y = 0; y < ho; ++y) ymap[y] = pad_index(y - top, d.h);
    for (int xq = 0; xq < wo; ++xq) xmap[xq] = pad_index(xq - left, d.w);
    for (int n = 0; n < d.n; ++n)
        for (int c = 0; c < d.c; ++c) {
            const Real* src =
                x.data() + (static_cast<int64_t>(n) * d.c + c) * d.h * d.w;
            Real* dst = out.data() + (static_cast<int64_t>(n) * d.c + c) * ho * wo;
            for (int y = 0; y < ho; ++y)
                for (int xq = 0; xq < wo; ++xq)
                    dst[y * static_cast<int64_t>(wo) + xq] =
                        src[ymap[y] * static_cast<int64_t>(d.w) + xmap[xq]];
        }
    if (out.requires_grad()) {
        TensorImpl* o = out.impl();
        TensorImpl* xi = x.impl();
        o->backward_fn = [o, xi, d, ho, wo, ymap, xmap]() {
            if (!xi->requires_grad) return;
            xi->ensure_grad();
            for (int n = 0; n < d.n; ++n)
                for (int c = 0; c < d.c; ++c) {
                    Real* gx = xi->grad.data() +
                               (static_cast<int64_t>(n) * d.c + c) * d.h * d.w;
                    const Real* gy =
                        o->grad.data() + (static_cast<int64_t>(n) * d.c + c) * ho * wo;
                    for (int y = 0; y < ho; ++y)
                        for (int xq = 0; xq < wo; ++xq)
                            gx[ymap[y] * static_cast<int64_t>(d.w) + xmap[xq]] +=
                                gy[y * static_cast<int64_t>(wo) + xq];
                }
        };
    }
    return out;
}

Tensor crop2d(const Tensor& x, int y0, int x0, int h, int w) {
    Dims4 d = dims4(x, "crop2d");
    check(y0 >= 0 && x0 >= 0 && y0 + h <= d.h && x0 + w <= d.w, "crop2d: out of bounds");
    Tensor out = make_result({d.n, d.c, h, w}, {x});
    for (int n = 0; n < d.n; ++n)
        for (int c = 0; c < d.c; ++c) {
            const Real* src =
                x.data() + (static_cast<int64_t>(n) * d.c + c) * d.h * d.w;
            Real* dst = out.data() + (static_cast<int64_t>(n) * d.c + c) * h * w;
            for (int y = 0; y < h; ++y)
                std::copy(src + (y0 + y) * static_cast<int64_t>(d.w) + x0,
                          src + (y0 + y) * static_cast<int64_t>(d.w) + x0 + w,
                          dst + y * static_cast<int64_t>(w));
        }
    if (out.requires_grad()) {
        TensorImpl* o = out.impl();
        TensorImpl* xi = x.impl();
        o->backward_fn = [o, xi, d, y0, x0, h, w]() {
            if (!xi->requires_grad) return;
            xi->ensure_grad();
            for (int n = 0; n < d.n; ++n)
                for (int c = 0; c < d.c; ++c) {
                    Real* gx = xi->grad.data() +
                               (static_cast<int64_t>(n) * d.c + c) * d.h * d.w;
                    const Real* gy = o->grad.data() +
                                     (static_cast<int64_t>(n) * d.c + c) * h * w;
                    for (int y = 0; y < h; ++y)
                        for (int xq = 0; xq < w; ++xq)
                            gx[(y0 + y) * static_cast<int64_t>(d.w) + x0 + xq] +=
                                gy[y * static_cast<int64_t>(w) + xq];
                }
        };
    }
    return out;
}

Tensor stack_batch(const std::vector<Tensor>& items) {
    check(!items.empty(), "stack_batch: empty input list");
    check(items[0].ndim() == 3, "stack_batch: expected (C,H,W) items");
    int c = items[0].dim(0), h = items[0].dim(1), w = items[0].dim(2);
    Tensor out =
        make_result({static_cast<int>(items.size()), c, h, w}, items);
    int64_t per = static_cast<int64_t>(c) * h * w;
    for (size_t i = 0; i < items.size(); ++i) {
        check(items[i].shape() == items[0].shape(), "stack_batch: shape mismatch");
        std::copy(items[i].data(), items[i].data() + per,
                  out.data() + static_cast<int64_t>(i) * per);
    }
    if (out.requires_grad()) {
        TensorImpl* o = out.impl();
        std::vector<TensorImpl*> parts;
        for (const auto& t : items) parts.push_back(t.impl());
        o->backward_fn = [o, parts, per]() {
            for (size_t i = 0; i < parts.size(); ++i) {
                if (!parts[i]->requires_grad) continue;
                parts[i]->ensure_grad();
                const Real* gy = o->grad.data() + static_cast<int64_t>(i) * per;
                for (int64_t j = 0; j < per; ++j) parts[i]->grad[j] += gy[j];
            }
        };
    }
    return out;
}

// ---------------------------------------------------------------------------
// reductions and image gradients

Tensor sum_channels(const Tensor& x) {
    Dims4 d = dims4(x, "sum_channels");
    Tensor out = make_result({d.n, 1, d.h, d.w}, {x});
    const int64_t plane = static_cast<int64_t>(d.h) * d.w;
    for (int n = 0; n < d.n; ++n) {
        Real* dst = out.data() + static_cast<int64_t>(n) * plane;
        for (int c = 0; c < d.c; ++c) {
            const Real* src = x.data() + (static_cast<int64_t>(n) * d.c + c) * plane;
            for (int64_t i = 0; i < plane; ++i) dst[i] += src[i];
        }
    }
    if (out.requires_grad()) {
        TensorImpl* o = out.impl();
        TensorImpl* xi = x.impl();
        o->backward_fn = [o, xi, d, plane]() {
            if (!xi->requires_grad) return;
            xi->ensure_grad();
            for (int n = 0; n < d.n; ++n) {
                const Real* gy = o->grad.data() + static_cast<int64_t>(n) * plane;
                for (int c = 0; c < d.c; ++c) {
                    Real* gx =
                        xi->grad.data() + (static_cast<int64_t>(n) * d.c + c) * plane;
                    for (int64_t i = 0; i < plane; ++i) gx[i] += gy[i];
                }
            }
        };
    }
    return out;
}

Tensor mean_all(const Tensor& x) {
    Tensor out = make_result({1}, {x});
    int64_t n = x.numel();
    Real s = 0;
    const Real* px = x.data();
    for (int64_t i = 0; i < n; ++i) s += px[i];
    out.data()[0] = s / static_cast<Real>(n);
    if (out.requires_grad()) {
        TensorImpl* o = out.impl();
        TensorImpl* xi = x.impl();
        o->backward_fn = [o, xi, n]() {
            if (!xi->requires_grad) return;
            xi->ensure_grad();
            Real g = o->grad[0] / static_cast<Real>(n);
            for (int64_t i = 0; i < n; ++i) xi->grad[i] += g;
        };
    }
    return out;
}

Tensor diff_x(const Tensor& x) {
    Dims4 d = dims4(x, "diff_x");
    Tensor out = make_result(x.shape(), {x});
    for (int n = 0; n < d.n; ++n)
        for (int c = 0; c < d.c; ++c) {
            const Real* src =
                x.data() + (static_cast<int64_t>(n) * d.c + c) * d.h * d.w;
            Real* dst = out.data() + (static_cast<int64_t>(n) * d.c + c) * d.h * d.w;
            for (int y = 0; y < d.h; ++y) {
                int64_t row = y * static_cast<int64_t>(d.w);
                for (int xq = 0; xq + 1 < d.w; ++xq)
                    dst[row + xq] = src[row + xq + 1] - src[row + xq];
                dst[row + d.w - 1] = 0;
            }
        }
    if (out.requires_grad()) {
        TensorImpl* o = out.impl();
        TensorImpl* xi = x.impl();
        o->backward_fn = [o, xi, d]() {
            if (!xi->requires_grad) return;
            xi->ensure_grad();
            for (int n = 0; n < d.n; ++n)
                for (int c = 0; c < d.c; ++c) {
                    Real* gx = xi->grad.data() +
                               (static_cast<int64_t>(n) * d.c + c) * d.h * d.w;
                    const Real* gy = o->grad.data() +
                                     (static_cast<int64_t>(n) * d.c + c) * d.h * d.w;
                    for (int y = 0; y < d.h; ++y) {
                        int64_t row = y * static_cast<int64_t>(d.w);
                        for (int xq = 0; xq + 1 < d.w; ++xq) {
                            gx[row + xq + 1] += gy[row + xq];
                            gx[row + xq] -= gy[row + xq];
                        }
                    }
                }
        };
    }
    return out;
}

Tensor diff_y(const Tensor& x) {
    Dims4 d = dims4(x, "diff_y");
    Tensor out = make_result(x.shape(), {x});
    for (int n = 0; n < d.n; ++n)
        for (int c = 0; c < d.c; ++c) {
            const Real* src =
                x.data() + (static_cast<int64_t>(n) * d.c + c) * d.h * d.w;
            Real* dst = out.data() + (static_cast<int64_t>(n) * d.c + c) * d.h * d.w;
            for (int y = 0; y + 1 < d.h; ++y)
                for (int xq = 0; xq < d.w; ++xq)
                    dst[y * static_cast<int64_t>(d.w) + xq] =
                        src[(y + 1) * static_cast<int64_t>(d.w) + xq] -
                        src[y * static_cast<int64_t>(d.w) + xq];
            for (int xq = 0; xq < d.w; ++xq)
                dst[(d.h - 1) * static_cast<int64_t>(d.w) + xq] = 0;
        }
    if (out.requires_grad()) {
        TensorImpl* o = out.impl();
        TensorImpl* xi = x.impl();
        o->backward_fn = [o, xi, d]() {
            if (!xi->requires_grad) return;
            xi->ensure_grad();
            for (int n = 0; n < d.n; ++n)
                for (int c = 0; c < d.c; ++c) {
                    Real* gx = xi->grad.data() +
                               (static_cast<int64_t>(n) * d.c + c) * d.h * d.w;
                    const Real* gy = o->grad.data() +
                                     (static_cast<int64_t>(n) * d.c + c) * d.h * d.w;
                    for (int y = 0; y + 1 < d.h; ++y)
                        for (int xq = 0; xq < d.w; ++xq) {
                            gx[(y + 1) * static_cast<int64_t>(d.w) + xq] +=
                                gy[y * static_cast<int64_t>(d.w) + xq];
                            gx[y * static_cast<int64_t>(d.w) + xq] -=
                                gy[y * static_cast<int64_t>(d.w) + xq];
                        }
                }
        };
    }
    return out;
}

// ---------------------------------------------------------------------------
// non-differentiable helpers

Tensor clamp01(const Tensor& x) {
    Tensor out = x.detach();
    for (Real& v : out.vec()) v = std::min(Real(1), std::max(Real(0), v));
    return out;
}

Tensor slice_batch(const Tensor& x, int n) {
    Dims4 d = dims4(x, "slice_batch");
    check(n >= 0 && n < d.n, "slice_batch: index out of range");
    Tensor out = Tensor::zeros({d.c, d.h, d.w});
    int64_t per = static_cast<int64_t>(d.c) * d.h * d.w;
    std::copy(x.data() + n * per, x.data() + (n + 1) * per, out.data());
    return out;
}

bool all_finite(const Tensor& x) {
    for (Real v : x.vec())
        if (!std::isfinite(v)) return false;
    return true;
}

}  // namespace mm

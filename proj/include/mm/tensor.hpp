#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <stdexcept>
#include <string>
#include <vector>

namespace mm {

using Real = double;

void check(bool cond, const std::string& msg);

struct TensorImpl;

// Reference-counted n-d array of doubles with reverse-mode autodiff.
// Images and feature maps are (C,H,W) or (N,C,H,W); scalars are {1}.
class Tensor {
public:
    Tensor() = default;

    static Tensor zeros(std::vector<int> shape, bool requires_grad = false);
    static Tensor full(std::vector<int> shape, Real value);
    static Tensor from_vec(std::vector<int> shape, std::vector<Real> values);

    bool defined() const { return impl_ != nullptr; }
    const std::vector<int>& shape() const;
    int ndim() const;
    int dim(int i) const;
    int64_t numel() const;

    Real* data();
    const Real* data() const;
    std::vector<Real>& vec();
    const std::vector<Real>& vec() const;
    Real item() const;

    bool requires_grad() const;
    Tensor& set_requires_grad(bool v);
    // Gradient buffer; empty until backward() has reached this tensor.
    const std::vector<Real>& grad() const;
    std::vector<Real>& grad_mut();
    void zero_grad();

    // Value copy detached from the graph.
    Tensor detach() const;
    Tensor clone() const;

    // Reverse-mode sweep from a scalar tensor.
    void backward();

    TensorImpl* impl() const { return impl_.get(); }

private:
    explicit Tensor(std::shared_ptr<TensorImpl> impl) : impl_(std::move(impl)) {}
    std::shared_ptr<TensorImpl> impl_;

    friend Tensor make_result(std::vector<int> shape, std::vector<Tensor> inputs);
};

struct TensorImpl {
    std::vector<int> shape;
    std::vector<Real> val;
    std::vector<Real> grad;
    bool requires_grad = false;
    std::vector<Tensor> inputs;
    std::function<void()> backward_fn;

    int64_t numel() const {
        int64_t n = 1;
        for (int d : shape) n *= d;
        return n;
    }
    void ensure_grad() {
        if (grad.size() != val.size()) grad.assign(val.size(), Real(0));
    }
};

// RAII switch that disables graph construction (inference paths).
class NoGradGuard {
public:
    NoGradGuard();
    ~NoGradGuard();
    NoGradGuard(const NoGradGuard&) = delete;
    NoGradGuard& operator=(const NoGradGuard&) = delete;

private:
    bool prev_;
};
bool grad_enabled();

// ---- elementwise ----
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, Real c);
Tensor add_scalar(const Tensor& a, Real c);
Tensor square(const Tensor& a);
Tensor sqrt_t(const Tensor& a);
Tensor abs_t(const Tensor& a);
Tensor leaky_relu(const Tensor& a, Real slope);

// ---- convolution ----
// x: (N,Cin,H,W), w: (Cout,Cin,kh,kw), b: (Cout) or undefined.
Tensor conv2d(const Tensor& x, const Tensor& w, const Tensor& b, int stride, int pad);
// x: (N,Cin,H,W), w: (Cin,Cout,kh,kw), b: (Cout) or undefined.
Tensor conv_transpose2d(const Tensor& x, const Tensor& w, const Tensor& b, int stride, int pad);

// ---- shape ----
Tensor concat_channels(const std::vector<Tensor>& xs);
Tensor avg_pool2d(const Tensor& x, int factor);
// Pads H and W on the right/bottom (and optionally left/top); reflect where the
// pad fits within the image, edge replication otherwise.
Tensor pad2d(const Tensor& x, int top, int bottom, int left, int right);
Tensor crop2d(const Tensor& x, int y0, int x0, int h, int w);
Tensor stack_batch(const std::vector<Tensor>& items);  // k x (C,H,W) -> (k,C,H,W)

// ---- reductions / gradients ----
Tensor sum_channels(const Tensor& x);  // (N,C,H,W) -> (N,1,H,W)
Tensor mean_all(const Tensor& x);      // -> {1}
// Forward difference along W (resp. H); last column (row) is zero.
Tensor diff_x(const Tensor& x);
Tensor diff_y(const Tensor& x);

// ---- non-differentiable helpers ----
Tensor clamp01(const Tensor& x);              // detached copy clamped to [0,1]
Tensor slice_batch(const Tensor& x, int n);   // (N,C,H,W) -> (C,H,W), detached
bool all_finite(const Tensor& x);

}  // namespace mm

#pragma once

#include "mm/rng.hpp"
#include "mm/tensor.hpp"

#include <string>
#include <vector>

namespace mm {

constexpr Real kLeakySlope = 0.1;

// Ordered name -> tensor view of a network's learnable state. Tensors are
// shared handles, so entries alias the layer weights.
struct ParamMap {
    std::vector<std::pair<std::string, Tensor>> items;

    void add(const std::string& name, const Tensor& t) { items.emplace_back(name, t); }
    void merge(const std::string& prefix, const ParamMap& other) {
        for (const auto& [n, t] : other.items) items.emplace_back(prefix + "." + n, t);
    }
    Tensor* find(const std::string& name) {
        for (auto& [n, t] : items)
            if (n == name) return &t;
        return nullptr;
    }
    int64_t count() const {
        int64_t c = 0;
        for (const auto& [n, t] : items) c += t.numel();
        return c;
    }
    void set_requires_grad(bool v) {
        for (auto& [n, t] : items) t.set_requires_grad(v);
    }
    void zero_grad() {
        for (auto& [n, t] : items) t.zero_grad();
    }
};

// One convolution's contribution to the complexity account. Spatial size is
// tracked by walking the plan from the input resolution; transposed entries
// consume the input resolution (one multiply-accumulate per tap scattered).
struct MacEntry {
    bool transposed = false;
    int k = 0, cin = 0, cout = 0, stride = 1, pad = 0;
};

struct MacCounter {
    std::vector<MacEntry> entries;
    // Accumulated MACs for one pass over an h x w input at the resolution
    // reached by `level` stride-2 steps relative to the network input.
    struct Walk {
        int h = 0, w = 0;
        double macs = 0;
    };
    void conv(int cin, int cout, int k, int stride = 1, int pad = -1) {
        entries.push_back({false, k, cin, cout, stride, pad < 0 ? k / 2 : pad});
    }
    void conv_t(int cin, int cout, int k, int stride, int pad = 0) {
        entries.push_back({true, k, cin, cout, stride, pad});
    }
};

struct Conv2d {
    Tensor w, b;
    int stride = 1, pad = 0;

    Conv2d() = default;
    Conv2d(int cin, int cout, int k, int stride, int pad, RngStream& rng);
    Tensor operator()(const Tensor& x) const { return conv2d(x, w, b, stride, pad); }
    void collect(ParamMap& params, const std::string& name) const {
        params.add(name + ".w", w);
        params.add(name + ".b", b);
    }
};

struct ConvTranspose2d {
    Tensor w, b;
    int stride = 2, pad = 0;

    ConvTranspose2d() = default;
    ConvTranspose2d(int cin, int cout, int k, int stride, int pad, RngStream& rng);
    Tensor operator()(const Tensor& x) const { return conv_transpose2d(x, w, b, stride, pad); }
    void collect(ParamMap& params, const std::string& name) const {
        params.add(name + ".w", w);
        params.add(name + ".b", b);
    }
};

// Residual dense block: densely connected 3x3 layers with a 1x1 local fusion
// and a local residual connection.
struct ResidualDenseBlock {
    std::vector<Conv2d> layers;
    Conv2d fuse;
    int channels = 0, growth = 0;

    ResidualDenseBlock() = default;
    ResidualDenseBlock(int channels, int growth, int nlayers, RngStream& rng);
    Tensor operator()(const Tensor& x) const;
    void collect(ParamMap& params, const std::string& name) const;
    static void account(MacCounter& mc, int channels, int growth, int nlayers);
};

// ADAM over a ParamMap; moment buffers are keyed by parameter order.
class Adam {
public:
    Adam() = default;
    explicit Adam(Real lr) : lr_(lr) {}

    void set_lr(Real lr) { lr_ = lr; }
    Real lr() const { return lr_; }
    int64_t step_count() const { return t_; }

    void step(ParamMap& params);

    struct State {
        std::vector<Real> m, v;
    };
    std::vector<State>& state() { return state_; }
    void set_step_count(int64_t t) { t_ = t; }

private:
    Real lr_ = 1e-3;
    Real beta1_ = 0.9, beta2_ = 0.999, eps_ = 1e-8;
    int64_t t_ = 0;
    std::vector<State> state_;
};

}  // namespace mm

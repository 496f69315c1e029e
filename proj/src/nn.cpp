#include "mm/nn.hpp"

#include <cmath>

namespace mm {

namespace {

Tensor kaiming_conv(int cin, int cout, int k, RngStream& rng, bool transposed) {
    // Fan-in of the forward map; for a stride-2 transposed conv each output
    // pixel receives k^2/4 taps on average, fan_in = cin*k*k/stride^2 is the
    // usual convention; the plain cin*k*k is close enough for these depths.
    Real fan_in = static_cast<Real>(cin) * k * k;
    Real stddev = std::sqrt(Real(2) / ((1 + kLeakySlope * kLeakySlope) * fan_in));
    std::vector<int> shape = transposed ? std::vector<int>{cin, cout, k, k}
                                        : std::vector<int>{cout, cin, k, k};
    Tensor w = Tensor::zeros(shape, true);
    for (Real& v : w.vec()) v = rng.normal(0.0, stddev);
    return w;
}

}  // namespace

Conv2d::Conv2d(int cin, int cout, int k, int stride, int pad, RngStream& rng)
    : w(kaiming_conv(cin, cout, k, rng, false)),
      b(Tensor::zeros({cout}, true)),
      stride(stride),
      pad(pad) {}

ConvTranspose2d::ConvTranspose2d(int cin, int cout, int k, int stride, int pad, RngStream& rng)
    : w(kaiming_conv(cin, cout, k, rng, true)),
      b(Tensor::zeros({cout}, true)),
      stride(stride),
      pad(pad) {}

ResidualDenseBlock::ResidualDenseBlock(int channels, int growth, int nlayers, RngStream& rng)
    : channels(channels), growth(growth) {
    layers.reserve(static_cast<size_t>(nlayers));
    for (int i = 0; i < nlayers; ++i)
        layers.emplace_back(channels + i * growth, growth, 3, 1, 1, rng);
    fuse = Conv2d(channels + nlayers * growth, channels, 1, 1, 0, rng);
}

Tensor ResidualDenseBlock::operator()(const Tensor& x) const {
    std::vector<Tensor> feats{x};
    for (const auto& layer : layers) {
        Tensor in = feats.size() == 1 ? feats[0] : concat_channels(feats);
        feats.push_back(leaky_relu(layer(in), kLeakySlope));
    }
    return add(x, fuse(concat_channels(feats)));
}

void ResidualDenseBlock::collect(ParamMap& params, const std::string& name) const {
    for (size_t i = 0; i < layers.size(); ++i)
        layers[i].collect(params, name + ".layer" + std::to_string(i));
    fuse.collect(params, name + ".fuse");
}

void ResidualDenseBlock::account(MacCounter& mc, int channels, int growth, int nlayers) {
    for (int i = 0; i < nlayers; ++i) mc.conv(channels + i * growth, growth, 3);
    mc.conv(channels + nlayers * growth, channels, 1);
}

void Adam::step(ParamMap& params) {
    if (state_.size() != params.items.size()) {
        state_.assign(params.items.size(), State{});
        for (size_t i = 0; i < params.items.size(); ++i) {
            size_t n = params.items[i].second.vec().size();
            state_[i].m.assign(n, 0);
            state_[i].v.assign(n, 0);
        }
    }
    ++t_;
    const Real bc1 = 1 - std::pow(beta1_, static_cast<Real>(t_));
    const Real bc2 = 1 - std::pow(beta2_, static_cast<Real>(t_));
    for (size_t i = 0; i < params.items.size(); ++i) {
        Tensor& p = params.items[i].second;
        if (!p.requires_grad() || p.grad().empty()) continue;
        State& s = state_[i];
        const std::vector<Real>& g = p.grad();
        std::vector<Real>& val = p.vec();
        for (size_t j = 0; j < val.size(); ++j) {
            s.m[j] = beta1_ * s.m[j] + (1 - beta1_) * g[j];
            s.v[j] = beta2_ * s.v[j] + (1 - beta2_) * g[j] * g[j];
            Real mhat = s.m[j] / bc1;
            Real vhat = s.v[j] / bc2;
            val[j] -= lr_ * mhat / (std::sqrt(vhat) + eps_);
        }
    }
}

}  // namespace mm

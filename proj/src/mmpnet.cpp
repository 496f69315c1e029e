#include "mm/mmpnet.hpp"

#include <cmath>

namespace mm {

MMPNet::MMPNet(const MMPNetConfig& cfg, uint64_t seed) : cfg_(cfg) {
    check(cfg.base_channels > 0 && cfg.levels >= 1 && cfg.rdb_layers > 0 && cfg.rdb_growth > 0,
          "MMPNetConfig: all fields must be positive");
    RngStream rng = derive_rng(seed, "mmpnet.init");
    head_ = Conv2d(3, cfg.width_at(0), 9, 1, 4, rng);
    for (int d = 1; d <= cfg.levels; ++d) {
        down_.emplace_back(cfg.width_at(d - 1), cfg.width_at(d), 3, 2, 1, rng);
        if (d < cfg.levels) refine_.emplace_back(cfg.width_at(d), cfg.width_at(d), 3, 1, 1, rng);
    }
    for (int d = cfg.levels; d >= 1; --d) {
        up_.emplace_back(cfg.width_at(d), cfg.width_at(d - 1), 2, 2, 0, rng);
        int k = cfg.fuse_kernel(d);
        fuse_.emplace_back(2 * cfg.width_at(d - 1), cfg.width_at(d - 1), k, 1, k / 2, rng);
    }
    rdb_ = ResidualDenseBlock(cfg.width_at(0), cfg.rdb_growth, cfg.rdb_layers, rng);
    final_ = Conv2d(cfg.width_at(0), 1, 3, 1, 1, rng);

    head_.collect(params_, "head");
    for (size_t i = 0; i < down_.size(); ++i)
        down_[i].collect(params_, "down" + std::to_string(i + 1));
    for (size_t i = 0; i < refine_.size(); ++i)
        refine_[i].collect(params_, "enc" + std::to_string(i + 1));
    for (size_t i = 0; i < up_.size(); ++i)
        up_[i].collect(params_, "up" + std::to_string(cfg.levels - static_cast<int>(i)));
    for (size_t i = 0; i < fuse_.size(); ++i)
        fuse_[i].collect(params_, "dec" + std::to_string(cfg.levels - static_cast<int>(i)));
    rdb_.collect(params_, "rdb");
    final_.collect(params_, "final");
}

Tensor MMPNet::forward(const Tensor& x) const {
    check(x.defined() && x.ndim() == 4 && x.dim(1) == 3,
          "mmpnet: expected RGB input (N,3,H,W)");
    const int h = x.dim(2), w = x.dim(3);
    const int m = cfg_.pad_multiple();
    const int ph = (m - h % m) % m, pw = (m - w % m) % m;
    Tensor t = (ph || pw) ? pad2d(x, 0, ph, 0, pw) : x;

    t = leaky_relu(head_(t), kLeakySlope);
    std::vector<Tensor> skips{t};
    for (int d = 1; d <= cfg_.levels; ++d) {
        t = leaky_relu(down_[static_cast<size_t>(d - 1)](t), kLeakySlope);
        if (d < cfg_.levels) {
            t = leaky_relu(refine_[static_cast<size_t>(d - 1)](t), kLeakySlope);
            skips.push_back(t);
        }
    }
    for (int d = cfg_.levels; d >= 1; --d) {
        size_t i = static_cast<size_t>(cfg_.levels - d);
        t = leaky_relu(up_[i](t), kLeakySlope);
        t = concat_channels({t, skips[static_cast<size_t>(d - 1)]});
        t = leaky_relu(fuse_[i](t), kLeakySlope);
    }
    t = rdb_(t);
    t = final_(t);
    if (ph || pw) t = crop2d(t, 0, 0, h, w);
    return t;
}

Tensor MMPNet::infer(const Tensor& frame) const {
    NoGradGuard ng;
    check(frame.defined() && frame.ndim() == 3 && frame.dim(0) == 3,
          "mmpnet: expected an RGB frame (3,H,W)");
    Tensor out = forward(stack_batch({frame}));
    return clamp01(slice_batch(out, 0));
}

void mmpnet_account(const MMPNetConfig& cfg, MacCounter& mc) {
    mc.conv(3, cfg.width_at(0), 9);
    for (int d = 1; d <= cfg.levels; ++d) {
        mc.conv(cfg.width_at(d - 1), cfg.width_at(d), 3, 2, 1);
        if (d < cfg.levels) mc.conv(cfg.width_at(d), cfg.width_at(d), 3);
    }
    for (int d = cfg.levels; d >= 1; --d) {
        mc.conv_t(cfg.width_at(d), cfg.width_at(d - 1), 2, 2, 0);
        int k = cfg.fuse_kernel(d);
        mc.conv(2 * cfg.width_at(d - 1), cfg.width_at(d - 1), k, 1, k / 2);
    }
    ResidualDenseBlock::account(mc, cfg.width_at(0), cfg.rdb_growth, cfg.rdb_layers);
    mc.conv(cfg.width_at(0), 1, 3);
}

double walk_gmacs(const std::vector<MacEntry>& entries, int height, int width) {
    double h = height, w = width, macs = 0;
    for (const auto& e : entries) {
        double taps = static_cast<double>(e.k) * e.k * e.cin * e.cout;
        if (e.transposed) {
            macs += taps * h * w;
            h = (h - 1) * e.stride + e.k - 2 * e.pad;
            w = (w - 1) * e.stride + e.k - 2 * e.pad;
        } else {
            h = std::floor((h + 2 * e.pad - e.k) / e.stride) + 1;
            w = std::floor((w + 2 * e.pad - e.k) / e.stride) + 1;
            macs += taps * h * w;
        }
    }
    return macs / 1e9;
}

int64_t walk_params(const std::vector<MacEntry>& entries) {
    int64_t p = 0;
    for (const auto& e : entries)
        p += static_cast<int64_t>(e.k) * e.k * e.cin * e.cout + e.cout;
    return p;
}

double mmpnet_gmacs(const MMPNetConfig& cfg, int height, int width) {
    // The network pads to a multiple of 2^levels and crops afterwards.
    const int m = cfg.pad_multiple();
    MacCounter mc;
    mmpnet_account(cfg, mc);
    return walk_gmacs(mc.entries, (height + m - 1) / m * m, (width + m - 1) / m * m);
}

int64_t mmpnet_param_count(const MMPNetConfig& cfg) {
    MacCounter mc;
    mmpnet_account(cfg, mc);
    return walk_params(mc.entries);
}

}  // namespace mm

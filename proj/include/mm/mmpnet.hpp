#pragma once

#include "mm/nn.hpp"
#include "mm/tensor.hpp"

namespace mm {

// Encoder-decoder regressor predicting the motion magnitude map of a single
// blurry frame. A 9x9 head enlarges the receptive field, a UNet-style body
// downsamples and reconstructs with skip connections, and one residual dense
// block refines the full-resolution result.
struct MMPNetConfig {
    int base_channels = 16;
    int levels = 4;  // stride-2 downsamplings; width doubles per level
    int rdb_layers = 3;
    int rdb_growth = 16;

    int width_at(int depth) const { return base_channels << depth; }
    int pad_multiple() const { return 1 << levels; }
    // Post-concat fuse kernel: 1x1 at the innermost and outermost decoder
    // stages, 3x3 in between.
    int fuse_kernel(int depth) const { return (depth == levels || depth == 1) ? 1 : 3; }
};

class MMPNet {
public:
    MMPNet(const MMPNetConfig& cfg, uint64_t seed);

    // Raw regression output (N,1,H,W); pads internally so H,W need not be
    // divisible by 2^levels.
    Tensor forward(const Tensor& x) const;

    // Clamped [0,1] map for a single (3,H,W) frame, no graph.
    Tensor infer(const Tensor& frame) const;

    const MMPNetConfig& config() const { return cfg_; }
    ParamMap& params() { return params_; }
    const ParamMap& params() const { return params_; }
    int64_t param_count() const { return params_.count(); }

private:
    MMPNetConfig cfg_;
    Conv2d head_;
    std::vector<Conv2d> down_, refine_;
    std::vector<ConvTranspose2d> up_;
    std::vector<Conv2d> fuse_;
    ResidualDenseBlock rdb_;
    Conv2d final_;
    ParamMap params_;
};

// Closed-form complexity accounting over the same layer plan the constructor
// uses. MACs count convolution multiply-accumulates only.
void mmpnet_account(const MMPNetConfig& cfg, MacCounter& mc);
double mmpnet_gmacs(const MMPNetConfig& cfg, int height, int width);
int64_t mmpnet_param_count(const MMPNetConfig& cfg);

// Walk helpers shared with the deblurring network accounting.
double walk_gmacs(const std::vector<MacEntry>& entries, int height, int width);
int64_t walk_params(const std::vector<MacEntry>& entries);

}  // namespace mm

#pragma once

#include "mm/mmpnet.hpp"
#include "mm/nn.hpp"
#include "mm/tensor.hpp"

namespace mm {

// A_#B_#C_#F_# architecture parameters of the recurrent deblurring network.
struct NetConfig {
    int n_a = 9;   // RDBs in RDB-Net-A (feature extraction)
    int n_b = 10;  // RDBs in RDB-Net-B (reconstruction)
    int n_c = 18;  // transmitted channel parameter
    int F = 8;     // input sequence length at inference

    // Internal width of the quarter-resolution feature stream. The encoder
    // runs n_c -> 2*n_c -> 5*n_c across its two stride-2 stages.
    int feature_width() const { return 5 * n_c; }
    std::string tag() const;
};

struct DeblurOptions {
    bool use_mmam = true;  // motion magnitude attentive module
    bool use_ndf = true;   // transmit non-deblurred features l_{t-1}
};

// Features passed between the RNN cells of adjacent frames; zero-initialized
// at sequence start.
struct RecurrentState {
    Tensor l;  // non-deblurred features (N, W, H/4, W/4)
    Tensor h;  // deblurred features, same shape
};

class DeblurNet {
public:
    DeblurNet(const NetConfig& cfg, const DeblurOptions& opts, uint64_t seed);

    RecurrentState initial_state(int batch, int height, int width) const;

    // Motion magnitude attentive fusion: gamma = conv2(act(conv1(mmp))),
    // output = gamma (x) x_in elementwise. mmp is (N,1,H,W) at frame
    // resolution and is area-pooled to the feature resolution internally.
    Tensor mmam_fuse(const Tensor& x_in, const Tensor& mmp) const;

    // One recurrent cell: encode B_t, fuse the prior, integrate with the
    // transmitted features, and produce the new state and fused feature f_t.
    struct StepResult {
        RecurrentState state;
        Tensor f;
    };
    StepResult fem_step(const Tensor& frame, const Tensor& mmp,
                        const RecurrentState& prev) const;

    // Aggregate f_{t-2..t+2} and reconstruct the center frame with a global
    // skip connection from B_t.
    Tensor rm_reconstruct(const std::vector<Tensor>& f_window, const Tensor& frame) const;

    // Full forward pass over an L-frame sequence (L >= 5): returns the L-4
    // reconstructions for t in [2, L-3] (raw residual outputs; clamp for
    // display). priors may be empty when MMAM is disabled.
    std::vector<Tensor> forward_sequence(const std::vector<Tensor>& frames,
                                         const std::vector<Tensor>& priors) const;

    const NetConfig& config() const { return cfg_; }
    const DeblurOptions& options() const { return opts_; }
    ParamMap& params() { return params_; }
    const ParamMap& params() const { return params_; }
    int64_t param_count() const { return params_.count(); }

private:
    NetConfig cfg_;
    DeblurOptions opts_;
    Conv2d head_, enc0_, down1_, enc1_, down2_;
    Conv2d mmam1_, mmam2_;
    Conv2d squeeze_a_;
    std::vector<ResidualDenseBlock> rdb_a_;
    Conv2d squeeze_b_;
    std::vector<ResidualDenseBlock> rdb_b_;
    ConvTranspose2d up1_, up2_;
    Conv2d dec1_, dec2_, final_, skip_;
    ParamMap params_;
};

// Frames (each (3,H,W)) -> F-4 deblurred frames plus one prior map per input
// frame; the prior source is the supplied MMP-Net.
struct DeblurResult {
    std::vector<Tensor> outputs;  // clamped RGB frames
    std::vector<Tensor> priors;   // clamped (1,H,W) maps
};
DeblurResult deblur_sequence(const std::vector<Tensor>& frames, const MMPNet& mmpnet,
                             const DeblurNet& net);

// Complexity accounting for one processed frame in steady state: MMP-Net (when
// MMAM is enabled) plus MMAM, FEM and RM, each once per frame. Parameter count
// includes the MMP-Net for the full model, matching the same convention.
double rnn_gmacs(const NetConfig& cfg, int height, int width,
                 const DeblurOptions& opts = {}, const MMPNetConfig& mmp_cfg = {});
int64_t rnn_param_count(const NetConfig& cfg, const DeblurOptions& opts = {},
                        const MMPNetConfig& mmp_cfg = {});

}  // namespace mm

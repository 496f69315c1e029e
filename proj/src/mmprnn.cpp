#include "mm/mmprnn.hpp"

#include <cmath>

namespace mm {

std::string NetConfig::tag() const {
    return "A" + std::to_string(n_a) + "B" + std::to_string(n_b) + "C" + std::to_string(n_c) +
           "F" + std::to_string(F);
}

DeblurNet::DeblurNet(const NetConfig& cfg, const DeblurOptions& opts, uint64_t seed)
    : cfg_(cfg), opts_(opts) {
    check(cfg.n_a > 0 && cfg.n_b > 0 && cfg.n_c > 0 && cfg.F >= 5,
          "NetConfig: n_a, n_b, n_c positive and F >= 5 required");
    const int nc = cfg.n_c;
    const int wf = cfg.feature_width();
    RngStream rng = derive_rng(seed, "mmprnn.init");

    head_ = Conv2d(3, nc, 9, 1, 4, rng);
    enc0_ = Conv2d(nc, nc, 3, 1, 1, rng);
    down1_ = Conv2d(nc, 2 * nc, 3, 2, 1, rng);
    enc1_ = Conv2d(2 * nc, 2 * nc, 3, 1, 1, rng);
    down2_ = Conv2d(2 * nc, wf, 3, 2, 1, rng);
    if (opts.use_mmam) {
        mmam1_ = Conv2d(1, nc, 1, 1, 0, rng);
        mmam2_ = Conv2d(nc, wf, 1, 1, 0, rng);
    }
    squeeze_a_ = Conv2d((opts.use_ndf ? 3 : 2) * wf, wf, 1, 1, 0, rng);
    for (int i = 0; i < cfg.n_a; ++i) rdb_a_.emplace_back(wf, wf / 2, 3, rng);
    squeeze_b_ = Conv2d(5 * wf, wf, 1, 1, 0, rng);
    for (int i = 0; i < cfg.n_b; ++i) rdb_b_.emplace_back(wf, wf / 2, 3, rng);
    up1_ = ConvTranspose2d(wf, 2 * nc, 4, 2, 1, rng);
    dec1_ = Conv2d(2 * nc, 2 * nc, 3, 1, 1, rng);
    up2_ = ConvTranspose2d(2 * nc, nc, 4, 2, 1, rng);
    dec2_ = Conv2d(nc, nc, 3, 1, 1, rng);
    final_ = Conv2d(nc, 3, 3, 1, 1, rng);
    skip_ = Conv2d(3, 3, 9, 1, 4, rng);
    // Start at the identity: O_t = B_t until the residual branch learns.
    std::fill(final_.w.vec().begin(), final_.w.vec().end(), Real(0));
    std::fill(skip_.w.vec().begin(), skip_.w.vec().end(), Real(0));
    for (int c = 0; c < 3; ++c) skip_.w.vec()[static_cast<size_t>((c * 3 + c) * 81 + 40)] = 1;

    head_.collect(params_, "fem.head");
    enc0_.collect(params_, "fem.enc0");
    down1_.collect(params_, "fem.down1");
    enc1_.collect(params_, "fem.enc1");
    down2_.collect(params_, "fem.down2");
    if (opts.use_mmam) {
        mmam1_.collect(params_, "fem.mmam1");
        mmam2_.collect(params_, "fem.mmam2");
    }
    squeeze_a_.collect(params_, "fem.squeeze");
    for (size_t i = 0; i < rdb_a_.size(); ++i)
        rdb_a_[i].collect(params_, "fem.rdb" + std::to_string(i));
    squeeze_b_.collect(params_, "rm.squeeze");
    for (size_t i = 0; i < rdb_b_.size(); ++i)
        rdb_b_[i].collect(params_, "rm.rdb" + std::to_string(i));
    up1_.collect(params_, "rm.up1");
    dec1_.collect(params_, "rm.dec1");
    up2_.collect(params_, "rm.up2");
    dec2_.collect(params_, "rm.dec2");
    final_.collect(params_, "rm.final");
    skip_.collect(params_, "rm.skip");
}

RecurrentState DeblurNet::initial_state(int batch, int height, int width) const {
    check(height % 4 == 0 && width % 4 == 0,
          "mmprnn: frame size must be divisible by 4");
    RecurrentState s;
    s.l = Tensor::zeros({batch, cfg_.feature_width(), height / 4, width / 4});
    s.h = Tensor::zeros({batch, cfg_.feature_width(), height / 4, width / 4});
    return s;
}

Tensor DeblurNet::mmam_fuse(const Tensor& x_in, const Tensor& mmp) const {
    check(opts_.use_mmam, "mmam_fuse: module disabled in this build");
    check(mmp.defined() && mmp.ndim() == 4 && mmp.dim(1) == 1,
          "mmam_fuse: prior must be (N,1,H,W)");
    Tensor m = mmp;
    if (m.dim(2) != x_in.dim(2) || m.dim(3) != x_in.dim(3)) {
        check(m.dim(2) % x_in.dim(2) == 0 && m.dim(2) / x_in.dim(2) == m.dim(3) / x_in.dim(3),
              "mmam_fuse: prior resolution is not an integer multiple of the features");
        m = avg_pool2d(m, m.dim(2) / x_in.dim(2));
    }
    if (m.dim(2) != x_in.dim(2) || m.dim(3) != x_in.dim(3))
        throw std::logic_error("mmam_fuse: spatial mismatch after resampling");
    Tensor gamma = mmam2_(leaky_relu(mmam1_(m), kLeakySlope));
    return mul(gamma, x_in);
}

DeblurNet::StepResult DeblurNet::fem_step(const Tensor& frame, const Tensor& mmp,
                                          const RecurrentState& prev) const {
    check(frame.defined() && frame.ndim() == 4 && frame.dim(1) == 3,
          "fem_step: expected (N,3,H,W) frames");
    check(prev.l.defined() && prev.h.defined() && prev.l.shape() == prev.h.shape(),
          "fem_step: invalid recurrent state");
    check(prev.l.dim(2) == frame.dim(2) / 4 && prev.l.dim(3) == frame.dim(3) / 4,
          "fem_step: state resolution does not match the frames");

    Tensor t = leaky_relu(head_(frame), kLeakySlope);
    t = leaky_relu(enc0_(t), kLeakySlope);
    t = leaky_relu(down1_(t), kLeakySlope);
    t = leaky_relu(enc1_(t), kLeakySlope);
    t = leaky_relu(down2_(t), kLeakySlope);

    Tensor l = opts_.use_mmam ? mmam_fuse(t, mmp) : t;

    std::vector<Tensor> cat = opts_.use_ndf ? std::vector<Tensor>{l, prev.l, prev.h}
                                            : std::vector<Tensor>{l, prev.h};
    Tensor a = leaky_relu(squeeze_a_(concat_channels(cat)), kLeakySlope);
    for (const auto& rdb : rdb_a_) a = rdb(a);

    StepResult out;
    out.state.l = l;
    out.state.h = a;
    out.f = a;
    return out;
}

Tensor DeblurNet::rm_reconstruct(const std::vector<Tensor>& f_window,
                                 const Tensor& frame) const {
    check(f_window.size() == 5, "rm_reconstruct: expected exactly 5 fused features");
    for (const auto& f : f_window)
        check(f.defined() && f.shape() == f_window[0].shape(),
              "rm_reconstruct: fused feature shape mismatch");
    Tensor t = leaky_relu(squeeze_b_(concat_channels(f_window)), kLeakySlope);
    for (const auto& rdb : rdb_b_) t = rdb(t);
    t = leaky_relu(up1_(t), kLeakySlope);
    t = leaky_relu(dec1_(t), kLeakySlope);
    t = leaky_relu(up2_(t), kLeakySlope);
    t = leaky_relu(dec2_(t), kLeakySlope);
    Tensor residual = final_(t);
    return add(residual, skip_(frame));
}

std::vector<Tensor> DeblurNet::forward_sequence(const std::vector<Tensor>& frames,
                                                const std::vector<Tensor>& priors) const {
    const int L = static_cast<int>(frames.size());
    check(L >= 5, "forward_sequence: reconstruction needs a 5-frame window (t-2..t+2), got " +
                      std::to_string(L) + " frames");
    if (opts_.use_mmam)
        check(priors.size() == frames.size(),
              "forward_sequence: one prior map per frame required");

    RecurrentState state = initial_state(frames[0].dim(0), frames[0].dim(2), frames[0].dim(3));
    std::vector<Tensor> fs;
    fs.reserve(frames.size());
    for (int t = 0; t < L; ++t) {
        StepResult r = fem_step(frames[static_cast<size_t>(t)],
                                opts_.use_mmam ? priors[static_cast<size_t>(t)] : Tensor(),
                                state);
        state = r.state;
        fs.push_back(r.f);
    }
    std::vector<Tensor> outputs;
    for (int t = 2; t + 2 < L; ++t) {
        std::vector<Tensor> window(fs.begin() + (t - 2), fs.begin() + (t + 3));
        outputs.push_back(rm_reconstruct(window, frames[static_cast<size_t>(t)]));
    }
    return outputs;
}

DeblurResult deblur_sequence(const std::vector<Tensor>& frames, const MMPNet& mmpnet,
                             const DeblurNet& net) {
    check(frames.size() >= 5,
          "deblur_sequence: reconstruction needs a 5-frame window (t-2..t+2), got " +
              std::to_string(frames.size()) + " frames");
    NoGradGuard ng;
    const int h = frames[0].dim(1), w = frames[0].dim(2);
    const int ph = (4 - h % 4) % 4, pw = (4 - w % 4) % 4;

    DeblurResult result;
    std::vector<Tensor> batched, priors;
    for (const auto& f : frames) {
        check(f.ndim() == 3 && f.dim(0) == 3 && f.dim(1) == h && f.dim(2) == w,
              "deblur_sequence: frames must share one RGB shape");
        Tensor prior = mmpnet.infer(f);
        result.priors.push_back(prior);
        Tensor fb = stack_batch({f});
        Tensor pb = stack_batch({prior});
        if (ph || pw) {
            fb = pad2d(fb, 0, ph, 0, pw);
            pb = pad2d(pb, 0, ph, 0, pw);
        }
        batched.push_back(fb);
        priors.push_back(pb);
    }
    std::vector<Tensor> outs = net.forward_sequence(batched, priors);
    for (auto& o : outs) {
        Tensor cropped = (ph || pw) ? crop2d(o, 0, 0, h, w) : o;
        result.outputs.push_back(clamp01(slice_batch(cropped, 0)));
    }
    return result;
}

namespace {

void fem_rm_account(const NetConfig& cfg, const DeblurOptions& opts, MacCounter& mc) {
    const int nc = cfg.n_c;
    const int wf = cfg.feature_width();
    mc.conv(3, nc, 9);
    mc.conv(nc, nc, 3);
    mc.conv(nc, 2 * nc, 3, 2, 1);
    mc.conv(2 * nc, 2 * nc, 3);
    mc.conv(2 * nc, wf, 3, 2, 1);
    if (opts.use_mmam) {
        mc.conv(1, nc, 1);
        mc.conv(nc, wf, 1);
    }
    mc.conv((opts.use_ndf ? 3 : 2) * wf, wf, 1);
    for (int i = 0; i < cfg.n_a; ++i) ResidualDenseBlock::account(mc, wf, wf / 2, 3);
    mc.conv(5 * wf, wf, 1);
    for (int i = 0; i < cfg.n_b; ++i) ResidualDenseBlock::account(mc, wf, wf / 2, 3);
    mc.conv_t(wf, 2 * nc, 4, 2, 1);
    mc.conv(2 * nc, 2 * nc, 3);
    mc.conv_t(2 * nc, nc, 4, 2, 1);
    mc.conv(nc, nc, 3);
    mc.conv(nc, 3, 3);
}

}  // namespace

double rnn_gmacs(const NetConfig& cfg, int height, int width, const DeblurOptions& opts,
                 const MMPNetConfig& mmp_cfg) {
    MacCounter chain;
    fem_rm_account(cfg, opts, chain);
    MacCounter skip;
    skip.conv(3, 3, 9);
    double g = walk_gmacs(chain.entries, height, width) +
               walk_gmacs(skip.entries, height, width);
    if (opts.use_mmam) g += mmpnet_gmacs(mmp_cfg, height, width);
    return g;
}

int64_t rnn_param_count(const NetConfig& cfg, const DeblurOptions& opts,
                        const MMPNetConfig& mmp_cfg) {
    MacCounter chain;
    fem_rm_account(cfg, opts, chain);
    MacCounter skip;
    skip.conv(3, 3, 9);
    int64_t p = walk_params(chain.entries) + walk_params(skip.entries);
    if (opts.use_mmam) p += mmpnet_param_count(mmp_cfg);
    return p;
}

}  // namespace mm

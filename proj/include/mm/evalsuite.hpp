#pragma once

#include "mm/datagen.hpp"
#include "mm/mmprnn.hpp"
#include "mm/tensor.hpp"

#include <string>
#include <vector>

namespace mm {

// Peak signal-to-noise ratio in dB over all pixels and channels of an RGB
// pair in [0,1]; +inf for identical images.
Real psnr(const Tensor& reference, const Tensor& output);

// Mean structural similarity with an 11x11 Gaussian window (sigma 1.5),
// C1=0.01^2, C2=0.03^2, averaged over channels and valid window positions.
Real ssim(const Tensor& reference, const Tensor& output);

struct MetricsReport {
    std::string model;
    bool has_metrics = true;  // false when no sharp references exist
    Real psnr_mean = 0;
    Real ssim_mean = 0;
    double gmacs = 0;     // per 720P frame, closed form
    double params_m = 0;  // millions
    double runtime_s = 0; // wall clock per frame at eval resolution
    int frames_scored = 0;
    int eval_height = 0, eval_width = 0;
};

struct EvalOptions {
    std::string split = "test";
    std::string prior_source = "mmpnet";  // mmpnet|gt|gt_norm|center_flow|none
    int runtime_frames = 20;              // timed frames after warmup
    int warmup_frames = 5;
};

// Runs the deblurring network in sliding windows of F frames (stride F-4,
// with one shifted tail window so every producible center is scored once),
// aggregates PSNR/SSIM against the sharp references when present, and fills
// the complexity columns from the closed-form accounting.
MetricsReport evaluate_model(const MMPNet& mmpnet, const DeblurNet& net,
                             const std::string& dataset_root, const EvalOptions& opts = {});

struct ReportPaths {
    std::string tsv;    // machine readable
    std::string table;  // human readable
    std::string scatter_png;     // optional: PSNR vs GMACs
    std::string loss_curves_png; // optional: parsed from a metrics log
    std::string metrics_log;     // input for the loss curves
};

// Writes the TSV (rows sorted by PSNR descending) and the aligned text table;
// emits plots for the parts of `paths` that are set.
void render_report(std::vector<MetricsReport> reports, const ReportPaths& paths);

// Reads a report TSV back (plot regeneration).
std::vector<MetricsReport> parse_report_tsv(const std::string& path);

}  // namespace mm

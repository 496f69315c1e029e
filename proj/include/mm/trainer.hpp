#pragma once

#include "mm/dataset.hpp"
#include "mm/losses.hpp"
#include "mm/mmprnn.hpp"

#include <optional>
#include <string>
#include <vector>

namespace mm {

struct TrainConfig {
    // shared machinery
    int epochs = 1000;
    int batch_size = 8;
    int patch_size = 256;
    int seq_len_train = 10;
    Real base_lr = 5e-4;
    std::string schedule = "cosine";  // "cosine" | "step" | "const"
    uint64_t seed = 0;
    bool augment = true;
    std::string dataset_root;
    std::string aux_dataset_root;  // test set (mmp) or validation set (deblur)
    std::string out_dir;
    LossWeights loss;
    Real trim_fraction = 1.0;  // per-epoch random subsampling of the manifest
    int checkpoint_interval = 1;
    int val_interval = 0;  // 0: never
    std::string resume_from;

    // deblur specifics
    NetConfig net;
    MMPNetConfig mmpnet;
    std::string mmp_checkpoint;
    std::string prior_source = "mmpnet";  // mmpnet|gt|gt_norm|center_flow|none
    bool use_mmam = true;
    bool use_ndf = true;
    std::string tag = "full";
};

// Cosine: 0.5*base*(1+cos(pi*e/epochs)). Step: halves once at epochs/2.
Real lr_at(const TrainConfig& cfg, int epoch);

// One training batch of aligned patch sequences; tensors are stacked per
// timestep as (N,C,H,W). `prior` is filled for dataset-backed prior sources
// and left empty for "mmpnet"/"none".
struct SeqBatch {
    std::vector<Tensor> blur, sharp, prior;
};
SeqBatch sample_batch(const VideoDataset& ds, int batch_size, int seq_len, int patch,
                      bool augment, const std::string& prior_kind, RngStream& rng);

struct TrainStats {
    int epochs_run = 0;
    Real last_loss = 0;
    Real last_val = 0;  // val PSNR (deblur) or test L1 (mmp); NaN when unset
    std::string final_checkpoint;
    std::string metrics_log;
};

TrainStats train_mmpnet_run(const TrainConfig& cfg);
TrainStats train_deblur_run(const TrainConfig& cfg);

// The ablation sweep: the full model, the three cumulative removals, and the
// five prior sources, each tagged for the report generator.
std::vector<TrainConfig> ablation_variants(const TrainConfig& base);

}  // namespace mm

#pragma once

#include "mm/config.hpp"

namespace mm {

// Subcommand bodies, shared between the CLI binary and the tests. Each echoes
// the resolved config into the output directory before doing any work and
// throws on failure.
void run_datagen(const RunConfig& cfg);
void run_train_mmp(const RunConfig& cfg);
void run_train_deblur(const RunConfig& cfg);
void run_eval(const RunConfig& cfg);
void run_infer(const RunConfig& cfg);
void run_ablate(const RunConfig& cfg);
void run_plot(const RunConfig& cfg);

// Checkpoint loaders that rebuild the networks from the stored config echo.
MMPNet load_mmpnet_checkpoint(const std::string& path);
struct LoadedDeblur {
    NetConfig net_config;
    DeblurOptions options;
    std::string prior_source;
    std::string mmp_checkpoint;
    std::shared_ptr<DeblurNet> net;
};
LoadedDeblur load_deblur_checkpoint(const std::string& path);

}  // namespace mm

#pragma once

#include "mm/flow.hpp"
#include "mm/tensor.hpp"

#include <optional>
#include <string>
#include <vector>

namespace mm {

// N consecutive sharp RGB frames sampled from a high-frequency sequence.
struct SharpWindow {
    std::vector<Tensor> frames;  // each (3,H,W), values in [0,1]
};

// Per-pixel blur level in [0,1] after normalization by K.
struct MagnitudeMap {
    int h = 0, w = 0;
    std::vector<Real> values;
    Real k_norm = 15.0;

    Tensor to_tensor() const;
    static MagnitudeMap from_tensor(const Tensor& t, Real k_norm);
};

struct CrfSpec {
    enum class Type { Identity, Gamma };
    Type type = Type::Gamma;
    Real gamma = 2.2;
};

CrfSpec parse_crf(const std::string& text);  // "identity" or "gamma:2.2" / "gamma"

// B = c(mean of S_i); the gamma CRF linearizes, averages, then re-encodes.
Tensor synthesize_blur(const SharpWindow& window, const CrfSpec& crf);

// Bi-directional flows per frame; edge frames carry only one side.
struct WindowFlows {
    std::vector<std::optional<FlowField>> to_prev;  // flow frame i -> i-1
    std::vector<std::optional<FlowField>> to_next;  // flow frame i -> i+1
};

MagnitudeMap compute_mmp(const SharpWindow& window, const WindowFlows& flows, Real K);

// Motion magnitude of the window's center frame from the flows spanning to the
// first and last frames, normalized by the same K (prior-type ablation input).
MagnitudeMap center_frame_magnitude(const SharpWindow& window, Real K,
                                    const std::string& flow_method,
                                    const FlowOptions& fopts);

struct DatagenConfig {
    std::string raw_root;
    std::string out_root;
    std::string split = "train";
    int window_min = 7;
    int window_max = 13;
    int stride = 0;  // 0: advance by the drawn window length
    CrfSpec crf;
    Real K = 15.0;
    uint64_t seed = 0;
    std::string flow_method = "builtin";     // or "external"
    std::string external_flow_dir;           // flows per ordered pair when external
    FlowOptions flow;
    bool write_center_magnitude = true;
};

struct ManifestRow {
    std::string split;
    std::string seq_id;
    int frame_id = 0;  // center frame index in the raw sequence
    int window_len = 0;
    Real K = 15.0;
    int sample_index = 0;  // ordinal within the sequence; names the files
};

struct DatasetManifest {
    std::vector<ManifestRow> rows;

    std::string sample_stem(size_t row) const;  // zero-padded sample index
};

// Synthesizes blurry/MMP pairs for every window of every sequence under
// raw_root and writes the dataset tree plus manifest.tsv.
DatasetManifest build_dataset(const DatagenConfig& cfg);

DatasetManifest load_manifest(const std::string& dataset_root);
void save_manifest(const std::string& dataset_root, const DatasetManifest& manifest);

// Uniformly random subset of row indices, reshuffled per epoch.
std::vector<size_t> trim_for_epoch(size_t total, Real fraction, uint64_t epoch_seed);

// Paths inside the dataset tree.
std::string sample_path(const std::string& root, const ManifestRow& row, const char* kind);

}  // namespace mm

#pragma once

#include "mm/tensor.hpp"

#include <optional>
#include <string>
#include <vector>

namespace mm {

// Dense displacement field mapping pixels of frame A toward frame B.
struct FlowField {
    int h = 0, w = 0;
    std::vector<Real> u;  // horizontal displacement, pixels
    std::vector<Real> v;  // vertical displacement, pixels
};

// Per-pixel motion magnitude of one frame, before window averaging.
struct FrameMagnitude {
    int h = 0, w = 0;
    int frame_index = -1;
    std::vector<Real> values;
};

struct FlowOptions {
    int pyramid_levels = 3;
    int iterations = 100;
    Real smoothness = 0.02;
};

// method: "builtin" runs the coarse-to-fine variational estimator;
// "external:<path>" loads a precomputed flow file instead of computing.
FlowField estimate_flow(const Tensor& frame_a, const Tensor& frame_b,
                        const std::string& method, const FlowOptions& opts = {});

// Average of the two flow endpoint magnitudes; when only one side exists
// (sequence edge) that side's magnitude is used alone.
FrameMagnitude bidirectional_magnitude(const FlowField* fl_prev, const FlowField* fl_next);

// Little-endian binary container: magic "FLOW", u32 H, u32 W,
// H*W float32 u values, H*W float32 v values.
FlowField load_flow_file(const std::string& path);
void save_flow_file(const std::string& path, const FlowField& flow);

}  // namespace mm

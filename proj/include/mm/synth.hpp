#pragma once

#include "mm/tensor.hpp"

#include <string>
#include <vector>

namespace mm {

// Deterministic synthetic sharp sequences: soft-edged rectangles translating
// at subpixel velocities over a static shaded background. Useful as pipeline
// demo input and as ground truth with known motion.
struct SynthSpec {
    int frames = 70;
    int height = 64;
    int width = 64;
    int objects = 3;
    Real min_speed = 0.8;  // pixels per frame
    Real max_speed = 2.2;
    uint64_t seed = 1;
};

std::vector<Tensor> render_synthetic_sequence(const SynthSpec& spec);

// Writes frames as 8-bit PNGs named 00000000.png, 00000001.png, ...
void write_synthetic_sequence(const SynthSpec& spec, const std::string& dir);

}  // namespace mm

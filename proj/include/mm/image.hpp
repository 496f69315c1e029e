#pragma once

#include "mm/tensor.hpp"

#include <string>

namespace mm {

// PNG I/O on (C,H,W) tensors with values in [0,1].
// 8-bit RGB/gray and 16-bit gray files are supported; palette and alpha inputs
// are converted on load.
Tensor load_png(const std::string& path);                   // (3,H,W) or (1,H,W)
void save_png_rgb8(const std::string& path, const Tensor& img);    // (3,H,W)
void save_png_gray16(const std::string& path, const Tensor& img);  // (1,H,W)

// Rec.601 luma of an RGB tensor; passes single-channel input through.
Tensor to_gray(const Tensor& img);

uint64_t hash_file(const std::string& path);

}  // namespace mm

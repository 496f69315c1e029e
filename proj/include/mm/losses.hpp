#pragma once

#include "mm/mmpnet.hpp"
#include "mm/tensor.hpp"

#include <string>

namespace mm {

struct LossWeights {
    Real lambda1 = 0.5;    // gradient loss weight
    Real lambda2 = 1.0;    // motion magnitude loss weight
    Real epsilon = 0.001;  // Charbonnier constant
    std::string gradient_op = "forward_diff";  // or "sobel"
};

// (1/(mn)) * sum over pixels of sqrt(sum over channels of (I-O)^2 + eps^2).
Tensor charbonnier(const Tensor& reference, const Tensor& output, Real epsilon);

// Mean squared error between the image gradients of the two frames.
Tensor gradient_loss(const Tensor& reference, const Tensor& output,
                     const std::string& op = "forward_diff");

// Mean of the raw (unclamped) MMP-Net response to the output frame; gradients
// flow through the frozen network into the frame.
Tensor mm_loss(const Tensor& output, const MMPNet& mmpnet);

// L = L_char + lambda1 * L_grad + lambda2 * L_MM. mmpnet may be null only when
// lambda2 == 0.
Tensor total_loss(const Tensor& reference, const Tensor& output, const MMPNet* mmpnet,
                  const LossWeights& weights);

// Mean absolute error (MMP-Net regression objective).
Tensor l1_loss(const Tensor& a, const Tensor& b);

}  // namespace mm

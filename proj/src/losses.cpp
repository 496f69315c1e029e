#include "mm/losses.hpp"

namespace mm {

namespace {

void check_pair(const Tensor& a, const Tensor& b, const char* what) {
    check(a.defined() && b.defined() && a.ndim() == 4 && a.shape() == b.shape(),
          std::string(what) + ": expected matching (N,C,H,W) tensors");
}

// Channel-wise Sobel responses, x block then y block along channels.
Tensor sobel(const Tensor& x) {
    const int c = x.dim(1);
    static const Real kx[9] = {-1, 0, 1, -2, 0, 2, -1, 0, 1};
    static const Real ky[9] = {-1, -2, -1, 0, 0, 0, 1, 2, 1};
    std::vector<Real> wdata(static_cast<size_t>(2 * c) * c * 9, 0);
    for (int i = 0; i < c; ++i)
        for (int t = 0; t < 9; ++t) {
            wdata[(static_cast<size_t>(i) * c + i) * 9 + t] = kx[t];
            wdata[(static_cast<size_t>(c + i) * c + i) * 9 + t] = ky[t];
        }
    Tensor w = Tensor::from_vec({2 * c, c, 3, 3}, std::move(wdata));
    return conv2d(x, w, Tensor(), 1, 0);  // valid region only, so constants cancel
}

Tensor gradient_stack(const Tensor& x, const std::string& op) {
    if (op == "forward_diff") return concat_channels({diff_x(x), diff_y(x)});
    if (op == "sobel") return sobel(x);
    throw std::invalid_argument("gradient_loss: unknown operator '" + op + "'");
}

}  // namespace

Tensor charbonnier(const Tensor& reference, const Tensor& output, Real epsilon) {
    check_pair(reference, output, "charbonnier");
    check(epsilon > 0, "charbonnier: epsilon must be positive");
    Tensor d2 = sum_channels(square(sub(reference, output)));
    return mean_all(sqrt_t(add_scalar(d2, epsilon * epsilon)));
}

Tensor gradient_loss(const Tensor& reference, const Tensor& output, const std::string& op) {
    check_pair(reference, output, "gradient_loss");
    Tensor g = gradient_stack(reference, op);
    Tensor gh = gradient_stack(output, op);
    return mean_all(square(sub(g, gh)));
}

Tensor mm_loss(const Tensor& output, const MMPNet& mmpnet) {
    check(output.defined() && output.ndim() == 4 && output.dim(1) == 3,
          "mm_loss: expected (N,3,H,W) output frames");
    return mean_all(mmpnet.forward(output));
}

Tensor total_loss(const Tensor& reference, const Tensor& output, const MMPNet* mmpnet,
                  const LossWeights& weights) {
    Tensor loss = charbonnier(reference, output, weights.epsilon);
    if (weights.lambda1 != 0)
        loss = add(loss, scale(gradient_loss(reference, output, weights.gradient_op),
                               weights.lambda1));
    if (weights.lambda2 != 0) {
        check(mmpnet != nullptr, "total_loss: lambda2 > 0 requires MMP-Net parameters");
        loss = add(loss, scale(mm_loss(output, *mmpnet), weights.lambda2));
    }
    return loss;
}

Tensor l1_loss(const Tensor& a, const Tensor& b) {
    check(a.defined() && b.defined() && a.shape() == b.shape(), "l1_loss: shape mismatch");
    return mean_all(abs_t(sub(a, b)));
}

}  // namespace mm

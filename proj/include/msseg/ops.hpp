#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "msseg/rng.hpp"
#include "msseg/tensor.hpp"

// Differentiable tensor primitives. Image tensors are (N, C, H, W).
// Every op records a backward rule when a Graph is installed on the calling
// thread and at least one operand requires a gradient.
namespace msseg::ops {

/// Cross-correlation with zero padding. `bias` may be undefined.
Tensor conv2d(const Tensor& x, const Tensor& weight, const Tensor& bias, std::size_t stride = 1,
              std::size_t pad = 0);

/// Adjoint of conv2d (pad 0). weight is (C_in, C_out, kh, kw); output
/// extent is (H - 1) * stride + kh. `bias` may be undefined.
Tensor conv_transpose2d(const Tensor& x, const Tensor& weight, const Tensor& bias, std::size_t stride = 1);

/// Per-channel running statistics. Empty vectors mean "not initialized".
struct RunningStats {
    std::vector<double> mean;
    std::vector<double> var;

    bool initialized() const { return !mean.empty(); }
    /// PyTorch-style (0, 1) initialisation.
    static RunningStats identity(std::size_t channels) {
        return {std::vector<double>(channels, 0.0), std::vector<double>(channels, 1.0)};
    }
};

inline constexpr double kBatchNormEps = 1e-5;
inline constexpr double kBatchNormMomentum = 0.1;

/// Train mode normalises with biased batch statistics and folds the batch
/// mean and unbiased variance into `stats` (if non-null). Eval mode uses
/// `stats` and requires them to be initialised.
Tensor batchnorm2d(const Tensor& x, const Tensor& gamma, const Tensor& beta, RunningStats* stats, Mode mode,
                   double eps = kBatchNormEps, double momentum = kBatchNormMomentum);

Tensor relu(const Tensor& x);
Tensor sigmoid(const Tensor& x);
Tensor tanh(const Tensor& x);

/// Softmax across dim 1 at every (n, h, w).
Tensor softmax_channels(const Tensor& x);

/// Trailing rows/columns that do not fill a window are dropped. Ties route
/// the gradient to the first maximum in row-major window order.
Tensor maxpool2d(const Tensor& x, std::size_t k, std::size_t stride);
Tensor avgpool2d(const Tensor& x, std::size_t k, std::size_t stride);

/// Zeroes whole (n, c) channels with probability p in train mode and
/// rescales survivors by 1 / (1 - p). Identity in eval mode or when p == 0.
Tensor dropout2d(const Tensor& x, double p, Mode mode, Rng& rng);

Tensor concat_channels(std::span<const Tensor> xs);
Tensor slice_channels(const Tensor& x, std::size_t begin, std::size_t end);
Tensor concat_batch(std::span<const Tensor> xs);
Tensor slice_batch(const Tensor& x, std::size_t begin, std::size_t end);

Tensor upsample_nearest(const Tensor& x, std::size_t factor);
Tensor crop2d(const Tensor& x, std::size_t top, std::size_t left, std::size_t height, std::size_t width);

Tensor add(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
/// Sum of all elements, shape {1}.
Tensor sum(const Tensor& x);

/// p <- p - lr * (grad + weight_decay * p), then every grad is zero-filled.
/// Throws if a parameter has no gradient buffer.
void sgd_step(std::span<Tensor> params, double lr, double weight_decay);

}  // namespace msseg::ops

#pragma once

#include <cstdint>
#include <vector>

#include "fpsr/resample.hpp"
#include "fpsr/tensor.hpp"

// Differentiable operations. Images travel as N x C x H x W.

namespace fpsr::ops {

// Elementwise. Operands must have identical shapes.
template <typename T> Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b);
template <typename T> Tensor<T> sub(const Tensor<T>& a, const Tensor<T>& b);
template <typename T> Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b);
template <typename T> Tensor<T> scale(const Tensor<T>& x, T factor);
template <typename T> Tensor<T> add_scalar(const Tensor<T>& x, T value);
template <typename T> Tensor<T> square(const Tensor<T>& x);

template <typename T> Tensor<T> relu(const Tensor<T>& x);
/// max(x, alpha*x); the derivative at exactly 0 is alpha.
template <typename T> Tensor<T> leaky_relu(const Tensor<T>& x, T alpha);
template <typename T> Tensor<T> sigmoid(const Tensor<T>& x);
/// log(1 + exp(x)), evaluated without overflow.
template <typename T> Tensor<T> softplus(const Tensor<T>& x);
/// log(max(x, floor)).
template <typename T> Tensor<T> log_clamped(const Tensor<T>& x, T floor = T(1e-12));

// Reductions to a scalar.
template <typename T> Tensor<T> sum(const Tensor<T>& x);
template <typename T> Tensor<T> mean(const Tensor<T>& x);
template <typename T> Tensor<T> mean_abs(const Tensor<T>& x);

/// Row-wise softmax over the last axis of an N x K tensor.
template <typename T> Tensor<T> softmax(const Tensor<T>& x);
/// Row-wise inclusive prefix sum over the last axis of an N x K tensor.
template <typename T> Tensor<T> cumsum(const Tensor<T>& x);

/// x (N x F) times weight (F x G) plus bias (G).
template <typename T>
Tensor<T> dense(const Tensor<T>& x, const Tensor<T>& weight, const Tensor<T>& bias);

/// Cross-correlation with zero padding. weight is Cout x Cin x k x k.
template <typename T>
Tensor<T> conv2d(const Tensor<T>& x, const Tensor<T>& weight, const Tensor<T>& bias,
                 int stride, int pad);

/// N x C x H x W -> N x C.
template <typename T> Tensor<T> global_avg_pool(const Tensor<T>& x);

/// Depth-to-space: N x (C r^2) x H x W -> N x C x rH x rW, with
/// out[n, c, h r + i, w r + j] = in[n, c r^2 + i r + j, h, w].
template <typename T> Tensor<T> pixel_shuffle(const Tensor<T>& x, int r);
/// Inverse of pixel_shuffle.
template <typename T> Tensor<T> pixel_unshuffle(const Tensor<T>& x, int r);

/// Separable fixed-weight resampling of the two spatial axes. The weights
/// are constants, so the gradient is the transposed resampling.
template <typename T>
Tensor<T> resample(const Tensor<T>& x, const AxisWeights& rows, const AxisWeights& cols);

/// Bicubic resize of the spatial axes by `scale` (same kernel as images).
template <typename T> Tensor<T> resize_bicubic(const Tensor<T>& x, Ratio scale);

/// Concatenate along axis 0.
template <typename T> Tensor<T> concat_batch(const std::vector<Tensor<T>>& parts);
/// Rows [begin, begin + count) of axis 0.
template <typename T> Tensor<T> slice_batch(const Tensor<T>& x, std::int64_t begin, std::int64_t count);

}  // namespace fpsr::ops

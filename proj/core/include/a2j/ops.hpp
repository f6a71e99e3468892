#pragma once

// Differentiable primitives. Every function records a backward closure when
// gradient recording is on and an input requires a gradient; shape
// violations throw ShapeError with the offending shapes in the message.

#include <cstddef>
#include <span>

#include "a2j/tensor.hpp"

namespace a2j {

template <typename T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b);

template <typename T>
Tensor<T> sub(const Tensor<T>& a, const Tensor<T>& b);

// Elementwise product.
template <typename T>
Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b);

template <typename T>
Tensor<T> scale(const Tensor<T>& a, T factor);

// x[N,D] + b[D] broadcast over rows.
template <typename T>
Tensor<T> add_bias(const Tensor<T>& x, const Tensor<T>& bias);

template <typename T>
Tensor<T> relu(const Tensor<T>& x);

// Max-subtracted softmax along `axis`.
template <typename T>
Tensor<T> softmax(const Tensor<T>& x, std::size_t axis);

// y = x W^T + b for x[N,in], W[out,in], b[out]. `bias` may be undefined.
template <typename T>
Tensor<T> linear(const Tensor<T>& x, const Tensor<T>& weight, const Tensor<T>& bias);

// Per-row normalization over the last axis of x[N,D] with affine gamma/beta.
template <typename T>
Tensor<T> layer_norm(const Tensor<T>& x, const Tensor<T>& gamma, const Tensor<T>& beta,
                     T eps = T(1e-5));

// x[C,H,W] normalized over (C/groups channels x H x W) per group, then a
// per-channel affine transform.
template <typename T>
Tensor<T> group_norm(const Tensor<T>& x, const Tensor<T>& gamma, const Tensor<T>& beta,
                     std::size_t groups, T eps = T(1e-5));

// x[C,H,W] * w[O,C,k,k] + b[O] -> [O,Ho,Wo], zero padding. `bias` may be undefined.
template <typename T>
Tensor<T> conv2d(const Tensor<T>& x, const Tensor<T>& weight, const Tensor<T>& bias,
                 std::size_t stride, std::size_t padding);

// Samples feature[C,H,W] at points[P,2] given as normalized (x,y) in [0,1]
// (pixel-center convention, cell i centered at (i+0.5)/W). Corners outside
// the map contribute zero. Returns [C,P]. Differentiable in both inputs.
template <typename T>
Tensor<T> bilinear_sample(const Tensor<T>& feature, const Tensor<T>& points);

// 2-D transpose.
template <typename T>
Tensor<T> transpose(const Tensor<T>& x);

template <typename T>
Tensor<T> reshape(const Tensor<T>& x, Shape shape);

// Concatenation along axis 0; trailing dimensions must agree.
template <typename T>
Tensor<T> concat_rows(std::span<const Tensor<T>> parts);

// Columns [begin, end) of x[N,M].
template <typename T>
Tensor<T> slice_cols(const Tensor<T>& x, std::size_t begin, std::size_t end);

// out[i] = x[index[i]] for x[L,D] -> [N,D].
template <typename T>
Tensor<T> gather_rows(const Tensor<T>& x, std::span<const std::size_t> index);

// Mean over rows of x[N,D] -> [D].
template <typename T>
Tensor<T> mean_rows(const Tensor<T>& x);

// Sum of all elements -> [1].
template <typename T>
Tensor<T> sum(const Tensor<T>& x);

}  // namespace a2j

#pragma once

#include <utility>
#include <vector>

#include "stgan/autograd.hpp"

namespace stgan::ops {

struct ConvGeometry {
  int kernel = 3;
  int stride = 1;
  int pad = 0;
  int output_pad = 0;  // transposed convolution only
};

/// Output extent of a strided convolution along one axis.
constexpr int conv_out_extent(int in, int kernel, int stride, int pad) {
  return (in + 2 * pad - kernel) / stride + 1;
}

constexpr int conv_transpose_out_extent(int in, int kernel, int stride, int pad,
                                        int output_pad) {
  return (in - 1) * stride - 2 * pad + kernel + output_pad;
}

// Weight layout (out, in, k, k); bias (1, out, 1, 1) or an invalid Var for
// none. Zero padding.
template <typename T>
Var conv2d(Graph<T>& g, Var x, Var weight, Var bias, ConvGeometry geom);

// Weight layout (in, out, k, k); bias (1, out, 1, 1).
template <typename T>
Var conv_transpose2d(Graph<T>& g, Var x, Var weight, Var bias, ConvGeometry geom);

// Per-sample, per-channel normalization without affine terms or running stats.
template <typename T>
Var instance_norm(Graph<T>& g, Var x, T eps = T(1e-5));

template <typename T>
Var relu(Graph<T>& g, Var x);

template <typename T>
Var leaky_relu(Graph<T>& g, Var x, T slope = T(0.2));

template <typename T>
Var tanh(Graph<T>& g, Var x);

template <typename T>
Var add(Graph<T>& g, Var a, Var b);

template <typename T>
Var concat_channels(Graph<T>& g, Var a, Var b);

// 2x2 window, stride 2. Ties resolve to the first element in raster order.
template <typename T>
Var max_pool2(Graph<T>& g, Var x);

/// Weighted sum of scalar nodes.
template <typename T>
Var linear_combination(Graph<T>& g, const std::vector<std::pair<Var, T>>& terms);

}  // namespace stgan::ops

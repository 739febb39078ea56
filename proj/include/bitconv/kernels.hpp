#pragma once

#include <span>
#include <vector>

#include "bitconv/tensor.hpp"

namespace bitconv {

/// Row-major float matrix used for the im2col/gemm formulation.
struct Matrix {
  int rows = 0;
  int cols = 0;
  std::vector<float> data;

  Matrix() = default;
  Matrix(int r, int c, float fill = 0.0f);

  float& operator()(int r, int c) { return data[static_cast<std::size_t>(r) * cols + c]; }
  float operator()(int r, int c) const { return data[static_cast<std::size_t>(r) * cols + c]; }
};

struct ConvGeometry {
  int in_channels = 1;
  int out_channels = 1;
  int kernel = 1;
  int stride = 1;
  int pad = 0;

  /// floor((extent + 2*pad - kernel) / stride) + 1; throws ShapeError when empty.
  int output_extent(int extent) const;
  std::size_t weight_count() const {
    return static_cast<std::size_t>(out_channels) * in_channels * kernel * kernel;
  }
};

struct ConvParams {
  ConvGeometry geometry;
  Tensor weights;  // [out, in, k, k]
  Tensor bias;     // [out]

  /// Checks that the tensors agree with the geometry.
  void validate() const;
};

/// Receptive fields of a single-image tensor as columns: rows ordered
/// channel, kernel row, kernel column; columns ordered over output positions.
Matrix im2col(const Tensor& x, int kernel, int stride, int pad);

/// Adjoint of im2col: scatters columns back into a [1,C,H,W] tensor, summing overlaps.
Tensor col2im(const Matrix& cols, int channels, int height, int width, int kernel, int stride,
              int pad);

Matrix gemm(const Matrix& a, const Matrix& b);

/// C += op(A) * op(B) on raw row-major storage, op(A) is m x k and op(B) is k x n.
/// A transposed flag means the operand is stored in its transposed layout.
void gemm_accumulate(bool transpose_a, bool transpose_b, int m, int n, int k, const float* a,
                     const float* b, float* c);

Tensor conv_forward(const Tensor& x, const ConvParams& p);

Tensor maxpool(const Tensor& x, int kernel, int stride);

/// Max pooling that also records, per output element, the flat input offset
/// of the winning element (first maximum in row-major window order).
Tensor maxpool(const Tensor& x, int kernel, int stride, std::vector<int>& argmax);

Tensor relu(const Tensor& x);
Tensor prelu(const Tensor& x, std::span<const float> slopes);

/// Softmax over all elements of `logits`; returns a rank-1 tensor.
Tensor softmax(const Tensor& logits);

/// y = W x + b with x flattened; W is [out, in]. Returns [1, out, 1, 1].
Tensor fully_connected(const Tensor& x, const Tensor& weights, const Tensor& bias);

/// Bilinear resampling with half-pixel centres and edge clamping, so equal
/// sizes reproduce the input exactly. Accepts [C,H,W] or [1,C,H,W].
Tensor resize_bilinear(const Tensor& x, int out_height, int out_width);

}  // namespace bitconv

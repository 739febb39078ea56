#include "bitconv/kernels.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "bitconv/error.hpp"

namespace bitconv {

namespace {

void require_single_image(const Tensor& x, const char* op) {
  if (x.n() != 1) throw ShapeError(std::string(op) + ": batch size must be 1, got " + std::to_string(x.n()));
}

constexpr int kBlockK = 256;
constexpr int kBlockN = 256;

// C[m x n] += A[m x k] * B[k x n], all row-major and dense.
void gemm_nn(int m, int n, int k, const float* a, const float* b, float* c) {
  for (int p0 = 0; p0 < k; p0 += kBlockK) {
    const int p1 = std::min(k, p0 + kBlockK);
    for (int j0 = 0; j0 < n; j0 += kBlockN) {
      const int j1 = std::min(n, j0 + kBlockN);
      int i = 0;
      for (; i + 4 <= m; i += 4) {
        float* c0 = c + static_cast<std::size_t>(i) * n;
        float* c1 = c0 + n;
        float* c2 = c1 + n;
        float* c3 = c2 + n;
        const float* a0 = a + static_cast<std::size_t>(i) * k;
        const float* a1 = a0 + k;
        const float* a2 = a1 + k;
        const float* a3 = a2 + k;
        for (int p = p0; p < p1; ++p) {
          const float v0 = a0[p], v1 = a1[p], v2 = a2[p], v3 = a3[p];
          const float* brow = b + static_cast<std::size_t>(p) * n;
          for (int j = j0; j < j1; ++j) {
            const float bv = brow[j];
            c0[j] += v0 * bv;
            c1[j] += v1 * bv;
            c2[j] += v2 * bv;
            c3[j] += v3 * bv;
          }
        }
      }
      for (; i < m; ++i) {
        float* crow = c + static_cast<std::size_t>(i) * n;
        const float* arow = a + static_cast<std::size_t>(i) * k;
        for (int p = p0; p < p1; ++p) {
          const float av = arow[p];
          const float* brow = b + static_cast<std::size_t>(p) * n;
          for (int j = j0; j < j1; ++j) crow[j] += av * brow[j];
        }
      }
    }
  }
}

}  // namespace

Matrix::Matrix(int r, int c, float fill)
    : rows(r), cols(c), data(static_cast<std::size_t>(r) * static_cast<std::size_t>(c), fill) {
  if (r < 0 || c < 0) throw ShapeError("negative matrix dimension");
}

int ConvGeometry::output_extent(int extent) const {
  if (kernel < 1 || stride < 1 || pad < 0) {
    throw ShapeError("invalid window: kernel " + std::to_string(kernel) + ", stride " +
                     std::to_string(stride) + ", pad " + std::to_string(pad));
  }
  const int padded = extent + 2 * pad;
  if (padded < kernel) {
    throw ShapeError("kernel " + std::to_string(kernel) + " larger than padded extent " +
                     std::to_string(padded));
  }
  return (padded - kernel) / stride + 1;
}

void ConvParams::validate() const {
  const auto& g = geometry;
  if (g.in_channels < 1 || g.out_channels < 1) throw ShapeError("conv channel counts must be positive");
  if (weights.size() != g.weight_count()) {
    throw ShapeError("conv weights have " + std::to_string(weights.size()) + " elements, expected " +
                     std::to_string(g.weight_count()));
  }
  if (bias.size() != static_cast<std::size_t>(g.out_channels)) {
    throw ShapeError("conv bias has " + std::to_string(bias.size()) + " elements, expected " +
                     std::to_string(g.out_channels));
  }
}

Matrix im2col(const Tensor& x, int kernel, int stride, int pad) {
  require_single_image(x, "im2col");
  const ConvGeometry g{x.c(), 1, kernel, stride, pad};
  const int channels = x.c(), height = x.h(), width = x.w();
  const int out_h = g.output_extent(height);
  const int out_w = g.output_extent(width);

  Matrix cols(channels * kernel * kernel, out_h * out_w);
  const float* src = x.raw();
  int row = 0;
  for (int c = 0; c < channels; ++c) {
    for (int ky = 0; ky < kernel; ++ky) {
      for (int kx = 0; kx < kernel; ++kx, ++row) {
        float* dst = &cols.data[static_cast<std::size_t>(row) * cols.cols];
        for (int oy = 0; oy < out_h; ++oy) {
          const int iy = oy * stride - pad + ky;
          for (int ox = 0; ox < out_w; ++ox) {
            const int ix = ox * stride - pad + kx;
            const bool inside = iy >= 0 && iy < height && ix >= 0 && ix < width;
            dst[oy * out_w + ox] =
                inside ? src[(static_cast<std::size_t>(c) * height + iy) * width + ix] : 0.0f;
          }
        }
      }
    }
  }
  return cols;
}

Tensor col2im(const Matrix& cols, int channels, int height, int width, int kernel, int stride,
              int pad) {
  const ConvGeometry g{channels, 1, kernel, stride, pad};
  const int out_h = g.output_extent(height);
  const int out_w = g.output_extent(width);
  if (cols.rows != channels * kernel * kernel || cols.cols != out_h * out_w) {
    throw ShapeError("col2im: column matrix does not match geometry");
  }
  Tensor out = Tensor::zeros({1, channels, height, width});
  float* dst = out.raw();
  int row = 0;
  for (int c = 0; c < channels; ++c) {
    for (int ky = 0; ky < kernel; ++ky) {
      for (int kx = 0; kx < kernel; ++kx, ++row) {
        const float* src = &cols.data[static_cast<std::size_t>(row) * cols.cols];
        for (int oy = 0; oy < out_h; ++oy) {
          const int iy = oy * stride - pad + ky;
          if (iy < 0 || iy >= height) continue;
          for (int ox = 0; ox < out_w; ++ox) {
            const int ix = ox * stride - pad + kx;
            if (ix < 0 || ix >= width) continue;
            dst[(static_cast<std::size_t>(c) * height + iy) * width + ix] += src[oy * out_w + ox];
          }
        }
      }
    }
  }
  return out;
}

Matrix gemm(const Matrix& a, const Matrix& b) {
  if (a.cols != b.rows) {
    throw ShapeError("gemm: inner dimensions differ (" + std::to_string(a.cols) + " vs " +
                     std::to_string(b.rows) + ")");
  }
  Matrix c(a.rows, b.cols);
  gemm_nn(a.rows, b.cols, a.cols, a.data.data(), b.data.data(), c.data.data());
  return c;
}

void gemm_accumulate(bool transpose_a, bool transpose_b, int m, int n, int k, const float* a,
                     const float* b, float* c) {
  if (!transpose_a && !transpose_b) {
    gemm_nn(m, n, k, a, b, c);
    return;
  }
  // Transposed variants only serve training, where shapes are small.
  for (int i = 0; i < m; ++i) {
    for (int p = 0; p < k; ++p) {
      const float av = transpose_a ? a[static_cast<std::size_t>(p) * m + i]
                                   : a[static_cast<std::size_t>(i) * k + p];
      if (av == 0.0f) continue;
      float* crow = c + static_cast<std::size_t>(i) * n;
      if (transpose_b) {
        for (int j = 0; j < n; ++j) crow[j] += av * b[static_cast<std::size_t>(j) * k + p];
      } else {
        const float* brow = b + static_cast<std::size_t>(p) * n;
        for (int j = 0; j < n; ++j) crow[j] += av * brow[j];
      }
    }
  }
}

Tensor conv_forward(const Tensor& x, const ConvParams& p) {
  p.validate();
  const auto& g = p.geometry;
  if (x.c() != g.in_channels) {
    throw ShapeError("conv expects " + std::to_string(g.in_channels) + " input channels, got " +
                     std::to_string(x.c()));
  }
  const int out_h = g.output_extent(x.h());
  const int out_w = g.output_extent(x.w());
  const Matrix cols = im2col(x, g.kernel, g.stride, g.pad);
  const int positions = out_h * out_w;

  Tensor out = Tensor::zeros({1, g.out_channels, out_h, out_w});
  float* dst = out.raw();
  for (int f = 0; f < g.out_channels; ++f) {
    std::fill(dst + static_cast<std::size_t>(f) * positions,
              dst + static_cast<std::size_t>(f + 1) * positions, p.bias[f]);
  }
  gemm_nn(g.out_channels, positions, cols.rows, p.weights.raw(), cols.data.data(), dst);
  return out;
}

Tensor maxpool(const Tensor& x, int kernel, int stride, std::vector<int>& argmax) {
  if (kernel > x.h() || kernel > x.w()) {
    throw ShapeError("maxpool window " + std::to_string(kernel) + " exceeds input " +
                     std::to_string(x.h()) + "x" + std::to_string(x.w()));
  }
  const ConvGeometry g{1, 1, kernel, stride, 0};
  const int out_h = g.output_extent(x.h());
  const int out_w = g.output_extent(x.w());
  const int planes = x.n() * x.c();

  Shape shape = x.rank() == 4 ? Shape{x.n(), x.c(), out_h, out_w} : Shape{x.c(), out_h, out_w};
  Tensor out = Tensor::zeros(std::move(shape));
  argmax.assign(out.size(), 0);

  const float* src = x.raw();
  std::size_t o = 0;
  for (int plane = 0; plane < planes; ++plane) {
    const std::size_t base = static_cast<std::size_t>(plane) * x.h() * x.w();
    for (int oy = 0; oy < out_h; ++oy) {
      for (int ox = 0; ox < out_w; ++ox, ++o) {
        float best = -std::numeric_limits<float>::infinity();
        std::size_t best_at = base + static_cast<std::size_t>(oy * stride) * x.w() + ox * stride;
        for (int ky = 0; ky < kernel; ++ky) {
          for (int kx = 0; kx < kernel; ++kx) {
            const std::size_t at =
                base + static_cast<std::size_t>(oy * stride + ky) * x.w() + (ox * stride + kx);
            if (src[at] > best) {
              best = src[at];
              best_at = at;
            }
          }
        }
        out[o] = best;
        argmax[o] = static_cast<int>(best_at);
      }
    }
  }
  return out;
}

Tensor maxpool(const Tensor& x, int kernel, int stride) {
  std::vector<int> unused;
  return maxpool(x, kernel, stride, unused);
}

Tensor relu(const Tensor& x) {
  Tensor out = x;
  for (float& v : out.data()) v = v > 0.0f ? v : 0.0f;
  return out;
}

Tensor prelu(const Tensor& x, std::span<const float> slopes) {
  if (slopes.size() != static_cast<std::size_t>(x.c())) {
    throw ShapeError("prelu: " + std::to_string(slopes.size()) + " slopes for " +
                     std::to_string(x.c()) + " channels");
  }
  Tensor out = x;
  const std::size_t plane = static_cast<std::size_t>(x.h()) * x.w();
  float* d = out.raw();
  for (int b = 0; b < x.n(); ++b) {
    for (int c = 0; c < x.c(); ++c) {
      const float a = slopes[static_cast<std::size_t>(c)];
      float* p = d + (static_cast<std::size_t>(b) * x.c() + c) * plane;
      for (std::size_t i = 0; i < plane; ++i) p[i] = p[i] > 0.0f ? p[i] : a * p[i];
    }
  }
  return out;
}

Tensor softmax(const Tensor& logits) {
  float peak = -std::numeric_limits<float>::infinity();
  for (float v : logits.data()) {
    if (std::isnan(v)) throw NumericError("softmax: NaN logit");
    peak = std::max(peak, v);
  }
  std::vector<float> out(logits.size());
  double total = 0.0;
  for (std::size_t i = 0; i < out.size(); ++i) {
    out[i] = std::exp(logits[i] - peak);
    total += out[i];
  }
  for (float& v : out) v = static_cast<float>(v / total);
  const int n = static_cast<int>(out.size());
  return Tensor({n}, std::move(out));
}

Tensor fully_connected(const Tensor& x, const Tensor& weights, const Tensor& bias) {
  const int out = static_cast<int>(bias.size());
  const int in = static_cast<int>(x.size());
  if (weights.size() != static_cast<std::size_t>(out) * in) {
    throw ShapeError("fc: weights hold " + std::to_string(weights.size()) + " values, expected " +
                     std::to_string(out) + "x" + std::to_string(in));
  }
  std::vector<float> y(bias.data().begin(), bias.data().end());
  const float* w = weights.raw();
  const float* v = x.raw();
  for (int o = 0; o < out; ++o) {
    const float* row = w + static_cast<std::size_t>(o) * in;
    float acc = 0.0f;
    for (int i = 0; i < in; ++i) acc += row[i] * v[i];
    y[static_cast<std::size_t>(o)] += acc;
  }
  return Tensor({1, out, 1, 1}, std::move(y));
}

Tensor resize_bilinear(const Tensor& x, int out_height, int out_width) {
  if (out_height < 1 || out_width < 1) throw ShapeError("resize target must be positive");
  require_single_image(x, "resize_bilinear");
  const int channels = x.c(), in_h = x.h(), in_w = x.w();
  Shape shape = x.rank() == 4 ? Shape{1, channels, out_height, out_width}
                              : Shape{channels, out_height, out_width};
  Tensor out = Tensor::zeros(std::move(shape));

  struct Tap {
    int lo, hi;
    float frac;
  };
  auto taps = [](int out_n, int in_n) {
    std::vector<Tap> t(static_cast<std::size_t>(out_n));
    const double scale = static_cast<double>(in_n) / out_n;
    for (int i = 0; i < out_n; ++i) {
      double src = (i + 0.5) * scale - 0.5;
      src = std::clamp(src, 0.0, static_cast<double>(in_n - 1));
      const int lo = static_cast<int>(std::floor(src));
      const int hi = std::min(lo + 1, in_n - 1);
      t[static_cast<std::size_t>(i)] = {lo, hi, static_cast<float>(src - lo)};
    }
    return t;
  };
  const auto ty = taps(out_height, in_h);
  const auto tx = taps(out_width, in_w);

  const float* src = x.raw();
  float* dst = out.raw();
  for (int c = 0; c < channels; ++c) {
    const float* plane = src + static_cast<std::size_t>(c) * in_h * in_w;
    for (int oy = 0; oy < out_height; ++oy) {
      const Tap& vy = ty[static_cast<std::size_t>(oy)];
      const float* r0 = plane + static_cast<std::size_t>(vy.lo) * in_w;
      const float* r1 = plane + static_cast<std::size_t>(vy.hi) * in_w;
      for (int ox = 0; ox < out_width; ++ox) {
        const Tap& vx = tx[static_cast<std::size_t>(ox)];
        const float top = r0[vx.lo] + (r0[vx.hi] - r0[vx.lo]) * vx.frac;
        const float bottom = r1[vx.lo] + (r1[vx.hi] - r1[vx.lo]) * vx.frac;
        *dst++ = top + (bottom - top) * vy.frac;
      }
    }
  }
  return out;
}

}  // namespace bitconv

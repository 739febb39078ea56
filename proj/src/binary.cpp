#include "bitconv/binary.hpp"

#include <bit>
#include <cmath>
#include <string>

#include "bitconv/error.hpp"

namespace bitconv {

namespace {

inline std::int64_t dot_words(const BitWord* a, const BitWord* b, std::size_t nwords, std::size_t n) {
  std::int64_t mismatches = 0;
  for (std::size_t i = 0; i < nwords; ++i) mismatches += std::popcount(static_cast<BitWord>(a[i] ^ b[i]));
  return static_cast<std::int64_t>(n) - 2 * mismatches;
}

// Appends bits one at a time into a zero-initialised word span.
class BitWriter {
 public:
  explicit BitWriter(BitWord* dst) : dst_(dst) {}
  void push(bool bit) {
    cur_ |= static_cast<BitWord>(bit) << used_;
    if (++used_ == kWordBits) flush();
  }
  void finish() {
    if (used_) flush();
  }

 private:
  void flush() {
    *dst_++ = cur_;
    cur_ = 0;
    used_ = 0;
  }
  BitWord* dst_;
  BitWord cur_ = 0;
  int used_ = 0;
};

BitMatrix make_bit_matrix(int rows, int cols) {
  BitMatrix m;
  m.rows = rows;
  m.cols = cols;
  m.words_per_row = words_for(static_cast<std::size_t>(cols));
  m.words.assign(m.words_per_row * static_cast<std::size_t>(rows), 0);
  return m;
}

}  // namespace

BitTensor pack_signs(std::span<const float> values) {
  BitTensor t;
  t.n = values.size();
  t.words.assign(words_for(t.n), 0);
  BitWriter w(t.words.data());
  for (float v : values) w.push(v >= 0.0f);
  w.finish();
  return t;
}

std::vector<float> unpack_signs(const BitTensor& bits) {
  std::vector<float> out(bits.n);
  for (std::size_t i = 0; i < bits.n; ++i) {
    const bool set = (bits.words[i / kWordBits] >> (i % kWordBits)) & 1u;
    out[i] = set ? 1.0f : -1.0f;
  }
  return out;
}

std::int64_t xnor_dot(const BitTensor& a, const BitTensor& b) {
  if (a.n != b.n) {
    throw ShapeError("xnor_dot: lengths differ (" + std::to_string(a.n) + " vs " + std::to_string(b.n) + ")");
  }
  return dot_words(a.words.data(), b.words.data(), a.words.size(), a.n);
}

BitMatrix pack_rows(const Matrix& m) {
  BitMatrix out = make_bit_matrix(m.rows, m.cols);
  for (int r = 0; r < m.rows; ++r) {
    BitWriter w(out.row(r));
    const float* src = &m.data[static_cast<std::size_t>(r) * m.cols];
    for (int c = 0; c < m.cols; ++c) w.push(src[c] >= 0.0f);
    w.finish();
  }
  return out;
}

BitMatrix pack_cols(const Matrix& m) {
  BitMatrix out = make_bit_matrix(m.cols, m.rows);
  for (int c = 0; c < m.cols; ++c) {
    BitWriter w(out.row(c));
    for (int r = 0; r < m.rows; ++r) w.push(m(r, c) >= 0.0f);
    w.finish();
  }
  return out;
}

IntMatrix binary_gemm(const BitMatrix& a, const BitMatrix& b_cols) {
  if (a.cols != b_cols.cols) {
    throw ShapeError("binary_gemm: inner dimensions differ (" + std::to_string(a.cols) + " vs " +
                     std::to_string(b_cols.cols) + ")");
  }
  IntMatrix c;
  c.rows = a.rows;
  c.cols = b_cols.rows;
  c.data.resize(static_cast<std::size_t>(c.rows) * c.cols);
  const std::size_t nw = a.words_per_row;
  const auto k = static_cast<std::size_t>(a.cols);
  for (int i = 0; i < a.rows; ++i) {
    const BitWord* arow = a.row(i);
    std::int32_t* crow = &c.data[static_cast<std::size_t>(i) * c.cols];
    for (int j = 0; j < b_cols.rows; ++j) {
      crow[j] = static_cast<std::int32_t>(dot_words(arow, b_cols.row(j), nw, k));
    }
  }
  return c;
}

BinarizedFilterBank binarize_weights(const ConvParams& p) {
  p.validate();
  const auto& g = p.geometry;
  const int fan_in = g.in_channels * g.kernel * g.kernel;

  BinarizedFilterBank bank;
  bank.geometry = g;
  bank.signs = make_bit_matrix(g.out_channels, fan_in);
  bank.alpha.resize(static_cast<std::size_t>(g.out_channels));
  bank.bias.assign(p.bias.data().begin(), p.bias.data().end());

  for (int f = 0; f < g.out_channels; ++f) {
    const float* w = p.weights.raw() + static_cast<std::size_t>(f) * fan_in;
    BitWriter bits(bank.signs.row(f));
    double abs_sum = 0.0;
    for (int i = 0; i < fan_in; ++i) {
      abs_sum += std::fabs(w[i]);
      bits.push(w[i] >= 0.0f);
    }
    bits.finish();
    bank.alpha[static_cast<std::size_t>(f)] = static_cast<float>(abs_sum / fan_in);
  }
  return bank;
}

BinaryColumns binary_im2col(const Tensor& x, int kernel, int stride, int pad) {
  if (x.n() != 1) throw ShapeError("binary_im2col: batch size must be 1");
  const ConvGeometry g{x.c(), 1, kernel, stride, pad};
  const int channels = x.c(), height = x.h(), width = x.w();

  BinaryColumns out;
  out.out_h = g.output_extent(height);
  out.out_w = g.output_extent(width);
  const int positions = out.out_h * out.out_w;
  out.columns = make_bit_matrix(positions, channels * kernel * kernel);

  // Sign plane computed once; each element is gathered k*k times below.
  std::vector<std::uint8_t> sign(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) sign[i] = x[i] >= 0.0f;

  for (int oy = 0; oy < out.out_h; ++oy) {
    for (int ox = 0; ox < out.out_w; ++ox) {
      const int j = oy * out.out_w + ox;
      const int y0 = oy * stride - pad, x0 = ox * stride - pad;
      const bool interior = y0 >= 0 && x0 >= 0 && y0 + kernel <= height && x0 + kernel <= width;
      BitWriter w(out.columns.row(j));
      for (int c = 0; c < channels; ++c) {
        const std::uint8_t* plane = sign.data() + static_cast<std::size_t>(c) * height * width;
        for (int ky = 0; ky < kernel; ++ky) {
          const int iy = y0 + ky;
          for (int kx = 0; kx < kernel; ++kx) {
            const int ix = x0 + kx;
            if (interior || (iy >= 0 && iy < height && ix >= 0 && ix < width)) {
              w.push(plane[static_cast<std::size_t>(iy) * width + ix] != 0);
            } else {
              w.push(true);
            }
          }
        }
      }
      w.finish();
      if (!interior) {
        std::vector<int> taps;
        for (int ky = 0; ky < kernel; ++ky) {
          for (int kx = 0; kx < kernel; ++kx) {
            const int iy = y0 + ky, ix = x0 + kx;
            if (iy < 0 || iy >= height || ix < 0 || ix >= width) taps.push_back(ky * kernel + kx);
          }
        }
        out.pad_taps.emplace_back(j, std::move(taps));
      }
    }
  }
  return out;
}

std::vector<float> input_scale_map(const Tensor& x, const ConvGeometry& g) {
  const int channels = x.c(), height = x.h(), width = x.w();
  const int out_h = g.output_extent(height), out_w = g.output_extent(width);
  const std::size_t plane = static_cast<std::size_t>(height) * width;

  std::vector<double> mean_abs(plane, 0.0);
  for (int c = 0; c < channels; ++c) {
    const float* src = x.raw() + static_cast<std::size_t>(c) * plane;
    for (std::size_t i = 0; i < plane; ++i) mean_abs[i] += std::fabs(src[i]);
  }
  for (double& v : mean_abs) v /= channels;

  std::vector<float> k(static_cast<std::size_t>(out_h) * out_w);
  for (int oy = 0; oy < out_h; ++oy) {
    for (int ox = 0; ox < out_w; ++ox) {
      double sum = 0.0;
      int count = 0;
      for (int ky = 0; ky < g.kernel; ++ky) {
        const int iy = oy * g.stride - g.pad + ky;
        if (iy < 0 || iy >= height) continue;
        for (int kx = 0; kx < g.kernel; ++kx) {
          const int ix = ox * g.stride - g.pad + kx;
          if (ix < 0 || ix >= width) continue;
          sum += mean_abs[static_cast<std::size_t>(iy) * width + ix];
          ++count;
        }
      }
      k[static_cast<std::size_t>(oy) * out_w + ox] = static_cast<float>(sum / count);
    }
  }
  return k;
}

Tensor xnor_conv_forward(const Tensor& x, const BinarizedFilterBank& f, bool input_scaling) {
  const auto& g = f.geometry;
  if (x.c() != g.in_channels) {
    throw ShapeError("xnor conv expects " + std::to_string(g.in_channels) + " input channels, got " +
                     std::to_string(x.c()));
  }
  const BinaryColumns cols = binary_im2col(x, g.kernel, g.stride, g.pad);
  const IntMatrix dots = binary_gemm(f.signs, cols.columns);
  const int positions = cols.out_h * cols.out_w;
  const int taps = g.kernel * g.kernel;

  // Padded taps were fed in as +1; their weight signs must be taken back out.
  // tap_sum[f][t] = sum over channels of sign(W[f, c, t]).
  std::vector<std::int32_t> tap_sum;
  if (!cols.pad_taps.empty()) {
    tap_sum.assign(static_cast<std::size_t>(g.out_channels) * taps, 0);
    for (int o = 0; o < g.out_channels; ++o) {
      const BitWord* row = f.signs.row(o);
      for (int c = 0; c < g.in_channels; ++c) {
        for (int t = 0; t < taps; ++t) {
          const std::size_t bit = static_cast<std::size_t>(c) * taps + t;
          const bool set = (row[bit / kWordBits] >> (bit % kWordBits)) & 1u;
          tap_sum[static_cast<std::size_t>(o) * taps + t] += set ? 1 : -1;
        }
      }
    }
  }

  const std::vector<float> scale = input_scaling ? input_scale_map(x, g) : std::vector<float>{};

  Tensor out = Tensor::zeros({1, g.out_channels, cols.out_h, cols.out_w});
  float* dst = out.raw();
  std::vector<std::int32_t> acc(static_cast<std::size_t>(positions));
  for (int o = 0; o < g.out_channels; ++o) {
    const std::int32_t* drow = &dots.data[static_cast<std::size_t>(o) * positions];
    acc.assign(drow, drow + positions);
    for (const auto& [j, padded] : cols.pad_taps) {
      for (int t : padded) acc[static_cast<std::size_t>(j)] -= tap_sum[static_cast<std::size_t>(o) * taps + t];
    }
    const float a = f.alpha[static_cast<std::size_t>(o)];
    const float b = f.bias[static_cast<std::size_t>(o)];
    float* orow = dst + static_cast<std::size_t>(o) * positions;
    for (int j = 0; j < positions; ++j) {
      float v = a * static_cast<float>(acc[static_cast<std::size_t>(j)]);
      if (input_scaling) v *= scale[static_cast<std::size_t>(j)];
      orow[j] = v + b;
    }
  }
  return out;
}

}  // namespace bitconv

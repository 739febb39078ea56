#pragma once

#include <cstdint>
#include <span>
#include <type_traits>
#include <vector>

#include "bitconv/kernels.hpp"
#include "bitconv/tensor.hpp"

#ifndef BITCONV_WORD_BITS
#define BITCONV_WORD_BITS 64
#endif

namespace bitconv {

static_assert(BITCONV_WORD_BITS == 32 || BITCONV_WORD_BITS == 64, "word width must be 32 or 64");

using BitWord = std::conditional_t<BITCONV_WORD_BITS == 64, std::uint64_t, std::uint32_t>;
inline constexpr int kWordBits = BITCONV_WORD_BITS;

constexpr std::size_t words_for(std::size_t bits) { return (bits + kWordBits - 1) / kWordBits; }

/// Sign bits of a float vector: bit i is 1 for +1 (v >= 0) and 0 for -1.
/// Bits past `n` in the last word are always zero.
struct BitTensor {
  std::vector<BitWord> words;
  std::size_t n = 0;
};

BitTensor pack_signs(std::span<const float> values);

/// Expands bits back to a vector of +1/-1.
std::vector<float> unpack_signs(const BitTensor& bits);

/// Sum of products of the two +/-1 vectors: n - 2 * popcount(a ^ b).
std::int64_t xnor_dot(const BitTensor& a, const BitTensor& b);

/// Dense bit matrix, one packed row per `rows`, each row `cols` bits wide
/// and padded to whole words.
struct BitMatrix {
  int rows = 0;
  int cols = 0;
  std::size_t words_per_row = 0;
  std::vector<BitWord> words;

  const BitWord* row(int r) const { return words.data() + static_cast<std::size_t>(r) * words_per_row; }
  BitWord* row(int r) { return words.data() + static_cast<std::size_t>(r) * words_per_row; }
  std::size_t storage_bytes() const { return words.size() * sizeof(BitWord); }
};

/// Packs each row of `m`.
BitMatrix pack_rows(const Matrix& m);
/// Packs each column of `m`, producing a BitMatrix with m.cols rows.
BitMatrix pack_cols(const Matrix& m);

struct IntMatrix {
  int rows = 0;
  int cols = 0;
  std::vector<std::int32_t> data;

  std::int32_t operator()(int r, int c) const { return data[static_cast<std::size_t>(r) * cols + c]; }
};

/// a: m rows of k bits; b: n columns of k bits, stored one column per row.
/// Result (i, j) is the +/-1 dot product of row i and column j.
IntMatrix binary_gemm(const BitMatrix& a, const BitMatrix& b_cols);

/// Sign-binarized convolution filters with per-filter scale alpha = mean |W_f|.
struct BinarizedFilterBank {
  ConvGeometry geometry;
  BitMatrix signs;           // out rows x (in * k * k) bits, same order as the float weights
  std::vector<float> alpha;  // one per output filter
  std::vector<float> bias;   // full precision

  std::size_t storage_bytes() const {
    return signs.storage_bytes() + alpha.size() * sizeof(float);
  }
};

BinarizedFilterBank binarize_weights(const ConvParams& p);

/// Binary im2col: sign bits of every receptive field, one packed row per
/// output position. Padded taps are encoded as +1 and listed in `pad_taps`
/// so the caller can cancel their contribution.
struct BinaryColumns {
  BitMatrix columns;
  // For each output position touching padding: (position, kernel taps ky*k+kx
  // that fall outside the image).
  std::vector<std::pair<int, std::vector<int>>> pad_taps;
  int out_h = 0;
  int out_w = 0;
};

BinaryColumns binary_im2col(const Tensor& x, int kernel, int stride, int pad);

/// XNOR convolution. Output = alpha_f * (sign(W_f) . sign(x)) * K + bias_f,
/// where K is 1 without input scaling and, with it, the mean of |x| over
/// channels averaged over the in-image part of each window.
Tensor xnor_conv_forward(const Tensor& x, const BinarizedFilterBank& f, bool input_scaling);

/// The per-position input scale map K used by xnor_conv_forward.
std::vector<float> input_scale_map(const Tensor& x, const ConvGeometry& g);

}  // namespace bitconv

#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "bitconv/binary.hpp"
#include "bitconv/error.hpp"
#include "oracles.hpp"

using namespace bitconv;

namespace {

ConvParams random_params(int in, int out, int k, int stride, int pad, std::mt19937_64& rng, float scale = 1.0f) {
  return ConvParams{ConvGeometry{in, out, k, stride, pad}, oracle::random_tensor({out, in, k, k}, rng, -scale, scale),
                    oracle::random_tensor({out}, rng, -scale, scale)};
}

// Float weights alpha_f * sign(W_f).
ConvParams sign_scaled(const ConvParams& p, const std::vector<float>& alpha) {
  ConvParams q = p;
  const std::size_t per = p.weights.size() / alpha.size();
  for (std::size_t i = 0; i < q.weights.size(); ++i) q.weights[i] = alpha[i / per] * oracle::sign(p.weights[i]);
  return q;
}

Tensor signs_of(const Tensor& x) {
  Tensor s = x;
  for (float& v : s.data()) v = oracle::sign(v);
  return s;
}

double squared_error(std::span<const float> w, double alpha) {
  double e = 0.0;
  for (float v : w) {
    const double d = v - alpha * oracle::sign(v);
    e += d * d;
  }
  return e;
}

}  // namespace

TEST(PackSigns, SmallVector) {
  const float v[] = {1.0f, -1.0f, 3.0f};
  const BitTensor b = pack_signs(v);
  EXPECT_EQ(b.n, 3u);
  ASSERT_EQ(b.words.size(), 1u);
  EXPECT_EQ(b.words[0], BitWord{0b101});
}

TEST(PackSigns, FullWordOfPositives) {
  const std::vector<float> v(kWordBits, 0.5f);
  const BitTensor b = pack_signs(v);
  ASSERT_EQ(b.words.size(), 1u);
  EXPECT_EQ(b.words[0], ~BitWord{0});
}

TEST(PackSigns, ZeroIsPositive) {
  const float v[] = {0.0f, -0.0f, -1e-30f};
  const BitTensor b = pack_signs(v);
  EXPECT_EQ(unpack_signs(b), (std::vector<float>{1.0f, 1.0f, -1.0f}));
}

TEST(PackSigns, RoundTripAndTailBitsZero) {
  std::mt19937_64 rng(1);
  for (std::size_t n : {1u, 31u, 32u, 33u, 63u, 64u, 65u, 130u, 1000u}) {
    const auto v = oracle::random_values(n, rng);
    const BitTensor b = pack_signs(v);
    EXPECT_EQ(b.words.size(), words_for(n));
    const auto back = unpack_signs(b);
    for (std::size_t i = 0; i < n; ++i) EXPECT_EQ(back[i], oracle::sign(v[i]));
    const std::size_t used = n % kWordBits;
    if (used) { EXPECT_EQ(b.words.back() >> used, BitWord{0}); }
  }
}

TEST(XnorDot, SelfAndComplement) {
  std::mt19937_64 rng(2);
  const auto v = oracle::random_signs(100, rng);
  std::vector<float> neg(v);
  for (auto& x : neg) x = -x;
  EXPECT_EQ(xnor_dot(pack_signs(v), pack_signs(v)), 100);
  EXPECT_EQ(xnor_dot(pack_signs(v), pack_signs(neg)), -100);
}

TEST(XnorDot, MatchesFloatDot) {
  std::mt19937_64 rng(3);
  for (std::size_t n = 1; n <= 300; ++n) {
    const auto a = oracle::random_signs(n, rng), b = oracle::random_signs(n, rng);
    double dot = 0.0;
    for (std::size_t i = 0; i < n; ++i) dot += a[i] * b[i];
    EXPECT_EQ(xnor_dot(pack_signs(a), pack_signs(b)), static_cast<std::int64_t>(dot)) << "n=" << n;
  }
}

TEST(XnorDot, LengthMismatch) {
  const std::vector<float> a(10, 1.0f), b(11, 1.0f);
  EXPECT_THROW(xnor_dot(pack_signs(a), pack_signs(b)), ShapeError);
}

TEST(BinaryGemm, ReducesToXnorDot) {
  std::mt19937_64 rng(4);
  Matrix a(1, 77), b(77, 1);
  a.data = oracle::random_signs(77, rng);
  b.data = oracle::random_signs(77, rng);
  const IntMatrix c = binary_gemm(pack_rows(a), pack_cols(b));
  EXPECT_EQ(c(0, 0), xnor_dot(pack_signs(a.data), pack_signs(b.data)));
}

TEST(BinaryGemm, EqualRowsGiveEqualOutputs) {
  std::mt19937_64 rng(5);
  Matrix a(4, 90), b(90, 5);
  const auto row = oracle::random_signs(90, rng);
  for (int r = 0; r < 4; ++r) std::copy(row.begin(), row.end(), a.data.begin() + r * 90);
  b.data = oracle::random_signs(b.data.size(), rng);
  const IntMatrix c = binary_gemm(pack_rows(a), pack_cols(b));
  for (int r = 1; r < 4; ++r)
    for (int j = 0; j < 5; ++j) EXPECT_EQ(c(r, j), c(0, j));
}

TEST(BinaryGemm, MatchesFloatGemmOfSigns) {
  std::mt19937_64 rng(6);
  Matrix a(8, 200), b(200, 6);
  a.data = oracle::random_signs(a.data.size(), rng);
  b.data = oracle::random_signs(b.data.size(), rng);
  const IntMatrix c = binary_gemm(pack_rows(a), pack_cols(b));
  const Matrix want = oracle::triple_loop(a, b);
  for (int i = 0; i < 8; ++i)
    for (int j = 0; j < 6; ++j) EXPECT_EQ(static_cast<float>(c(i, j)), want(i, j));
}

TEST(BinaryGemm, DimensionMismatch) {
  EXPECT_THROW(binary_gemm(pack_rows(Matrix(2, 10)), pack_cols(Matrix(11, 3))), ShapeError);
}

TEST(Binarize, AllOnes) {
  const ConvParams q{ConvGeometry{4, 1, 1, 1, 0}, Tensor({1, 4, 1, 1}, {1, 1, 1, 1}), Tensor({1}, {0.0f})};
  const BinarizedFilterBank b = binarize_weights(q);
  EXPECT_EQ(b.alpha, std::vector<float>{1.0f});
  EXPECT_EQ(b.signs.row(0)[0], BitWord{0b1111});
}

TEST(Binarize, MeanAbs) {
  const ConvParams p{ConvGeometry{2, 1, 1, 1, 0}, Tensor({1, 2, 1, 1}, {-2.0f, 2.0f}), Tensor({1}, {0.0f})};
  const BinarizedFilterBank b = binarize_weights(p);
  EXPECT_EQ(b.alpha, std::vector<float>{2.0f});
  EXPECT_EQ(b.signs.row(0)[0], BitWord{0b10});
}

TEST(Binarize, AlphaMatchesBruteForceMinimum) {
  std::mt19937_64 rng(7);
  for (int trial = 0; trial < 20; ++trial) {
    const ConvParams p = random_params(1, 1, 3, 1, 1, rng);
    const float alpha = binarize_weights(p).alpha[0];
    const auto w = p.weights.data();
    float wmax = 0.0f;
    for (float v : w) wmax = std::max(wmax, std::abs(v));
    // Coarse grid followed by golden-section refinement.
    const int steps = 10000;
    double best = 0.0, best_err = squared_error(w, 0.0);
    for (int i = 1; i <= steps; ++i) {
      const double a = 2.0 * wmax * i / steps;
      const double e = squared_error(w, a);
      if (e < best_err) best_err = e, best = a;
    }
    double lo = best - 2.0 * wmax / steps, hi = best + 2.0 * wmax / steps;
    const double phi = (std::sqrt(5.0) - 1.0) / 2.0;
    for (int it = 0; it < 100; ++it) {
      const double m1 = hi - phi * (hi - lo), m2 = lo + phi * (hi - lo);
      if (squared_error(w, m1) < squared_error(w, m2)) {
        hi = m2;
      } else {
        lo = m1;
      }
    }
    EXPECT_NEAR(alpha, 0.5 * (lo + hi), 1e-4);
  }
}

TEST(Binarize, StorageWithinMemoryBound) {
  std::mt19937_64 rng(8);
  const ConvParams p = random_params(256, 64, 3, 1, 1, rng);
  const BinarizedFilterBank b = binarize_weights(p);
  const double float_bytes = static_cast<double>(p.weights.size()) * sizeof(float);
  EXPECT_LE(static_cast<double>(b.storage_bytes()), float_bytes / 32.0 + 64 * sizeof(float));
}

TEST(XnorConv, SignInputsUnitAlphaEqualsSignConvExactly) {
  std::mt19937_64 rng(9);
  ConvParams p = random_params(3, 4, 3, 1, 1, rng);
  for (float& v : p.weights.data()) v = oracle::sign(v);
  // Quarter-step biases keep every partial sum exactly representable.
  for (float& v : p.bias.data()) v = std::round(v * 4.0f) / 4.0f;
  const BinarizedFilterBank bank = binarize_weights(p);
  for (float a : bank.alpha) ASSERT_EQ(a, 1.0f);
  const Tensor x(Shape{1, 3, 6, 5}, oracle::random_signs(90, rng));
  EXPECT_EQ(xnor_conv_forward(x, bank, false), conv_forward(x, p));
}

TEST(XnorConv, MatchesFloatPathOnSignedInputs) {
  std::mt19937_64 rng(10);
  struct Case { int c, h, w, o, k, s, p; };
  for (const Case cs : {Case{3, 8, 8, 5, 3, 1, 1}, Case{2, 9, 7, 3, 5, 2, 2}, Case{7, 5, 5, 4, 1, 1, 0},
                        Case{4, 10, 10, 6, 3, 2, 0}, Case{70, 6, 6, 3, 3, 1, 1}}) {
    const ConvParams p = random_params(cs.c, cs.o, cs.k, cs.s, cs.p, rng);
    const BinarizedFilterBank bank = binarize_weights(p);
    const Tensor x = oracle::random_tensor({1, cs.c, cs.h, cs.w}, rng);
    const Tensor got = xnor_conv_forward(x, bank, false);
    const Tensor want = conv_forward(signs_of(x), sign_scaled(p, bank.alpha));
    ASSERT_EQ(got.shape(), want.shape());
    EXPECT_LE(oracle::max_rel_error(got.data(), want.data()), 1e-4);
  }
}

TEST(XnorConv, ConstantInputScale) {
  std::mt19937_64 rng(11);
  const ConvParams p = random_params(3, 4, 3, 1, 1, rng);
  const BinarizedFilterBank bank = binarize_weights(p);
  const float c = 0.6f;
  const Tensor x = Tensor::filled({1, 3, 7, 7}, c);
  for (float k : input_scale_map(x, p.geometry)) EXPECT_NEAR(k, c, 1e-6);
  const Tensor on = xnor_conv_forward(x, bank, true);
  const Tensor off = xnor_conv_forward(x, bank, false);
  const std::size_t per = on.size() / 4;
  for (std::size_t i = 0; i < on.size(); ++i) {
    const float bias = bank.bias[i / per];
    EXPECT_NEAR(on[i] - bias, c * (off[i] - bias), 1e-5);
  }
}

TEST(XnorConv, ScaleMapIsBoxFilteredChannelMean) {
  std::mt19937_64 rng(12);
  const Tensor x = oracle::random_tensor({1, 2, 5, 6}, rng);
  const ConvGeometry g{2, 1, 3, 2, 1};
  const auto k = input_scale_map(x, g);
  const int oh = g.output_extent(5), ow = g.output_extent(6);
  ASSERT_EQ(k.size(), static_cast<std::size_t>(oh * ow));
  for (int y = 0; y < oh; ++y)
    for (int xx = 0; xx < ow; ++xx) {
      double sum = 0.0;
      int taps = 0;
      for (int ky = 0; ky < 3; ++ky)
        for (int kx = 0; kx < 3; ++kx) {
          const int iy = y * 2 + ky - 1, ix = xx * 2 + kx - 1;
          if (iy < 0 || iy >= 5 || ix < 0 || ix >= 6) continue;
          sum += (std::abs(x.at({0, 0, iy, ix})) + std::abs(x.at({0, 1, iy, ix}))) / 2.0;
          ++taps;
        }
      EXPECT_NEAR(k[static_cast<std::size_t>(y * ow + xx)], sum / taps, 1e-6);
    }
}

TEST(XnorConv, GeometryMismatch) {
  std::mt19937_64 rng(13);
  const BinarizedFilterBank bank = binarize_weights(random_params(3, 2, 3, 1, 1, rng));
  EXPECT_THROW(xnor_conv_forward(Tensor::zeros({1, 2, 5, 5}), bank, false), ShapeError);
}

TEST(XnorConv, AlphaScalingReducesApproximationError) {
  std::mt19937_64 rng(14);
  double with_alpha = 0.0, unit_alpha = 0.0;
  int per_bank_wins = 0;
  const int banks = 100;
  for (int t = 0; t < banks; ++t) {
    const ConvParams p = random_params(4, 3, 3, 1, 1, rng, 0.3f);
    BinarizedFilterBank bank = binarize_weights(p);
    const Tensor x = oracle::random_tensor({1, 4, 6, 6}, rng);
    const Tensor exact = conv_forward(x, p);
    const Tensor scaled = xnor_conv_forward(x, bank, true);
    std::fill(bank.alpha.begin(), bank.alpha.end(), 1.0f);
    const Tensor unit = xnor_conv_forward(x, bank, true);
    double e1 = 0.0, e2 = 0.0;
    for (std::size_t i = 0; i < exact.size(); ++i) {
      e1 += std::abs(exact[i] - scaled[i]);
      e2 += std::abs(exact[i] - unit[i]);
    }
    with_alpha += e1 / exact.size();
    unit_alpha += e2 / exact.size();
    per_bank_wins += e1 < e2;
  }
  EXPECT_LT(with_alpha, unit_alpha);
  EXPECT_GE(per_bank_wins, 90);
}

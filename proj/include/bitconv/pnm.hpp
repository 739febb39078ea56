#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "bitconv/tensor.hpp"

namespace bitconv {

/// 8-bit raster from a binary PGM (P5, 1 channel) or PPM (P6, 3 channels).
struct PnmImage {
  int width = 0;
  int height = 0;
  int channels = 0;
  std::vector<std::uint8_t> pixels;  // row-major, interleaved
};

/// Only maxval 255 is accepted. Malformed headers raise FormatError.
PnmImage decode_pnm(std::span<const std::uint8_t> bytes);
PnmImage read_pnm(const std::string& path);

std::vector<std::uint8_t> encode_pnm(const PnmImage& image);
void write_pnm(const PnmImage& image, const std::string& path);

/// Planar [C,H,W] tensor with bytes mapped to value/255.
Tensor to_tensor(const PnmImage& image);

}  // namespace bitconv

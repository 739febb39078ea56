#include "bitconv/pnm.hpp"

#include <fstream>
#include <iterator>

#include "bitconv/error.hpp"

namespace bitconv {

namespace {

class HeaderReader {
 public:
  explicit HeaderReader(std::span<const std::uint8_t> bytes) : bytes_(bytes) {}

  void skip_space_and_comments() {
    while (pos_ < bytes_.size()) {
      const auto c = bytes_[pos_];
      if (c == '#') {
        while (pos_ < bytes_.size() && bytes_[pos_] != '\n') ++pos_;
      } else if (c == ' ' || c == '\t' || c == '\n' || c == '\r') {
        ++pos_;
      } else {
        return;
      }
    }
  }

  int number(const char* what) {
    skip_space_and_comments();
    if (pos_ >= bytes_.size() || bytes_[pos_] < '0' || bytes_[pos_] > '9') {
      throw FormatError(std::string("PNM header: expected ") + what);
    }
    long v = 0;
    while (pos_ < bytes_.size() && bytes_[pos_] >= '0' && bytes_[pos_] <= '9') {
      v = v * 10 + (bytes_[pos_++] - '0');
      if (v > 1'000'000) throw FormatError(std::string("PNM header: ") + what + " too large");
    }
    return static_cast<int>(v);
  }

  std::size_t pos_ = 0;

 private:
  std::span<const std::uint8_t> bytes_;
};

}  // namespace

PnmImage decode_pnm(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < 2 || bytes[0] != 'P' || (bytes[1] != '5' && bytes[1] != '6')) {
    throw FormatError("not a binary PGM/PPM file (expected P5 or P6 magic)");
  }
  PnmImage img;
  img.channels = bytes[1] == '5' ? 1 : 3;
  HeaderReader r(bytes);
  r.pos_ = 2;
  if (r.pos_ < bytes.size() && bytes[r.pos_] != ' ' && bytes[r.pos_] != '\n' && bytes[r.pos_] != '\r' &&
      bytes[r.pos_] != '\t' && bytes[r.pos_] != '#') {
    throw FormatError("PNM header: magic must be followed by whitespace");
  }
  img.width = r.number("width");
  img.height = r.number("height");
  const int maxval = r.number("maxval");
  if (img.width < 1 || img.height < 1) throw FormatError("PNM header: zero image dimension");
  if (maxval != 255) throw FormatError("PNM header: only maxval 255 is supported, got " + std::to_string(maxval));
  if (r.pos_ >= bytes.size()) throw FormatError("PNM file ends after header");
  ++r.pos_;  // single whitespace byte before the raster

  const std::size_t expected = static_cast<std::size_t>(img.width) * img.height * img.channels;
  if (bytes.size() - r.pos_ < expected) {
    throw FormatError("PNM raster truncated: need " + std::to_string(expected) + " bytes, have " +
                      std::to_string(bytes.size() - r.pos_));
  }
  img.pixels.assign(bytes.begin() + static_cast<std::ptrdiff_t>(r.pos_),
                    bytes.begin() + static_cast<std::ptrdiff_t>(r.pos_ + expected));
  return img;
}

PnmImage read_pnm(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot read image '" + path + "'");
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  try {
    return decode_pnm(bytes);
  } catch (const FormatError& e) {
    throw FormatError(path + ": " + e.what());
  }
}

std::vector<std::uint8_t> encode_pnm(const PnmImage& image) {
  if (image.channels != 1 && image.channels != 3) throw ArgumentError("PNM images have 1 or 3 channels");
  if (image.pixels.size() != static_cast<std::size_t>(image.width) * image.height * image.channels) {
    throw ShapeError("pixel buffer does not match image dimensions");
  }
  const std::string header = std::string(image.channels == 1 ? "P5" : "P6") + "\n" +
                             std::to_string(image.width) + " " + std::to_string(image.height) + "\n255\n";
  std::vector<std::uint8_t> out(header.begin(), header.end());
  out.insert(out.end(), image.pixels.begin(), image.pixels.end());
  return out;
}

void write_pnm(const PnmImage& image, const std::string& path) {
  const auto bytes = encode_pnm(image);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write image '" + path + "'");
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
}

Tensor to_tensor(const PnmImage& image) {
  const int c = image.channels, h = image.height, w = image.width;
  std::vector<float> data(image.pixels.size());
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      for (int k = 0; k < c; ++k) {
        data[(static_cast<std::size_t>(k) * h + y) * w + x] =
            image.pixels[(static_cast<std::size_t>(y) * w + x) * c + k] / 255.0f;
      }
    }
  }
  return Tensor({c, h, w}, std::move(data));
}

}  // namespace bitconv

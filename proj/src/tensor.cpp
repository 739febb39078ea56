#include "bitconv/tensor.hpp"

#include <algorithm>
#include <sstream>

#include "bitconv/error.hpp"

namespace bitconv {

std::string shape_to_string(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << ',';
    os << shape[i];
  }
  os << ']';
  return os.str();
}

std::size_t checked_element_count(const Shape& shape) {
  if (shape.empty() || shape.size() > 4) {
    throw ShapeError("tensor rank must be 1..4, got " + std::to_string(shape.size()));
  }
  std::size_t count = 1;
  for (int extent : shape) {
    if (extent < 1) throw ShapeError("non-positive extent in shape " + shape_to_string(shape));
    count *= static_cast<std::size_t>(extent);
  }
  return count;
}

Tensor::Tensor() : shape_{1}, data_(1, 0.0f) {}

Tensor::Tensor(Shape shape, std::vector<float> data) : shape_(std::move(shape)), data_(std::move(data)) {
  const std::size_t expected = checked_element_count(shape_);
  if (data_.size() != expected) {
    throw ShapeError("data length " + std::to_string(data_.size()) + " does not match shape " +
                     shape_to_string(shape_));
  }
}

Tensor Tensor::filled(Shape shape, float fill) {
  const std::size_t count = checked_element_count(shape);
  return Tensor(std::move(shape), std::vector<float>(count, fill));
}

std::size_t Tensor::offset(std::span<const int> index) const {
  if (index.size() != shape_.size()) {
    throw IndexError("expected " + std::to_string(shape_.size()) + " coordinates, got " +
                     std::to_string(index.size()));
  }
  std::size_t off = 0;
  for (std::size_t axis = 0; axis < shape_.size(); ++axis) {
    if (index[axis] < 0 || index[axis] >= shape_[axis]) {
      throw IndexError("coordinate " + std::to_string(index[axis]) + " out of range on axis " +
                       std::to_string(axis) + " of " + shape_to_string(shape_));
    }
    off = off * static_cast<std::size_t>(shape_[axis]) + static_cast<std::size_t>(index[axis]);
  }
  return off;
}

float Tensor::at(std::span<const int> index) const { return data_[offset(index)]; }

void Tensor::set(std::span<const int> index, float value) { data_[offset(index)] = value; }

Tensor Tensor::reshaped(Shape shape) const {
  if (checked_element_count(shape) != data_.size()) {
    throw ShapeError("cannot reshape " + shape_to_string(shape_) + " to " + shape_to_string(shape));
  }
  return Tensor(std::move(shape), data_);
}

Tensor channel_concat(std::span<const Tensor> parts) {
  if (parts.empty()) throw ArgumentError("channel_concat needs at least one part");

  const Tensor& first = parts.front();
  int channels = 0;
  for (const Tensor& p : parts) {
    if (p.n() != first.n() || p.h() != first.h() || p.w() != first.w()) {
      throw ShapeError("channel_concat: part " + shape_to_string(p.shape()) +
                       " disagrees with " + shape_to_string(first.shape()) + " on N/H/W");
    }
    channels += p.c();
  }

  const int n = first.n();
  const std::size_t plane = static_cast<std::size_t>(first.h()) * first.w();
  Shape out_shape = first.rank() == 4 ? Shape{n, channels, first.h(), first.w()}
                                      : Shape{channels, first.h(), first.w()};
  std::vector<float> out(static_cast<std::size_t>(n) * channels * plane);

  // Each part contributes one contiguous channel block per batch item.
  auto dst = out.begin();
  for (int b = 0; b < n; ++b) {
    for (const Tensor& p : parts) {
      const std::size_t block = static_cast<std::size_t>(p.c()) * plane;
      auto src = p.data().begin() + static_cast<std::ptrdiff_t>(b * block);
      dst = std::copy(src, src + static_cast<std::ptrdiff_t>(block), dst);
    }
  }
  return Tensor(std::move(out_shape), std::move(out));
}

}  // namespace bitconv

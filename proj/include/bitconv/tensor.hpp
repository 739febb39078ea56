#pragma once

#include <cstddef>
#include <initializer_list>
#include <span>
#include <string>
#include <vector>

namespace bitconv {

/// Extents of a tensor, outermost first. Up to four axes, read as N,C,H,W;
/// lower ranks are suffixes of that ordering with implied leading 1s.
using Shape = std::vector<int>;

std::string shape_to_string(const Shape& shape);

/// Dense row-major float32 array. Immutable in spirit once filled: kernels
/// always allocate fresh outputs, so a constructed tensor can be shared
/// across threads for reading.
class Tensor {
 public:
  /// A single zero.
  Tensor();
  Tensor(Shape shape, std::vector<float> data);

  static Tensor filled(Shape shape, float fill);
  static Tensor zeros(Shape shape) { return filled(std::move(shape), 0.0f); }

  const Shape& shape() const noexcept { return shape_; }
  int rank() const noexcept { return static_cast<int>(shape_.size()); }
  std::size_t size() const noexcept { return data_.size(); }

  // NCHW view with implied leading 1s.
  int n() const noexcept { return axis_from_end(4); }
  int c() const noexcept { return axis_from_end(3); }
  int h() const noexcept { return axis_from_end(2); }
  int w() const noexcept { return axis_from_end(1); }

  std::span<float> data() noexcept { return data_; }
  std::span<const float> data() const noexcept { return data_; }
  float* raw() noexcept { return data_.data(); }
  const float* raw() const noexcept { return data_.data(); }

  float& operator[](std::size_t i) noexcept { return data_[i]; }
  float operator[](std::size_t i) const noexcept { return data_[i]; }

  /// Coordinate access; one coordinate per axis.
  float at(std::span<const int> index) const;
  float at(std::initializer_list<int> index) const {
    return at(std::span<const int>(index.begin(), index.size()));
  }
  void set(std::span<const int> index, float value);
  void set(std::initializer_list<int> index, float value) {
    set(std::span<const int>(index.begin(), index.size()), value);
  }

  /// Same data under a new shape of equal element count.
  Tensor reshaped(Shape shape) const;

  bool operator==(const Tensor& other) const = default;

 private:
  int axis_from_end(int k) const noexcept {
    const int r = rank();
    return r >= k ? shape_[r - k] : 1;
  }
  std::size_t offset(std::span<const int> index) const;

  Shape shape_;
  std::vector<float> data_;
};

/// Number of elements described by `shape`; throws ShapeError on a bad extent.
std::size_t checked_element_count(const Shape& shape);

/// Stacks parts along the channel axis. Parts must agree on N, H and W.
Tensor channel_concat(std::span<const Tensor> parts);

}  // namespace bitconv

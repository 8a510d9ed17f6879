#pragma once

#include <algorithm>
#include <cstddef>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace oodp {

/// Dimensions of a dense NCHW tensor.
struct Shape {
  int n = 0;
  int c = 0;
  int h = 0;
  int w = 0;

  [[nodiscard]] std::size_t size() const {
    return static_cast<std::size_t>(n) * c * h * w;
  }
  [[nodiscard]] std::size_t plane() const {
    return static_cast<std::size_t>(h) * w;
  }
  friend bool operator==(const Shape&, const Shape&) = default;
};

std::string to_string(const Shape& s);

class ShapeError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

inline void require_shape(const Shape& got, const Shape& want, const char* what) {
  if (!(got == want)) {
    throw ShapeError(std::string(what) + ": expected " + to_string(want) +
                     ", got " + to_string(got));
  }
}

/// Owning NCHW tensor. Images, masks, feature maps and fully-connected
/// activations (h = w = 1) all use this one type.
template <typename T>
class Tensor {
 public:
  using value_type = T;

  Tensor() = default;
  explicit Tensor(Shape shape, T fill = T(0))
      : shape_(shape), data_(shape.size(), fill) {}
  Tensor(int n, int c, int h, int w, T fill = T(0))
      : Tensor(Shape{n, c, h, w}, fill) {}

  [[nodiscard]] const Shape& shape() const { return shape_; }
  [[nodiscard]] int n() const { return shape_.n; }
  [[nodiscard]] int c() const { return shape_.c; }
  [[nodiscard]] int h() const { return shape_.h; }
  [[nodiscard]] int w() const { return shape_.w; }
  [[nodiscard]] std::size_t size() const { return data_.size(); }
  [[nodiscard]] bool empty() const { return data_.empty(); }

  T* data() { return data_.data(); }
  const T* data() const { return data_.data(); }
  std::span<T> span() { return data_; }
  std::span<const T> span() const { return data_; }

  T& operator[](std::size_t i) { return data_[i]; }
  const T& operator[](std::size_t i) const { return data_[i]; }

  T& operator()(int n, int c, int y, int x) { return data_[index(n, c, y, x)]; }
  const T& operator()(int n, int c, int y, int x) const {
    return data_[index(n, c, y, x)];
  }

  /// One H×W channel plane of sample n.
  std::span<T> plane(int n, int c) {
    return {data_.data() + index(n, c, 0, 0), shape_.plane()};
  }
  std::span<const T> plane(int n, int c) const {
    return {data_.data() + index(n, c, 0, 0), shape_.plane()};
  }
  /// All channels of sample n.
  std::span<T> sample(int n) {
    const std::size_t stride = static_cast<std::size_t>(shape_.c) * shape_.plane();
    return {data_.data() + n * stride, stride};
  }
  std::span<const T> sample(int n) const {
    const std::size_t stride = static_cast<std::size_t>(shape_.c) * shape_.plane();
    return {data_.data() + n * stride, stride};
  }

  void fill(T v) { std::fill(data_.begin(), data_.end(), v); }
  void zero() { fill(T(0)); }

  /// Same storage, new dimensions; total size must match.
  Tensor reshaped(Shape s) const {
    if (s.size() != data_.size()) {
      throw ShapeError("reshape " + to_string(shape_) + " -> " + to_string(s));
    }
    Tensor out = *this;
    out.shape_ = s;
    return out;
  }

  Tensor& operator+=(const Tensor& o) {
    require_shape(o.shape_, shape_, "Tensor::operator+=");
    for (std::size_t i = 0; i < data_.size(); ++i) data_[i] += o.data_[i];
    return *this;
  }

  template <typename U>
  Tensor<U> cast() const {
    Tensor<U> out(shape_);
    for (std::size_t i = 0; i < data_.size(); ++i) out[i] = static_cast<U>(data_[i]);
    return out;
  }

  friend bool operator==(const Tensor&, const Tensor&) = default;

 private:
  [[nodiscard]] std::size_t index(int n, int c, int y, int x) const {
    return ((static_cast<std::size_t>(n) * shape_.c + c) * shape_.h + y) * shape_.w + x;
  }

  Shape shape_{};
  std::vector<T> data_;
};

/// Copies samples [first, first + count) into a new tensor.
template <typename T>
Tensor<T> slice_batch(const Tensor<T>& t, int first, int count) {
  Tensor<T> out(count, t.c(), t.h(), t.w());
  const auto stride = t.sample(0).size();
  std::copy_n(t.data() + first * stride, count * stride, out.data());
  return out;
}

/// Concatenates along the batch axis.
template <typename T>
Tensor<T> concat_batch(const Tensor<T>& a, const Tensor<T>& b) {
  if (a.c() != b.c() || a.h() != b.h() || a.w() != b.w()) {
    throw ShapeError("concat_batch: " + to_string(a.shape()) + " vs " + to_string(b.shape()));
  }
  Tensor<T> out(a.n() + b.n(), a.c(), a.h(), a.w());
  std::copy(a.span().begin(), a.span().end(), out.data());
  std::copy(b.span().begin(), b.span().end(), out.data() + a.size());
  return out;
}

}  // namespace oodp

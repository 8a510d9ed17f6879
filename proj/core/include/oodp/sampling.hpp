#pragma once

#include <cmath>
#include <span>

namespace oodp {

/// A 2-D quantity in image axes: u is the row, v the column.
template <typename T>
struct Vec2 {
  T u{};
  T v{};
  friend bool operator==(const Vec2&, const Vec2&) = default;
  Vec2& operator+=(const Vec2& o) {
    u += o.u;
    v += o.v;
    return *this;
  }
};

// Bilinear kernel max(0, 1-|y-u|) max(0, 1-|x-v|) over an h×w plane.
// Samples outside the plane read as zero.

template <typename T>
T bilinear_sample(std::span<const T> src, int h, int w, T y, T x) {
  const T fy = std::floor(y), fx = std::floor(x);
  const int y0 = static_cast<int>(fy), x0 = static_cast<int>(fx);
  const T ty = y - fy, tx = x - fx;
  T acc = 0;
  const T wy[2] = {T(1) - ty, ty};
  const T wx[2] = {T(1) - tx, tx};
  for (int dy = 0; dy < 2; ++dy) {
    const int yy = y0 + dy;
    if (yy < 0 || yy >= h) continue;
    for (int dx = 0; dx < 2; ++dx) {
      const int xx = x0 + dx;
      if (xx < 0 || xx >= w) continue;
      acc += wy[dy] * wx[dx] * src[static_cast<std::size_t>(yy * w + xx)];
    }
  }
  return acc;
}

/// Adjoint of bilinear_sample with respect to the source plane.
template <typename T>
void bilinear_scatter(std::span<T> dst, int h, int w, T y, T x, T g) {
  const T fy = std::floor(y), fx = std::floor(x);
  const int y0 = static_cast<int>(fy), x0 = static_cast<int>(fx);
  const T ty = y - fy, tx = x - fx;
  const T wy[2] = {T(1) - ty, ty};
  const T wx[2] = {T(1) - tx, tx};
  for (int dy = 0; dy < 2; ++dy) {
    const int yy = y0 + dy;
    if (yy < 0 || yy >= h) continue;
    for (int dx = 0; dx < 2; ++dx) {
      const int xx = x0 + dx;
      if (xx < 0 || xx >= w) continue;
      dst[static_cast<std::size_t>(yy * w + xx)] += g * wy[dy] * wx[dx];
    }
  }
}

/// d sample / d (y, x), taking the right-hand derivative at integer points.
template <typename T>
Vec2<T> bilinear_sample_grad(std::span<const T> src, int h, int w, T y, T x) {
  const T fy = std::floor(y), fx = std::floor(x);
  const int y0 = static_cast<int>(fy), x0 = static_cast<int>(fx);
  const T ty = y - fy, tx = x - fx;
  auto at = [&](int yy, int xx) -> T {
    return (yy < 0 || yy >= h || xx < 0 || xx >= w) ? T(0) : src[static_cast<std::size_t>(yy * w + xx)];
  };
  const T a = at(y0, x0), b = at(y0, x0 + 1), c = at(y0 + 1, x0), d = at(y0 + 1, x0 + 1);
  return {(T(1) - tx) * (c - a) + tx * (d - b), (T(1) - ty) * (b - a) + ty * (d - c)};
}

}  // namespace oodp

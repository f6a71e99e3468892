#pragma once

#include <cmath>

namespace a2j::detail {

// Bilinear tap for a normalized coordinate pair on a W x H grid under the
// pixel-center convention. Corner k of (00, 10, 01, 11) is in bounds when
// valid[k] is set.
template <typename T>
struct BilinearTap {
  int x0 = 0;
  int y0 = 0;
  T fx = 0;
  T fy = 0;
  T w[4] = {0, 0, 0, 0};
  bool valid[4] = {false, false, false, false};
  int index[4] = {0, 0, 0, 0};

  BilinearTap(T u, T v, int width, int height) {
    const T x = u * T(width) - T(0.5);
    const T y = v * T(height) - T(0.5);
    const T xf = std::floor(x);
    const T yf = std::floor(y);
    x0 = static_cast<int>(xf);
    y0 = static_cast<int>(yf);
    fx = x - xf;
    fy = y - yf;
    w[0] = (T(1) - fx) * (T(1) - fy);
    w[1] = fx * (T(1) - fy);
    w[2] = (T(1) - fx) * fy;
    w[3] = fx * fy;
    const int xs[4] = {x0, x0 + 1, x0, x0 + 1};
    const int ys[4] = {y0, y0, y0 + 1, y0 + 1};
    for (int k = 0; k < 4; ++k) {
      valid[k] = xs[k] >= 0 && xs[k] < width && ys[k] >= 0 && ys[k] < height;
      index[k] = valid[k] ? ys[k] * width + xs[k] : 0;
    }
  }

  // Corner values (zero when out of bounds) read through `at(index)`.
  template <typename Fn>
  void corners(Fn&& at, T out[4]) const {
    for (int k = 0; k < 4; ++k) out[k] = valid[k] ? at(index[k]) : T(0);
  }

  T interpolate(const T c[4]) const { return w[0] * c[0] + w[1] * c[1] + w[2] * c[2] + w[3] * c[3]; }

  // Derivatives of the interpolated value w.r.t. the grid-space x and y.
  T d_dx(const T c[4]) const { return (T(1) - fy) * (c[1] - c[0]) + fy * (c[3] - c[2]); }
  T d_dy(const T c[4]) const { return (T(1) - fx) * (c[2] - c[0]) + fx * (c[3] - c[1]); }
};

}  // namespace a2j::detail

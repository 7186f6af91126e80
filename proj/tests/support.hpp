#pragma once

// Helpers shared by the unit tests: seeded random tensors and small oracles.

#include <cmath>
#include <cstdint>
#include <vector>

#include "csic/rng.hpp"
#include "csic/tensor.hpp"

namespace csic::test {

template <typename T = float>
BasicTensor<T> random_tensor(Shape shape, Rng& rng, double lo = -1.0, double hi = 1.0) {
  BasicTensor<T> t(std::move(shape));
  for (auto& v : t.values()) v = static_cast<T>(rng.uniform(lo, hi));
  return t;
}

inline std::vector<float> random_vector(std::size_t n, Rng& rng, double lo = -1.0, double hi = 1.0) {
  std::vector<float> v(n);
  for (auto& x : v) x = static_cast<float>(rng.uniform(lo, hi));
  return v;
}

template <typename T>
double max_abs_diff(const BasicTensor<T>& a, const BasicTensor<T>& b) {
  double worst = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    worst = std::max(worst, std::abs(static_cast<double>(a[i]) - static_cast<double>(b[i])));
  }
  return worst;
}

// Naive 3x3 same-padded cross-correlation, accumulated in double.
template <typename T>
BasicTensor<double> naive_conv(const BasicTensor<T>& x, const BasicTensor<T>& k, const BasicTensor<T>& bias) {
  const int B = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3), F = k.dim(0);
  BasicTensor<double> out(Shape{B, F, H, W});
  for (int b = 0; b < B; ++b)
    for (int f = 0; f < F; ++f)
      for (int y = 0; y < H; ++y)
        for (int xx = 0; xx < W; ++xx) {
          double s = bias[f];
          for (int c = 0; c < C; ++c)
            for (int ky = 0; ky < 3; ++ky)
              for (int kx = 0; kx < 3; ++kx) {
                const int iy = y + ky - 1, ix = xx + kx - 1;
                if (iy < 0 || iy >= H || ix < 0 || ix >= W) continue;
                s += static_cast<double>(k.at({f, c, ky, kx})) * x.at({b, c, iy, ix});
              }
          out.at({b, f, y, xx}) = s;
        }
  return out;
}

// Naive x[B,N] * W[N,M] + bias, accumulated in double.
template <typename T>
BasicTensor<double> naive_dense(const BasicTensor<T>& x, const BasicTensor<T>& w, const BasicTensor<T>& bias) {
  const int B = x.dim(0), N = x.dim(1), M = w.dim(1);
  BasicTensor<double> out(Shape{B, M});
  for (int b = 0; b < B; ++b)
    for (int m = 0; m < M; ++m) {
      double s = bias[m];
      for (int n = 0; n < N; ++n) s += static_cast<double>(x.at({b, n})) * w.at({n, m});
      out.at({b, m}) = s;
    }
  return out;
}

}  // namespace csic::test

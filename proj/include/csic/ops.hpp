#pragma once

// Forward and backward kernels for the layer types used by the model zoo.
// All loops run in a fixed order so results are bitwise reproducible.

#include <algorithm>
#include <cmath>
#include <numeric>
#include <vector>

#include "csic/tensor.hpp"

namespace csic::ops {

inline constexpr double kBatchNormEpsilon = 1e-3;
inline constexpr double kBatchNormMomentum = 0.99;
inline constexpr float kDefaultLeakySlope = 0.3f;

namespace detail {

inline void check(bool ok, const std::string& what) {
  if (!ok) fail(ErrorKind::kShape, what);
}

// Valid output range [lo, hi) for a 3x3 tap offset `d` over an axis of size n.
inline void tap_range(int d, int n, int& lo, int& hi) {
  lo = std::max(0, -d);
  hi = std::min(n, n - d);
}

}  // namespace detail

// ---------------------------------------------------------------- conv2d ---

namespace detail {

// Patch matrix of one sample: row (c*9 + tap) holds channel c shifted by the
// 3x3 tap offset, zero outside the image. [C*9][H*W].
template <typename T>
void im2col(const T* src, int channels, int h, int w, T* col) {
  const std::size_t plane = static_cast<std::size_t>(h) * w;
  for (int c = 0; c < channels; ++c) {
    const T* s = src + static_cast<std::size_t>(c) * plane;
    for (int tap = 0; tap < 9; ++tap) {
      const int dy = tap / 3 - 1, dx = tap % 3 - 1;
      T* row = col + (static_cast<std::size_t>(c) * 9 + tap) * plane;
      std::fill(row, row + plane, T(0));
      int y0, y1, x0, x1;
      tap_range(dy, h, y0, y1);
      tap_range(dx, w, x0, x1);
      for (int y = y0; y < y1; ++y) {
        T* orow = row + static_cast<std::size_t>(y) * w;
        const T* irow = s + static_cast<std::size_t>(y + dy) * w + dx;
        for (int x = x0; x < x1; ++x) orow[x] = irow[x];
      }
    }
  }
}

// Adjoint of im2col: scatter-adds patch rows back into [C][H][W].
template <typename T>
void col2im_add(const T* col, int channels, int h, int w, T* dst) {
  const std::size_t plane = static_cast<std::size_t>(h) * w;
  for (int c = 0; c < channels; ++c) {
    T* d = dst + static_cast<std::size_t>(c) * plane;
    for (int tap = 0; tap < 9; ++tap) {
      const int dy = tap / 3 - 1, dx = tap % 3 - 1;
      const T* row = col + (static_cast<std::size_t>(c) * 9 + tap) * plane;
      int y0, y1, x0, x1;
      tap_range(dy, h, y0, y1);
      tap_range(dx, w, x0, x1);
      for (int y = y0; y < y1; ++y) {
        const T* grow = row + static_cast<std::size_t>(y) * w;
        T* drow = d + static_cast<std::size_t>(y + dy) * w + dx;
        for (int x = x0; x < x1; ++x) drow[x] += grow[x];
      }
    }
  }
}

// Dot product with a fixed lane split, so it vectorizes without reassociation.
template <typename T>
T dot(const T* a, const T* b, std::size_t n) {
  constexpr std::size_t kLanes = 16;
  T lanes[kLanes] = {};
  std::size_t i = 0;
  for (; i + kLanes <= n; i += kLanes) {
    for (std::size_t j = 0; j < kLanes; ++j) lanes[j] += a[i + j] * b[i + j];
  }
  T s = T(0);
  for (std::size_t j = 0; j < kLanes; ++j) s += lanes[j];
  for (; i < n; ++i) s += a[i] * b[i];
  return s;
}

}  // namespace detail

/// 3x3 cross-correlation, stride 1, zero padding 1.
/// input [B,C,H,W], kernel [F,C,3,3], bias [F] -> [B,F,H,W].
/// Each output is bias + sum over (channel, tap) in ascending order.
template <typename T>
BasicTensor<T> conv2d(const BasicTensor<T>& input, const BasicTensor<T>& kernel,
                      const BasicTensor<T>& bias) {
  detail::check(input.rank() == 4, "conv2d: input must be [B,C,H,W], got " +
                                       shape_string(input.shape()));
  detail::check(kernel.rank() == 4 && kernel.dim(2) == 3 && kernel.dim(3) == 3,
                "conv2d: kernel must be [F,C,3,3], got " + shape_string(kernel.shape()));
  detail::check(kernel.dim(1) == input.dim(1),
                "conv2d: kernel channels " + std::to_string(kernel.dim(1)) +
                    " != input channels " + std::to_string(input.dim(1)));
  detail::check(bias.size() == static_cast<std::size_t>(kernel.dim(0)),
                "conv2d: bias length must equal filter count");

  const int batch = input.dim(0), channels = input.dim(1), h = input.dim(2), w = input.dim(3);
  const int filters = kernel.dim(0);
  const std::size_t plane = static_cast<std::size_t>(h) * w;
  const std::size_t taps = static_cast<std::size_t>(channels) * 9;
  BasicTensor<T> out(Shape{batch, filters, h, w});
  std::vector<T> col(taps * plane);

  for (int b = 0; b < batch; ++b) {
    detail::im2col(input.data() + static_cast<std::size_t>(b) * channels * plane, channels, h, w,
                   col.data());
    for (int f = 0; f < filters; ++f) {
      T* dst = out.data() + (static_cast<std::size_t>(b) * filters + f) * plane;
      std::fill(dst, dst + plane, bias[f]);
      const T* k = kernel.data() + static_cast<std::size_t>(f) * taps;
      for (std::size_t t = 0; t < taps; ++t) {
        const T wk = k[t];
        const T* row = col.data() + t * plane;
        for (std::size_t i = 0; i < plane; ++i) dst[i] += wk * row[i];
      }
    }
  }
  return out;
}

/// Gradients of conv2d. Any output pointer may be null.
template <typename T>
void conv2d_backward(const BasicTensor<T>& input, const BasicTensor<T>& kernel,
                     const BasicTensor<T>& grad_out, BasicTensor<T>* grad_input,
                     BasicTensor<T>* grad_kernel, BasicTensor<T>* grad_bias) {
  const int batch = input.dim(0), channels = input.dim(1), h = input.dim(2), w = input.dim(3);
  const int filters = kernel.dim(0);
  const std::size_t plane = static_cast<std::size_t>(h) * w;
  const std::size_t taps = static_cast<std::size_t>(channels) * 9;
  std::vector<T> col(taps * plane);

  if (grad_input) *grad_input = BasicTensor<T>(input.shape());
  if (grad_kernel) *grad_kernel = BasicTensor<T>(kernel.shape());

  for (int b = 0; b < batch; ++b) {
    const T* g = grad_out.data() + static_cast<std::size_t>(b) * filters * plane;
    if (grad_kernel) {
      detail::im2col(input.data() + static_cast<std::size_t>(b) * channels * plane, channels, h, w,
                     col.data());
      for (int f = 0; f < filters; ++f) {
        const T* gf = g + static_cast<std::size_t>(f) * plane;
        T* dk = grad_kernel->data() + static_cast<std::size_t>(f) * taps;
        for (std::size_t t = 0; t < taps; ++t) dk[t] += detail::dot(gf, col.data() + t * plane, plane);
      }
    }
    if (grad_input) {
      std::fill(col.begin(), col.end(), T(0));
      for (int f = 0; f < filters; ++f) {
        const T* gf = g + static_cast<std::size_t>(f) * plane;
        const T* k = kernel.data() + static_cast<std::size_t>(f) * taps;
        for (std::size_t t = 0; t < taps; ++t) {
          const T wk = k[t];
          T* row = col.data() + t * plane;
          for (std::size_t i = 0; i < plane; ++i) row[i] += wk * gf[i];
        }
      }
      detail::col2im_add(col.data(), channels, h, w,
                         grad_input->data() + static_cast<std::size_t>(b) * channels * plane);
    }
  }

  if (grad_bias) {
    *grad_bias = BasicTensor<T>(Shape{filters});
    for (int b = 0; b < batch; ++b) {
      for (int f = 0; f < filters; ++f) {
        const T* g = grad_out.data() + (static_cast<std::size_t>(b) * filters + f) * plane;
        (*grad_bias)[f] += std::accumulate(g, g + plane, T(0));
      }
    }
  }
}

// ----------------------------------------------------------------- dense ---

/// input [B,N] · weights [N,M] + bias [M] -> [B,M].
template <typename T>
BasicTensor<T> dense(const BasicTensor<T>& input, const BasicTensor<T>& weights,
                     const BasicTensor<T>& bias) {
  detail::check(input.rank() == 2 && weights.rank() == 2,
                "dense: expected [B,N] input and [N,M] weights");
  detail::check(input.dim(1) == weights.dim(0),
                "dense: inner dimensions disagree (" + shape_string(input.shape()) + " x " +
                    shape_string(weights.shape()) + ")");
  detail::check(bias.size() == static_cast<std::size_t>(weights.dim(1)),
                "dense: bias length must equal output width");
  const int batch = input.dim(0), n_in = weights.dim(0), n_out = weights.dim(1);
  BasicTensor<T> out(Shape{batch, n_out});
  for (int b = 0; b < batch; ++b) {
    T* y = out.data() + static_cast<std::size_t>(b) * n_out;
    std::copy(bias.data(), bias.data() + n_out, y);
    const T* x = input.data() + static_cast<std::size_t>(b) * n_in;
    for (int n = 0; n < n_in; ++n) {
      const T xn = x[n];
      const T* wrow = weights.data() + static_cast<std::size_t>(n) * n_out;
      for (int m = 0; m < n_out; ++m) y[m] += xn * wrow[m];
    }
  }
  return out;
}

template <typename T>
void dense_backward(const BasicTensor<T>& input, const BasicTensor<T>& weights,
                    const BasicTensor<T>& grad_out, BasicTensor<T>* grad_input,
                    BasicTensor<T>* grad_weights, BasicTensor<T>* grad_bias) {
  const int batch = input.dim(0), n_in = weights.dim(0), n_out = weights.dim(1);
  if (grad_input) {
    std::vector<T> wt(static_cast<std::size_t>(n_in) * n_out);
    for (int n = 0; n < n_in; ++n)
      for (int m = 0; m < n_out; ++m)
        wt[static_cast<std::size_t>(m) * n_in + n] = weights[static_cast<std::size_t>(n) * n_out + m];
    *grad_input = BasicTensor<T>(input.shape());
    for (int b = 0; b < batch; ++b) {
      T* dx = grad_input->data() + static_cast<std::size_t>(b) * n_in;
      const T* g = grad_out.data() + static_cast<std::size_t>(b) * n_out;
      for (int m = 0; m < n_out; ++m) {
        const T gm = g[m];
        const T* wrow = wt.data() + static_cast<std::size_t>(m) * n_in;
        for (int n = 0; n < n_in; ++n) dx[n] += gm * wrow[n];
      }
    }
  }
  if (grad_weights) {
    *grad_weights = BasicTensor<T>(weights.shape());
    for (int b = 0; b < batch; ++b) {
      const T* x = input.data() + static_cast<std::size_t>(b) * n_in;
      const T* g = grad_out.data() + static_cast<std::size_t>(b) * n_out;
      for (int n = 0; n < n_in; ++n) {
        const T xn = x[n];
        T* dw = grad_weights->data() + static_cast<std::size_t>(n) * n_out;
        for (int m = 0; m < n_out; ++m) dw[m] += xn * g[m];
      }
    }
  }
  if (grad_bias) {
    *grad_bias = BasicTensor<T>(Shape{n_out});
    for (int b = 0; b < batch; ++b) {
      const T* g = grad_out.data() + static_cast<std::size_t>(b) * n_out;
      for (int m = 0; m < n_out; ++m) (*grad_bias)[m] += g[m];
    }
  }
}

// ----------------------------------------------------------- activations ---

template <typename T>
BasicTensor<T> leaky_relu(const BasicTensor<T>& input, T slope) {
  BasicTensor<T> out = input;
  for (auto& v : out.values()) v = v >= T(0) ? v : slope * v;
  return out;
}

template <typename T>
BasicTensor<T> leaky_relu_backward(const BasicTensor<T>& input, const BasicTensor<T>& grad_out,
                                   T slope) {
  BasicTensor<T> g = grad_out;
  for (std::size_t i = 0; i < g.size(); ++i) g[i] = input[i] >= T(0) ? g[i] : slope * g[i];
  return g;
}

template <typename T>
BasicTensor<T> sigmoid(const BasicTensor<T>& input) {
  BasicTensor<T> out = input;
  for (auto& v : out.values()) v = T(1) / (T(1) + std::exp(-v));
  return out;
}

/// Uses the forward output y: dx = dy * y * (1 - y).
template <typename T>
BasicTensor<T> sigmoid_backward(const BasicTensor<T>& output, const BasicTensor<T>& grad_out) {
  BasicTensor<T> g = grad_out;
  for (std::size_t i = 0; i < g.size(); ++i) g[i] *= output[i] * (T(1) - output[i]);
  return g;
}

template <typename T>
BasicTensor<T> add(const BasicTensor<T>& a, const BasicTensor<T>& b) {
  detail::check(a.shape() == b.shape(), "add: shape mismatch " + shape_string(a.shape()) +
                                            " vs " + shape_string(b.shape()));
  BasicTensor<T> out = a;
  for (std::size_t i = 0; i < out.size(); ++i) out[i] += b[i];
  return out;
}

// ------------------------------------------------------------ batch norm ---

template <typename T>
struct BatchNormCache {
  std::vector<T> mean;
  std::vector<T> var;
  std::vector<T> inv_std;
  BasicTensor<T> normalized;  // x-hat, before scale/shift
};

/// Training-mode batch norm over [B,C,H,W]: normalizes with batch statistics.
template <typename T>
BasicTensor<T> batch_norm_train(const BasicTensor<T>& input, const BasicTensor<T>& gamma,
                                const BasicTensor<T>& beta, BatchNormCache<T>& cache) {
  detail::check(input.rank() == 4, "batch_norm: input must be [B,C,H,W]");
  const int batch = input.dim(0), channels = input.dim(1);
  detail::check(gamma.size() == static_cast<std::size_t>(channels) && beta.size() == gamma.size(),
                "batch_norm: parameter length must equal channel count");
  const std::size_t plane = static_cast<std::size_t>(input.dim(2)) * input.dim(3);
  const T count = static_cast<T>(static_cast<std::size_t>(batch) * plane);
  const T eps = static_cast<T>(kBatchNormEpsilon);

  cache.mean.assign(channels, T(0));
  cache.var.assign(channels, T(0));
  cache.inv_std.assign(channels, T(0));
  cache.normalized = BasicTensor<T>(input.shape());
  BasicTensor<T> out(input.shape());

  for (int c = 0; c < channels; ++c) {
    T sum = T(0);
    for (int b = 0; b < batch; ++b) {
      const T* x = input.data() + (static_cast<std::size_t>(b) * channels + c) * plane;
      for (std::size_t i = 0; i < plane; ++i) sum += x[i];
    }
    const T mean = sum / count;
    T sq = T(0);
    for (int b = 0; b < batch; ++b) {
      const T* x = input.data() + (static_cast<std::size_t>(b) * channels + c) * plane;
      for (std::size_t i = 0; i < plane; ++i) {
        const T d = x[i] - mean;
        sq += d * d;
      }
    }
    const T var = sq / count;
    const T inv_std = T(1) / std::sqrt(var + eps);
    cache.mean[c] = mean;
    cache.var[c] = var;
    cache.inv_std[c] = inv_std;
    for (int b = 0; b < batch; ++b) {
      const std::size_t off = (static_cast<std::size_t>(b) * channels + c) * plane;
      for (std::size_t i = 0; i < plane; ++i) {
        const T xh = (input[off + i] - mean) * inv_std;
        cache.normalized[off + i] = xh;
        out[off + i] = gamma[c] * xh + beta[c];
      }
    }
  }
  return out;
}

template <typename T>
void batch_norm_backward(const BatchNormCache<T>& cache, const BasicTensor<T>& gamma,
                         const BasicTensor<T>& grad_out, BasicTensor<T>* grad_input,
                         BasicTensor<T>* grad_gamma, BasicTensor<T>* grad_beta) {
  const Shape& s = grad_out.shape();
  const int batch = s[0], channels = s[1];
  const std::size_t plane = static_cast<std::size_t>(s[2]) * s[3];
  const T count = static_cast<T>(static_cast<std::size_t>(batch) * plane);
  if (grad_input) *grad_input = BasicTensor<T>(s);
  if (grad_gamma) *grad_gamma = BasicTensor<T>(Shape{channels});
  if (grad_beta) *grad_beta = BasicTensor<T>(Shape{channels});

  for (int c = 0; c < channels; ++c) {
    T sum_g = T(0), sum_gx = T(0);
    for (int b = 0; b < batch; ++b) {
      const std::size_t off = (static_cast<std::size_t>(b) * channels + c) * plane;
      for (std::size_t i = 0; i < plane; ++i) {
        sum_g += grad_out[off + i];
        sum_gx += grad_out[off + i] * cache.normalized[off + i];
      }
    }
    if (grad_gamma) (*grad_gamma)[c] = sum_gx;
    if (grad_beta) (*grad_beta)[c] = sum_g;
    if (grad_input) {
      // dx = gamma*inv_std/count * (count*dy - sum(dy) - xhat*sum(dy*xhat))
      const T k = gamma[c] * cache.inv_std[c] / count;
      for (int b = 0; b < batch; ++b) {
        const std::size_t off = (static_cast<std::size_t>(b) * channels + c) * plane;
        for (std::size_t i = 0; i < plane; ++i) {
          (*grad_input)[off + i] =
              k * (count * grad_out[off + i] - sum_g - cache.normalized[off + i] * sum_gx);
        }
      }
    }
  }
}

/// Inference-mode batch norm with frozen running statistics.
template <typename T>
BasicTensor<T> batch_norm_infer(const BasicTensor<T>& input, std::span<const T> gamma,
                                std::span<const T> beta, std::span<const T> running_mean,
                                std::span<const T> running_var) {
  detail::check(input.rank() == 4, "batch_norm: input must be [B,C,H,W]");
  const int batch = input.dim(0), channels = input.dim(1);
  detail::check(gamma.size() == static_cast<std::size_t>(channels),
                "batch_norm: parameter length must equal channel count");
  const std::size_t plane = static_cast<std::size_t>(input.dim(2)) * input.dim(3);
  const T eps = static_cast<T>(kBatchNormEpsilon);
  BasicTensor<T> out(input.shape());
  for (int c = 0; c < channels; ++c) {
    const T inv_std = T(1) / std::sqrt(running_var[c] + eps);
    const T mean = running_mean[c];
    for (int b = 0; b < batch; ++b) {
      const std::size_t off = (static_cast<std::size_t>(b) * channels + c) * plane;
      for (std::size_t i = 0; i < plane; ++i) {
        out[off + i] = gamma[c] * ((input[off + i] - mean) * inv_std) + beta[c];
      }
    }
  }
  return out;
}

// ------------------------------------------------------------------ loss ---

template <typename T>
T mse_loss(const BasicTensor<T>& pred, const BasicTensor<T>& target) {
  detail::check(pred.shape() == target.shape(), "mse_loss: shape mismatch " +
                                                    shape_string(pred.shape()) + " vs " +
                                                    shape_string(target.shape()));
  T sum = T(0);
  for (std::size_t i = 0; i < pred.size(); ++i) {
    const T d = pred[i] - target[i];
    sum += d * d;
  }
  return sum / static_cast<T>(pred.size());
}

/// d(mse)/d(pred) scaled by the upstream scalar gradient.
template <typename T>
BasicTensor<T> mse_loss_backward(const BasicTensor<T>& pred, const BasicTensor<T>& target,
                                 T grad_out) {
  BasicTensor<T> g(pred.shape());
  const T k = T(2) * grad_out / static_cast<T>(pred.size());
  for (std::size_t i = 0; i < g.size(); ++i) g[i] = k * (pred[i] - target[i]);
  return g;
}

}  // namespace csic::ops

#pragma once

// OpenMP data-parallel kernels used on the training and inference paths.
// Every output element is produced by exactly one thread with a fixed
// summation order, so results are bit-identical for any thread count.

#include <omp.h>

#include <cstddef>
#include <span>
#include <vector>

namespace dva {

struct ConvGeometry {
  std::size_t in_channels = 1;
  std::size_t in_h = 0;
  std::size_t in_w = 0;
  std::size_t out_channels = 1;
  std::size_t kernel = 1;
  std::size_t stride = 1;

  std::size_t out_h() const { return (in_h - kernel) / stride + 1; }
  std::size_t out_w() const { return (in_w - kernel) / stride + 1; }
  std::size_t patch() const { return in_channels * kernel * kernel; }
  std::size_t positions() const { return out_h() * out_w(); }
  std::size_t input_size() const { return in_channels * in_h * in_w; }
  std::size_t output_size() const { return out_channels * positions(); }
  std::size_t weight_size() const { return out_channels * patch(); }
};

namespace kernels {

// Below this many multiply-adds a kernel runs serially.
inline constexpr std::size_t kParallelWork = 1 << 16;

inline bool go_parallel(std::size_t work) {
  return work >= kParallelWork && omp_get_max_threads() > 1 && !omp_in_parallel();
}

/// Dot product with a fixed lane-split summation order, so the compiler can
/// vectorize without reassociating.
template <class T>
inline T dot_product(const T* a, const T* b, std::size_t n) {
  constexpr std::size_t kLanes = 16;
  T acc[kLanes] = {};
  std::size_t i = 0;
  for (; i + kLanes <= n; i += kLanes) {
    for (std::size_t k = 0; k < kLanes; ++k) acc[k] += a[i + k] * b[i + k];
  }
  T s = 0;
  for (std::size_t k = 0; k < kLanes; ++k) s += acc[k];
  for (; i < n; ++i) s += a[i] * b[i];
  return s;
}

/// y[i] += alpha * x[i]
template <class T>
inline void axpy(T alpha, const T* x, T* y, std::size_t n) {
#pragma omp simd
  for (std::size_t i = 0; i < n; ++i) y[i] += alpha * x[i];
}

/// Unfolds the input into a [patch x positions] matrix.
template <class T>
void im2col(const ConvGeometry& g, std::span<const T> input, std::span<T> cols) {
  const std::size_t oh = g.out_h(), ow = g.out_w(), k = g.kernel, np = oh * ow;
  for (std::size_t ic = 0; ic < g.in_channels; ++ic) {
    for (std::size_t ky = 0; ky < k; ++ky) {
      for (std::size_t kx = 0; kx < k; ++kx) {
        T* row = cols.data() + ((ic * k + ky) * k + kx) * np;
        const T* src = input.data() + ic * g.in_h * g.in_w;
        for (std::size_t oy = 0; oy < oh; ++oy) {
          const T* line = src + (oy * g.stride + ky) * g.in_w + kx;
          for (std::size_t ox = 0; ox < ow; ++ox) row[oy * ow + ox] = line[ox * g.stride];
        }
      }
    }
  }
}

/// Folds a [patch x positions] gradient back onto the input, accumulating.
template <class T>
void col2im_add(const ConvGeometry& g, std::span<const T> cols, std::span<T> d_input) {
  const std::size_t oh = g.out_h(), ow = g.out_w(), k = g.kernel, np = oh * ow;
  for (std::size_t ic = 0; ic < g.in_channels; ++ic) {
    for (std::size_t ky = 0; ky < k; ++ky) {
      for (std::size_t kx = 0; kx < k; ++kx) {
        const T* row = cols.data() + ((ic * k + ky) * k + kx) * np;
        T* dst = d_input.data() + ic * g.in_h * g.in_w;
        for (std::size_t oy = 0; oy < oh; ++oy) {
          T* line = dst + (oy * g.stride + ky) * g.in_w + kx;
          for (std::size_t ox = 0; ox < ow; ++ox) line[ox * g.stride] += row[oy * ow + ox];
        }
      }
    }
  }
}

/// output[oc, p] = bias[oc] + sum_r weights[oc, r] * cols[r, p].
/// `cols` must hold im2col(input); callers keep it for the backward pass.
template <class T>
void conv2d_forward_cols(const ConvGeometry& g, std::span<const T> cols,
                         std::span<const T> weights, std::span<const T> bias,
                         std::span<T> output) {
  const std::size_t np = g.positions(), patch = g.patch();
  const long n_out = static_cast<long>(g.out_channels);
#pragma omp parallel for schedule(static) if (go_parallel(g.weight_size() * np))
  for (long oc = 0; oc < n_out; ++oc) {
    T* out = output.data() + oc * np;
    const T* w = weights.data() + oc * patch;
    const T b = bias[oc];
    for (std::size_t p = 0; p < np; ++p) out[p] = b;
    for (std::size_t r = 0; r < patch; ++r) axpy(w[r], cols.data() + r * np, out, np);
  }
}

/// Accumulates weight/bias gradients. If d_cols is non-empty it is
/// overwritten with the gradient w.r.t. the unfolded input.
template <class T>
void conv2d_backward_cols(const ConvGeometry& g, std::span<const T> cols,
                          std::span<const T> weights, std::span<const T> d_output,
                          std::span<T> d_cols, std::span<T> d_weights,
                          std::span<T> d_bias) {
  const std::size_t np = g.positions(), patch = g.patch(), nout = g.out_channels;
  const long n_out = static_cast<long>(nout);
  const bool par = go_parallel(g.weight_size() * np);
#pragma omp parallel for schedule(static) if (par)
  for (long oc = 0; oc < n_out; ++oc) {
    const T* d = d_output.data() + oc * np;
    T* dw = d_weights.data() + oc * patch;
    T db = 0;
    for (std::size_t p = 0; p < np; ++p) db += d[p];
    d_bias[oc] += db;
    for (std::size_t r = 0; r < patch; ++r) dw[r] += dot_product(d, cols.data() + r * np, np);
  }
  if (d_cols.empty()) return;
  const long n_patch = static_cast<long>(patch);
#pragma omp parallel for schedule(static) if (par)
  for (long r = 0; r < n_patch; ++r) {
    T* dc = d_cols.data() + r * np;
    for (std::size_t p = 0; p < np; ++p) dc[p] = 0;
    for (std::size_t oc = 0; oc < nout; ++oc) {
      axpy(weights[oc * patch + r], d_output.data() + oc * np, dc, np);
    }
  }
}

/// Convenience wrapper that owns its unfold buffer.
template <class T>
void conv2d_forward(const ConvGeometry& g, std::span<const T> input,
                    std::span<const T> weights, std::span<const T> bias,
                    std::span<T> output) {
  std::vector<T> cols(g.patch() * g.positions());
  im2col<T>(g, input, cols);
  conv2d_forward_cols<T>(g, cols, weights, bias, output);
}

template <class T>
void conv2d_backward(const ConvGeometry& g, std::span<const T> input,
                     std::span<const T> weights, std::span<const T> d_output,
                     std::span<T> d_input, std::span<T> d_weights,
                     std::span<T> d_bias) {
  std::vector<T> cols(g.patch() * g.positions());
  im2col<T>(g, input, cols);
  std::vector<T> d_cols(d_input.empty() ? 0 : cols.size());
  conv2d_backward_cols<T>(g, cols, weights, d_output, d_cols, d_weights, d_bias);
  if (!d_input.empty()) col2im_add<T>(g, d_cols, d_input);
}

/// y = W x + b with W stored [out_dim, in_dim] row-major.
template <class T>
void linear_forward(std::size_t out_dim, std::size_t in_dim, std::span<const T> x,
                    std::span<const T> weights, std::span<const T> bias,
                    std::span<T> y) {
  const long n_out = static_cast<long>(out_dim);
#pragma omp parallel for schedule(static) if (go_parallel(out_dim * in_dim))
  for (long m = 0; m < n_out; ++m) {
    y[m] = dot_product(weights.data() + m * in_dim, x.data(), in_dim) + bias[m];
  }
}

/// Accumulates dW += d_y x^T and db += d_y (skipped when d_weights is
/// empty) and, when d_x is non-empty, d_x += W^T d_y.
template <class T>
void linear_backward(std::size_t out_dim, std::size_t in_dim, std::span<const T> x,
                     std::span<const T> weights, std::span<const T> d_y,
                     std::span<T> d_x, std::span<T> d_weights, std::span<T> d_bias) {
  const long n_out = static_cast<long>(out_dim);
  const bool par = go_parallel(out_dim * in_dim);
  if (!d_weights.empty()) {
#pragma omp parallel for schedule(static) if (par)
    for (long m = 0; m < n_out; ++m) {
      const T d = d_y[m];
      d_bias[m] += d;
      if (d == T{0}) continue;
      axpy(d, x.data(), d_weights.data() + m * in_dim, in_dim);
    }
  }
  if (d_x.empty()) return;
  constexpr std::size_t kBlock = 128;
  const long n_blocks = static_cast<long>((in_dim + kBlock - 1) / kBlock);
#pragma omp parallel for schedule(static) if (par)
  for (long blk = 0; blk < n_blocks; ++blk) {
    const std::size_t lo = blk * kBlock;
    const std::size_t hi = std::min(in_dim, lo + kBlock);
    T* dx = d_x.data();
    for (std::size_t m = 0; m < out_dim; ++m) {
      const T d = d_y[m];
      if (d == T{0}) continue;
      axpy(d, weights.data() + m * in_dim + lo, dx + lo, hi - lo);
    }
  }
}

/// Batched weight gradient over T samples: dW += sum_t d_y[t] x[t]^T and
/// db += sum_t d_y[t], summed in t order. Each weight row is touched once,
/// which keeps large gradients out of the per-step memory traffic.
template <class T>
void outer_accumulate(std::size_t out_dim, std::size_t in_dim,
                      std::span<const T* const> d_ys, std::span<const T* const> xs,
                      std::span<T> d_weights, std::span<T> d_bias) {
  const long n_out = static_cast<long>(out_dim);
  const std::size_t n = d_ys.size();
#pragma omp parallel for schedule(static) if (go_parallel(n * out_dim * in_dim))
  for (long m = 0; m < n_out; ++m) {
    T* row = d_weights.data() + m * in_dim;
    for (std::size_t t = 0; t < n; ++t) {
      const T d = d_ys[t][m];
      d_bias[m] += d;
      if (d == T{0}) continue;
      axpy(d, xs[t], row, in_dim);
    }
  }
}

}  // namespace kernels
}  // namespace dva

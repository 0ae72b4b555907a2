#pragma once

#include <algorithm>
#include <cmath>
#include <span>
#include <vector>

#include "dva/kernels.hpp"
#include "dva/tensor.hpp"

namespace dva {

// ---- elementwise ------------------------------------------------------------

template <class T>
inline T elu(T x) {
  return x > T{0} ? x : std::expm1(x);
}

/// Derivative of elu expressed through its input.
template <class T>
inline T elu_grad(T x) {
  return x > T{0} ? T{1} : std::exp(x);
}

template <class T>
inline T sigmoid(T x) {
  if (x >= T{0}) return T{1} / (T{1} + std::exp(-x));
  const T e = std::exp(x);
  return e / (T{1} + e);
}

template <class T>
Tensor<T> elu(const Tensor<T>& x) {
  Tensor<T> y(x.shape());
  for (std::size_t i = 0; i < x.size(); ++i) y[i] = elu(x[i]);
  return y;
}

template <class T>
Tensor<T> elu_backward(const Tensor<T>& x, const Tensor<T>& d_y) {
  if (x.shape() != d_y.shape()) throw ShapeError("elu_backward shape mismatch");
  Tensor<T> d_x(x.shape());
  for (std::size_t i = 0; i < x.size(); ++i) d_x[i] = d_y[i] * elu_grad(x[i]);
  return d_x;
}

/// Max-subtracted softmax. Throws NumericError on non-finite logits.
template <class T>
void softmax(std::span<const T> logits, std::span<T> out) {
  if (logits.empty()) throw ShapeError("softmax needs at least one logit");
  T mx = logits[0];
  for (T v : logits) {
    if (!std::isfinite(v)) throw NumericError("softmax: non-finite logit");
    mx = std::max(mx, v);
  }
  T sum = 0;
  for (std::size_t i = 0; i < logits.size(); ++i) {
    out[i] = std::exp(logits[i] - mx);
    sum += out[i];
  }
  for (T& v : out) v /= sum;
}

template <class T>
Tensor<T> softmax(const Tensor<T>& logits) {
  Tensor<T> out(logits.shape());
  softmax<T>(logits.data(), out.data());
  return out;
}

/// Vector-Jacobian product of softmax given its output p:
/// dz_j = p_j (dp_j - sum_k p_k dp_k).
template <class T>
Tensor<T> softmax_backward(const Tensor<T>& probs, const Tensor<T>& d_p) {
  if (probs.shape() != d_p.shape()) throw ShapeError("softmax_backward shape mismatch");
  T dot = 0;
  for (std::size_t i = 0; i < probs.size(); ++i) dot += probs[i] * d_p[i];
  Tensor<T> d_z(probs.shape());
  for (std::size_t i = 0; i < probs.size(); ++i) d_z[i] = probs[i] * (d_p[i] - dot);
  return d_z;
}

// ---- convolution -----------------------------------------------------------

/// Builds the geometry for input [C,H,W] and weights [C_out,C_in,K,K],
/// validating shapes.
template <class T>
ConvGeometry conv_geometry(const Tensor<T>& input, const Tensor<T>& weights,
                           std::size_t stride) {
  if (input.rank() != 3 || weights.rank() != 4) {
    throw ShapeError("conv2d expects input [C,H,W] and weights [O,C,K,K]");
  }
  if (weights.dim(2) != weights.dim(3)) throw ShapeError("conv2d kernel must be square");
  if (weights.dim(1) != input.dim(0)) {
    throw ShapeError("conv2d channel mismatch: input " + shape_str(input.shape()) +
                     ", weights " + shape_str(weights.shape()));
  }
  if (stride == 0) throw ShapeError("conv2d stride must be positive");
  ConvGeometry g{input.dim(0), input.dim(1), input.dim(2), weights.dim(0),
                 weights.dim(2), stride};
  if (g.in_h < g.kernel || g.in_w < g.kernel) {
    throw ShapeError("conv2d kernel larger than input");
  }
  return g;
}

/// Valid (unpadded) convolution. Output is [C_out, H', W'].
template <class T>
Tensor<T> conv2d(const Tensor<T>& input, const Tensor<T>& weights,
                 const Tensor<T>& bias, std::size_t stride) {
  const ConvGeometry g = conv_geometry(input, weights, stride);
  if (bias.size() != g.out_channels) throw ShapeError("conv2d bias size mismatch");
  Tensor<T> out({g.out_channels, g.out_h(), g.out_w()});
  kernels::conv2d_forward<T>(g, input.data(), weights.data(), bias.data(), out.data());
  return out;
}

template <class T>
struct ConvGrads {
  Tensor<T> d_input;
  Tensor<T> d_weights;
  Tensor<T> d_bias;
};

template <class T>
ConvGrads<T> conv2d_backward(const Tensor<T>& input, const Tensor<T>& weights,
                             std::size_t stride, const Tensor<T>& d_output) {
  const ConvGeometry g = conv_geometry(input, weights, stride);
  if (d_output.size() != g.output_size()) throw ShapeError("conv2d_backward: bad d_output");
  ConvGrads<T> grads{Tensor<T>(input.shape()), Tensor<T>(weights.shape()),
                     Tensor<T>({g.out_channels})};
  kernels::conv2d_backward<T>(g, input.data(), weights.data(), d_output.data(),
                              grads.d_input.data(), grads.d_weights.data(),
                              grads.d_bias.data());
  return grads;
}

// ---- fully connected -------------------------------------------------------

template <class T>
Tensor<T> fully_connected(const Tensor<T>& x, const Tensor<T>& weights,
                          const Tensor<T>& bias) {
  if (weights.rank() != 2 || weights.dim(1) != x.size() || bias.size() != weights.dim(0)) {
    throw ShapeError("fully_connected dimension mismatch: x " + shape_str(x.shape()) +
                     ", W " + shape_str(weights.shape()));
  }
  Tensor<T> y({weights.dim(0)});
  kernels::linear_forward<T>(weights.dim(0), weights.dim(1), x.data(), weights.data(),
                             bias.data(), y.data());
  return y;
}

template <class T>
struct LinearGrads {
  Tensor<T> d_x;
  Tensor<T> d_weights;
  Tensor<T> d_bias;
};

template <class T>
LinearGrads<T> fully_connected_backward(const Tensor<T>& x, const Tensor<T>& weights,
                                        const Tensor<T>& d_y) {
  if (weights.rank() != 2 || weights.dim(1) != x.size() || d_y.size() != weights.dim(0)) {
    throw ShapeError("fully_connected_backward dimension mismatch");
  }
  LinearGrads<T> g{Tensor<T>(x.shape()), Tensor<T>(weights.shape()),
                   Tensor<T>({weights.dim(0)})};
  kernels::linear_backward<T>(weights.dim(0), weights.dim(1), x.data(), weights.data(),
                              d_y.data(), g.d_x.data(), g.d_weights.data(),
                              g.d_bias.data());
  return g;
}

// ---- LSTM ------------------------------------------------------------------
//
// Gate pre-activations z = W [x; h] + b with W of shape [4H, N + H] and rows
// ordered (input, forget, output, candidate).

template <class T>
struct LstmCache {
  std::vector<T> xh;     // [x; h_prev]
  std::vector<T> gates;  // activated i, f, o, g
  std::vector<T> c_prev;
  std::vector<T> c;
  std::vector<T> tanh_c;
};

/// Runs one LSTM step on raw spans. h_out / c_out may not alias h / c.
template <class T>
void lstm_forward(std::size_t n_in, std::size_t hidden, std::span<const T> x,
                  std::span<const T> h, std::span<const T> c, std::span<const T> weights,
                  std::span<const T> bias, LstmCache<T>& cache, std::span<T> h_out,
                  std::span<T> c_out) {
  const std::size_t H = hidden;
  cache.xh.resize(n_in + H);
  std::copy(x.begin(), x.end(), cache.xh.begin());
  std::copy(h.begin(), h.end(), cache.xh.begin() + n_in);
  cache.gates.resize(4 * H);
  kernels::linear_forward<T>(4 * H, n_in + H, cache.xh, weights, bias, cache.gates);
  cache.c_prev.assign(c.begin(), c.end());
  cache.c.resize(H);
  cache.tanh_c.resize(H);
  T* z = cache.gates.data();
  for (std::size_t j = 0; j < 3 * H; ++j) z[j] = sigmoid(z[j]);
  for (std::size_t j = 3 * H; j < 4 * H; ++j) z[j] = std::tanh(z[j]);
  for (std::size_t j = 0; j < H; ++j) {
    const T i = z[j], f = z[H + j], o = z[2 * H + j], g = z[3 * H + j];
    const T cn = f * c[j] + i * g;
    cache.c[j] = cn;
    cache.tanh_c[j] = std::tanh(cn);
    c_out[j] = cn;
    h_out[j] = o * cache.tanh_c[j];
  }
}

/// Backward through one step. Accumulates into d_weights / d_bias (skipped
/// when d_weights is empty), writes d_x (may be empty), d_h_prev and
/// d_c_prev. On return scratch[0, 4H) holds the gate pre-activation
/// gradients.
template <class T>
void lstm_backward(std::size_t n_in, std::size_t hidden, const LstmCache<T>& cache,
                   std::span<const T> weights, std::span<const T> d_h,
                   std::span<const T> d_c, std::span<T> d_x, std::span<T> d_h_prev,
                   std::span<T> d_c_prev, std::span<T> d_weights, std::span<T> d_bias,
                   std::vector<T>& scratch) {
  const std::size_t H = hidden;
  scratch.assign(5 * H + n_in, T{0});
  T* dz = scratch.data();
  const T* z = cache.gates.data();
  for (std::size_t j = 0; j < H; ++j) {
    const T i = z[j], f = z[H + j], o = z[2 * H + j], g = z[3 * H + j];
    const T tc = cache.tanh_c[j];
    const T dc = d_h[j] * o * (T{1} - tc * tc) + d_c[j];
    dz[j] = dc * g * i * (T{1} - i);
    dz[H + j] = dc * cache.c_prev[j] * f * (T{1} - f);
    dz[2 * H + j] = d_h[j] * tc * o * (T{1} - o);
    dz[3 * H + j] = dc * i * (T{1} - g * g);
    d_c_prev[j] = dc * f;
  }
  std::span<T> d_xh(scratch.data() + 4 * H, n_in + H);
  kernels::linear_backward<T>(4 * H, n_in + H, cache.xh, weights,
                              std::span<const T>(dz, 4 * H), d_xh, d_weights, d_bias);
  if (!d_x.empty()) std::copy(d_xh.begin(), d_xh.begin() + n_in, d_x.begin());
  std::copy(d_xh.begin() + n_in, d_xh.end(), d_h_prev.begin());
}

template <class T>
struct LstmStepResult {
  Tensor<T> h;
  Tensor<T> c;
};

/// Tensor-level single LSTM step; weights [4H, N+H], bias [4H].
template <class T>
LstmStepResult<T> lstm_step(const Tensor<T>& x, const Tensor<T>& h, const Tensor<T>& c,
                            const Tensor<T>& weights, const Tensor<T>& bias) {
  const std::size_t H = h.size();
  if (c.size() != H || weights.rank() != 2 || weights.dim(0) != 4 * H ||
      weights.dim(1) != x.size() + H || bias.size() != 4 * H) {
    throw ShapeError("lstm_step shape mismatch");
  }
  LstmCache<T> cache;
  LstmStepResult<T> r{Tensor<T>({H}), Tensor<T>({H})};
  lstm_forward<T>(x.size(), H, x.data(), h.data(), c.data(), weights.data(), bias.data(),
                  cache, r.h.data(), r.c.data());
  return r;
}

template <class T>
struct LstmGrads {
  Tensor<T> d_x, d_h, d_c, d_weights, d_bias;
};

/// Tensor-level backward of lstm_step given output gradients d_h_out, d_c_out.
template <class T>
LstmGrads<T> lstm_step_backward(const Tensor<T>& x, const Tensor<T>& h, const Tensor<T>& c,
                                const Tensor<T>& weights, const Tensor<T>& bias,
                                const Tensor<T>& d_h_out, const Tensor<T>& d_c_out) {
  const std::size_t H = h.size();
  if (c.size() != H || weights.rank() != 2 || weights.dim(0) != 4 * H ||
      weights.dim(1) != x.size() + H || bias.size() != 4 * H || d_h_out.size() != H ||
      d_c_out.size() != H) {
    throw ShapeError("lstm_step_backward shape mismatch");
  }
  LstmCache<T> cache;
  Tensor<T> h_out({H}), c_out({H});
  lstm_forward<T>(x.size(), H, x.data(), h.data(), c.data(), weights.data(), bias.data(),
                  cache, h_out.data(), c_out.data());
  LstmGrads<T> g{Tensor<T>(x.shape()), Tensor<T>({H}), Tensor<T>({H}),
                 Tensor<T>(weights.shape()), Tensor<T>(bias.shape())};
  std::vector<T> scratch;
  lstm_backward<T>(x.size(), H, cache, weights.data(), d_h_out.data(), d_c_out.data(),
                   g.d_x.data(), g.d_h.data(), g.d_c.data(), g.d_weights.data(),
                   g.d_bias.data(), scratch);
  return g;
}

}  // namespace dva

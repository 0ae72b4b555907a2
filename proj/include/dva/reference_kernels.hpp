#pragma once

// Serial reference kernels. Direct loop nests that follow the textbook
// definitions; kept for testing and benchmarking the OpenMP kernels.

#include <cstddef>
#include <span>

#include "dva/kernels.hpp"

namespace dva::reference {

template <class T>
void conv2d_forward(const ConvGeometry& g, std::span<const T> input,
                    std::span<const T> weights, std::span<const T> bias,
                    std::span<T> output) {
  const std::size_t oh = g.out_h(), ow = g.out_w(), k = g.kernel;
  for (std::size_t oc = 0; oc < g.out_channels; ++oc) {
    for (std::size_t oy = 0; oy < oh; ++oy) {
      for (std::size_t ox = 0; ox < ow; ++ox) {
        T acc = bias[oc];
        for (std::size_t ic = 0; ic < g.in_channels; ++ic) {
          for (std::size_t ky = 0; ky < k; ++ky) {
            for (std::size_t kx = 0; kx < k; ++kx) {
              const std::size_t iy = oy * g.stride + ky;
              const std::size_t ix = ox * g.stride + kx;
              acc += weights[((oc * g.in_channels + ic) * k + ky) * k + kx] *
                     input[(ic * g.in_h + iy) * g.in_w + ix];
            }
          }
        }
        output[(oc * oh + oy) * ow + ox] = acc;
      }
    }
  }
}

/// Accumulates into d_weights / d_bias, and into d_input when it is non-empty.
template <class T>
void conv2d_backward(const ConvGeometry& g, std::span<const T> input,
                     std::span<const T> weights, std::span<const T> d_output,
                     std::span<T> d_input, std::span<T> d_weights,
                     std::span<T> d_bias) {
  const std::size_t oh = g.out_h(), ow = g.out_w(), k = g.kernel;
  for (std::size_t oc = 0; oc < g.out_channels; ++oc) {
    for (std::size_t oy = 0; oy < oh; ++oy) {
      for (std::size_t ox = 0; ox < ow; ++ox) {
        const T d = d_output[(oc * oh + oy) * ow + ox];
        d_bias[oc] += d;
        for (std::size_t ic = 0; ic < g.in_channels; ++ic) {
          for (std::size_t ky = 0; ky < k; ++ky) {
            for (std::size_t kx = 0; kx < k; ++kx) {
              const std::size_t iy = oy * g.stride + ky;
              const std::size_t ix = ox * g.stride + kx;
              const std::size_t wi = ((oc * g.in_channels + ic) * k + ky) * k + kx;
              const std::size_t ii = (ic * g.in_h + iy) * g.in_w + ix;
              d_weights[wi] += d * input[ii];
              if (!d_input.empty()) d_input[ii] += d * weights[wi];
            }
          }
        }
      }
    }
  }
}

template <class T>
void linear_forward(std::size_t out_dim, std::size_t in_dim,
                    std::span<const T> x, std::span<const T> weights,
                    std::span<const T> bias, std::span<T> y) {
  for (std::size_t m = 0; m < out_dim; ++m) {
    T acc = bias[m];
    for (std::size_t n = 0; n < in_dim; ++n) acc += weights[m * in_dim + n] * x[n];
    y[m] = acc;
  }
}

template <class T>
void linear_backward(std::size_t out_dim, std::size_t in_dim,
                     std::span<const T> x, std::span<const T> weights,
                     std::span<const T> d_y, std::span<T> d_x,
                     std::span<T> d_weights, std::span<T> d_bias) {
  for (std::size_t m = 0; m < out_dim; ++m) {
    d_bias[m] += d_y[m];
    for (std::size_t n = 0; n < in_dim; ++n) {
      d_weights[m * in_dim + n] += d_y[m] * x[n];
      if (!d_x.empty()) d_x[n] += weights[m * in_dim + n] * d_y[m];
    }
  }
}

}  // namespace dva::reference

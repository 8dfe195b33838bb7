#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <utility>
#include <vector>

#include "locadv/tensor.hpp"

namespace locadv {

namespace detail {

/// Zero-pads a C×H×W tensor spatially. pad == 0 returns a plain copy.
template <typename T>
Tensor<T> pad2d(const Tensor<T>& x, int pad) {
  if (pad == 0) return x;
  const int C = x.dim(0), H = x.dim(1), W = x.dim(2);
  Tensor<T> out({C, H + 2 * pad, W + 2 * pad});
  const int Wp = W + 2 * pad;
  const int Hp = H + 2 * pad;
  for (int c = 0; c < C; ++c)
    for (int h = 0; h < H; ++h) {
      const T* src = x.ptr() + (static_cast<std::size_t>(c) * H + h) * W;
      T* dst = out.ptr() + (static_cast<std::size_t>(c) * Hp + h + pad) * Wp + pad;
      std::copy(src, src + W, dst);
    }
  return out;
}

/// Drops the padding border again; inverse of pad2d for gradients.
template <typename T>
Tensor<T> unpad2d(const Tensor<T>& xp, int pad, int H, int W) {
  if (pad == 0) return xp;
  const int C = xp.dim(0);
  const int Hp = xp.dim(1), Wp = xp.dim(2);
  Tensor<T> out({C, H, W});
  for (int c = 0; c < C; ++c)
    for (int h = 0; h < H; ++h) {
      const T* src = xp.ptr() + (static_cast<std::size_t>(c) * Hp + h + pad) * Wp + pad;
      T* dst = out.ptr() + (static_cast<std::size_t>(c) * H + h) * W;
      std::copy(src, src + W, dst);
    }
  return out;
}

inline int conv_out_extent(int in, int pad, int k, int stride) {
  return (in + 2 * pad - k) / stride + 1;
}

}  // namespace detail

/// 2-D cross-correlation of a C×H×W input with K×C×kH×kW weights.
/// H' = floor((H + 2*pad - kH) / stride) + 1, and likewise for W'.
template <typename T>
Tensor<T> conv2d(const Tensor<T>& input, const Tensor<T>& weights,
                 const Tensor<T>& bias, int stride, int pad) {
  require(input.shape.size() == 3,
          "conv2d: input must be C×H×W, got " + shape_str(input.shape));
  require(weights.shape.size() == 4,
          "conv2d: weights must be K×C×kH×kW, got " + shape_str(weights.shape));
  const int C = input.dim(0), H = input.dim(1), W = input.dim(2);
  const int K = weights.dim(0), kH = weights.dim(2), kW = weights.dim(3);
  require(weights.dim(1) == C, "conv2d: channel mismatch, input " +
                                   shape_str(input.shape) + " vs weights " +
                                   shape_str(weights.shape));
  require(bias.shape == std::vector<int>{K},
          "conv2d: bias must be [" + std::to_string(K) + "], got " +
              shape_str(bias.shape));
  require(stride >= 1, "conv2d: stride must be >= 1");
  require(pad >= 0, "conv2d: pad must be >= 0");
  require(kH <= H + 2 * pad && kW <= W + 2 * pad,
          "conv2d: kernel " + shape_str(weights.shape) +
              " exceeds padded input " + shape_str(input.shape) + " with pad " +
              std::to_string(pad));

  const int Ho = detail::conv_out_extent(H, pad, kH, stride);
  const int Wo = detail::conv_out_extent(W, pad, kW, stride);
  const Tensor<T> xp = detail::pad2d(input, pad);
  const int Wp = xp.dim(2);

  Tensor<T> y({K, Ho, Wo});
  for (int k = 0; k < K; ++k)
    std::fill_n(y.ptr() + static_cast<std::size_t>(k) * Ho * Wo, Ho * Wo,
                bias.data[k]);

  const T* xpd = xp.ptr();
  const T* wd = weights.ptr();
  for (int k = 0; k < K; ++k)
    for (int c = 0; c < C; ++c)
      for (int i = 0; i < kH; ++i)
        for (int j = 0; j < kW; ++j) {
          const T wv = wd[((static_cast<std::size_t>(k) * C + c) * kH + i) * kW + j];
          for (int oh = 0; oh < Ho; ++oh) {
            const T* xrow = xpd + (static_cast<std::size_t>(c) * xp.dim(1) +
                                   oh * stride + i) * Wp + j;
            T* yrow = y.ptr() + (static_cast<std::size_t>(k) * Ho + oh) * Wo;
            if (stride == 1) {
              for (int ow = 0; ow < Wo; ++ow) yrow[ow] += wv * xrow[ow];
            } else {
              for (int ow = 0; ow < Wo; ++ow) yrow[ow] += wv * xrow[ow * stride];
            }
          }
        }
  return y;
}

/// Gradients of conv2d. Accumulates into any non-null output, which must be
/// pre-shaped (zero it for plain gradients, keep running sums for batches).
template <typename T>
void conv2d_backward(const Tensor<T>& input, const Tensor<T>& weights,
                     int stride, int pad, const Tensor<T>& grad_out,
                     Tensor<T>* grad_input, Tensor<T>* grad_weights,
                     Tensor<T>* grad_bias) {
  const int C = input.dim(0), H = input.dim(1), W = input.dim(2);
  const int K = weights.dim(0), kH = weights.dim(2), kW = weights.dim(3);
  const int Ho = detail::conv_out_extent(H, pad, kH, stride);
  const int Wo = detail::conv_out_extent(W, pad, kW, stride);
  require(grad_out.shape == std::vector<int>({K, Ho, Wo}),
          "conv2d_backward: grad shape " + shape_str(grad_out.shape) +
              " does not match output " + shape_str({K, Ho, Wo}));

  const T* gy = grad_out.ptr();

  if (grad_bias) {
    require(grad_bias->shape == std::vector<int>{K},
            "conv2d_backward: grad_bias shape mismatch");
    for (int k = 0; k < K; ++k) {
      T acc = T(0);
      const T* row = gy + static_cast<std::size_t>(k) * Ho * Wo;
      for (int i = 0; i < Ho * Wo; ++i) acc += row[i];
      grad_bias->data[k] += acc;
    }
  }

  if (grad_weights) {
    require_same_shape(*grad_weights, weights, "conv2d_backward: grad_weights");
    const Tensor<T> xp = detail::pad2d(input, pad);
    const int Wp = xp.dim(2);
    for (int k = 0; k < K; ++k)
      for (int c = 0; c < C; ++c)
        for (int i = 0; i < kH; ++i)
          for (int j = 0; j < kW; ++j) {
            T acc = T(0);
            for (int oh = 0; oh < Ho; ++oh) {
              const T* xrow = xp.ptr() + (static_cast<std::size_t>(c) * xp.dim(1) +
                                          oh * stride + i) * Wp + j;
              const T* gyrow = gy + (static_cast<std::size_t>(k) * Ho + oh) * Wo;
              if (stride == 1) {
                for (int ow = 0; ow < Wo; ++ow) acc += gyrow[ow] * xrow[ow];
              } else {
                for (int ow = 0; ow < Wo; ++ow) acc += gyrow[ow] * xrow[ow * stride];
              }
            }
            grad_weights->data[((static_cast<std::size_t>(k) * C + c) * kH + i) * kW + j] += acc;
          }
  }

  if (grad_input) {
    require_same_shape(*grad_input, input, "conv2d_backward: grad_input");
    Tensor<T> gxp({C, H + 2 * pad, W + 2 * pad});
    const int Wp = gxp.dim(2);
    const T* wd = weights.ptr();
    for (int k = 0; k < K; ++k)
      for (int c = 0; c < C; ++c)
        for (int i = 0; i < kH; ++i)
          for (int j = 0; j < kW; ++j) {
            const T wv = wd[((static_cast<std::size_t>(k) * C + c) * kH + i) * kW + j];
            for (int oh = 0; oh < Ho; ++oh) {
              T* gxrow = gxp.ptr() + (static_cast<std::size_t>(c) * gxp.dim(1) +
                                      oh * stride + i) * Wp + j;
              const T* gyrow = gy + (static_cast<std::size_t>(k) * Ho + oh) * Wo;
              if (stride == 1) {
                for (int ow = 0; ow < Wo; ++ow) gxrow[ow] += wv * gyrow[ow];
              } else {
                for (int ow = 0; ow < Wo; ++ow) gxrow[ow * stride] += wv * gyrow[ow];
              }
            }
          }
    Tensor<T> gx = detail::unpad2d(gxp, pad, H, W);
    for (std::size_t i = 0; i < gx.numel(); ++i) grad_input->data[i] += gx.data[i];
  }
}

template <typename T>
Tensor<T> relu(const Tensor<T>& x) {
  Tensor<T> y(x.shape);
  for (std::size_t i = 0; i < x.numel(); ++i)
    y.data[i] = x.data[i] > T(0) ? x.data[i] : T(0);
  return y;
}

template <typename T>
Tensor<T> relu_backward(const Tensor<T>& input, const Tensor<T>& grad_out) {
  require_same_shape(input, grad_out, "relu_backward");
  Tensor<T> gx(input.shape);
  for (std::size_t i = 0; i < input.numel(); ++i)
    gx.data[i] = input.data[i] > T(0) ? grad_out.data[i] : T(0);
  return gx;
}

template <typename T>
struct MaxPoolResult {
  Tensor<T> output;
  std::vector<std::int32_t> argmax;  // flat h*W+w index per output cell
};

/// Max pooling over k×k windows without padding. Ties resolve to the first
/// occurrence in row-major order, which keeps the backward routing unique.
template <typename T>
MaxPoolResult<T> maxpool2d(const Tensor<T>& x, int kernel, int stride) {
  require(x.shape.size() == 3,
          "maxpool2d: input must be C×H×W, got " + shape_str(x.shape));
  require(kernel >= 1 && stride >= 1, "maxpool2d: kernel and stride must be >= 1");
  const int C = x.dim(0), H = x.dim(1), W = x.dim(2);
  require(kernel <= H && kernel <= W,
          "maxpool2d: kernel " + std::to_string(kernel) + " exceeds input " +
              shape_str(x.shape));
  const int Ho = (H - kernel) / stride + 1;
  const int Wo = (W - kernel) / stride + 1;

  MaxPoolResult<T> res{Tensor<T>({C, Ho, Wo}),
                       std::vector<std::int32_t>(static_cast<std::size_t>(C) * Ho * Wo)};
  for (int c = 0; c < C; ++c) {
    const T* plane = x.ptr() + static_cast<std::size_t>(c) * H * W;
    for (int oh = 0; oh < Ho; ++oh)
      for (int ow = 0; ow < Wo; ++ow) {
        int best = (oh * stride) * W + (ow * stride);
        T bv = plane[best];
        for (int i = 0; i < kernel; ++i)
          for (int j = 0; j < kernel; ++j) {
            const int idx = (oh * stride + i) * W + (ow * stride + j);
            if (plane[idx] > bv) {
              bv = plane[idx];
              best = idx;
            }
          }
        const std::size_t o = (static_cast<std::size_t>(c) * Ho + oh) * Wo + ow;
        res.output.data[o] = bv;
        res.argmax[o] = best;
      }
  }
  return res;
}

/// Routes each output gradient back to its argmax position. Conserves
/// gradient mass: sum(grad_input) == sum(grad_out).
template <typename T>
Tensor<T> maxpool2d_backward(const std::vector<int>& input_shape,
                             const std::vector<std::int32_t>& argmax,
                             const Tensor<T>& grad_out) {
  require(input_shape.size() == 3, "maxpool2d_backward: input shape must be C×H×W");
  require(argmax.size() == grad_out.numel(),
          "maxpool2d_backward: argmax/grad size mismatch");
  const int C = input_shape[0], H = input_shape[1], W = input_shape[2];
  const int per_out = static_cast<int>(grad_out.numel()) / C;
  Tensor<T> gx(input_shape);
  for (int c = 0; c < C; ++c) {
    T* plane = gx.ptr() + static_cast<std::size_t>(c) * H * W;
    for (int o = 0; o < per_out; ++o) {
      const std::size_t idx = static_cast<std::size_t>(c) * per_out + o;
      plane[argmax[idx]] += grad_out.data[idx];
    }
  }
  return gx;
}

/// Fully connected layer: flattens the input and applies y = W x + b
/// with W of shape M×N.
template <typename T>
Tensor<T> linear(const Tensor<T>& x, const Tensor<T>& weights,
                 const Tensor<T>& bias) {
  require(weights.shape.size() == 2,
          "linear: weights must be M×N, got " + shape_str(weights.shape));
  const int M = weights.dim(0), N = weights.dim(1);
  require(static_cast<int>(x.numel()) == N,
          "linear: input " + shape_str(x.shape) + " does not flatten to " +
              std::to_string(N));
  require(bias.shape == std::vector<int>{M}, "linear: bias shape mismatch");
  Tensor<T> y({M});
  for (int m = 0; m < M; ++m) {
    T acc = bias.data[m];
    const T* wrow = weights.ptr() + static_cast<std::size_t>(m) * N;
    for (int n = 0; n < N; ++n) acc += wrow[n] * x.data[n];
    y.data[m] = acc;
  }
  return y;
}

template <typename T>
void linear_backward(const Tensor<T>& input, const Tensor<T>& weights,
                     const Tensor<T>& grad_out, Tensor<T>* grad_input,
                     Tensor<T>* grad_weights, Tensor<T>* grad_bias) {
  const int M = weights.dim(0), N = weights.dim(1);
  require(grad_out.shape == std::vector<int>{M},
          "linear_backward: grad shape " + shape_str(grad_out.shape) +
              " does not match output [" + std::to_string(M) + "]");
  if (grad_bias) {
    for (int m = 0; m < M; ++m) grad_bias->data[m] += grad_out.data[m];
  }
  if (grad_weights) {
    require_same_shape(*grad_weights, weights, "linear_backward: grad_weights");
    for (int m = 0; m < M; ++m) {
      const T g = grad_out.data[m];
      T* grow = grad_weights->ptr() + static_cast<std::size_t>(m) * N;
      for (int n = 0; n < N; ++n) grow[n] += g * input.data[n];
    }
  }
  if (grad_input) {
    require(grad_input->numel() == static_cast<std::size_t>(N),
            "linear_backward: grad_input shape mismatch");
    for (int m = 0; m < M; ++m) {
      const T g = grad_out.data[m];
      const T* wrow = weights.ptr() + static_cast<std::size_t>(m) * N;
      for (int n = 0; n < N; ++n) grad_input->data[n] += g * wrow[n];
    }
  }
}

template <typename T>
Tensor<T> residual_add(const Tensor<T>& a, const Tensor<T>& b) {
  require_same_shape(a, b, "residual_add");
  Tensor<T> y(a.shape);
  for (std::size_t i = 0; i < a.numel(); ++i) y.data[i] = a.data[i] + b.data[i];
  return y;
}

template <typename T>
Tensor<T> softmax(const Tensor<T>& logits) {
  Tensor<T> p(logits.shape);
  T m = logits.data[0];
  for (T v : logits.data) m = std::max(m, v);
  T sum = T(0);
  for (std::size_t i = 0; i < logits.numel(); ++i) {
    p.data[i] = std::exp(logits.data[i] - m);
    sum += p.data[i];
  }
  for (auto& v : p.data) v /= sum;
  return p;
}

/// Cross-entropy of the softmax against a single class index, in the
/// max-shifted log-sum-exp form. Returns the loss and d(loss)/d(logits).
template <typename T>
std::pair<T, Tensor<T>> softmax_cross_entropy(const Tensor<T>& logits,
                                              int class_index) {
  const int n = static_cast<int>(logits.numel());
  require(n > 0, "softmax_cross_entropy: empty logits");
  require(class_index >= 0 && class_index < n,
          "softmax_cross_entropy: class index " + std::to_string(class_index) +
              " out of range [0," + std::to_string(n) + ")");
  T m = logits.data[0];
  for (T v : logits.data) m = std::max(m, v);
  T sum = T(0);
  for (T v : logits.data) sum += std::exp(v - m);
  const T lse = m + std::log(sum);
  const T loss = lse - logits.data[static_cast<std::size_t>(class_index)];

  Tensor<T> grad(logits.shape);
  for (int i = 0; i < n; ++i)
    grad.data[i] = std::exp(logits.data[i] - lse) - (i == class_index ? T(1) : T(0));
  return {loss, std::move(grad)};
}

/// Index of the largest entry; ties break to the lowest index.
template <typename T>
int argmax(const Tensor<T>& v) {
  require(v.numel() > 0, "argmax: empty tensor");
  int best = 0;
  for (int i = 1; i < static_cast<int>(v.numel()); ++i)
    if (v.data[i] > v.data[best]) best = i;
  return best;
}

}  // namespace locadv

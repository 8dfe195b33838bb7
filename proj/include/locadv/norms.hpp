#pragma once

#include <algorithm>
#include <cmath>

#include "locadv/tensor.hpp"

namespace locadv {

/// Fraction of spatial locations (i,j) where any channel differs. Divides
/// by N², not C·N²: a location counts once no matter how many channels
/// changed. Inequality is exact; both images live on the 1/255 grid.
template <typename T>
double l0(const Tensor<T>& a, const Tensor<T>& b) {
  require_same_shape(a, b, "l0");
  require(a.shape.size() == 3 && a.dim(1) == a.dim(2),
          "l0: inputs must be C×N×N, got " + shape_str(a.shape));
  const int c = a.dim(0), n = a.dim(1);
  std::size_t changed = 0;
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) {
      for (int ch = 0; ch < c; ++ch)
        if (a.at3(ch, i, j) != b.at3(ch, i, j)) {
          ++changed;
          break;
        }
    }
  return static_cast<double>(changed) / (static_cast<double>(n) * n);
}

/// Euclidean norm of the difference over all entries.
template <typename T>
double l2(const Tensor<T>& a, const Tensor<T>& b) {
  require_same_shape(a, b, "l2");
  double acc = 0.0;
  for (std::size_t i = 0; i < a.numel(); ++i) {
    const double d = static_cast<double>(a.data[i]) - static_cast<double>(b.data[i]);
    acc += d * d;
  }
  return std::sqrt(acc);
}

/// Maximum absolute elementwise difference. A value of 1 is a full
/// black-to-white pixel flip.
template <typename T>
double linf(const Tensor<T>& a, const Tensor<T>& b) {
  require_same_shape(a, b, "linf");
  double m = 0.0;
  for (std::size_t i = 0; i < a.numel(); ++i)
    m = std::max(m, std::abs(static_cast<double>(a.data[i]) -
                             static_cast<double>(b.data[i])));
  return m;
}

struct NormTriple {
  double l0 = 0.0;
  double l2 = 0.0;
  double linf = 0.0;
};

template <typename T>
NormTriple norm_triple(const Tensor<T>& a, const Tensor<T>& b) {
  return {l0(a, b), l2(a, b), linf(a, b)};
}

}  // namespace locadv

#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <sstream>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace locadv {

[[noreturn]] inline void fail(const std::string& msg) {
  throw std::invalid_argument(msg);
}

inline void require(bool cond, const std::string& msg) {
  if (!cond) fail(msg);
}

inline std::string shape_str(const std::vector<int>& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << 'x';
    os << shape[i];
  }
  os << ']';
  return os.str();
}

/// Dense row-major numeric array with shape metadata. Carries activations
/// and gradients alike. The scalar type selects the precision mode: float
/// for training/attack throughput, double for gradient verification.
template <typename T>
struct Tensor {
  std::vector<int> shape;
  std::vector<T> data;

  Tensor() = default;

  explicit Tensor(std::vector<int> s, T fill = T(0)) : shape(std::move(s)) {
    data.assign(numel_of(shape), fill);
  }

  Tensor(std::vector<int> s, std::vector<T> d)
      : shape(std::move(s)), data(std::move(d)) {
    require(data.size() == numel_of(shape),
            "tensor: data length " + std::to_string(data.size()) +
                " does not match shape " + shape_str(shape));
  }

  static std::size_t numel_of(const std::vector<int>& s) {
    std::size_t n = 1;
    for (int e : s) {
      require(e >= 0, "tensor: negative extent in shape " + shape_str(s));
      n *= static_cast<std::size_t>(e);
    }
    return n;
  }

  std::size_t numel() const { return data.size(); }
  int dim(int i) const { return shape[static_cast<std::size_t>(i)]; }

  T* ptr() { return data.data(); }
  const T* ptr() const { return data.data(); }

  // C×H×W access
  T& at3(int c, int h, int w) {
    return data[(static_cast<std::size_t>(c) * dim(1) + h) * dim(2) + w];
  }
  const T& at3(int c, int h, int w) const {
    return data[(static_cast<std::size_t>(c) * dim(1) + h) * dim(2) + w];
  }

  bool all_finite() const {
    for (T v : data)
      if (!std::isfinite(static_cast<double>(v))) return false;
    return true;
  }

  bool same_shape(const Tensor& other) const { return shape == other.shape; }

  friend bool operator==(const Tensor& a, const Tensor& b) {
    return a.shape == b.shape && a.data == b.data;
  }
};

template <typename T>
void require_same_shape(const Tensor<T>& a, const Tensor<T>& b,
                        const std::string& where) {
  require(a.shape == b.shape, where + ": shape mismatch " + shape_str(a.shape) +
                                  " vs " + shape_str(b.shape));
}

template <typename T>
T sign(T v) {
  if (v > T(0)) return T(1);
  if (v < T(0)) return T(-1);
  return T(0);
}

template <typename T>
T clip01(T v) {
  if (v < T(0)) return T(0);
  if (v > T(1)) return T(1);
  return v;
}

/// Deterministic RNG used wherever a seed appears. mt19937_64 output is
/// pinned by the standard, so streams are identical across platforms; the
/// derived draws below avoid std distributions, whose sequences are not.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : gen_(seed) {}

  std::uint64_t next_u64() { return gen_(); }

  /// Uniform in [0,1) with 53 random bits.
  double uniform() {
    return static_cast<double>(gen_() >> 11) * 0x1.0p-53;
  }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  /// Uniform integer in [0, n). n must be positive.
  std::uint64_t below(std::uint64_t n) { return gen_() % n; }

  /// Fisher-Yates shuffle; portable unlike std::shuffle.
  template <typename V>
  void shuffle(V& v) {
    for (std::size_t i = v.size(); i > 1; --i)
      std::swap(v[i - 1], v[static_cast<std::size_t>(below(i))]);
  }

 private:
  std::mt19937_64 gen_;
};

/// Splitmix64-style mixer for deriving independent per-item seeds from a
/// master seed, so items can be generated in any order.
inline std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t item) {
  std::uint64_t z = seed + 0x9E3779B97F4A7C15ull * (item + 1);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
  return z ^ (z >> 31);
}

}  // namespace locadv

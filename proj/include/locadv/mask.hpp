#pragma once

#include <cmath>
#include <cstdint>
#include <limits>
#include <numeric>
#include <string>
#include <vector>

#include "locadv/tensor.hpp"

namespace locadv {

enum class MaskFamily { Center, Frame, Random, Full };

inline const char* to_string(MaskFamily f) {
  switch (f) {
    case MaskFamily::Center: return "center";
    case MaskFamily::Frame: return "frame";
    case MaskFamily::Random: return "random";
    case MaskFamily::Full: return "full";
  }
  return "?";
}

inline MaskFamily mask_family_from_string(const std::string& s) {
  if (s == "center") return MaskFamily::Center;
  if (s == "frame") return MaskFamily::Frame;
  if (s == "random") return MaskFamily::Random;
  if (s == "full") return MaskFamily::Full;
  fail("unknown mask family '" + s + "' (expected center|frame|random|full)");
}

struct MaskSpec {
  MaskFamily family = MaskFamily::Full;
  double target_fraction = 1.0;
  std::uint64_t seed = 0;  // Random only
  int grid = 0;            // N for N×N masks
};

/// Binary N×N spatial grid restricting where perturbation may be applied.
/// Broadcast across channels when applied to a C×N×N image.
struct LocalizationMask {
  int grid = 0;
  std::vector<std::uint8_t> cells;  // row-major, values 0/1
  double realized_fraction = 0.0;
  MaskSpec spec;

  std::uint8_t at(int i, int j) const {
    return cells[static_cast<std::size_t>(i) * grid + j];
  }

  std::size_t count_ones() const {
    return static_cast<std::size_t>(
        std::accumulate(cells.begin(), cells.end(), std::size_t{0}));
  }
};

namespace detail {

inline LocalizationMask finish_mask(int n, std::vector<std::uint8_t> cells,
                                    MaskSpec spec) {
  LocalizationMask m;
  m.grid = n;
  m.cells = std::move(cells);
  m.spec = spec;
  std::size_t ones = 0;
  for (auto v : m.cells) ones += v;
  m.realized_fraction =
      static_cast<double>(ones) / (static_cast<double>(n) * n);
  return m;
}

inline double frame_fraction(int n, int w) {
  const double inner = static_cast<double>(n - w) / n;
  return 1.0 - inner * inner;
}

}  // namespace detail

/// Integer geometric parameter for a family at a requested fraction:
/// the square side for Center, the total frame width for Frame, and the
/// selected-cell count for Random.
inline int solve_geometry(MaskFamily family, int n, double fraction) {
  require(n >= 1, "solve_geometry: grid must be >= 1");
  switch (family) {
    case MaskFamily::Center: {
      require(fraction > 0.0 && fraction <= 1.0,
              "center mask: fraction must be in (0,1]");
      return static_cast<int>(std::lround(n * std::sqrt(fraction)));
    }
    case MaskFamily::Frame: {
      require(fraction > 0.0 && fraction <= 1.0,
              "frame mask: fraction must be in (0,1]");
      int best_w = 1;
      double best_err = std::numeric_limits<double>::infinity();
      for (int w = 1; w <= n; ++w) {
        const double err = std::abs(detail::frame_fraction(n, w) - fraction);
        if (err < best_err) {
          best_err = err;
          best_w = w;
        }
      }
      require(best_err <= 1.0 / n, "frame mask: fraction " +
                                       std::to_string(fraction) +
                                       " unreachable on a " + std::to_string(n) +
                                       "-cell grid");
      return best_w;
    }
    case MaskFamily::Random: {
      require(fraction > 0.0 && fraction <= 1.0,
              "random mask: fraction must be in (0,1]");
      return static_cast<int>(
          std::lround(fraction * static_cast<double>(n) * n));
    }
    case MaskFamily::Full:
      return n;
  }
  fail("solve_geometry: bad family");
}

/// Square block of side round(N*sqrt(fraction)) centered on the grid
/// (offset floor((N-s)/2)).
inline LocalizationMask center_square(int n, double fraction) {
  const int s = solve_geometry(MaskFamily::Center, n, fraction);
  const int off = (n - s) / 2;
  std::vector<std::uint8_t> cells(static_cast<std::size_t>(n) * n, 0);
  for (int i = off; i < off + s; ++i)
    for (int j = off; j < off + s; ++j)
      cells[static_cast<std::size_t>(i) * n + j] = 1;
  return detail::finish_mask(n, std::move(cells),
                             {MaskFamily::Center, fraction, 0, n});
}

/// Border of total width w: the untouched interior is the (N-w)×(N-w)
/// square, with the thicker half of an odd split on the top/left side.
inline LocalizationMask frame(int n, double fraction) {
  const int w = solve_geometry(MaskFamily::Frame, n, fraction);
  const int lead = (w + 1) / 2;   // top and left border thickness
  const int trail = w / 2;        // bottom and right
  std::vector<std::uint8_t> cells(static_cast<std::size_t>(n) * n, 1);
  for (int i = lead; i < n - trail; ++i)
    for (int j = lead; j < n - trail; ++j)
      cells[static_cast<std::size_t>(i) * n + j] = 0;
  return detail::finish_mask(n, std::move(cells),
                             {MaskFamily::Frame, fraction, 0, n});
}

/// Exactly round(fraction*N²) distinct cells, sampled without replacement.
inline LocalizationMask random_pixels(int n, double fraction, std::uint64_t seed) {
  const int k = solve_geometry(MaskFamily::Random, n, fraction);
  std::vector<int> idx(static_cast<std::size_t>(n) * n);
  std::iota(idx.begin(), idx.end(), 0);
  Rng rng(seed);
  for (int i = 0; i < k; ++i) {
    const std::size_t j =
        static_cast<std::size_t>(i) + rng.below(idx.size() - static_cast<std::size_t>(i));
    std::swap(idx[static_cast<std::size_t>(i)], idx[j]);
  }
  std::vector<std::uint8_t> cells(static_cast<std::size_t>(n) * n, 0);
  for (int i = 0; i < k; ++i) cells[static_cast<std::size_t>(idx[i])] = 1;
  return detail::finish_mask(n, std::move(cells),
                             {MaskFamily::Random, fraction, seed, n});
}

inline LocalizationMask all_ones_mask(int n) {
  std::vector<std::uint8_t> cells(static_cast<std::size_t>(n) * n, 1);
  return detail::finish_mask(n, std::move(cells), {MaskFamily::Full, 1.0, 0, n});
}

inline LocalizationMask make_mask(const MaskSpec& spec) {
  switch (spec.family) {
    case MaskFamily::Center: return center_square(spec.grid, spec.target_fraction);
    case MaskFamily::Frame: return frame(spec.grid, spec.target_fraction);
    case MaskFamily::Random:
      return random_pixels(spec.grid, spec.target_fraction, spec.seed);
    case MaskFamily::Full: return all_ones_mask(spec.grid);
  }
  fail("make_mask: bad family");
}

}  // namespace locadv

#include <gtest/gtest.h>

#include <chrono>

#include "locadv/norms.hpp"
#include "oracles.hpp"

using locadv::Rng;
using locadv::Tensor;

namespace {

// random pair of 3×4×4 tensors on the 1/255 grid differing at a few entries
std::pair<Tensor<float>, Tensor<float>> random_grid_pair(Rng& rng) {
  Tensor<float> a({3, 4, 4});
  for (auto& v : a.data) v = static_cast<float>(rng.below(256)) / 255.0f;
  Tensor<float> b = a;
  const int changes = static_cast<int>(rng.below(20));
  for (int k = 0; k < changes; ++k) {
    const std::size_t i = rng.below(b.numel());
    b.data[i] = static_cast<float>(rng.below(256)) / 255.0f;
  }
  return {std::move(a), std::move(b)};
}

}  // namespace

TEST(L0, IdentityAndSingleLocation) {
  Tensor<float> x({3, 32, 32}, 0.5f);
  EXPECT_EQ(locadv::l0(x, x), 0.0);

  Tensor<float> y = x;
  y.at3(1, 7, 9) = 0.6f;  // one channel at one location
  EXPECT_DOUBLE_EQ(locadv::l0(x, y), 1.0 / 1024.0);

  // more channels at the same location still count once
  y.at3(0, 7, 9) = 0.7f;
  y.at3(2, 7, 9) = 0.8f;
  EXPECT_DOUBLE_EQ(locadv::l0(x, y), 1.0 / 1024.0);
}

TEST(L2, IdentityAndSingleCoordinate) {
  Tensor<float> x({3, 8, 8}, 0.25f);
  EXPECT_EQ(locadv::l2(x, x), 0.0);
  Tensor<float> y = x;
  y.at3(2, 3, 3) = 0.85f;
  EXPECT_NEAR(locadv::l2(x, y), 0.6, 1e-7);
}

TEST(Linf, FullFlipIsOne) {
  Tensor<float> x({3, 8, 8}, 0.0f);
  Tensor<float> y = x;
  y.at3(0, 5, 5) = 1.0f;  // black-to-white flip
  EXPECT_DOUBLE_EQ(locadv::linf(x, y), 1.0);
  EXPECT_DOUBLE_EQ(locadv::linf(x, x), 0.0);
}

TEST(Norms, RejectShapeMismatch) {
  Tensor<float> a({3, 4, 4}), b({3, 4, 5}), c({3, 4, 5});
  EXPECT_THROW(locadv::l0(a, b), std::invalid_argument);
  EXPECT_THROW(locadv::l2(a, b), std::invalid_argument);
  EXPECT_THROW(locadv::linf(a, b), std::invalid_argument);
  EXPECT_THROW(locadv::l0(b, c), std::invalid_argument);  // non-square
}

TEST(Norms, MatchBruteForceOnThousandRandomPairs) {
  const auto start = std::chrono::steady_clock::now();
  Rng rng(29);
  for (int trial = 0; trial < 1000; ++trial) {
    const auto [a, b] = random_grid_pair(rng);
    EXPECT_EQ(locadv::l0(a, b), oracles::brute_l0(a, b));
    EXPECT_EQ(locadv::linf(a, b), oracles::brute_linf(a, b));
    EXPECT_NEAR(locadv::l2(a, b), oracles::brute_l2(a, b), 1e-12);
  }
  const auto elapsed = std::chrono::steady_clock::now() - start;
  EXPECT_LT(std::chrono::duration_cast<std::chrono::seconds>(elapsed).count(), 10);
}

TEST(Norms, SymmetryAndBounds) {
  Rng rng(31);
  for (int trial = 0; trial < 200; ++trial) {
    const auto [a, b] = random_grid_pair(rng);
    EXPECT_EQ(locadv::l0(a, b), locadv::l0(b, a));
    EXPECT_EQ(locadv::l2(a, b), locadv::l2(b, a));
    EXPECT_EQ(locadv::linf(a, b), locadv::linf(b, a));

    const double v0 = locadv::l0(a, b);
    const double vinf = locadv::linf(a, b);
    EXPECT_GE(v0, 0.0);
    EXPECT_LE(v0, 1.0);
    EXPECT_GE(vinf, 0.0);
    EXPECT_LE(vinf, 1.0);
    EXPECT_LE(locadv::l2(a, b),
              std::sqrt(static_cast<double>(a.numel())) * vinf + 1e-12);
  }
}

TEST(Norms, ZeroTogetherOnQuantizedInputs) {
  Rng rng(37);
  for (int trial = 0; trial < 200; ++trial) {
    const auto [a, b] = random_grid_pair(rng);
    const auto t = locadv::norm_triple(a, b);
    const bool z0 = t.l0 == 0.0, z2 = t.l2 == 0.0, zi = t.linf == 0.0;
    EXPECT_EQ(z0, z2);
    EXPECT_EQ(z2, zi);
  }
}

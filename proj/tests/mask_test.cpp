#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>

#include "locadv/mask.hpp"
#include "locadv/netpbm.hpp"

using locadv::LocalizationMask;
using locadv::MaskFamily;
using locadv::Rng;

namespace {

double recount(const LocalizationMask& m) {
  std::size_t ones = 0;
  for (int i = 0; i < m.grid; ++i)
    for (int j = 0; j < m.grid; ++j) {
      EXPECT_TRUE(m.at(i, j) == 0 || m.at(i, j) == 1);
      ones += m.at(i, j);
    }
  return static_cast<double>(ones) / (static_cast<double>(m.grid) * m.grid);
}

}  // namespace

TEST(CenterSquare, ReferenceGeometryAt224) {
  // side 90 -> 16.1%, side 120 -> 28.7%, side 150 -> 44.8%
  const auto m90 = locadv::center_square(224, 0.161);
  EXPECT_EQ(locadv::solve_geometry(MaskFamily::Center, 224, 0.161), 90);
  EXPECT_NEAR(m90.realized_fraction, 8100.0 / 50176.0, 1e-12);
  EXPECT_NEAR(m90.realized_fraction, 0.161, 0.001);

  const auto m120 = locadv::center_square(224, 0.286);
  EXPECT_EQ(locadv::solve_geometry(MaskFamily::Center, 224, 0.286), 120);
  EXPECT_NEAR(m120.realized_fraction, 14400.0 / 50176.0, 1e-12);

  const auto m150 = locadv::center_square(224, 0.448);
  EXPECT_EQ(locadv::solve_geometry(MaskFamily::Center, 224, 0.448), 150);
  EXPECT_NEAR(m150.realized_fraction, 22500.0 / 50176.0, 1e-12);
}

TEST(CenterSquare, FullCoverageAndQuarterArea) {
  const auto full = locadv::center_square(32, 1.0);
  EXPECT_EQ(full.count_ones(), 1024u);
  EXPECT_EQ(full.realized_fraction, 1.0);

  EXPECT_EQ(locadv::solve_geometry(MaskFamily::Center, 32, 0.25), 16);
  const auto quarter = locadv::center_square(32, 0.25);
  EXPECT_EQ(quarter.count_ones(), 256u);
  // centered: offset floor((32-16)/2) = 8
  EXPECT_EQ(quarter.at(8, 8), 1);
  EXPECT_EQ(quarter.at(7, 8), 0);
  EXPECT_EQ(quarter.at(23, 23), 1);
  EXPECT_EQ(quarter.at(24, 23), 0);
}

TEST(CenterSquare, RejectsBadFraction) {
  EXPECT_THROW(locadv::center_square(32, 0.0), std::invalid_argument);
  EXPECT_THROW(locadv::center_square(32, 1.5), std::invalid_argument);
}

TEST(Frame, ReferenceWidthsAt224) {
  // total width 20/34/58 -> 17.0%/28.0%/45.0% under the inner-side rule
  EXPECT_EQ(locadv::solve_geometry(MaskFamily::Frame, 224, 0.17), 20);
  EXPECT_EQ(locadv::solve_geometry(MaskFamily::Frame, 224, 0.28), 34);
  EXPECT_EQ(locadv::solve_geometry(MaskFamily::Frame, 224, 0.45), 58);

  const auto f20 = locadv::frame(224, 0.17);
  EXPECT_NEAR(f20.realized_fraction, 1.0 - (204.0 * 204.0) / 50176.0, 1e-12);
  EXPECT_EQ(f20.count_ones(), 50176u - 204u * 204u);  // 8560 border cells
  EXPECT_NEAR(f20.realized_fraction, 0.170, 0.001);

  const auto f34 = locadv::frame(224, 0.28);
  EXPECT_NEAR(f34.realized_fraction, 1.0 - (190.0 * 190.0) / 50176.0, 1e-12);
  EXPECT_NEAR(f34.realized_fraction, 0.2805, 0.0005);

  const auto f58 = locadv::frame(224, 0.45);
  EXPECT_NEAR(f58.realized_fraction, 1.0 - (166.0 * 166.0) / 50176.0, 1e-12);
  EXPECT_NEAR(f58.realized_fraction, 0.4508, 0.0005);
}

TEST(Frame, OddWidthSplitsThickerTopLeft) {
  // width 5 on a 9 grid: top/left border 3, bottom/right 2
  const auto m = locadv::frame(9, 1.0 - (4.0 * 4.0) / 81.0);
  EXPECT_EQ(locadv::solve_geometry(MaskFamily::Frame, 9, 1.0 - 16.0 / 81.0), 5);
  EXPECT_EQ(m.at(2, 4), 1);  // row 2 still border
  EXPECT_EQ(m.at(3, 3), 0);  // interior starts at (3,3)
  EXPECT_EQ(m.at(6, 6), 0);  // interior ends at (6,6)
  EXPECT_EQ(m.at(7, 4), 1);
  EXPECT_EQ(m.count_ones(), 81u - 16u);
}

TEST(Frame, FullWidthIsAllOnes) {
  const auto m = locadv::frame(16, 1.0);
  EXPECT_EQ(m.count_ones(), 256u);
  EXPECT_EQ(m.realized_fraction, 1.0);
}

TEST(Frame, UnreachableFractionRejected) {
  // a 2×2 grid can only realize 3/4 (w=1) or 1 (w=2)
  EXPECT_THROW(locadv::frame(2, 0.17), std::invalid_argument);
}

TEST(RandomPixels, ExactCountAndDeterminism) {
  const auto m = locadv::random_pixels(224, 0.17, 7);
  EXPECT_EQ(m.count_ones(), 8530u);  // round(0.17 * 50176)
  EXPECT_NEAR(m.realized_fraction, 0.17, 1e-4);

  const auto again = locadv::random_pixels(224, 0.17, 7);
  EXPECT_EQ(m.cells, again.cells);
  const auto other = locadv::random_pixels(224, 0.17, 8);
  EXPECT_NE(m.cells, other.cells);

  const auto full = locadv::random_pixels(16, 1.0, 3);
  EXPECT_EQ(full.count_ones(), 256u);
}

TEST(SolveGeometry, RandomCountsAndVerifiedPairings) {
  EXPECT_EQ(locadv::solve_geometry(MaskFamily::Random, 224, 0.17), 8530);
  EXPECT_EQ(locadv::solve_geometry(MaskFamily::Random, 224, 0.28), 14049);
  EXPECT_EQ(locadv::solve_geometry(MaskFamily::Random, 224, 0.45), 22579);
}

TEST(MaskProperties, RealizedFractionMatchesRecount) {
  Rng rng(17);
  for (int trial = 0; trial < 60; ++trial) {
    const int n = 16 + static_cast<int>(rng.below(240));
    const double f = rng.uniform(0.1, 0.9);
    LocalizationMask m;
    switch (trial % 3) {
      case 0: m = locadv::center_square(n, f); break;
      case 1: m = locadv::frame(n, f); break;
      default: m = locadv::random_pixels(n, f, rng.next_u64()); break;
    }
    EXPECT_DOUBLE_EQ(m.realized_fraction, recount(m));
  }
}

TEST(MaskProperties, RealizedWithinRoundingBoundOfRequest) {
  Rng rng(18);
  for (int trial = 0; trial < 90; ++trial) {
    const int n = 32 + static_cast<int>(rng.below(224));
    const double f = rng.uniform(0.1, 0.9);
    const double bound = 1.0 / n;
    switch (trial % 3) {
      case 0:
        EXPECT_LE(std::abs(locadv::center_square(n, f).realized_fraction - f), bound);
        break;
      case 1:
        EXPECT_LE(std::abs(locadv::frame(n, f).realized_fraction - f), bound);
        break;
      default:
        EXPECT_LE(std::abs(locadv::random_pixels(n, f, 1).realized_fraction - f),
                  1.0 / (2.0 * n * n));
        break;
    }
  }
}

TEST(MaskProperties, CenterAndFrameDisjointOnReferenceConfigurations) {
  const double center_fracs[] = {0.161, 0.286, 0.448};
  const double frame_fracs[] = {0.17, 0.28, 0.45};
  for (int i = 0; i < 3; ++i) {
    const auto c = locadv::center_square(224, center_fracs[i]);
    const auto f = locadv::frame(224, frame_fracs[i]);
    for (int y = 0; y < 224; ++y)
      for (int x = 0; x < 224; ++x)
        ASSERT_FALSE(c.at(y, x) == 1 && f.at(y, x) == 1)
            << "overlap at " << y << "," << x << " config " << i;
  }
}

TEST(MaskExport, PgmBytes) {
  namespace fs = std::filesystem;
  const auto dir = fs::temp_directory_path() / "locadv_mask_test";
  fs::create_directories(dir);
  const auto path = dir / "mask.pgm";

  const auto m = locadv::center_square(4, 0.25);  // side 2 at offset 1
  locadv::write_pgm(m, path.string());

  std::ifstream is(path, std::ios::binary);
  std::string contents{std::istreambuf_iterator<char>(is),
                       std::istreambuf_iterator<char>()};
  const std::string header = "P5\n4 4\n255\n";
  ASSERT_EQ(contents.substr(0, header.size()), header);
  const std::string body = contents.substr(header.size());
  ASSERT_EQ(body.size(), 16u);
  for (int i = 0; i < 4; ++i)
    for (int j = 0; j < 4; ++j) {
      const bool inside = (i == 1 || i == 2) && (j == 1 || j == 2);
      EXPECT_EQ(static_cast<unsigned char>(body[static_cast<std::size_t>(i * 4 + j)]),
                inside ? 255 : 0);
    }
}

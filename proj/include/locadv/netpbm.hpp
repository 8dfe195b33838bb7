#pragma once

#include <cmath>
#include <fstream>
#include <string>

#include "locadv/mask.hpp"
#include "locadv/tensor.hpp"

namespace locadv {

/// Writes a 3×H×W image on the 1/255 grid as binary PPM (P6). Refuses
/// values off the grid so emitted adversarial images are exact.
inline void write_ppm(const Tensor<float>& img, const std::string& path) {
  require(img.shape.size() == 3 && img.dim(0) == 3,
          "write_ppm: image must be 3×H×W, got " + shape_str(img.shape));
  const int h = img.dim(1), w = img.dim(2);
  std::ofstream os(path, std::ios::binary);
  require(os.good(), "write_ppm: cannot open '" + path + "'");
  os << "P6\n" << w << ' ' << h << "\n255\n";
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x)
      for (int c = 0; c < 3; ++c) {
        const float v = img.at3(c, y, x);
        const double scaled = static_cast<double>(v) * 255.0;
        const long level = std::lround(scaled);
        require(level >= 0 && level <= 255 &&
                    std::abs(scaled - static_cast<double>(level)) < 1e-3,
                "write_ppm: pixel value " + std::to_string(v) +
                    " is not on the 1/255 grid");
        os.put(static_cast<char>(level));
      }
  require(os.good(), "write_ppm: write failed for '" + path + "'");
}

/// Writes a mask as binary PGM (P5): selected cells white, the rest black.
inline void write_pgm(const LocalizationMask& mask, const std::string& path) {
  std::ofstream os(path, std::ios::binary);
  require(os.good(), "write_pgm: cannot open '" + path + "'");
  os << "P5\n" << mask.grid << ' ' << mask.grid << "\n255\n";
  for (int i = 0; i < mask.grid; ++i)
    for (int j = 0; j < mask.grid; ++j)
      os.put(mask.at(i, j) ? static_cast<char>(255) : static_cast<char>(0));
  require(os.good(), "write_pgm: write failed for '" + path + "'");
}

}  // namespace locadv

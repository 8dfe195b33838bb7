#pragma once

#include <algorithm>
#include <cstdint>
#include <fstream>
#include <numeric>
#include <string>
#include <vector>

#include "locadv/model.hpp"
#include "locadv/tensor.hpp"

namespace locadv {

inline constexpr int kImageSize = 32;
inline constexpr int kChannels = 3;
inline constexpr int kNumClasses = 10;
inline constexpr std::size_t kPixelBytes =
    static_cast<std::size_t>(kChannels) * kImageSize * kImageSize;  // 3072
inline constexpr std::size_t kRecordBytes = kPixelBytes + 1;        // 3073

/// Images are 3×32×32 float tensors with every value on the 1/255 grid,
/// labels in [0, 10). Immutable after construction.
struct LabelledDataset {
  std::vector<Tensor<float>> images;
  std::vector<int> labels;
  std::string split;

  std::size_t size() const { return images.size(); }
};

namespace detail {

inline Tensor<float> image_from_bytes(const unsigned char* px) {
  Tensor<float> img({kChannels, kImageSize, kImageSize});
  for (std::size_t i = 0; i < kPixelBytes; ++i)
    img.data[i] = static_cast<float>(px[i]) / 255.0f;
  return img;
}

inline void image_to_bytes(const Tensor<float>& img, unsigned char* px) {
  for (std::size_t i = 0; i < kPixelBytes; ++i) {
    const float v = img.data[i];
    px[i] = static_cast<unsigned char>(std::lround(v * 255.0f));
  }
}

}  // namespace detail

/// Reads a file of 3073-byte records: one label byte, then 3072 pixel bytes
/// in channel-major R,G,B planes. Pixels are scaled into [0,1].
inline LabelledDataset load_cifar_binary(const std::string& path,
                                         const std::string& split = "train") {
  std::ifstream is(path, std::ios::binary);
  require(is.good(), "dataset: cannot open '" + path + "'");
  std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(is)),
                                   std::istreambuf_iterator<char>());
  require(bytes.size() % kRecordBytes == 0,
          "dataset: '" + path + "' has " + std::to_string(bytes.size()) +
              " bytes, not a multiple of 3073 (truncated record)");
  const std::size_t n = bytes.size() / kRecordBytes;
  LabelledDataset ds;
  ds.split = split;
  ds.images.reserve(n);
  ds.labels.reserve(n);
  for (std::size_t r = 0; r < n; ++r) {
    const unsigned char* rec = bytes.data() + r * kRecordBytes;
    const int label = rec[0];
    require(label < kNumClasses, "dataset: record " + std::to_string(r) +
                                     " has label byte " + std::to_string(label) +
                                     " out of range [0,10)");
    ds.labels.push_back(label);
    ds.images.push_back(detail::image_from_bytes(rec + 1));
  }
  return ds;
}

/// Inverse of load_cifar_binary; loading then saving reproduces the input
/// file byte for byte.
inline void save_cifar_binary(const LabelledDataset& ds, const std::string& path) {
  std::ofstream os(path, std::ios::binary);
  require(os.good(), "dataset: cannot open '" + path + "' for writing");
  std::vector<unsigned char> rec(kRecordBytes);
  for (std::size_t i = 0; i < ds.size(); ++i) {
    rec[0] = static_cast<unsigned char>(ds.labels[i]);
    detail::image_to_bytes(ds.images[i], rec.data() + 1);
    os.write(reinterpret_cast<const char*>(rec.data()),
             static_cast<std::streamsize>(rec.size()));
  }
  require(os.good(), "dataset: write failed for '" + path + "'");
}

namespace detail {

struct ByteCanvas {
  unsigned char px[kChannels][kImageSize][kImageSize];

  void set(int x, int y, const int rgb[3]) {
    if (x < 0 || y < 0 || x >= kImageSize || y >= kImageSize) return;
    for (int c = 0; c < kChannels; ++c)
      px[c][y][x] = static_cast<unsigned char>(rgb[c]);
  }
};

// One base color per class; shape and color together make the classes easy
// to separate so the small zoo models reach high accuracy in a few epochs.
inline constexpr int kPalette[kNumClasses][3] = {
    {230, 60, 60},    // 0 filled circle
    {60, 200, 60},    // 1 filled square
    {70, 90, 230},    // 2 triangle
    {230, 200, 50},   // 3 ring
    {200, 60, 200},   // 4 plus
    {50, 210, 210},   // 5 horizontal stripes
    {240, 140, 40},   // 6 vertical stripes
    {150, 90, 220},   // 7 diagonal band
    {235, 235, 235},  // 8 hollow frame
    {150, 85, 30},    // 9 checkerboard
};

inline void draw_shape(ByteCanvas& cv, int label, int cx, int cy, int s,
                       const int col[3]) {
  for (int y = cy - s; y <= cy + s; ++y)
    for (int x = cx - s; x <= cx + s; ++x) {
      const int dx = x - cx, dy = y - cy;
      bool on = false;
      switch (label) {
        case 0: on = dx * dx + dy * dy <= s * s; break;
        case 1: on = true; break;
        case 2: on = 2 * std::abs(dx) <= dy + s; break;
        case 3: {
          const int r2 = dx * dx + dy * dy;
          on = r2 <= s * s && r2 >= (s - 2) * (s - 2);
          break;
        }
        case 4: on = std::abs(dx) <= 2 || std::abs(dy) <= 2; break;
        case 5: on = ((dy + s) % 4) < 2; break;
        case 6: on = ((dx + s) % 4) < 2; break;
        case 7: on = std::abs(dx - dy) <= 2; break;
        case 8: on = std::max(std::abs(dx), std::abs(dy)) >= s - 1; break;
        case 9: on = (((dx + s) / 3) + ((dy + s) / 3)) % 2 == 0; break;
      }
      if (on) cv.set(x, y, col);
    }
}

}  // namespace detail

/// Ten procedural classes of colored geometric shapes at jittered positions
/// on noise backgrounds. Deterministic per (n, seed); labels cycle 0..9 so
/// classes are balanced within one image.
inline LabelledDataset generate_synthetic(int n, std::uint64_t seed,
                                          const std::string& split = "train") {
  require(n >= 10, "generate_synthetic: need n >= 10, got " + std::to_string(n));
  LabelledDataset ds;
  ds.split = split;
  ds.images.reserve(static_cast<std::size_t>(n));
  ds.labels.reserve(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) {
    const int label = i % kNumClasses;
    Rng rng(mix_seed(seed, static_cast<std::uint64_t>(i)));
    detail::ByteCanvas cv;
    for (int c = 0; c < kChannels; ++c)
      for (int y = 0; y < kImageSize; ++y)
        for (int x = 0; x < kImageSize; ++x)
          cv.px[c][y][x] = static_cast<unsigned char>(18 + rng.below(38));

    const int cx = kImageSize / 2 - 4 + static_cast<int>(rng.below(9));
    const int cy = kImageSize / 2 - 4 + static_cast<int>(rng.below(9));
    const int s = 6 + static_cast<int>(rng.below(4));
    int col[3];
    for (int c = 0; c < 3; ++c) {
      const int jitter = static_cast<int>(rng.below(41)) - 20;
      col[c] = std::clamp(detail::kPalette[label][c] + jitter, 13, 242);
    }
    detail::draw_shape(cv, label, cx, cy, s, col);

    ds.labels.push_back(label);
    ds.images.push_back(detail::image_from_bytes(&cv.px[0][0][0]));
  }
  return ds;
}

/// Indices of test images that every model classifies correctly.
template <typename T>
std::vector<int> clean_correct_indices(const LabelledDataset& data,
                                       const std::vector<const Model<T>*>& models) {
  std::vector<int> pool;
  for (std::size_t i = 0; i < data.size(); ++i) {
    bool ok = true;
    for (const auto* m : models)
      if (predict(*m, data.images[i]) != data.labels[i]) {
        ok = false;
        break;
      }
    if (ok) pool.push_back(static_cast<int>(i));
  }
  return pool;
}

/// Seeded sample (without replacement) of n indices from the clean-correct
/// pool. Every returned image is classified correctly by all models.
template <typename T>
std::vector<int> select_eval_indices(const LabelledDataset& data,
                                     const std::vector<const Model<T>*>& models,
                                     int n, std::uint64_t seed) {
  std::vector<int> pool = clean_correct_indices(data, models);
  require(static_cast<int>(pool.size()) >= n,
          "select_eval_images: clean-correct pool has " +
              std::to_string(pool.size()) + " images, need " + std::to_string(n));
  Rng rng(seed);
  for (int i = 0; i < n; ++i) {
    const std::size_t j =
        static_cast<std::size_t>(i) + rng.below(pool.size() - static_cast<std::size_t>(i));
    std::swap(pool[static_cast<std::size_t>(i)], pool[j]);
  }
  pool.resize(static_cast<std::size_t>(n));
  return pool;
}

template <typename T>
LabelledDataset select_eval_images(const LabelledDataset& data,
                                   const std::vector<const Model<T>*>& models,
                                   int n, std::uint64_t seed) {
  const std::vector<int> idx = select_eval_indices(data, models, n, seed);
  LabelledDataset out;
  out.split = "eval";
  for (int i : idx) {
    out.images.push_back(data.images[static_cast<std::size_t>(i)]);
    out.labels.push_back(data.labels[static_cast<std::size_t>(i)]);
  }
  return out;
}

}  // namespace locadv

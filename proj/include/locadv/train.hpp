#pragma once

#include <charconv>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <numeric>
#include <string>
#include <vector>

#include "locadv/dataset.hpp"
#include "locadv/model.hpp"
#include "locadv/parallel.hpp"
#include "locadv/tensor.hpp"

namespace locadv {

struct TrainConfig {
  int epochs = 10;
  int batch_size = 16;
  double learning_rate = 0.01;
  double momentum = 0.9;
  std::uint64_t seed = 1;
  int threads = 1;
};

struct EpochStats {
  int epoch = 0;
  double train_loss = 0.0;
  double test_accuracy = 0.0;
};

struct TrainLog {
  std::vector<EpochStats> epochs;

  void write_csv(const std::string& path) const {
    std::ofstream os(path);
    require(os.good(), "train log: cannot open '" + path + "'");
    os << "epoch,train_loss,test_accuracy\n";
    for (const auto& e : epochs)
      os << e.epoch << ',' << e.train_loss << ',' << e.test_accuracy << '\n';
  }
};

template <typename T>
double accuracy(const Model<T>& model, const LabelledDataset& data,
                int threads = 1) {
  if (data.size() == 0) return 0.0;
  std::vector<char> hits(data.size(), 0);
  parallel_for(static_cast<int>(data.size()), threads, [&](int i) {
    hits[static_cast<std::size_t>(i)] =
        predict(model, data.images[static_cast<std::size_t>(i)]) ==
        data.labels[static_cast<std::size_t>(i)];
  });
  const long total = std::accumulate(hits.begin(), hits.end(), 0L);
  return static_cast<double>(total) / static_cast<double>(data.size());
}

// Gradients of one batch are accumulated in a fixed number of chunks and
// reduced in chunk order, so the result is bitwise reproducible for any
// thread count.
inline constexpr int kGradChunks = 8;

/// Minibatch SGD with momentum on the softmax cross-entropy. Deterministic
/// per (data, config, seed); aborts if the loss stops being finite.
template <typename T>
TrainLog train(Model<T>& model, const LabelledDataset& train_data,
               const LabelledDataset& test_data, const TrainConfig& cfg) {
  require(train_data.size() > 0, "train: empty dataset");
  require(cfg.epochs > 0 && cfg.batch_size > 0, "train: epochs and batch size must be positive");
  require(cfg.learning_rate >= 0.0 && cfg.momentum >= 0.0,
          "train: learning rate and momentum must be non-negative");

  auto params = model.params();
  std::vector<Tensor<T>> velocity = model.zero_grads();
  std::vector<std::vector<Tensor<T>>> chunk_grads(kGradChunks);
  std::vector<double> chunk_loss(kGradChunks);
  for (auto& g : chunk_grads) g = model.zero_grads();

  std::vector<int> order(train_data.size());
  std::iota(order.begin(), order.end(), 0);
  Rng rng(cfg.seed);

  TrainLog log;
  const int n = static_cast<int>(train_data.size());
  for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
    rng.shuffle(order);
    double epoch_loss = 0.0;
    for (int start = 0; start < n; start += cfg.batch_size) {
      const int batch = std::min(cfg.batch_size, n - start);
      for (int ch = 0; ch < kGradChunks; ++ch) {
        chunk_loss[ch] = 0.0;
        for (auto& g : chunk_grads[ch])
          std::fill(g.data.begin(), g.data.end(), T(0));
      }
      parallel_for(kGradChunks, std::min(cfg.threads, kGradChunks), [&](int ch) {
        const int lo = batch * ch / kGradChunks;
        const int hi = batch * (ch + 1) / kGradChunks;
        Tape<T> tape;
        for (int b = lo; b < hi; ++b) {
          const int idx = order[static_cast<std::size_t>(start + b)];
          const auto& img = train_data.images[static_cast<std::size_t>(idx)];
          const Tensor<T> logits = model.forward(img, &tape);
          auto [loss, grad_logits] =
              softmax_cross_entropy(logits, train_data.labels[static_cast<std::size_t>(idx)]);
          chunk_loss[ch] += static_cast<double>(loss);
          model.backward(tape, grad_logits, &chunk_grads[ch]);
        }
      });

      double batch_loss = 0.0;
      for (int ch = 0; ch < kGradChunks; ++ch) batch_loss += chunk_loss[ch];
      require(std::isfinite(batch_loss),
              "train: loss diverged (NaN/Inf) at epoch " + std::to_string(epoch) +
                  ", batch starting at sample " + std::to_string(start));
      epoch_loss += batch_loss;

      const T scale = T(1) / static_cast<T>(batch);
      for (std::size_t p = 0; p < params.size(); ++p) {
        Tensor<T>& param = *params[p].tensor;
        Tensor<T>& vel = velocity[p];
        for (std::size_t i = 0; i < param.numel(); ++i) {
          T g = chunk_grads[0][p].data[i];
          for (int ch = 1; ch < kGradChunks; ++ch)
            g += chunk_grads[ch][p].data[i];
          g *= scale;
          vel.data[i] = static_cast<T>(cfg.momentum) * vel.data[i] -
                        static_cast<T>(cfg.learning_rate) * g;
          param.data[i] += vel.data[i];
        }
      }
    }

    EpochStats stats;
    stats.epoch = epoch;
    stats.train_loss = epoch_loss / n;
    stats.test_accuracy = accuracy(model, test_data, cfg.threads);
    log.epochs.push_back(stats);
  }
  return log;
}

}  // namespace locadv

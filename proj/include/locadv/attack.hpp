#pragma once

#include <cmath>
#include <cstdint>
#include <optional>
#include <variant>

#include "locadv/mask.hpp"
#include "locadv/model.hpp"
#include "locadv/norms.hpp"
#include "locadv/tensor.hpp"

namespace locadv {

/// Seeded uniform draw over the classes other than the current prediction.
struct RandomOtherClass {
  std::uint64_t seed = 0;
};

/// Attack toward a caller-chosen class.
struct FixedClass {
  int class_index = 0;
};

/// Attack toward the class with the smallest clean logit.
struct LeastLikely {};

using TargetStrategy = std::variant<RandomOtherClass, FixedClass, LeastLikely>;

/// Direction of the iterative update. The targeted attack descends the
/// target-class cross-entropy (default); Ascend applies the raw gradient
/// sign instead, which walks away from the target class.
enum class SignConvention { DescendTargetLoss, AscendTargetLoss };

struct AttackConfig {
  double alpha = 0.004;
  int max_iterations = 250;
  TargetStrategy strategy = RandomOtherClass{0};
  SignConvention sign_convention = SignConvention::DescendTargetLoss;
  std::optional<LocalizationMask> mask;  // absent = perturb everywhere
  bool stop_on_source_success = true;
  // Optional L∞ budget around the clean image; disabled by default — the
  // attack is otherwise constrained only by clipping and discretization.
  std::optional<double> linf_budget;
};

struct AttackOutcome {
  Tensor<float> adversarial;  // quantized to the 1/255 grid
  int iterations_used = 0;
  bool source_success = false;
  int target_class = 0;
  NormTriple norms;
};

/// Maps every value onto the 1/255 grid via round(v*255)/255 (halves round
/// up). Idempotent; values already on the grid are reproduced bitwise.
template <typename T>
Tensor<T> quantize(const Tensor<T>& x) {
  Tensor<T> q(x.shape);
  for (std::size_t i = 0; i < x.numel(); ++i) {
    const T v = x.data[i];
    require(v >= T(0) && v <= T(1),
            "quantize: value " + std::to_string(static_cast<double>(v)) +
                " outside [0,1]");
    q.data[i] = std::round(v * T(255)) / T(255);
  }
  return q;
}

/// One perturbation: alpha * sign(dJ/dX) for the cross-entropy loss of the
/// target class, with sign(0) = 0.
template <typename T>
Tensor<T> perturbation_step(const Model<T>& model, const Tensor<T>& x,
                            int target_class, double alpha) {
  Tensor<T> grad = input_gradient(model, x, target_class);
  Tensor<T> step(grad.shape);
  for (std::size_t i = 0; i < grad.numel(); ++i)
    step.data[i] = static_cast<T>(alpha) * sign(grad.data[i]);
  return step;
}

/// Picks the attack target class. RandomOtherClass and LeastLikely never
/// return the model's current prediction.
template <typename T>
int choose_target(const Model<T>& model, const Tensor<T>& x,
                  const TargetStrategy& strategy) {
  const Tensor<T> logits = forward_logits(model, x);
  const int pred = argmax(logits);
  return std::visit(
      [&](const auto& s) -> int {
        using S = std::decay_t<decltype(s)>;
        if constexpr (std::is_same_v<S, RandomOtherClass>) {
          Rng rng(s.seed);
          const int k = static_cast<int>(
              rng.below(static_cast<std::uint64_t>(model.num_classes - 1)));
          return k >= pred ? k + 1 : k;
        } else if constexpr (std::is_same_v<S, LeastLikely>) {
          int worst = 0;
          for (int i = 1; i < static_cast<int>(logits.numel()); ++i)
            if (logits.data[i] < logits.data[worst]) worst = i;
          require(worst != pred,
                  "choose_target: least-likely class equals the prediction "
                  "(degenerate logits)");
          return worst;
        } else {
          return s.class_index;
        }
      },
      strategy);
}

namespace detail {

template <typename T>
void validate_attack_input(const Model<T>& model, const Tensor<T>& x,
                           const AttackConfig& cfg) {
  require(x.shape == std::vector<int>(model.input_shape.begin(),
                                      model.input_shape.end()),
          "run_attack: input shape " + shape_str(x.shape) +
              " does not match model contract");
  for (T v : x.data)
    require(v >= T(0) && v <= T(1), "run_attack: input pixels must lie in [0,1]");
  require(cfg.alpha > 0.0, "run_attack: alpha must be positive");
  require(cfg.max_iterations >= 1, "run_attack: max_iterations must be >= 1");
  if (cfg.mask)
    require(cfg.mask->grid == x.dim(1) && x.dim(1) == x.dim(2),
            "run_attack: mask grid " + std::to_string(cfg.mask->grid) +
                " does not match image " + shape_str(x.shape));
  if (cfg.linf_budget)
    require(*cfg.linf_budget > 0.0, "run_attack: linf budget must be positive");
}

}  // namespace detail

/// The iterative sign-gradient attack with optional mask localization:
///   X_{n+1} = clip_[0,1](X_n ± alpha * sign(dJ_c/dX) ⊙ L)
/// Unmasked pixels are never written, so they stay bitwise equal to X.
/// The finished image is quantized to the 1/255 grid before norms and the
/// success flag are computed; inputs are expected on that grid already
/// (true for anything loaded or generated by the data pipeline).
template <typename T>
AttackOutcome run_attack(const Model<T>& model, const Tensor<T>& x,
                         const AttackConfig& cfg) {
  detail::validate_attack_input(model, x, cfg);

  const int target = choose_target(model, x, cfg.strategy);
  require(target >= 0 && target < model.num_classes,
          "run_attack: target class out of range");

  const T dir = cfg.sign_convention == SignConvention::DescendTargetLoss
                    ? T(-1)
                    : T(1);
  const T alpha = static_cast<T>(cfg.alpha);
  const int n_grid = x.dim(1);
  const int channels = x.dim(0);
  const std::size_t plane = static_cast<std::size_t>(n_grid) * n_grid;

  Tensor<T> cur = x;
  int iterations = 0;
  Tape<T> tape;
  for (int n = 0; n < cfg.max_iterations; ++n) {
    const Tensor<T> logits = model.forward(cur, &tape);
    if (cfg.stop_on_source_success && n > 0 && argmax(logits) == target) break;

    auto [loss, grad_logits] = softmax_cross_entropy(logits, target);
    require(std::isfinite(static_cast<double>(loss)),
            "run_attack: loss diverged (NaN/Inf) at iteration " +
                std::to_string(n));
    const Tensor<T> grad = model.backward(tape, grad_logits, nullptr);
    require(grad.all_finite(),
            "run_attack: gradient diverged (NaN/Inf) at iteration " +
                std::to_string(n));

    for (int i = 0; i < n_grid; ++i)
      for (int j = 0; j < n_grid; ++j) {
        if (cfg.mask && cfg.mask->at(i, j) == 0) continue;
        const std::size_t base = static_cast<std::size_t>(i) * n_grid + j;
        for (int c = 0; c < channels; ++c) {
          const std::size_t k = static_cast<std::size_t>(c) * plane + base;
          T v = cur.data[k] + dir * alpha * sign(grad.data[k]);
          if (cfg.linf_budget) {
            const T lo = x.data[k] - static_cast<T>(*cfg.linf_budget);
            const T hi = x.data[k] + static_cast<T>(*cfg.linf_budget);
            v = std::min(std::max(v, lo), hi);
          }
          cur.data[k] = clip01(v);
        }
      }
    iterations = n + 1;
  }

  AttackOutcome out;
  out.adversarial = quantize(cur);
  out.iterations_used = iterations;
  out.target_class = target;
  out.source_success = predict(model, out.adversarial) == target;
  out.norms = norm_triple(x, out.adversarial);
  return out;
}

}  // namespace locadv

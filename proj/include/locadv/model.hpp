#pragma once

#include <array>
#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <memory>
#include <string>
#include <variant>
#include <vector>

#include "locadv/layers.hpp"
#include "locadv/tensor.hpp"

namespace locadv {

/// The three architecture roles: a plain net with at least one large
/// (>=5×5) kernel, a deeper stack of 3×3 kernels only, and a network with
/// residual skip connections.
enum class ArchitectureId { PlainLargeKernel, StackedSmallKernel, ResidualNet };

inline const char* to_string(ArchitectureId a) {
  switch (a) {
    case ArchitectureId::PlainLargeKernel: return "plain";
    case ArchitectureId::StackedSmallKernel: return "stacked";
    case ArchitectureId::ResidualNet: return "residual";
  }
  return "?";
}

inline ArchitectureId arch_from_string(const std::string& s) {
  if (s == "plain") return ArchitectureId::PlainLargeKernel;
  if (s == "stacked") return ArchitectureId::StackedSmallKernel;
  if (s == "residual") return ArchitectureId::ResidualNet;
  fail("unknown architecture '" + s + "' (expected plain|stacked|residual)");
}

template <typename T>
struct Layer;

template <typename T>
struct ConvOp {
  Tensor<T> weight;  // K×C×kH×kW
  Tensor<T> bias;    // K
  int stride = 1;
  int pad = 0;
  int param_base = -1;
};

template <typename T>
struct LinearOp {
  Tensor<T> weight;  // M×N
  Tensor<T> bias;    // M
  int param_base = -1;
};

struct ReluOp {};

struct MaxPoolOp {
  int kernel = 2;
  int stride = 2;
};

/// Fixed elementwise affine map y = scale*x + shift; used to center [0,1]
/// pixel inputs before the first convolution. Not learned.
struct AffineOp {
  double scale = 2.0;
  double shift = -1.0;
};

/// y = x + body(x); the body must preserve the input shape.
template <typename T>
struct ResidualOp {
  std::vector<Layer<T>> body;
};

template <typename T>
struct Layer {
  std::string name;
  std::variant<ConvOp<T>, LinearOp<T>, ReluOp, MaxPoolOp, AffineOp, ResidualOp<T>> op;
};

/// Per-layer caches recorded on the forward pass; replaying backward
/// consumes exactly the recorded layers in reverse order.
template <typename T>
struct TapeEntry {
  Tensor<T> input;                    // conv/linear/relu
  std::vector<std::int32_t> argmax;   // maxpool
  std::vector<int> input_shape;       // maxpool
  std::vector<TapeEntry<T>> body;     // residual
};

template <typename T>
using Tape = std::vector<TapeEntry<T>>;

template <typename T>
struct ParamRef {
  std::string name;
  Tensor<T>* tensor;
};

template <typename T>
struct Model {
  ArchitectureId arch = ArchitectureId::PlainLargeKernel;
  std::vector<Layer<T>> layers;
  int num_classes = 10;
  std::array<int, 3> input_shape{3, 32, 32};

  std::vector<ParamRef<T>> params() {
    std::vector<ParamRef<T>> out;
    auto add = [&out](const std::string& name, Tensor<T>& t) {
      out.push_back({name, &t});
    };
    walk_params(layers, add);
    return out;
  }

  /// Assigns every conv/linear layer its slot in the flat parameter list.
  void finalize() {
    int cursor = 0;
    assign_bases(layers, cursor);
  }

  Tensor<T> forward(const Tensor<T>& x, Tape<T>* tape) const {
    require(x.shape == std::vector<int>(input_shape.begin(), input_shape.end()),
            "model: input shape " + shape_str(x.shape) + " does not match " +
                shape_str({input_shape[0], input_shape[1], input_shape[2]}));
    return forward_layers(layers, x, tape);
  }

  /// Backward through the recorded tape. Parameter gradients accumulate
  /// into param_grads (slot layout from finalize()) when non-null.
  Tensor<T> backward(const Tape<T>& tape, const Tensor<T>& grad_logits,
                     std::vector<Tensor<T>>* param_grads) const {
    require(tape.size() == layers.size(),
            "model: tape does not match layer sequence");
    return backward_layers(layers, tape, grad_logits, param_grads);
  }

  /// Fresh zero gradient buffers matching params() order.
  std::vector<Tensor<T>> zero_grads() const {
    std::vector<Tensor<T>> gs;
    auto add = [&gs](const std::string&, Tensor<T>& t) { gs.emplace_back(t.shape); };
    walk_params(const_cast<std::vector<Layer<T>>&>(layers), add);
    return gs;
  }

 private:
  static void forward_one(const Layer<T>& layer, Tensor<T>& cur,
                          TapeEntry<T>* entry) {
    std::visit(
        [&](const auto& op) {
          using Op = std::decay_t<decltype(op)>;
          if constexpr (std::is_same_v<Op, ConvOp<T>>) {
            if (entry) entry->input = cur;
            cur = conv2d(cur, op.weight, op.bias, op.stride, op.pad);
          } else if constexpr (std::is_same_v<Op, LinearOp<T>>) {
            if (entry) entry->input = cur;
            cur = linear(cur, op.weight, op.bias);
          } else if constexpr (std::is_same_v<Op, ReluOp>) {
            if (entry) entry->input = cur;
            cur = relu(cur);
          } else if constexpr (std::is_same_v<Op, AffineOp>) {
            Tensor<T> y(cur.shape);
            for (std::size_t i = 0; i < cur.numel(); ++i)
              y.data[i] = static_cast<T>(op.scale) * cur.data[i] +
                          static_cast<T>(op.shift);
            cur = std::move(y);
          } else if constexpr (std::is_same_v<Op, MaxPoolOp>) {
            auto res = maxpool2d(cur, op.kernel, op.stride);
            if (entry) {
              entry->input_shape = cur.shape;
              entry->argmax = std::move(res.argmax);
            }
            cur = std::move(res.output);
          } else if constexpr (std::is_same_v<Op, ResidualOp<T>>) {
            Tensor<T> branch =
                forward_layers(op.body, cur, entry ? &entry->body : nullptr);
            cur = residual_add(cur, branch);
          }
        },
        layer.op);
  }

  static Tensor<T> forward_layers(const std::vector<Layer<T>>& ls,
                                  const Tensor<T>& x, Tape<T>* tape) {
    Tensor<T> cur = x;
    if (tape) tape->resize(ls.size());
    for (std::size_t i = 0; i < ls.size(); ++i)
      forward_one(ls[i], cur, tape ? &(*tape)[i] : nullptr);
    return cur;
  }

  static Tensor<T> backward_layers(const std::vector<Layer<T>>& ls,
                                   const Tape<T>& tape, const Tensor<T>& gout,
                                   std::vector<Tensor<T>>* pg) {
    Tensor<T> g = gout;
    for (std::size_t i = ls.size(); i-- > 0;) {
      const auto& entry = tape[i];
      std::visit(
          [&](const auto& op) {
            using Op = std::decay_t<decltype(op)>;
            if constexpr (std::is_same_v<Op, ConvOp<T>>) {
              Tensor<T> gx(entry.input.shape);
              conv2d_backward(entry.input, op.weight, op.stride, op.pad, g, &gx,
                              pg ? &(*pg)[op.param_base] : nullptr,
                              pg ? &(*pg)[op.param_base + 1] : nullptr);
              g = std::move(gx);
            } else if constexpr (std::is_same_v<Op, LinearOp<T>>) {
              Tensor<T> gx(entry.input.shape);
              linear_backward(entry.input, op.weight, g, &gx,
                              pg ? &(*pg)[op.param_base] : nullptr,
                              pg ? &(*pg)[op.param_base + 1] : nullptr);
              g = std::move(gx);
            } else if constexpr (std::is_same_v<Op, ReluOp>) {
              g = relu_backward(entry.input, g);
            } else if constexpr (std::is_same_v<Op, AffineOp>) {
              for (auto& v : g.data) v *= static_cast<T>(op.scale);
            } else if constexpr (std::is_same_v<Op, MaxPoolOp>) {
              g = maxpool2d_backward(entry.input_shape, entry.argmax, g);
            } else if constexpr (std::is_same_v<Op, ResidualOp<T>>) {
              Tensor<T> gb = backward_layers(op.body, entry.body, g, pg);
              g = residual_add(g, gb);
            }
          },
          ls[i].op);
    }
    return g;
  }

  template <typename Fn>
  static void walk_params(std::vector<Layer<T>>& ls, Fn& fn) {
    for (auto& layer : ls) {
      std::visit(
          [&](auto& op) {
            using Op = std::decay_t<decltype(op)>;
            if constexpr (std::is_same_v<Op, ConvOp<T>> ||
                          std::is_same_v<Op, LinearOp<T>>) {
              fn(layer.name + ".weight", op.weight);
              fn(layer.name + ".bias", op.bias);
            } else if constexpr (std::is_same_v<Op, ResidualOp<T>>) {
              walk_params(op.body, fn);
            }
          },
          layer.op);
    }
  }

  static void assign_bases(std::vector<Layer<T>>& ls, int& cursor) {
    for (auto& layer : ls) {
      std::visit(
          [&](auto& op) {
            using Op = std::decay_t<decltype(op)>;
            if constexpr (std::is_same_v<Op, ConvOp<T>> ||
                          std::is_same_v<Op, LinearOp<T>>) {
              op.param_base = cursor;
              cursor += 2;
            } else if constexpr (std::is_same_v<Op, ResidualOp<T>>) {
              assign_bases(op.body, cursor);
            }
          },
          layer.op);
    }
  }
};

namespace detail {

struct ArchStats {
  int conv_count = 0;
  int max_kernel = 0;
  int min_kernel = 1 << 20;
  int residual_count = 0;
};

template <typename T>
void arch_stats(const std::vector<Layer<T>>& ls, ArchStats& st) {
  for (const auto& layer : ls) {
    std::visit(
        [&](const auto& op) {
          using Op = std::decay_t<decltype(op)>;
          if constexpr (std::is_same_v<Op, ConvOp<T>>) {
            ++st.conv_count;
            st.max_kernel = std::max({st.max_kernel, op.weight.dim(2), op.weight.dim(3)});
            st.min_kernel = std::min({st.min_kernel, op.weight.dim(2), op.weight.dim(3)});
          } else if constexpr (std::is_same_v<Op, ResidualOp<T>>) {
            ++st.residual_count;
            arch_stats(op.body, st);
          }
        },
        layer.op);
  }
}

}  // namespace detail

/// Structural contract per architecture role, checked at build time:
/// plain has a >=5×5 kernel and no residuals, stacked has only 3×3 kernels
/// (at least four) and no residuals, residual has >=2 skip connections.
template <typename T>
void verify_structure(const Model<T>& m) {
  detail::ArchStats st;
  detail::arch_stats(m.layers, st);
  switch (m.arch) {
    case ArchitectureId::PlainLargeKernel:
      require(st.max_kernel >= 5 && st.residual_count == 0,
              "plain architecture must have a >=5×5 conv and no residuals");
      break;
    case ArchitectureId::StackedSmallKernel:
      require(st.conv_count >= 4 && st.min_kernel == 3 && st.max_kernel == 3 &&
                  st.residual_count == 0,
              "stacked architecture must use only 3×3 convs (>=4) and no residuals");
      break;
    case ArchitectureId::ResidualNet:
      require(st.residual_count >= 2,
              "residual architecture must have >=2 skip connections");
      break;
  }
}

namespace detail {

/// Fan-in-scaled uniform init: U(-sqrt(6/fan_in), +sqrt(6/fan_in)), which
/// preserves activation variance through ReLU layers.
template <typename T>
void init_uniform(Tensor<T>& w, int fan_in, Rng& rng) {
  const double bound = std::sqrt(6.0 / static_cast<double>(fan_in));
  for (auto& v : w.data) v = static_cast<T>(rng.uniform(-bound, bound));
}

template <typename T>
Layer<T> make_conv(const std::string& name, int cin, int cout, int k, int pad,
                   Rng& rng) {
  ConvOp<T> op;
  op.weight = Tensor<T>({cout, cin, k, k});
  op.bias = Tensor<T>({cout});
  op.stride = 1;
  op.pad = pad;
  init_uniform(op.weight, cin * k * k, rng);
  return Layer<T>{name, std::move(op)};
}

template <typename T>
Layer<T> make_linear(const std::string& name, int in, int out, Rng& rng) {
  LinearOp<T> op;
  op.weight = Tensor<T>({out, in});
  op.bias = Tensor<T>({out});
  init_uniform(op.weight, in, rng);
  return Layer<T>{name, std::move(op)};
}

template <typename T>
Layer<T> make_relu(const std::string& name) {
  return Layer<T>{name, ReluOp{}};
}

template <typename T>
Layer<T> make_pool(const std::string& name) {
  return Layer<T>{name, MaxPoolOp{2, 2}};
}

template <typename T>
Layer<T> make_center(const std::string& name) {
  return Layer<T>{name, AffineOp{2.0, -1.0}};
}

}  // namespace detail

/// Builds one of the three architectures with seeded deterministic
/// initialization. Same (arch, seed) -> bitwise-identical parameters.
template <typename T = float>
Model<T> build(ArchitectureId arch, std::uint64_t seed) {
  using detail::make_conv;
  using detail::make_linear;
  using detail::make_pool;
  using detail::make_relu;

  Rng rng(mix_seed(0x6C6F6361647600ull, seed) ^ static_cast<std::uint64_t>(arch));
  Model<T> m;
  m.arch = arch;
  auto& L = m.layers;
  L.push_back(detail::make_center<T>("center"));

  switch (arch) {
    case ArchitectureId::PlainLargeKernel:
      L.push_back(make_conv<T>("conv1", 3, 8, 5, 2, rng));
      L.push_back(make_relu<T>("relu1"));
      L.push_back(make_pool<T>("pool1"));
      L.push_back(make_conv<T>("conv2", 8, 16, 5, 2, rng));
      L.push_back(make_relu<T>("relu2"));
      L.push_back(make_pool<T>("pool2"));
      L.push_back(make_conv<T>("conv3", 16, 24, 3, 1, rng));
      L.push_back(make_relu<T>("relu3"));
      L.push_back(make_pool<T>("pool3"));
      L.push_back(make_linear<T>("fc", 24 * 4 * 4, 10, rng));
      break;

    case ArchitectureId::StackedSmallKernel:
      L.push_back(make_conv<T>("conv1", 3, 8, 3, 1, rng));
      L.push_back(make_relu<T>("relu1"));
      L.push_back(make_conv<T>("conv2", 8, 12, 3, 1, rng));
      L.push_back(make_relu<T>("relu2"));
      L.push_back(make_pool<T>("pool1"));
      L.push_back(make_conv<T>("conv3", 12, 16, 3, 1, rng));
      L.push_back(make_relu<T>("relu3"));
      L.push_back(make_conv<T>("conv4", 16, 16, 3, 1, rng));
      L.push_back(make_relu<T>("relu4"));
      L.push_back(make_pool<T>("pool2"));
      L.push_back(make_linear<T>("fc", 16 * 8 * 8, 10, rng));
      break;

    case ArchitectureId::ResidualNet: {
      L.push_back(make_conv<T>("stem", 3, 8, 3, 1, rng));
      L.push_back(make_relu<T>("stem_relu"));
      L.push_back(make_pool<T>("pool1"));
      ResidualOp<T> res1;
      res1.body.push_back(make_conv<T>("res1.conv_a", 8, 8, 3, 1, rng));
      res1.body.push_back(make_relu<T>("res1.relu"));
      res1.body.push_back(make_conv<T>("res1.conv_b", 8, 8, 3, 1, rng));
      L.push_back(Layer<T>{"res1", std::move(res1)});
      L.push_back(make_relu<T>("res1_out_relu"));
      L.push_back(make_conv<T>("mid", 8, 16, 3, 1, rng));
      L.push_back(make_relu<T>("mid_relu"));
      L.push_back(make_pool<T>("pool2"));
      ResidualOp<T> res2;
      res2.body.push_back(make_conv<T>("res2.conv_a", 16, 16, 3, 1, rng));
      res2.body.push_back(make_relu<T>("res2.relu"));
      res2.body.push_back(make_conv<T>("res2.conv_b", 16, 16, 3, 1, rng));
      L.push_back(Layer<T>{"res2", std::move(res2)});
      L.push_back(make_relu<T>("res2_out_relu"));
      L.push_back(make_pool<T>("pool3"));
      L.push_back(make_linear<T>("fc", 16 * 4 * 4, 10, rng));
      break;
    }
  }

  m.finalize();
  verify_structure(m);
  return m;
}

template <typename T>
Tensor<T> forward_logits(const Model<T>& m, const Tensor<T>& x) {
  return m.forward(x, nullptr);
}

/// f(X): the predicted class, i.e. argmax of the logits (lowest index wins
/// ties).
template <typename T>
int predict(const Model<T>& m, const Tensor<T>& x) {
  return argmax(forward_logits(m, x));
}

/// Gradient of the cross-entropy loss for class_index with respect to the
/// input. Model parameters are untouched.
template <typename T>
Tensor<T> input_gradient(const Model<T>& m, const Tensor<T>& x,
                         int class_index) {
  Tape<T> tape;
  Tensor<T> logits = m.forward(x, &tape);
  require(class_index >= 0 && class_index < m.num_classes,
          "input_gradient: class index out of range");
  auto [loss, grad_logits] = softmax_cross_entropy(logits, class_index);
  (void)loss;
  return m.backward(tape, grad_logits, nullptr);
}

// ---------------------------------------------------------------------------
// Weight file format (version 1, float32 parameters):
//   magic "LPWT", u32 version, u32 architecture id, u32 parameter count,
//   then per parameter: u32 name length, name bytes, u32 rank,
//   u32 extents[rank], raw little-endian float32 values.
// ---------------------------------------------------------------------------

namespace detail {

static_assert(std::endian::native == std::endian::little,
              "weight files are little-endian; big-endian hosts unsupported");

inline void write_u32(std::ostream& os, std::uint32_t v) {
  os.write(reinterpret_cast<const char*>(&v), 4);
}

inline bool read_u32(std::istream& is, std::uint32_t& v) {
  is.read(reinterpret_cast<char*>(&v), 4);
  return is.gcount() == 4;
}

}  // namespace detail

inline constexpr char kWeightMagic[4] = {'L', 'P', 'W', 'T'};
inline constexpr std::uint32_t kWeightFormatVersion = 1;

inline void save(const Model<float>& m, const std::string& path) {
  std::ofstream os(path, std::ios::binary);
  require(os.good(), "save: cannot open '" + path + "' for writing");
  os.write(kWeightMagic, 4);
  detail::write_u32(os, kWeightFormatVersion);
  detail::write_u32(os, static_cast<std::uint32_t>(m.arch));
  auto params = const_cast<Model<float>&>(m).params();
  detail::write_u32(os, static_cast<std::uint32_t>(params.size()));
  for (const auto& p : params) {
    detail::write_u32(os, static_cast<std::uint32_t>(p.name.size()));
    os.write(p.name.data(), static_cast<std::streamsize>(p.name.size()));
    detail::write_u32(os, static_cast<std::uint32_t>(p.tensor->shape.size()));
    for (int e : p.tensor->shape)
      detail::write_u32(os, static_cast<std::uint32_t>(e));
    os.write(reinterpret_cast<const char*>(p.tensor->data.data()),
             static_cast<std::streamsize>(p.tensor->numel() * sizeof(float)));
  }
  require(os.good(), "save: write failed for '" + path + "'");
}

inline Model<float> load_model(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  require(is.good(), "load: cannot open '" + path + "'");
  char magic[4];
  is.read(magic, 4);
  require(is.gcount() == 4 && std::memcmp(magic, kWeightMagic, 4) == 0,
          "load: bad magic in '" + path + "'");
  std::uint32_t version = 0, arch_raw = 0, count = 0;
  require(detail::read_u32(is, version) && version == kWeightFormatVersion,
          "load: unsupported format version in '" + path + "'");
  require(detail::read_u32(is, arch_raw) && arch_raw <= 2,
          "load: invalid architecture id in '" + path + "'");
  Model<float> m = build<float>(static_cast<ArchitectureId>(arch_raw), 0);
  auto params = m.params();
  require(detail::read_u32(is, count) && count == params.size(),
          "load: parameter count mismatch in '" + path + "' (file has " +
              std::to_string(count) + ", architecture expects " +
              std::to_string(params.size()) + ")");
  for (auto& p : params) {
    std::uint32_t name_len = 0;
    require(detail::read_u32(is, name_len),
            "load: file truncated before parameter '" + p.name + "'");
    std::string name(name_len, '\0');
    is.read(name.data(), name_len);
    require(is.gcount() == static_cast<std::streamsize>(name_len) &&
                name == p.name,
            "load: shape-table mismatch, expected parameter '" + p.name + "'");
    std::uint32_t rank = 0;
    require(detail::read_u32(is, rank) && rank == p.tensor->shape.size(),
            "load: rank mismatch for parameter '" + p.name + "'");
    for (std::size_t d = 0; d < rank; ++d) {
      std::uint32_t e = 0;
      require(detail::read_u32(is, e) &&
                  e == static_cast<std::uint32_t>(p.tensor->shape[d]),
              "load: shape-table mismatch for parameter '" + p.name + "'");
    }
    const std::streamsize bytes =
        static_cast<std::streamsize>(p.tensor->numel() * sizeof(float));
    is.read(reinterpret_cast<char*>(p.tensor->data.data()), bytes);
    require(is.gcount() == bytes,
            "load: file truncated while reading parameter '" + p.name + "'");
  }
  is.peek();
  require(is.eof(), "load: trailing bytes after last parameter in '" + path + "'");
  return m;
}

}  // namespace locadv

#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "nrs/error.hpp"
#include "nrs/graph.hpp"
#include "nrs/rng.hpp"
#include "nrs/tensor.hpp"

namespace nrs {

enum class Activation : std::uint8_t { Relu = 0, Tanh = 1 };

inline std::string_view to_string(Activation a) { return a == Activation::Relu ? "relu" : "tanh"; }

inline Activation parse_activation(std::string_view s) {
  if (s == "relu") return Activation::Relu;
  if (s == "tanh") return Activation::Tanh;
  throw ConfigError("unknown activation '" + std::string(s) + "' (expected relu or tanh)");
}

/// Flat storage of every weight of a model: per layer, the [in x out] weight
/// matrix row-major, then the [out] bias.
class ParameterVector {
 public:
  ParameterVector() = default;
  explicit ParameterVector(std::size_t n, double fill = 0.0) : values_(n, fill) {}
  explicit ParameterVector(std::vector<double> values) : values_(std::move(values)) {}

  std::size_t size() const noexcept { return values_.size(); }
  std::span<double> span() noexcept { return values_; }
  std::span<const double> span() const noexcept { return values_; }
  const std::vector<double>& values() const noexcept { return values_; }
  double& operator[](std::size_t i) { return values_[i]; }
  double operator[](std::size_t i) const { return values_[i]; }

  Tensor as_tensor() const { return Tensor(Shape{values_.size()}, values_); }
  static ParameterVector from_tensor(const Tensor& t) { return ParameterVector(t.values()); }

  friend bool operator==(const ParameterVector&, const ParameterVector&) = default;

 private:
  std::vector<double> values_;
};

inline void require_same_length(const ParameterVector& a, const ParameterVector& b, const char* what) {
  if (a.size() != b.size())
    throw ContractError(std::string(what) + ": length mismatch " + std::to_string(a.size()) + " vs " +
                        std::to_string(b.size()));
}

inline ParameterVector operator+(const ParameterVector& a, const ParameterVector& b) {
  require_same_length(a, b, "parameter add");
  ParameterVector out = a;
  for (std::size_t i = 0; i < a.size(); ++i) out[i] += b[i];
  return out;
}

inline ParameterVector operator-(const ParameterVector& a, const ParameterVector& b) {
  require_same_length(a, b, "parameter sub");
  ParameterVector out = a;
  for (std::size_t i = 0; i < a.size(); ++i) out[i] -= b[i];
  return out;
}

inline ParameterVector operator*(double c, const ParameterVector& a) {
  ParameterVector out = a;
  for (double& v : out.span()) v *= c;
  return out;
}

inline double dot(const ParameterVector& a, const ParameterVector& b) {
  require_same_length(a, b, "dot");
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

inline double l2_norm(const ParameterVector& p) {
  // Scaled accumulation avoids overflow for huge entries.
  double scale = 0.0;
  for (double v : p.span()) scale = std::max(scale, std::abs(v));
  if (scale == 0.0) return 0.0;
  double s = 0.0;
  for (double v : p.span()) {
    const double x = v / scale;
    s += x * x;
  }
  return scale * std::sqrt(s);
}

struct MlpSpec {
  std::vector<std::size_t> widths;
  Activation activation = Activation::Relu;

  std::size_t num_layers() const noexcept { return widths.size() - 1; }
  std::size_t input_dim() const { return widths.front(); }
  std::size_t num_classes() const { return widths.back(); }

  void validate() const {
    if (widths.size() < 2) throw ConfigError("MLP needs at least input and output widths");
    for (std::size_t w : widths)
      if (w == 0) throw ConfigError("MLP widths must be positive");
    if (widths.back() < 2) throw ConfigError("MLP output width (class count) must be at least 2");
  }

  friend bool operator==(const MlpSpec&, const MlpSpec&) = default;
};

/// Where layer `l` lives inside the flat parameter vector.
struct LayerSlot {
  std::size_t in = 0;
  std::size_t out = 0;
  std::size_t weight_offset = 0;
  std::size_t bias_offset = 0;
};

inline LayerSlot layer_slot(const MlpSpec& spec, std::size_t layer) {
  std::size_t offset = 0;
  for (std::size_t l = 0; l < layer; ++l) offset += spec.widths[l] * spec.widths[l + 1] + spec.widths[l + 1];
  const std::size_t in = spec.widths[layer], out = spec.widths[layer + 1];
  return LayerSlot{in, out, offset, offset + in * out};
}

inline std::size_t param_count(const MlpSpec& spec) {
  std::size_t n = 0;
  for (std::size_t l = 0; l + 1 < spec.widths.size(); ++l) n += spec.widths[l] * spec.widths[l + 1] + spec.widths[l + 1];
  return n;
}

/// He-normal weights (variance 2 / fan_in), zero biases.
inline ParameterVector init_params(const MlpSpec& spec, std::uint64_t seed) {
  spec.validate();
  ParameterVector p(param_count(spec));
  RngStream rng = make_stream(StreamTag::Init, seed);
  for (std::size_t l = 0; l < spec.num_layers(); ++l) {
    const LayerSlot s = layer_slot(spec, l);
    const double sd = std::sqrt(2.0 / static_cast<double>(s.in));
    for (std::size_t i = 0; i < s.in * s.out; ++i) p[s.weight_offset + i] = rng.normal(0.0, sd);
  }
  return p;
}

inline Var apply_activation(Graph& g, Activation a, Var x) {
  return a == Activation::Relu ? g.relu(x) : g.tanh(x);
}

/// Builds the MLP on `g` from a flat parameter node and returns the logits.
/// Stops before the last layer when `hidden_only` is set (penultimate features).
inline Var forward(Graph& g, const MlpSpec& spec, Var flat_params, Var x, bool hidden_only = false) {
  const Tensor& X = g.value(x);
  require_matrix(X, "forward");
  if (X.cols() != spec.input_dim())
    throw DimensionError("forward: input " + shape_string(X.shape()) + " does not match input width " +
                         std::to_string(spec.input_dim()));
  if (g.value(flat_params).size() != param_count(spec))
    throw DimensionError("forward: parameter vector has " + std::to_string(g.value(flat_params).size()) +
                         " entries, spec needs " + std::to_string(param_count(spec)));
  Var h = x;
  const std::size_t layers = spec.num_layers();
  for (std::size_t l = 0; l < layers; ++l) {
    if (hidden_only && l + 1 == layers) break;
    const LayerSlot s = layer_slot(spec, l);
    Var W = g.slice(flat_params, s.weight_offset, Shape{s.in, s.out});
    Var b = g.slice(flat_params, s.bias_offset, Shape{s.out});
    h = g.add_row_bias(g.matmul(h, W), b);
    if (l + 1 < layers) h = apply_activation(g, spec.activation, h);
  }
  return h;
}

/// Plain evaluation of the logits.
inline Tensor forward(const MlpSpec& spec, const ParameterVector& params, const Tensor& x) {
  Graph g;
  Var p = g.constant(params.as_tensor());
  Var in = g.constant(x);
  return g.value(forward(g, spec, p, in));
}

/// Activations feeding the last layer.
inline Tensor penultimate(const MlpSpec& spec, const ParameterVector& params, const Tensor& x) {
  Graph g;
  Var p = g.constant(params.as_tensor());
  Var in = g.constant(x);
  return g.value(forward(g, spec, p, in, /*hidden_only=*/true));
}

// Checkpoint layout (all integers and floats little-endian):
//   magic "NRSCKPT1" (8 bytes) | u32 version | u32 activation | u32 width count
//   | u32 widths[count] | u64 parameter count | f64 values[count]
inline constexpr char kCheckpointMagic[8] = {'N', 'R', 'S', 'C', 'K', 'P', 'T', '1'};
inline constexpr std::uint32_t kCheckpointVersion = 1;

namespace detail {

template <class T>
void put_le(std::vector<unsigned char>& out, T v) {
  std::uint64_t bits = 0;
  if constexpr (std::is_same_v<T, double>) {
    std::memcpy(&bits, &v, sizeof v);
  } else {
    bits = static_cast<std::uint64_t>(v);
  }
  for (std::size_t i = 0; i < sizeof(T); ++i) out.push_back(static_cast<unsigned char>(bits >> (8 * i)));
}

template <class T>
T get_le(std::span<const unsigned char> in, std::size_t& pos) {
  if (pos + sizeof(T) > in.size()) throw LoadError("checkpoint truncated at byte " + std::to_string(pos));
  std::uint64_t bits = 0;
  for (std::size_t i = 0; i < sizeof(T); ++i) bits |= static_cast<std::uint64_t>(in[pos + i]) << (8 * i);
  pos += sizeof(T);
  if constexpr (std::is_same_v<T, double>) {
    double v;
    std::memcpy(&v, &bits, sizeof v);
    return v;
  } else {
    return static_cast<T>(bits);
  }
}

}  // namespace detail

struct Checkpoint {
  MlpSpec spec;
  ParameterVector params;
};

inline std::vector<unsigned char> encode_checkpoint(const MlpSpec& spec, const ParameterVector& params) {
  if (params.size() != param_count(spec)) throw ContractError("checkpoint parameters do not match spec");
  std::vector<unsigned char> out(std::begin(kCheckpointMagic), std::end(kCheckpointMagic));
  detail::put_le<std::uint32_t>(out, kCheckpointVersion);
  detail::put_le<std::uint32_t>(out, static_cast<std::uint32_t>(spec.activation));
  detail::put_le<std::uint32_t>(out, static_cast<std::uint32_t>(spec.widths.size()));
  for (std::size_t w : spec.widths) detail::put_le<std::uint32_t>(out, static_cast<std::uint32_t>(w));
  detail::put_le<std::uint64_t>(out, params.size());
  for (double v : params.span()) detail::put_le<double>(out, v);
  return out;
}

inline Checkpoint decode_checkpoint(std::span<const unsigned char> bytes) {
  if (bytes.size() < 8 || std::memcmp(bytes.data(), kCheckpointMagic, 8) != 0)
    throw LoadError("not a checkpoint file (bad magic)");
  std::size_t pos = 8;
  const auto version = detail::get_le<std::uint32_t>(bytes, pos);
  if (version != kCheckpointVersion) throw LoadError("unsupported checkpoint version " + std::to_string(version));
  const auto act = detail::get_le<std::uint32_t>(bytes, pos);
  if (act > 1) throw LoadError("unknown activation tag " + std::to_string(act));
  const auto count = detail::get_le<std::uint32_t>(bytes, pos);
  Checkpoint ck;
  ck.spec.activation = static_cast<Activation>(act);
  for (std::uint32_t i = 0; i < count; ++i) ck.spec.widths.push_back(detail::get_le<std::uint32_t>(bytes, pos));
  try {
    ck.spec.validate();
  } catch (const ConfigError& e) {
    throw LoadError(std::string("checkpoint holds an invalid model: ") + e.what());
  }
  const auto n = detail::get_le<std::uint64_t>(bytes, pos);
  if (n != param_count(ck.spec))
    throw LoadError("checkpoint parameter count " + std::to_string(n) + " does not match its widths");
  std::vector<double> values(n);
  for (auto& v : values) v = detail::get_le<double>(bytes, pos);
  if (pos != bytes.size()) throw LoadError("trailing bytes after checkpoint payload");
  ck.params = ParameterVector(std::move(values));
  return ck;
}

inline void save_checkpoint(const std::string& path, const MlpSpec& spec, const ParameterVector& params) {
  const auto bytes = encode_checkpoint(spec, params);
  std::ofstream f(path, std::ios::binary);
  if (!f) throw LoadError("cannot open '" + path + "' for writing");
  f.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
}

inline std::vector<unsigned char> read_file_bytes(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw LoadError("cannot open '" + path + "'");
  return std::vector<unsigned char>(std::istreambuf_iterator<char>(f), {});
}

inline Checkpoint load_checkpoint(const std::string& path) { return decode_checkpoint(read_file_bytes(path)); }

}  // namespace nrs

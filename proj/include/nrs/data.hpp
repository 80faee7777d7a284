#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <numbers>
#include <numeric>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "nrs/error.hpp"
#include "nrs/network.hpp"
#include "nrs/objective.hpp"
#include "nrs/rng.hpp"
#include "nrs/tensor.hpp"

namespace nrs {

struct Dataset {
  Tensor inputs;  // [N x d]
  std::vector<std::size_t> labels;
  std::size_t num_classes = 0;
  std::string name;

  std::size_t size() const noexcept { return labels.size(); }
  std::size_t dim() const { return inputs.cols(); }

  void validate() const {
    require_matrix(inputs, "dataset");
    if (labels.empty()) throw DataError("dataset '" + name + "' is empty");
    if (inputs.rows() != labels.size())
      throw DataError("dataset '" + name + "' has " + std::to_string(inputs.rows()) + " rows but " +
                      std::to_string(labels.size()) + " labels");
    check_labels(labels, inputs.rows(), num_classes);
    if (!inputs.all_finite()) throw DataError("dataset '" + name + "' contains non-finite inputs");
  }

  Batch gather(std::span<const std::size_t> rows) const {
    const std::size_t d = dim();
    std::vector<double> x;
    x.reserve(rows.size() * d);
    std::vector<std::size_t> y;
    y.reserve(rows.size());
    for (std::size_t r : rows) {
      auto src = inputs.data().subspan(r * d, d);
      x.insert(x.end(), src.begin(), src.end());
      y.push_back(labels[r]);
    }
    return Batch{Tensor(Shape{rows.size(), d}, std::move(x)), std::move(y)};
  }

  Batch all() const { return Batch{inputs, labels}; }
};

namespace detail {

inline std::vector<std::size_t> permutation(std::size_t n, RngStream& rng) {
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  for (std::size_t i = n; i > 1; --i) std::swap(idx[i - 1], idx[rng.below(i)]);
  return idx;
}

inline Dataset shuffled(Dataset ds, RngStream& rng) {
  const auto perm = permutation(ds.size(), rng);
  Batch b = ds.gather(perm);
  ds.inputs = std::move(b.inputs);
  ds.labels = std::move(b.labels);
  return ds;
}

}  // namespace detail

/// Two interleaving half circles. Class 0: (cos t, sin t); class 1:
/// (1 - cos t, 0.5 - sin t), t evenly spaced on [0, pi]; then Gaussian noise.
inline Dataset gen_two_moons(std::size_t n, double noise_sd, std::uint64_t seed) {
  if (n < 2 || n % 2 != 0) throw ContractError("two moons needs an even n >= 2, got " + std::to_string(n));
  if (!(noise_sd >= 0.0)) throw ConfigError("noise_sd must be non-negative");
  const std::size_t half = n / 2;
  RngStream rng = make_stream(StreamTag::Data, seed, 1);
  Dataset ds{Tensor(Shape{n, 2}), std::vector<std::size_t>(n), 2, "two_moons"};
  for (std::size_t i = 0; i < half; ++i) {
    const double t = half > 1 ? std::numbers::pi * static_cast<double>(i) / static_cast<double>(half - 1) : 0.0;
    ds.inputs.at(i, 0) = std::cos(t);
    ds.inputs.at(i, 1) = std::sin(t);
    ds.labels[i] = 0;
    ds.inputs.at(half + i, 0) = 1.0 - std::cos(t);
    ds.inputs.at(half + i, 1) = 0.5 - std::sin(t);
    ds.labels[half + i] = 1;
  }
  if (noise_sd > 0.0)
    for (double& v : ds.inputs.data()) v += rng.normal(0.0, noise_sd);
  return detail::shuffled(std::move(ds), rng);
}

/// n / K points around each center with isotropic Gaussian spread; label = center index.
inline Dataset gen_blobs(std::size_t n, const std::vector<std::vector<double>>& centers, double spread,
                         std::uint64_t seed) {
  const std::size_t K = centers.size();
  if (K < 2) throw ContractError("blobs need at least 2 centers");
  const std::size_t d = centers.front().size();
  if (d == 0) throw ContractError("blob centers must have at least one coordinate");
  for (const auto& c : centers)
    if (c.size() != d) throw DimensionError("blob centers have differing dimensions");
  if (n == 0 || n % K != 0)
    throw ContractError("blobs need n divisible by the number of centers, got n=" + std::to_string(n));
  if (!(spread >= 0.0)) throw ConfigError("spread must be non-negative");

  RngStream rng = make_stream(StreamTag::Data, seed, 2);
  const std::size_t per = n / K;
  Dataset ds{Tensor(Shape{n, d}), std::vector<std::size_t>(n), K, "blobs"};
  for (std::size_t k = 0; k < K; ++k)
    for (std::size_t i = 0; i < per; ++i) {
      const std::size_t r = k * per + i;
      for (std::size_t j = 0; j < d; ++j) ds.inputs.at(r, j) = centers[k][j] + (spread > 0.0 ? rng.normal(0.0, spread) : 0.0);
      ds.labels[r] = k;
    }
  return detail::shuffled(std::move(ds), rng);
}

// ---------------------------------------------------------------------------
// IDX (MNIST) files: 0x00 0x00 <type> <ndims>, ndims big-endian u32 sizes,
// then the row-major payload. Only the unsigned-byte type (0x08) is supported.

inline constexpr std::uint8_t kIdxUnsignedByte = 0x08;

struct IdxArray {
  Shape shape;
  std::vector<std::uint8_t> bytes;
};

inline IdxArray parse_idx_raw(std::span<const std::uint8_t> in) {
  auto need = [&](std::size_t offset, std::size_t count, const char* what) {
    if (offset + count > in.size()) throw ParseError(std::string("truncated ") + what, in.size());
  };
  need(0, 2, "magic");
  if (in[0] != 0 || in[1] != 0) throw ParseError("bad IDX magic", in[0] != 0 ? 0 : 1);
  need(2, 1, "type byte");
  if (in[2] != kIdxUnsignedByte) throw ParseError("unsupported IDX type byte " + std::to_string(in[2]), 2);
  need(3, 1, "dimension count");
  const std::size_t ndims = in[3];
  if (ndims == 0) throw ParseError("IDX file declares zero dimensions", 3);

  IdxArray out;
  std::size_t pos = 4;
  for (std::size_t i = 0; i < ndims; ++i) {
    need(pos, 4, "dimension sizes");
    const std::uint32_t d = (std::uint32_t{in[pos]} << 24) | (std::uint32_t{in[pos + 1]} << 16) |
                            (std::uint32_t{in[pos + 2]} << 8) | std::uint32_t{in[pos + 3]};
    if (d == 0) throw ParseError("IDX dimension " + std::to_string(i) + " is zero", pos);
    out.shape.push_back(d);
    pos += 4;
  }
  const std::size_t count = shape_size(out.shape);
  need(pos, count, "payload");
  if (pos + count != in.size()) throw ParseError("trailing bytes after IDX payload", pos + count);
  out.bytes.assign(in.begin() + static_cast<std::ptrdiff_t>(pos), in.end());
  return out;
}

/// Parses an unsigned-byte IDX file into a tensor of its shape with values byte / 255.
inline Tensor parse_idx(std::span<const std::uint8_t> in) {
  IdxArray raw = parse_idx_raw(in);
  std::vector<double> data(raw.bytes.size());
  std::transform(raw.bytes.begin(), raw.bytes.end(), data.begin(),
                 [](std::uint8_t b) { return static_cast<double>(b) / 255.0; });
  return Tensor(std::move(raw.shape), std::move(data));
}

inline std::vector<std::uint8_t> serialize_idx(const IdxArray& a) {
  if (a.shape.empty() || a.shape.size() > 255) throw ContractError("IDX supports 1 to 255 dimensions");
  if (shape_size(a.shape) != a.bytes.size()) throw DimensionError("IDX payload does not match shape");
  std::vector<std::uint8_t> out{0, 0, kIdxUnsignedByte, static_cast<std::uint8_t>(a.shape.size())};
  for (std::size_t d : a.shape) {
    if (d > 0xffffffffu) throw ContractError("IDX dimension too large");
    for (int s = 24; s >= 0; s -= 8) out.push_back(static_cast<std::uint8_t>(d >> s));
  }
  out.insert(out.end(), a.bytes.begin(), a.bytes.end());
  return out;
}

/// Inverse of parse_idx for tensors whose entries are multiples of 1/255 in [0, 1].
inline std::vector<std::uint8_t> serialize_idx(const Tensor& t) {
  IdxArray a{t.shape(), std::vector<std::uint8_t>(t.size())};
  for (std::size_t i = 0; i < t.size(); ++i) {
    const double v = t[i];
    if (!(v >= 0.0 && v <= 1.0)) throw DataError("IDX pixel values must lie in [0, 1]");
    a.bytes[i] = static_cast<std::uint8_t>(std::lround(v * 255.0));
  }
  return serialize_idx(a);
}

inline std::vector<std::uint8_t> read_idx_file(const std::string& path) {
  auto bytes = read_file_bytes(path);
  return std::vector<std::uint8_t>(bytes.begin(), bytes.end());
}

/// Images file [N x ...] plus labels file [N]; keeps the first `subset` samples
/// (0 keeps all) and flattens each image into a row.
inline Dataset load_idx_dataset(const std::string& images_path, const std::string& labels_path,
                                std::size_t subset, std::size_t num_classes, std::string name = "idx") {
  Tensor images = parse_idx(read_idx_file(images_path));
  IdxArray labels = parse_idx_raw(read_idx_file(labels_path));
  if (labels.shape.size() != 1) throw DataError("IDX labels file must be one-dimensional");
  const std::size_t n = images.shape().front();
  if (labels.shape[0] != n)
    throw DataError("IDX images (" + std::to_string(n) + ") and labels (" + std::to_string(labels.shape[0]) +
                    ") disagree on sample count");
  const std::size_t keep = subset == 0 ? n : std::min(subset, n);
  const std::size_t d = images.size() / n;
  std::vector<double> x(images.data().begin(), images.data().begin() + static_cast<std::ptrdiff_t>(keep * d));
  Dataset ds{Tensor(Shape{keep, d}, std::move(x)), {}, num_classes, std::move(name)};
  for (std::size_t i = 0; i < keep; ++i) ds.labels.push_back(labels.bytes[i]);
  ds.validate();
  return ds;
}

// ---------------------------------------------------------------------------

/// Shuffles with a seed-derived permutation and cuts full batches of size B;
/// the remainder is dropped.
inline std::vector<Batch> batches(const Dataset& ds, std::size_t B, std::uint64_t epoch_seed) {
  if (B == 0 || B > ds.size())
    throw ContractError("batch size " + std::to_string(B) + " must be in [1, " + std::to_string(ds.size()) + "]");
  RngStream rng = make_stream(StreamTag::Shuffle, epoch_seed);
  const auto perm = detail::permutation(ds.size(), rng);
  std::vector<Batch> out;
  for (std::size_t start = 0; start + B <= perm.size(); start += B)
    out.push_back(ds.gather(std::span<const std::size_t>(perm).subspan(start, B)));
  return out;
}

/// Per-feature affine map fitted on one split and applied to others.
struct Standardizer {
  std::vector<double> mean;
  std::vector<double> sd;

  static Standardizer fit(const Dataset& ds) {
    const std::size_t n = ds.size(), d = ds.dim();
    Standardizer s{std::vector<double>(d, 0.0), std::vector<double>(d, 0.0)};
    for (std::size_t r = 0; r < n; ++r)
      for (std::size_t j = 0; j < d; ++j) s.mean[j] += ds.inputs.at(r, j);
    for (double& m : s.mean) m /= static_cast<double>(n);
    for (std::size_t r = 0; r < n; ++r)
      for (std::size_t j = 0; j < d; ++j) {
        const double c = ds.inputs.at(r, j) - s.mean[j];
        s.sd[j] += c * c;
      }
    for (double& v : s.sd) {
      v = std::sqrt(v / static_cast<double>(n));
      if (v == 0.0) v = 1.0;  // constant feature (e.g. a border pixel)
    }
    return s;
  }

  Dataset apply(Dataset ds) const {
    if (ds.dim() != mean.size()) throw DimensionError("standardizer fitted on a different input width");
    for (std::size_t r = 0; r < ds.size(); ++r)
      for (std::size_t j = 0; j < mean.size(); ++j) ds.inputs.at(r, j) = (ds.inputs.at(r, j) - mean[j]) / sd[j];
    return ds;
  }
};

}  // namespace nrs

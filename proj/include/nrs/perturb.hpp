#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <string>
#include <string_view>

#include "nrs/error.hpp"
#include "nrs/network.hpp"
#include "nrs/rng.hpp"

namespace nrs {

/// How the sampled perturbation is rescaled by the current weight norm.
enum class ScaleMode : std::uint8_t {
  Divide,    // delta / ||theta||  (default)
  Multiply,  // delta * ||theta||
  None,
};

inline std::string_view to_string(ScaleMode m) {
  switch (m) {
    case ScaleMode::Divide: return "divide";
    case ScaleMode::Multiply: return "multiply";
    case ScaleMode::None: return "none";
  }
  return "divide";
}

inline ScaleMode parse_scale_mode(std::string_view s) {
  if (s == "divide") return ScaleMode::Divide;
  if (s == "multiply") return ScaleMode::Multiply;
  if (s == "none") return ScaleMode::None;
  throw ConfigError("unknown scale_mode '" + std::string(s) + "' (expected divide, multiply or none)");
}

/// Stream owned by one worker for one step. Keyed, so the order in which
/// workers run cannot change what they draw.
inline RngStream worker_rng(std::uint64_t global_seed, std::uint64_t step, std::uint64_t worker_id) {
  return RngStream(global_seed ^ hash_words({static_cast<std::uint64_t>(StreamTag::Perturbation), step, worker_id}));
}

/// Random vector of norm exactly `epsilon` with isotropic direction. With
/// `ball_interior` the radius is epsilon * u^(1/dim) instead, i.e. uniform in the ball.
inline ParameterVector sample_perturbation(std::size_t dim, double epsilon, RngStream& rng,
                                           bool ball_interior = false) {
  if (dim == 0) throw ContractError("perturbation dimension must be at least 1");
  if (!(epsilon >= 0.0)) throw ConfigError("epsilon must be non-negative");
  ParameterVector out(dim);
  if (epsilon == 0.0) return out;

  double norm = 0.0;
  do {
    for (double& v : out.span()) v = rng.normal();
    norm = l2_norm(out);
  } while (norm == 0.0);

  double radius = epsilon;
  if (ball_interior) radius *= std::pow(rng.uniform(), 1.0 / static_cast<double>(dim));
  const double s = radius / norm;
  for (double& v : out.span()) v *= s;
  return out;
}

/// delta / ||theta||_2.
inline ParameterVector normalize_perturbation(const ParameterVector& delta, const ParameterVector& theta,
                                              ScaleMode mode = ScaleMode::Divide) {
  require_same_length(delta, theta, "normalize_perturbation");
  if (mode == ScaleMode::None) return delta;
  const double n = l2_norm(theta);
  if (mode == ScaleMode::Multiply) return n * delta;
  if (n == 0.0 || !std::isfinite(n)) throw NumericError("cannot normalize perturbation by a zero-norm parameter vector");
  ParameterVector out = delta;
  for (double& v : out.span()) v /= n;
  return out;
}

}  // namespace nrs

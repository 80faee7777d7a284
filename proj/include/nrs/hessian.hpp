#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "nrs/error.hpp"
#include "nrs/network.hpp"
#include "nrs/objective.hpp"
#include "nrs/rng.hpp"
#include "nrs/tensor.hpp"

namespace nrs {

enum class SpectrumScope : std::uint8_t { FullModel, LastLayer };

inline std::string_view to_string(SpectrumScope s) { return s == SpectrumScope::FullModel ? "full" : "last_layer"; }

inline SpectrumScope parse_scope(std::string_view s) {
  if (s == "full" || s == "full_model") return SpectrumScope::FullModel;
  if (s == "last_layer") return SpectrumScope::LastLayer;
  throw ConfigError("unknown hessian scope '" + std::string(s) + "' (expected last_layer or full)");
}

struct SpectrumResult {
  double lambda_max = 0.0;
  std::size_t iterations = 0;
  double residual = 0.0;  // ||Hv - lambda v|| / ||v|| at the returned vector
  SpectrumScope scope = SpectrumScope::LastLayer;
  bool converged = false;
};

using GradientFn = std::function<ParameterVector(const ParameterVector&)>;
using MatVec = std::function<std::vector<double>(std::span<const double>)>;

inline constexpr double kDefaultHvpStep = 1e-4;
inline constexpr std::size_t kDefaultMaxHessianDim = 5000;

/// Hessian-vector product by central differences of the gradient along v / ||v||.
inline ParameterVector hvp(const GradientFn& grad, const ParameterVector& params, const ParameterVector& v,
                           double h = kDefaultHvpStep) {
  require_same_length(params, v, "hvp");
  const double nv = l2_norm(v);
  if (nv == 0.0) throw ContractError("hvp direction must be non-zero");
  if (!(h > 0.0)) throw ContractError("hvp step must be positive");
  const ParameterVector unit = (1.0 / nv) * v;
  const ParameterVector gp = grad(params + h * unit);
  const ParameterVector gm = grad(params - h * unit);
  require_same_length(gp, params, "hvp gradient");
  ParameterVector out(params.size());
  const double s = nv / (2.0 * h);
  for (std::size_t i = 0; i < out.size(); ++i) {
    out[i] = (gp[i] - gm[i]) * s;
    if (!std::isfinite(out[i])) throw NumericError("hvp produced a non-finite value");
  }
  return out;
}

struct PowerIterationOptions {
  double tol = 1e-8;
  std::size_t max_iter = 20000;
  std::uint64_t seed = 0;
};

namespace detail {

inline double norm2(std::span<const double> v) {
  double s = 0.0;
  for (double x : v) s += x * x;
  return std::sqrt(s);
}

struct PowerRun {
  double lambda = 0.0;
  double residual = 0.0;
  double radius = 0.0;  // largest ||Av|| seen, a lower bound on the spectral radius
  std::size_t iterations = 0;
  bool converged = false;
  bool null = false;         // operator annihilated the iterate
  bool oscillating = false;  // iterate repeats every two steps: +-lambda tie in magnitude
};

// Power iteration on (A + shift I) starting from unit vector v (updated in place).
// Converged when the Rayleigh quotient settles to `tol` relatively and the
// residual is below sqrt(tol) relative to ||Av||.
inline PowerRun power_run(const MatVec& A, std::vector<double>& v, double shift, const PowerIterationOptions& opt,
                          std::size_t budget) {
  PowerRun r;
  double prev = 0.0;
  const double res_tol = std::sqrt(opt.tol);
  std::vector<double> back2;  // iterate from two steps earlier
  std::vector<double> back1 = v;
  for (std::size_t it = 1; it <= budget; ++it) {
    std::vector<double> w = A(v);
    if (w.size() != v.size()) throw DimensionError("operator returned a vector of the wrong length");
    for (std::size_t i = 0; i < v.size(); ++i) w[i] += shift * v[i];
    double lambda = 0.0;
    for (std::size_t i = 0; i < v.size(); ++i) lambda += v[i] * w[i];
    double res = 0.0;
    for (std::size_t i = 0; i < v.size(); ++i) res += (w[i] - lambda * v[i]) * (w[i] - lambda * v[i]);
    res = std::sqrt(res);
    const double nw = norm2(w);
    if (!std::isfinite(nw)) throw NumericError("power iteration diverged");
    r.iterations = it;
    r.lambda = lambda;
    r.residual = res;
    r.radius = std::max(r.radius, nw);
    if (nw == 0.0) {
      r.null = true;
      r.converged = true;
      return r;
    }
    if (it > 1 && std::abs(lambda - prev) <= opt.tol * std::abs(lambda) && res <= res_tol * nw) {
      r.converged = true;
      return r;
    }
    prev = lambda;
    for (std::size_t i = 0; i < v.size(); ++i) v[i] = w[i] / nw;
    if (!back2.empty()) {
      double drift = 0.0;
      for (std::size_t i = 0; i < v.size(); ++i) drift += (v[i] - back2[i]) * (v[i] - back2[i]);
      if (std::sqrt(drift) <= res_tol && res > res_tol * nw) {
        r.oscillating = true;
        return r;
      }
    }
    back2 = std::move(back1);
    back1 = v;
  }
  return r;
}

}  // namespace detail

/// Largest (algebraic) eigenvalue of a symmetric operator by power iteration
/// from a seeded random unit vector. When the dominant eigenvalue is negative,
/// or two opposite-signed eigenvalues tie in magnitude, the operator is shifted
/// by its spectral radius and iterated again.
inline SpectrumResult lambda_max(const MatVec& A, std::size_t dim, const PowerIterationOptions& opt = {},
                                 SpectrumScope scope = SpectrumScope::FullModel) {
  if (dim == 0) throw ContractError("lambda_max needs dim >= 1");
  RngStream rng = make_stream(StreamTag::PowerIteration, opt.seed, dim);
  std::vector<double> v(dim);
  for (double& x : v) x = rng.normal();
  const double n0 = detail::norm2(v);
  for (double& x : v) x /= n0;

  detail::PowerRun first = detail::power_run(A, v, 0.0, opt, opt.max_iter);
  SpectrumResult out{first.lambda, first.iterations, first.residual, scope, first.converged};
  if (first.null) return SpectrumResult{0.0, first.iterations, 0.0, scope, true};
  const bool dominant_positive =
      first.lambda >= 0.0 && (first.converged || (!first.oscillating && first.lambda >= 0.5 * first.radius));
  if (dominant_positive) return out;

  // Shift so that every eigenvalue is >= ~0; the top of A becomes dominant.
  const double shift = first.radius;
  const std::size_t left = opt.max_iter > first.iterations ? opt.max_iter - first.iterations : 1;
  detail::PowerRun second = detail::power_run(A, v, shift, opt, left);
  out.iterations = first.iterations + second.iterations;
  if (second.null) {
    out.lambda_max = -shift;
    out.residual = 0.0;
    out.converged = true;
    return out;
  }
  out.lambda_max = second.lambda - shift;
  out.residual = second.residual;
  out.converged = second.converged;
  return out;
}

/// Dense symmetric matrix-vector product.
inline MatVec dense_operator(const Tensor& H) {
  require_matrix(H, "dense_operator");
  if (H.rows() != H.cols()) throw DimensionError("dense operator must be square, got " + shape_string(H.shape()));
  return [&H](std::span<const double> v) {
    const std::size_t n = H.rows();
    std::vector<double> out(n, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
      double s = 0.0;
      for (std::size_t j = 0; j < n; ++j) s += H.at(i, j) * v[j];
      out[i] = s;
    }
    return out;
  };
}

/// Exact Hessian of the mean softmax cross-entropy with respect to the last
/// layer's weights and bias:
///   (1/B) sum_b (diag(p_b) - p_b p_b^T) (x) [h_b; 1][h_b; 1]^T
/// indexed in flat-parameter order (weights row-major [d_h x K], then bias).
inline Tensor last_layer_hessian(const MlpSpec& spec, const ParameterVector& params, const Tensor& inputs,
                                 std::size_t max_dim = kDefaultMaxHessianDim) {
  spec.validate();
  require_matrix(inputs, "last_layer_hessian");
  const std::size_t K = spec.num_classes();
  const std::size_t dh = spec.widths[spec.widths.size() - 2];
  const std::size_t D = (dh + 1) * K;
  if (D > max_dim)
    throw ScopeError("last layer has " + std::to_string(D) + " parameters (limit " + std::to_string(max_dim) +
                     "); use the hvp-based full-model analysis instead");

  const Tensor h = penultimate(spec, params, inputs);
  const Tensor p = softmax(forward(spec, params, inputs));
  const std::size_t B = inputs.rows();

  Tensor H(Shape{D, D});
  std::vector<double> ht(dh + 1);
  std::vector<double> A(K * K);
  for (std::size_t b = 0; b < B; ++b) {
    for (std::size_t i = 0; i < dh; ++i) ht[i] = h.at(b, i);
    ht[dh] = 1.0;
    for (std::size_t k = 0; k < K; ++k)
      for (std::size_t l = 0; l < K; ++l) A[k * K + l] = (k == l ? p.at(b, k) : 0.0) - p.at(b, k) * p.at(b, l);
    for (std::size_t i = 0; i <= dh; ++i) {
      if (ht[i] == 0.0) continue;
      for (std::size_t j = 0; j <= dh; ++j) {
        const double hh = ht[i] * ht[j];
        if (hh == 0.0) continue;
        for (std::size_t k = 0; k < K; ++k) {
          double* row = &H.data()[(i * K + k) * D + j * K];
          for (std::size_t l = 0; l < K; ++l) row[l] += hh * A[k * K + l];
        }
      }
    }
  }
  const double inv = 1.0 / static_cast<double>(B);
  for (double& x : H.data()) x *= inv;
  return H;
}

/// Offset of the last layer inside the flat parameter vector.
inline std::size_t last_layer_offset(const MlpSpec& spec) { return layer_slot(spec, spec.num_layers() - 1).weight_offset; }

inline SpectrumResult last_layer_lambda_max(const MlpSpec& spec, const ParameterVector& params, const Tensor& inputs,
                                            const PowerIterationOptions& opt = {},
                                            std::size_t max_dim = kDefaultMaxHessianDim) {
  const Tensor H = last_layer_hessian(spec, params, inputs, max_dim);
  return lambda_max(dense_operator(H), H.rows(), opt, SpectrumScope::LastLayer);
}

/// lambda_max of the Hessian of the empirical loss over all parameters, via hvp.
inline SpectrumResult full_model_lambda_max(const MlpSpec& spec, const ParameterVector& params, const Batch& batch,
                                            const PowerIterationOptions& opt = {}, double h = kDefaultHvpStep) {
  const GradientFn grad = [&](const ParameterVector& p) { return empirical_loss(spec, p, batch).gradient; };
  const MatVec op = [&](std::span<const double> v) {
    ParameterVector dir(std::vector<double>(v.begin(), v.end()));
    return hvp(grad, params, dir, h).values();
  };
  return lambda_max(op, params.size(), opt, SpectrumScope::FullModel);
}

}  // namespace nrs

#pragma once

#include <cmath>
#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "nrs/error.hpp"
#include "nrs/graph.hpp"
#include "nrs/network.hpp"
#include "nrs/tensor.hpp"

namespace nrs {

/// Inputs [B x d] with one class id per row.
struct Batch {
  Tensor inputs;
  std::vector<std::size_t> labels;

  std::size_t size() const noexcept { return labels.size(); }
};

// Probabilities are floored at this value inside the log-ratio of the divergence.
inline constexpr double kProbabilityFloor = 1e-12;

inline void check_labels(std::span<const std::size_t> labels, std::size_t rows, std::size_t classes) {
  if (labels.size() != rows)
    throw DataError("got " + std::to_string(labels.size()) + " labels for " + std::to_string(rows) + " rows");
  for (std::size_t i = 0; i < labels.size(); ++i)
    if (labels[i] >= classes)
      throw DataError("label " + std::to_string(labels[i]) + " at row " + std::to_string(i) +
                      " is outside [0, " + std::to_string(classes) + ")");
}

/// Mean smoothed cross-entropy; targets are (1 - s) * onehot + s / K.
inline Var cross_entropy(Graph& g, Var logits, std::span<const std::size_t> labels, double smoothing = 0.0) {
  const Tensor& L = g.value(logits);
  require_matrix(L, "cross_entropy");
  const std::size_t B = L.rows(), K = L.cols();
  check_labels(labels, B, K);
  if (!(smoothing >= 0.0 && smoothing < 1.0)) throw ConfigError("label smoothing must lie in [0, 1)");

  Tensor targets(L.shape(), smoothing / static_cast<double>(K));
  for (std::size_t r = 0; r < B; ++r) targets.at(r, labels[r]) += 1.0 - smoothing;

  Var ls = g.log_softmax(logits);
  return g.scale(g.sum(g.mul(g.constant(std::move(targets)), ls)), -1.0 / static_cast<double>(B));
}

inline double cross_entropy(const Tensor& logits, std::span<const std::size_t> labels, double smoothing = 0.0) {
  Graph g;
  return g.scalar(cross_entropy(g, g.constant(logits), labels, smoothing));
}

/// Batch-mean KL(softmax(p) || softmax(q)). Differentiable in both arguments.
inline Var model_divergence(Graph& g, Var logits_p, Var logits_q) {
  const Tensor& P = g.value(logits_p);
  const Tensor& Q = g.value(logits_q);
  if (P.shape() != Q.shape())
    throw DimensionError("model_divergence shape mismatch: " + shape_string(P.shape()) + " vs " +
                         shape_string(Q.shape()));
  require_matrix(P, "model_divergence");
  const std::size_t rows = P.rows();  // P and Q dangle once nodes are appended
  const double log_floor = std::log(kProbabilityFloor);
  Var lp = g.log_softmax(logits_p);
  Var lq = g.log_softmax(logits_q);
  Var diff = g.sub(g.clamp_min(lp, log_floor), g.clamp_min(lq, log_floor));
  Var kl = g.sum(g.mul(g.exp(lp), diff));
  return g.scale(kl, 1.0 / static_cast<double>(rows));
}

inline double model_divergence(const Tensor& logits_p, const Tensor& logits_q) {
  Graph g;
  return g.scalar(model_divergence(g, g.constant(logits_p), g.constant(logits_q)));
}

/// Fraction of rows whose argmax (lowest index on ties) equals the label.
inline double accuracy(const Tensor& logits, std::span<const std::size_t> labels) {
  require_matrix(logits, "accuracy");
  check_labels(labels, logits.rows(), logits.cols());
  std::size_t hits = 0;
  for (std::size_t r = 0; r < logits.rows(); ++r) {
    std::size_t best = 0;
    for (std::size_t k = 1; k < logits.cols(); ++k)
      if (logits.at(r, k) > logits.at(r, best)) best = k;
    hits += best == labels[r];
  }
  return static_cast<double>(hits) / static_cast<double>(logits.rows());
}

/// Terms of the composite objective. Unused terms are reported as zero, so
/// total == empirical + alpha * divergence + neighbor_empirical always holds.
struct LossBreakdown {
  double empirical = 0.0;
  double divergence = 0.0;
  double neighbor_empirical = 0.0;
  double total = 0.0;
  double alpha = 0.0;
};

/// Which terms enter the objective.
struct LossTerms {
  bool empirical = true;
  bool divergence = true;
  bool neighbor = true;

  static constexpr LossTerms all() { return {true, true, true}; }
  static constexpr LossTerms empirical_only() { return {true, false, false}; }
  static constexpr LossTerms neighbor_only() { return {false, false, true}; }
};

struct LossAndGradient {
  LossBreakdown breakdown;
  ParameterVector gradient;
};

/// Evaluates the selected terms of
///   L(theta) + alpha * d(theta, theta + delta) + L(theta + delta)
/// on one tape and returns d(total)/d(theta) with delta held constant.
inline LossAndGradient composite_loss(const MlpSpec& spec, const ParameterVector& params,
                                      const ParameterVector& delta, const Batch& batch, double alpha,
                                      double smoothing, LossTerms terms) {
  require_same_length(params, delta, "composite_loss");
  if (!terms.empirical && !terms.divergence && !terms.neighbor)
    throw ContractError("composite_loss needs at least one term");

  Graph g;
  Var theta = g.parameter(params.as_tensor());
  Var x = g.constant(batch.inputs);

  LossBreakdown out;
  out.alpha = alpha;
  std::vector<Var> pieces;

  Var logits{};
  if (terms.empirical || terms.divergence) logits = forward(g, spec, theta, x);
  Var neighbor_logits{};
  if (terms.divergence || terms.neighbor) {
    Var shifted = g.add(theta, g.constant(delta.as_tensor()));
    neighbor_logits = forward(g, spec, shifted, x);
  }

  if (terms.empirical) {
    Var ce = cross_entropy(g, logits, batch.labels, smoothing);
    out.empirical = g.scalar(ce);
    pieces.push_back(ce);
  }
  if (terms.divergence) {
    Var d = model_divergence(g, logits, neighbor_logits);
    out.divergence = g.scalar(d);
    pieces.push_back(g.scale(d, alpha));
  }
  if (terms.neighbor) {
    Var ce = cross_entropy(g, neighbor_logits, batch.labels, smoothing);
    out.neighbor_empirical = g.scalar(ce);
    pieces.push_back(ce);
  }

  Var total = pieces.front();
  for (std::size_t i = 1; i < pieces.size(); ++i) total = g.add(total, pieces[i]);
  out.total = g.scalar(total);

  Gradients grads = g.backward(total);
  return LossAndGradient{out, ParameterVector::from_tensor(grads.at(theta))};
}

inline LossAndGradient nrs_loss(const MlpSpec& spec, const ParameterVector& params, const ParameterVector& delta,
                                const Batch& batch, double alpha, double smoothing = 0.0) {
  return composite_loss(spec, params, delta, batch, alpha, smoothing, LossTerms::all());
}

/// Empirical loss L_S(theta) and its gradient.
inline LossAndGradient empirical_loss(const MlpSpec& spec, const ParameterVector& params, const Batch& batch,
                                      double smoothing = 0.0) {
  return composite_loss(spec, params, ParameterVector(params.size()), batch, 0.0, smoothing,
                        LossTerms::empirical_only());
}

}  // namespace nrs

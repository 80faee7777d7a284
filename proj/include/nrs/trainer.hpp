#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <cstdio>
#include <exception>
#include <numbers>
#include <optional>
#include <ostream>
#include <span>
#include <string>
#include <string_view>
#include <thread>
#include <utility>
#include <vector>

#include <json.hpp>

#include "nrs/data.hpp"
#include "nrs/error.hpp"
#include "nrs/network.hpp"
#include "nrs/objective.hpp"
#include "nrs/perturb.hpp"
#include "nrs/rng.hpp"

namespace nrs {

enum class Strategy : std::uint8_t {
  Baseline,  // L(theta)
  Rpr,       // L(theta + delta) only
  Nrs,       // L(theta) + alpha * d(theta, theta + delta) + L(theta + delta)
};

inline std::string_view to_string(Strategy s) {
  switch (s) {
    case Strategy::Baseline: return "baseline";
    case Strategy::Rpr: return "rpr";
    case Strategy::Nrs: return "nrs";
  }
  return "baseline";
}

inline Strategy parse_strategy(std::string_view s) {
  if (s == "baseline") return Strategy::Baseline;
  if (s == "rpr") return Strategy::Rpr;
  if (s == "nrs") return Strategy::Nrs;
  throw ConfigError("unknown strategy '" + std::string(s) + "' (expected baseline, rpr or nrs)");
}

inline LossTerms terms_for(Strategy s) {
  switch (s) {
    case Strategy::Baseline: return LossTerms::empirical_only();
    case Strategy::Rpr: return LossTerms::neighbor_only();
    case Strategy::Nrs: return LossTerms::all();
  }
  return LossTerms::all();
}

struct TrainConfig {
  Strategy strategy = Strategy::Nrs;
  double epsilon = 0.1;
  double alpha = 1.0;
  double base_lr = 0.1;
  double momentum = 0.9;
  double weight_decay = 5e-4;
  std::size_t batch_size = 64;
  std::size_t num_workers = 1;
  std::size_t epochs = 10;
  double label_smoothing = 0.0;
  std::uint64_t global_seed = 0;
  ScaleMode scale_mode = ScaleMode::Divide;
  bool ball_interior = false;
  // Run the simulated workers of a step on separate threads. Results do not depend on it.
  bool parallel_workers = false;

  void validate() const {
    if (!(epsilon >= 0.0)) throw ConfigError("epsilon must be >= 0");
    if (!(alpha >= 0.0)) throw ConfigError("alpha must be >= 0");
    if (!(base_lr > 0.0)) throw ConfigError("lr must be > 0");
    if (!(momentum >= 0.0 && momentum < 1.0)) throw ConfigError("momentum must lie in [0, 1)");
    if (!(weight_decay >= 0.0)) throw ConfigError("weight_decay must be >= 0");
    if (!(label_smoothing >= 0.0 && label_smoothing < 1.0)) throw ConfigError("label_smoothing must lie in [0, 1)");
    if (batch_size == 0) throw ConfigError("batch_size must be >= 1");
    if (num_workers == 0) throw ConfigError("workers must be >= 1");
    if (batch_size % num_workers != 0)
      throw ConfigError("batch_size " + std::to_string(batch_size) + " is not divisible by workers " +
                        std::to_string(num_workers));
    if (epochs == 0) throw ConfigError("epochs must be >= 1");
  }

  /// Applies the strategy's constraints: baseline has no perturbation and no
  /// divergence weight, rpr has no divergence weight.
  TrainConfig resolved() const {
    TrainConfig c = *this;
    if (c.strategy == Strategy::Baseline) {
      c.epsilon = 0.0;
      c.alpha = 0.0;
    } else if (c.strategy == Strategy::Rpr) {
      c.alpha = 0.0;
    }
    return c;
  }

  friend bool operator==(const TrainConfig&, const TrainConfig&) = default;
};

inline void to_json(nlohmann::json& j, const TrainConfig& c) {
  j = nlohmann::json{{"strategy", to_string(c.strategy)},
                     {"epsilon", c.epsilon},
                     {"alpha", c.alpha},
                     {"lr", c.base_lr},
                     {"momentum", c.momentum},
                     {"weight_decay", c.weight_decay},
                     {"batch_size", c.batch_size},
                     {"workers", c.num_workers},
                     {"epochs", c.epochs},
                     {"label_smoothing", c.label_smoothing},
                     {"seed", c.global_seed},
                     {"scale_mode", to_string(c.scale_mode)},
                     {"ball_interior", c.ball_interior},
                     {"parallel_workers", c.parallel_workers}};
}

inline void from_json(const nlohmann::json& j, TrainConfig& c) {
  c.strategy = parse_strategy(j.at("strategy").get<std::string>());
  j.at("epsilon").get_to(c.epsilon);
  j.at("alpha").get_to(c.alpha);
  j.at("lr").get_to(c.base_lr);
  j.at("momentum").get_to(c.momentum);
  j.at("weight_decay").get_to(c.weight_decay);
  j.at("batch_size").get_to(c.batch_size);
  j.at("workers").get_to(c.num_workers);
  j.at("epochs").get_to(c.epochs);
  j.at("label_smoothing").get_to(c.label_smoothing);
  j.at("seed").get_to(c.global_seed);
  c.scale_mode = parse_scale_mode(j.at("scale_mode").get<std::string>());
  j.at("ball_interior").get_to(c.ball_interior);
  j.at("parallel_workers").get_to(c.parallel_workers);
}

/// Error raised while training, tagged with the step that failed.
class TrainingError : public Error {
 public:
  TrainingError(std::size_t step, const std::string& what)
      : Error("training failed at step " + std::to_string(step) + ": " + what), step_(step) {}
  std::size_t step() const noexcept { return step_; }

 private:
  std::size_t step_;
};

struct EpochRecord {
  std::size_t epoch = 0;  // 1-based
  std::size_t step = 0;   // optimizer steps completed so far
  double lr = 0.0;        // rate used by the last step of the epoch
  LossBreakdown loss;     // mean over the epoch's steps and workers
  double train_acc = 0.0;
  double test_acc = 0.0;
};

struct TrainingReport {
  TrainConfig config;
  MlpSpec spec;
  std::vector<EpochRecord> epochs;
  ParameterVector final_params;
  std::optional<double> lambda_max;

  double final_train_acc() const { return epochs.empty() ? 0.0 : epochs.back().train_acc; }
  double final_test_acc() const { return epochs.empty() ? 0.0 : epochs.back().test_acc; }
  double best_test_acc() const {
    double best = 0.0;
    for (const auto& e : epochs) best = std::max(best, e.test_acc);
    return best;
  }
};

// ---------------------------------------------------------------------------

/// Contiguous, equal, order-preserving shards.
inline std::vector<Batch> shard_batch(const Batch& batch, std::size_t M) {
  const std::size_t B = batch.size();
  if (M == 0 || B % M != 0)
    throw ConfigError("cannot split a batch of " + std::to_string(B) + " into " + std::to_string(M) + " equal shards");
  const std::size_t per = B / M;
  const std::size_t d = batch.inputs.cols();
  std::vector<Batch> out;
  out.reserve(M);
  for (std::size_t m = 0; m < M; ++m) {
    auto x = batch.inputs.data().subspan(m * per * d, per * d);
    out.push_back(Batch{Tensor(Shape{per, d}, std::vector<double>(x.begin(), x.end())),
                        std::vector<std::size_t>(batch.labels.begin() + static_cast<std::ptrdiff_t>(m * per),
                                                 batch.labels.begin() + static_cast<std::ptrdiff_t>((m + 1) * per))});
  }
  return out;
}

/// Mean of the worker gradients, summed in worker-id order.
inline ParameterVector reduce_gradients(std::span<const ParameterVector> grads) {
  if (grads.empty()) throw ContractError("reduce_gradients needs at least one gradient");
  ParameterVector sum(grads.front().size());
  for (const auto& g : grads) {
    require_same_length(sum, g, "reduce_gradients");
    for (std::size_t i = 0; i < g.size(); ++i) sum[i] += g[i];
  }
  const double inv = 1.0 / static_cast<double>(grads.size());
  for (double& v : sum.span()) v *= inv;
  return sum;
}

/// base * (1 + cos(pi k / K)) / 2 for 0 <= k < K.
inline double cosine_lr(double base, std::size_t k, std::size_t K) {
  if (k >= K) throw ContractError("cosine_lr step " + std::to_string(k) + " outside [0, " + std::to_string(K) + ")");
  return base * 0.5 * (1.0 + std::cos(std::numbers::pi * static_cast<double>(k) / static_cast<double>(K)));
}

struct SgdState {
  ParameterVector params;
  ParameterVector velocity;
};

/// Heavy-ball SGD with L2 weight decay folded into the gradient:
///   g' = grad + wd * params; v' = momentum * v + g'; params' = params - lr * v'.
inline SgdState sgd_step(const ParameterVector& params, const ParameterVector& grad, const ParameterVector& velocity,
                         double lr, double momentum, double weight_decay) {
  require_same_length(params, grad, "sgd_step");
  require_same_length(params, velocity, "sgd_step");
  SgdState s{params, velocity};
  for (std::size_t i = 0; i < params.size(); ++i) {
    const double g = grad[i] + weight_decay * params[i];
    s.velocity[i] = momentum * velocity[i] + g;
    s.params[i] = params[i] - lr * s.velocity[i];
  }
  return s;
}

struct WorkerResult {
  LossBreakdown loss;
  ParameterVector gradient;
};

/// One simulated device: draw its perturbation from its own keyed stream and
/// differentiate the strategy's objective on its shard.
inline WorkerResult worker_step(const TrainConfig& cfg, const MlpSpec& spec, const ParameterVector& theta,
                                const Batch& shard, std::size_t step, std::size_t worker) {
  ParameterVector delta(theta.size());
  if (cfg.strategy != Strategy::Baseline) {
    RngStream rng = worker_rng(cfg.global_seed, step, worker);
    delta = sample_perturbation(theta.size(), cfg.epsilon, rng, cfg.ball_interior);
    delta = normalize_perturbation(delta, theta, cfg.scale_mode);
  }
  auto r = composite_loss(spec, theta, delta, shard, cfg.alpha, cfg.label_smoothing, terms_for(cfg.strategy));
  return WorkerResult{r.breakdown, std::move(r.gradient)};
}

inline double evaluate_accuracy(const MlpSpec& spec, const ParameterVector& params, const Dataset& ds) {
  return accuracy(forward(spec, params, ds.inputs), ds.labels);
}

inline std::uint64_t epoch_seed(std::uint64_t global_seed, std::size_t epoch) {
  return hash_words({global_seed, static_cast<std::uint64_t>(epoch)});
}

/// Simulated data-parallel training loop. Starts from `initial` when given,
/// otherwise from init_params(spec, seed).
inline TrainingReport train(const TrainConfig& config_in, const MlpSpec& spec, const Dataset& train_set,
                            const Dataset& test_set, std::optional<ParameterVector> initial = std::nullopt) {
  const TrainConfig cfg = config_in.resolved();
  cfg.validate();
  spec.validate();
  train_set.validate();
  test_set.validate();
  if (train_set.dim() != spec.input_dim() || test_set.dim() != spec.input_dim())
    throw DimensionError("dataset input width does not match the model input width " + std::to_string(spec.input_dim()));
  if (train_set.num_classes > spec.num_classes() || test_set.num_classes > spec.num_classes())
    throw DimensionError("dataset has more classes than the model outputs");
  if (cfg.batch_size > train_set.size())
    throw ConfigError("batch_size " + std::to_string(cfg.batch_size) + " exceeds training set size " +
                      std::to_string(train_set.size()));

  const std::size_t M = cfg.num_workers;
  const std::size_t steps_per_epoch = train_set.size() / cfg.batch_size;
  const std::size_t total_steps = steps_per_epoch * cfg.epochs;

  TrainingReport report{cfg, spec, {}, {}, std::nullopt};
  ParameterVector theta = initial ? std::move(*initial) : init_params(spec, cfg.global_seed);
  if (theta.size() != param_count(spec)) throw DimensionError("initial parameters do not match the model");
  ParameterVector velocity(theta.size());

  std::size_t step = 0;
  std::vector<WorkerResult> results(M);
  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    LossBreakdown sum;
    double lr = 0.0;
    for (const Batch& batch : batches(train_set, cfg.batch_size, epoch_seed(cfg.global_seed, epoch))) {
      try {
        lr = cosine_lr(cfg.base_lr, step, total_steps);
        const std::vector<Batch> shards = shard_batch(batch, M);

        if (cfg.parallel_workers && M > 1) {
          std::vector<std::exception_ptr> errors(M);
          std::vector<std::thread> pool;
          pool.reserve(M);
          for (std::size_t w = 0; w < M; ++w)
            pool.emplace_back([&, w] {
              try {
                results[w] = worker_step(cfg, spec, theta, shards[w], step, w);
              } catch (...) {
                errors[w] = std::current_exception();
              }
            });
          for (auto& t : pool) t.join();
          for (auto& e : errors)
            if (e) std::rethrow_exception(e);
        } else {
          for (std::size_t w = 0; w < M; ++w) results[w] = worker_step(cfg, spec, theta, shards[w], step, w);
        }

        std::vector<ParameterVector> grads;
        grads.reserve(M);
        for (std::size_t w = 0; w < M; ++w) {
          if (!std::isfinite(results[w].loss.total)) throw NumericError("loss became non-finite");
          sum.empirical += results[w].loss.empirical;
          sum.divergence += results[w].loss.divergence;
          sum.neighbor_empirical += results[w].loss.neighbor_empirical;
          sum.total += results[w].loss.total;
          grads.push_back(std::move(results[w].gradient));
        }
        const ParameterVector g = reduce_gradients(grads);
        SgdState next = sgd_step(theta, g, velocity, lr, cfg.momentum, cfg.weight_decay);
        theta = std::move(next.params);
        velocity = std::move(next.velocity);
      } catch (const TrainingError&) {
        throw;
      } catch (const std::exception& e) {
        throw TrainingError(step, e.what());
      }
      ++step;
    }

    const double denom = static_cast<double>(steps_per_epoch * M);
    EpochRecord rec;
    rec.epoch = epoch + 1;
    rec.step = step;
    rec.lr = lr;
    rec.loss = LossBreakdown{sum.empirical / denom, sum.divergence / denom, sum.neighbor_empirical / denom,
                             sum.total / denom, cfg.alpha};
    rec.train_acc = evaluate_accuracy(spec, theta, train_set);
    rec.test_acc = evaluate_accuracy(spec, theta, test_set);
    report.epochs.push_back(rec);
  }
  report.final_params = std::move(theta);
  return report;
}

// ---------------------------------------------------------------------------
// Report emission.

inline nlohmann::json to_json(const MlpSpec& spec) {
  return nlohmann::json{{"widths", spec.widths}, {"activation", to_string(spec.activation)}};
}

inline nlohmann::json report_to_json(const TrainingReport& r) {
  nlohmann::json epochs = nlohmann::json::array();
  for (const auto& e : r.epochs)
    epochs.push_back({{"epoch", e.epoch},
                      {"step", e.step},
                      {"lr", e.lr},
                      {"loss_total", e.loss.total},
                      {"loss_empirical", e.loss.empirical},
                      {"loss_divergence", e.loss.divergence},
                      {"loss_neighbor", e.loss.neighbor_empirical},
                      {"train_acc", e.train_acc},
                      {"test_acc", e.test_acc}});
  nlohmann::json j{{"train_config", r.config},
                   {"model", to_json(r.spec)},
                   {"seed", r.config.global_seed},
                   {"epochs", std::move(epochs)},
                   {"final_train_acc", r.final_train_acc()},
                   {"final_test_acc", r.final_test_acc()},
                   {"best_test_acc", r.best_test_acc()}};
  j["lambda_max"] = r.lambda_max ? nlohmann::json(*r.lambda_max) : nlohmann::json(nullptr);
  return j;
}

inline constexpr std::string_view kEpochCsvHeader =
    "epoch,step,lr,loss_total,loss_empirical,loss_divergence,loss_neighbor,train_acc,test_acc";

inline std::string format_double(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

inline void write_epoch_csv(std::ostream& os, const TrainingReport& r) {
  os << kEpochCsvHeader << '\n';
  for (const auto& e : r.epochs)
    os << e.epoch << ',' << e.step << ',' << format_double(e.lr) << ',' << format_double(e.loss.total) << ','
       << format_double(e.loss.empirical) << ',' << format_double(e.loss.divergence) << ','
       << format_double(e.loss.neighbor_empirical) << ',' << format_double(e.train_acc) << ','
       << format_double(e.test_acc) << '\n';
}

}  // namespace nrs

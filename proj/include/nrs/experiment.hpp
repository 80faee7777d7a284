#pragma once

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <map>
#include <optional>
#include <ostream>
#include <set>
#include <sstream>
#include <string>
#include <tuple>
#include <vector>

#include <json.hpp>

#include "nrs/data.hpp"
#include "nrs/error.hpp"
#include "nrs/hessian.hpp"
#include "nrs/network.hpp"
#include "nrs/trainer.hpp"

namespace nrs {

namespace fs = std::filesystem;
using nlohmann::json;

/// Environment variable that overrides the configured output directory.
inline constexpr const char* kOutputDirEnv = "NRS_OUTPUT_DIR";

struct DatasetConfig {
  std::string generator = "two_moons";  // two_moons | blobs | idx
  std::size_t n = 2000;
  std::size_t test_n = 0;  // 0 -> same as n
  double noise = 0.25;
  std::vector<std::vector<double>> centers;
  double spread = 0.5;
  std::uint64_t seed = 0;
  bool standardize = true;
  // idx
  std::string train_images, train_labels, test_images, test_labels;
  std::size_t subset = 0;
  std::size_t test_subset = 0;
  std::size_t num_classes = 10;

  friend bool operator==(const DatasetConfig&, const DatasetConfig&) = default;
};

struct GridConfig {
  std::optional<std::vector<double>> epsilon;
  std::optional<std::vector<double>> alpha;
};

struct AnalysisConfig {
  bool hessian = false;
  SpectrumScope scope = SpectrumScope::LastLayer;
  double tol = 1e-8;
  std::size_t max_iter = 20000;
  std::size_t max_dim = kDefaultMaxHessianDim;
};

struct ExperimentConfig {
  DatasetConfig dataset;
  MlpSpec model;
  TrainConfig train;  // strategy and seed are filled per run
  std::vector<Strategy> strategies{Strategy::Baseline, Strategy::Rpr, Strategy::Nrs};
  GridConfig grid;
  AnalysisConfig analysis;
  std::string output_dir = "nrs_out";
  std::vector<std::uint64_t> seeds;
};

// ---------------------------------------------------------------------------
// Parsing. Every block rejects keys it does not know.

namespace detail {

inline void reject_unknown(const json& j, const std::string& block, std::initializer_list<std::string_view> known) {
  if (!j.is_object()) throw ConfigError("'" + block + "' must be a JSON object");
  for (const auto& [key, _] : j.items()) {
    if (std::find(known.begin(), known.end(), key) == known.end())
      throw ConfigError("unknown key '" + (block.empty() ? key : block + "." + key) + "'");
  }
}

template <class T>
void read(const json& j, const std::string& block, const char* key, T& out) {
  if (!j.contains(key)) return;
  try {
    j.at(key).get_to(out);
  } catch (const json::exception&) {
    throw ConfigError("invalid value for '" + block + "." + key + "'");
  }
}

template <class T>
T read_required(const json& j, const std::string& block, const char* key) {
  if (!j.contains(key)) throw ConfigError("missing required key '" + block + "." + key + "'");
  T out{};
  read(j, block, key, out);
  return out;
}

inline std::string resolve_path(const std::string& p, const fs::path& base) {
  if (p.empty() || base.empty() || fs::path(p).is_absolute()) return p;
  return (base / p).lexically_normal().string();
}

}  // namespace detail

inline DatasetConfig parse_dataset_block(const json& j, const fs::path& base_dir = {}) {
  using namespace detail;
  reject_unknown(j, "dataset",
                 {"generator", "n", "test_n", "noise", "centers", "spread", "seed", "standardize", "train_images",
                  "train_labels", "test_images", "test_labels", "subset", "test_subset", "num_classes"});
  DatasetConfig d;
  d.generator = read_required<std::string>(j, "dataset", "generator");
  read(j, "dataset", "n", d.n);
  read(j, "dataset", "test_n", d.test_n);
  read(j, "dataset", "noise", d.noise);
  read(j, "dataset", "centers", d.centers);
  read(j, "dataset", "spread", d.spread);
  read(j, "dataset", "seed", d.seed);
  read(j, "dataset", "standardize", d.standardize);
  read(j, "dataset", "train_images", d.train_images);
  read(j, "dataset", "train_labels", d.train_labels);
  read(j, "dataset", "test_images", d.test_images);
  read(j, "dataset", "test_labels", d.test_labels);
  read(j, "dataset", "subset", d.subset);
  read(j, "dataset", "test_subset", d.test_subset);
  read(j, "dataset", "num_classes", d.num_classes);
  if (d.generator == "idx") {
    for (auto* p : {&d.train_images, &d.train_labels, &d.test_images, &d.test_labels}) {
      if (p->empty()) throw ConfigError("idx dataset needs train_images, train_labels, test_images and test_labels");
      *p = resolve_path(*p, base_dir);
    }
  } else if (d.generator == "two_moons") {
    if (d.n < 2 || d.n % 2) throw ConfigError("invalid value for 'dataset.n': two_moons needs an even n >= 2");
    if (d.test_n % 2) throw ConfigError("invalid value for 'dataset.test_n': two_moons needs an even size");
  } else if (d.generator == "blobs") {
    if (d.centers.size() < 2) throw ConfigError("invalid value for 'dataset.centers': need at least 2 centers");
  } else {
    throw ConfigError("invalid value for 'dataset.generator': '" + d.generator + "'");
  }
  return d;
}

inline json dataset_to_json(const DatasetConfig& d) {
  json j{{"generator", d.generator}, {"seed", d.seed}, {"standardize", d.standardize}};
  if (d.generator == "idx") {
    j.update({{"train_images", d.train_images},
              {"train_labels", d.train_labels},
              {"test_images", d.test_images},
              {"test_labels", d.test_labels},
              {"subset", d.subset},
              {"test_subset", d.test_subset},
              {"num_classes", d.num_classes}});
  } else {
    j.update({{"n", d.n}, {"test_n", d.test_n}});
    if (d.generator == "two_moons") j["noise"] = d.noise;
    if (d.generator == "blobs") j.update({{"centers", d.centers}, {"spread", d.spread}});
  }
  return j;
}

inline MlpSpec parse_model_block(const json& j) {
  using namespace detail;
  reject_unknown(j, "model", {"widths", "activation"});
  MlpSpec spec;
  spec.widths = read_required<std::vector<std::size_t>>(j, "model", "widths");
  std::string act = "relu";
  read(j, "model", "activation", act);
  spec.activation = parse_activation(act);
  try {
    spec.validate();
  } catch (const ConfigError& e) {
    throw ConfigError(std::string("invalid value for 'model.widths': ") + e.what());
  }
  return spec;
}

inline ExperimentConfig parse_experiment(const json& j, const fs::path& base_dir = {}) {
  using namespace detail;
  reject_unknown(j, "", {"dataset", "model", "train", "grid", "analysis", "output_dir", "seeds"});
  ExperimentConfig c;
  if (!j.contains("dataset")) throw ConfigError("missing required key 'dataset'");
  if (!j.contains("model")) throw ConfigError("missing required key 'model'");
  c.dataset = parse_dataset_block(j.at("dataset"), base_dir);
  c.model = parse_model_block(j.at("model"));

  if (j.contains("train")) {
    const json& t = j.at("train");
    reject_unknown(t, "train",
                   {"strategies", "epsilon", "alpha", "lr", "momentum", "weight_decay", "batch_size", "workers",
                    "epochs", "label_smoothing", "scale_mode", "ball_interior", "parallel_workers"});
    if (t.contains("strategies")) {
      std::vector<std::string> names;
      read(t, "train", "strategies", names);
      if (names.empty()) throw ConfigError("invalid value for 'train.strategies': must be non-empty");
      c.strategies.clear();
      for (const auto& s : names) {
        try {
          c.strategies.push_back(parse_strategy(s));
        } catch (const ConfigError& e) {
          throw ConfigError(std::string("invalid value for 'train.strategies': ") + e.what());
        }
      }
    }
    read(t, "train", "epsilon", c.train.epsilon);
    read(t, "train", "alpha", c.train.alpha);
    read(t, "train", "lr", c.train.base_lr);
    read(t, "train", "momentum", c.train.momentum);
    read(t, "train", "weight_decay", c.train.weight_decay);
    read(t, "train", "batch_size", c.train.batch_size);
    read(t, "train", "workers", c.train.num_workers);
    read(t, "train", "epochs", c.train.epochs);
    read(t, "train", "label_smoothing", c.train.label_smoothing);
    read(t, "train", "ball_interior", c.train.ball_interior);
    read(t, "train", "parallel_workers", c.train.parallel_workers);
    if (t.contains("scale_mode")) {
      std::string m;
      read(t, "train", "scale_mode", m);
      c.train.scale_mode = parse_scale_mode(m);
    }
    c.train.validate();
  }

  if (j.contains("grid")) {
    const json& g = j.at("grid");
    reject_unknown(g, "grid", {"epsilon", "alpha"});
    for (const char* key : {"epsilon", "alpha"}) {
      if (!g.contains(key)) continue;
      std::vector<double> values;
      read(g, "grid", key, values);
      if (values.empty()) throw ConfigError(std::string("invalid value for 'grid.") + key + "': list must be non-empty");
      for (double v : values)
        if (!(v >= 0.0)) throw ConfigError(std::string("invalid value for 'grid.") + key + "': must be >= 0");
      (std::string_view(key) == "epsilon" ? c.grid.epsilon : c.grid.alpha) = std::move(values);
    }
  }

  if (j.contains("analysis")) {
    const json& a = j.at("analysis");
    reject_unknown(a, "analysis", {"hessian", "scope", "tol", "max_iter", "max_dim"});
    read(a, "analysis", "hessian", c.analysis.hessian);
    if (a.contains("scope")) {
      std::string s;
      read(a, "analysis", "scope", s);
      c.analysis.scope = parse_scope(s);
    }
    read(a, "analysis", "tol", c.analysis.tol);
    read(a, "analysis", "max_iter", c.analysis.max_iter);
    read(a, "analysis", "max_dim", c.analysis.max_dim);
    if (!(c.analysis.tol > 0.0)) throw ConfigError("invalid value for 'analysis.tol': must be > 0");
  }

  read(j, "", "output_dir", c.output_dir);
  if (!j.contains("seeds")) throw ConfigError("missing required key 'seeds'");
  read(j, "", "seeds", c.seeds);
  if (c.seeds.empty()) throw ConfigError("invalid value for 'seeds': list must be non-empty");
  return c;
}

inline ExperimentConfig load_experiment(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw ConfigError("cannot read config file '" + path + "'");
  json j;
  try {
    j = json::parse(f);
  } catch (const json::parse_error& e) {
    throw ConfigError("config '" + path + "' is not valid JSON: " + e.what());
  }
  return parse_experiment(j, fs::path(path).parent_path());
}

inline json experiment_to_json(const ExperimentConfig& c) {
  json strategies = json::array();
  for (Strategy s : c.strategies) strategies.push_back(to_string(s));
  json train = c.train;
  train.erase("strategy");
  train.erase("seed");
  train["strategies"] = std::move(strategies);
  json j{{"dataset", dataset_to_json(c.dataset)},
         {"model", to_json(c.model)},
         {"train", std::move(train)},
         {"analysis",
          {{"hessian", c.analysis.hessian},
           {"scope", to_string(c.analysis.scope)},
           {"tol", c.analysis.tol},
           {"max_iter", c.analysis.max_iter},
           {"max_dim", c.analysis.max_dim}}},
         {"output_dir", c.output_dir},
         {"seeds", c.seeds}};
  if (c.grid.epsilon || c.grid.alpha) {
    json g = json::object();
    if (c.grid.epsilon) g["epsilon"] = *c.grid.epsilon;
    if (c.grid.alpha) g["alpha"] = *c.grid.alpha;
    j["grid"] = std::move(g);
  }
  return j;
}

// ---------------------------------------------------------------------------

struct DataSplits {
  Dataset train;
  Dataset test;
};

/// Builds train/test splits; standardization statistics come from the train split only.
inline DataSplits build_datasets(const DatasetConfig& d) {
  DataSplits s;
  const std::size_t test_n = d.test_n ? d.test_n : d.n;
  const std::uint64_t test_seed = hash_words({d.seed, 0x7e57});
  if (d.generator == "two_moons") {
    s.train = gen_two_moons(d.n, d.noise, d.seed);
    s.test = gen_two_moons(test_n, d.noise, test_seed);
  } else if (d.generator == "blobs") {
    s.train = gen_blobs(d.n, d.centers, d.spread, d.seed);
    s.test = gen_blobs(test_n, d.centers, d.spread, test_seed);
  } else if (d.generator == "idx") {
    s.train = load_idx_dataset(d.train_images, d.train_labels, d.subset, d.num_classes, "idx_train");
    s.test = load_idx_dataset(d.test_images, d.test_labels, d.test_subset, d.num_classes, "idx_test");
  } else {
    throw ConfigError("invalid value for 'dataset.generator': '" + d.generator + "'");
  }
  if (d.standardize) {
    const Standardizer st = Standardizer::fit(s.train);
    s.train = st.apply(std::move(s.train));
    s.test = st.apply(std::move(s.test));
  }
  return s;
}

struct RunPoint {
  Strategy strategy;
  double epsilon;
  double alpha;
  std::uint64_t seed;
};

/// baseline: one run per seed; rpr: epsilon grid x seeds; nrs: epsilon x alpha grid x seeds.
inline std::vector<RunPoint> expand_grid(const ExperimentConfig& c) {
  const std::vector<double> eps = c.grid.epsilon.value_or(std::vector<double>{c.train.epsilon});
  const std::vector<double> alphas = c.grid.alpha.value_or(std::vector<double>{c.train.alpha});
  std::vector<RunPoint> out;
  for (Strategy s : c.strategies) {
    switch (s) {
      case Strategy::Baseline:
        for (auto seed : c.seeds) out.push_back({s, 0.0, 0.0, seed});
        break;
      case Strategy::Rpr:
        for (double e : eps)
          for (auto seed : c.seeds) out.push_back({s, e, 0.0, seed});
        break;
      case Strategy::Nrs:
        for (double e : eps)
          for (double a : alphas)
            for (auto seed : c.seeds) out.push_back({s, e, a, seed});
        break;
    }
  }
  return out;
}

inline TrainConfig train_config_for(const ExperimentConfig& c, const RunPoint& p) {
  TrainConfig t = c.train;
  t.strategy = p.strategy;
  t.epsilon = p.epsilon;
  t.alpha = p.alpha;
  t.global_seed = p.seed;
  return t.resolved();
}

/// Single-run config whose re-execution reproduces run `p`.
inline ExperimentConfig single_run_config(const ExperimentConfig& c, const RunPoint& p) {
  ExperimentConfig s = c;
  s.strategies = {p.strategy};
  s.grid = {};
  s.train.epsilon = p.epsilon;
  s.train.alpha = p.alpha;
  s.seeds = {p.seed};
  return s;
}

inline std::string run_id(const RunPoint& p) {
  std::ostringstream os;
  os << to_string(p.strategy) << "_eps" << p.epsilon << "_alpha" << p.alpha << "_seed" << p.seed;
  return os.str();
}

struct SummaryRow {
  Strategy strategy;
  double epsilon = 0.0;
  double alpha = 0.0;
  std::uint64_t seed = 0;
  double final_train_acc = 0.0;
  double final_test_acc = 0.0;
  double best_test_acc = 0.0;
  std::optional<double> lambda_max;
  double wall_seconds = 0.0;
};

inline constexpr std::string_view kSummaryCsvHeader =
    "strategy,epsilon,alpha,seed,final_train_acc,final_test_acc,best_test_acc,lambda_max,wall_seconds";
inline constexpr std::string_view kSpectrumCsvHeader = "scope,lambda_max,residual,iterations";

inline void write_summary_row(std::ostream& os, const SummaryRow& r) {
  os << to_string(r.strategy) << ',' << format_double(r.epsilon) << ',' << format_double(r.alpha) << ',' << r.seed
     << ',' << format_double(r.final_train_acc) << ',' << format_double(r.final_test_acc) << ','
     << format_double(r.best_test_acc) << ',' << (r.lambda_max ? format_double(*r.lambda_max) : std::string()) << ','
     << format_double(r.wall_seconds) << '\n';
}

inline void write_spectrum_row(std::ostream& os, const SpectrumResult& s) {
  os << to_string(s.scope) << ',' << format_double(s.lambda_max) << ',' << format_double(s.residual) << ','
     << s.iterations << '\n';
}

inline SpectrumResult analyze_params(const MlpSpec& spec, const ParameterVector& params, const Dataset& ds,
                                     const AnalysisConfig& a) {
  PowerIterationOptions opt{a.tol, a.max_iter, 0};
  if (a.scope == SpectrumScope::LastLayer) return last_layer_lambda_max(spec, params, ds.inputs, opt, a.max_dim);
  return full_model_lambda_max(spec, params, ds.all(), opt);
}

inline std::string resolved_output_dir(const std::string& configured) {
  if (const char* env = std::getenv(kOutputDirEnv); env && *env) return env;
  return configured;
}

struct RunOutcome {
  RunPoint point;
  TrainingReport report;
  std::optional<SpectrumResult> spectrum;
  SummaryRow row;
};

/// Trains one grid point and writes its run directory (report.json,
/// epochs.csv, checkpoint.bin and, with analysis on, spectrum.csv).
inline RunOutcome execute_run(const ExperimentConfig& c, const RunPoint& p, const DataSplits& data,
                              const fs::path& out_dir) {
  const auto t0 = std::chrono::steady_clock::now();
  RunOutcome o{p, train(train_config_for(c, p), c.model, data.train, data.test), std::nullopt, {}};
  if (c.analysis.hessian) {
    o.spectrum = analyze_params(c.model, o.report.final_params, data.train, c.analysis);
    o.report.lambda_max = o.spectrum->lambda_max;
  }
  const double wall = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  o.row = SummaryRow{p.strategy,
                     p.strategy == Strategy::Baseline ? 0.0 : p.epsilon,
                     p.strategy == Strategy::Nrs ? p.alpha : 0.0,
                     p.seed,
                     o.report.final_train_acc(),
                     o.report.final_test_acc(),
                     o.report.best_test_acc(),
                     o.report.lambda_max,
                     wall};

  if (!out_dir.empty()) {
    const fs::path dir = out_dir / "runs" / run_id(p);
    fs::create_directories(dir);
    json report = report_to_json(o.report);
    report["config"] = experiment_to_json(single_run_config(c, p));
    std::ofstream(dir / "report.json") << report.dump(2) << '\n';
    std::ofstream csv(dir / "epochs.csv");
    write_epoch_csv(csv, o.report);
    save_checkpoint((dir / "checkpoint.bin").string(), c.model, o.report.final_params);
    if (o.spectrum) {
      std::ofstream s(dir / "spectrum.csv");
      s << kSpectrumCsvHeader << '\n';
      write_spectrum_row(s, *o.spectrum);
    }
  }
  return o;
}

struct Stats {
  double mean = 0.0;
  double sd = 0.0;  // sample standard deviation, 0 for a single value
  double median = 0.0;
};

inline Stats stats(std::vector<double> v) {
  Stats s;
  if (v.empty()) return s;
  for (double x : v) s.mean += x;
  s.mean /= static_cast<double>(v.size());
  if (v.size() > 1) {
    double ss = 0.0;
    for (double x : v) ss += (x - s.mean) * (x - s.mean);
    s.sd = std::sqrt(ss / static_cast<double>(v.size() - 1));
  }
  std::sort(v.begin(), v.end());
  const std::size_t m = v.size() / 2;
  s.median = v.size() % 2 ? v[m] : 0.5 * (v[m - 1] + v[m]);
  return s;
}

/// Runs of one (strategy, epsilon, alpha) cell across seeds.
struct GroupSummary {
  Strategy strategy;
  double epsilon;
  double alpha;
  std::vector<SummaryRow> rows;

  Stats final_test() const { return collect(&SummaryRow::final_test_acc); }
  Stats best_test() const { return collect(&SummaryRow::best_test_acc); }
  Stats lambda() const {
    std::vector<double> v;
    for (const auto& r : rows)
      if (r.lambda_max) v.push_back(*r.lambda_max);
    return stats(std::move(v));
  }

 private:
  Stats collect(double SummaryRow::*field) const {
    std::vector<double> v;
    for (const auto& r : rows) v.push_back(r.*field);
    return stats(std::move(v));
  }
};

inline std::vector<GroupSummary> group_rows(const std::vector<SummaryRow>& rows) {
  std::vector<GroupSummary> groups;
  for (const auto& r : rows) {
    auto it = std::find_if(groups.begin(), groups.end(), [&](const GroupSummary& g) {
      return g.strategy == r.strategy && g.epsilon == r.epsilon && g.alpha == r.alpha;
    });
    if (it == groups.end()) {
      groups.push_back(GroupSummary{r.strategy, r.epsilon, r.alpha, {}});
      it = std::prev(groups.end());
    }
    it->rows.push_back(r);
  }
  return groups;
}

/// Per strategy, the grid cell with the highest mean best-test accuracy
/// (first cell wins ties).
inline std::map<Strategy, GroupSummary> best_per_strategy(const std::vector<SummaryRow>& rows) {
  std::map<Strategy, GroupSummary> best;
  for (auto& g : group_rows(rows)) {
    auto it = best.find(g.strategy);
    if (it == best.end())
      best.emplace(g.strategy, g);
    else if (g.best_test().mean > it->second.best_test().mean)
      it->second = g;
  }
  return best;
}

inline void print_tables(std::ostream& os, const std::vector<SummaryRow>& rows) {
  auto pm = [](const Stats& s, double scale) {
    std::ostringstream o;
    o << std::fixed << std::setprecision(2) << s.mean * scale << " +- " << s.sd * scale;
    return o.str();
  };
  os << std::left << std::setw(10) << "strategy" << std::setw(9) << "epsilon" << std::setw(8) << "alpha"
     << std::setw(18) << "final_test(%)" << std::setw(18) << "best_test(%)" << "lambda_max\n";
  for (const auto& g : group_rows(rows)) {
    os << std::left << std::setw(10) << to_string(g.strategy) << std::setw(9) << g.epsilon << std::setw(8) << g.alpha
       << std::setw(18) << pm(g.final_test(), 100.0) << std::setw(18) << pm(g.best_test(), 100.0)
       << (g.rows.front().lambda_max ? pm(g.lambda(), 1.0) : "-")
       << '\n';
  }
  os << "\nbest grid cell per strategy (by mean best test accuracy):\n";
  for (const auto& [s, g] : best_per_strategy(rows)) {
    os << std::left << std::setw(10) << to_string(s) << "eps=" << g.epsilon << " alpha=" << g.alpha
       << "  best_test(%)=" << pm(g.best_test(), 100.0);
    if (!g.rows.empty() && g.rows.front().lambda_max) os << "  lambda_max=" << pm(g.lambda(), 1.0);
    os << '\n';
  }
}

struct ExperimentResult {
  std::vector<SummaryRow> rows;
  fs::path output_dir;
};

/// Runs every grid point in expansion order; the summary CSV is rewritten
/// from scratch and flushed after each run so a failure keeps earlier rows.
inline ExperimentResult run_experiment(const ExperimentConfig& c, std::ostream* log = nullptr,
                                       bool write_outputs = true) {
  ExperimentResult result;
  const DataSplits data = build_datasets(c.dataset);
  if (data.train.dim() != c.model.input_dim())
    throw ConfigError("invalid value for 'model.widths': input width " + std::to_string(c.model.input_dim()) +
                      " does not match dataset width " + std::to_string(data.train.dim()));
  std::ofstream summary;
  if (write_outputs) {
    result.output_dir = resolved_output_dir(c.output_dir);
    fs::create_directories(result.output_dir);
    summary.open(result.output_dir / "summary.csv", std::ios::trunc);
    summary << kSummaryCsvHeader << '\n' << std::flush;
  }
  const auto points = expand_grid(c);
  for (std::size_t i = 0; i < points.size(); ++i) {
    const RunPoint& p = points[i];
    RunOutcome o = execute_run(c, p, data, result.output_dir);
    if (write_outputs) {
      write_summary_row(summary, o.row);
      summary.flush();
    }
    if (log)
      *log << '[' << (i + 1) << '/' << points.size() << "] " << run_id(p) << " best_test=" << o.row.best_test_acc
           << (o.row.lambda_max ? " lambda_max=" + format_double(*o.row.lambda_max) : std::string()) << '\n';
    result.rows.push_back(o.row);
  }
  return result;
}

// ---------------------------------------------------------------------------

/// Reads a dataset block from inline JSON, a file holding a bare dataset
/// block, or a full experiment config (its "dataset" block is used).
inline DatasetConfig load_dataset_block(const std::string& arg) {
  json j;
  fs::path base;
  try {
    if (!arg.empty() && arg.front() == '{') {
      j = json::parse(arg);
    } else {
      std::ifstream f(arg);
      if (!f) throw ConfigError("cannot read dataset spec '" + arg + "'");
      j = json::parse(f);
      base = fs::path(arg).parent_path();
    }
  } catch (const json::parse_error& e) {
    throw ConfigError(std::string("dataset spec is not valid JSON: ") + e.what());
  }
  if (j.contains("dataset")) return parse_dataset_block(j.at("dataset"), base);
  return parse_dataset_block(j, base);
}

/// lambda_max of a checkpoint on the training split of `data`.
inline SpectrumResult analyze_checkpoint(const std::string& checkpoint_path, const DatasetConfig& data,
                                         const AnalysisConfig& a) {
  const Checkpoint ck = load_checkpoint(checkpoint_path);
  const DataSplits splits = build_datasets(data);
  if (splits.train.dim() != ck.spec.input_dim())
    throw LoadError("checkpoint expects input width " + std::to_string(ck.spec.input_dim()) + " but the dataset has " +
                    std::to_string(splits.train.dim()));
  if (splits.train.num_classes > ck.spec.num_classes())
    throw LoadError("checkpoint outputs " + std::to_string(ck.spec.num_classes()) + " classes but the dataset has " +
                    std::to_string(splits.train.num_classes));
  return analyze_params(ck.spec, ck.params, splits.train, a);
}

}  // namespace nrs

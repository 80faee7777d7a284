// Command-line front end: strategy comparison runs and checkpoint curvature analysis.
//
//   nrs run <config.json>
//   nrs analyze <checkpoint> --data <dataset spec> --scope last_layer|full --tol 1e-8
//
// Exit codes: 0 success, 1 configuration error, 2 runtime error.

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>

#include <CLI11.hpp>

#include "nrs/experiment.hpp"

namespace {

constexpr int kExitOk = 0;
constexpr int kExitConfig = 1;
constexpr int kExitRuntime = 2;

int do_run(const std::string& config_path, bool quiet) {
  const nrs::ExperimentConfig cfg = nrs::load_experiment(config_path);
  const auto result = nrs::run_experiment(cfg, quiet ? nullptr : &std::cerr);
  std::cout << '\n';
  nrs::print_tables(std::cout, result.rows);
  std::cout << "\nsummary: " << (result.output_dir / "summary.csv").string() << '\n';
  return kExitOk;
}

int do_analyze(const std::string& checkpoint, const std::string& data, const std::string& scope, double tol,
               std::size_t max_iter, std::string out_dir) {
  nrs::AnalysisConfig a;
  a.hessian = true;
  a.scope = nrs::parse_scope(scope);
  a.tol = tol;
  a.max_iter = max_iter;
  if (!(tol > 0.0)) throw nrs::ConfigError("invalid value for '--tol': must be > 0");
  const nrs::DatasetConfig ds = nrs::load_dataset_block(data);
  const nrs::SpectrumResult r = nrs::analyze_checkpoint(checkpoint, ds, a);

  std::cout << "scope=" << nrs::to_string(r.scope) << " lambda_max=" << nrs::format_double(r.lambda_max)
            << " residual=" << nrs::format_double(r.residual) << " iterations=" << r.iterations
            << " converged=" << (r.converged ? "yes" : "no") << '\n';

  if (out_dir.empty()) out_dir = nrs::resolved_output_dir(".");
  std::filesystem::create_directories(out_dir);
  const auto csv_path = std::filesystem::path(out_dir) / "analysis.csv";
  const bool fresh = !std::filesystem::exists(csv_path);
  std::ofstream csv(csv_path, std::ios::app);
  if (fresh) csv << nrs::kSpectrumCsvHeader << '\n';
  nrs::write_spectrum_row(csv, r);
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Neighborhood region smoothing training lab"};
  app.require_subcommand(1);

  std::string config_path;
  bool quiet = false;
  auto* run = app.add_subcommand("run", "Train every strategy/grid point/seed of an experiment config");
  run->add_option("config", config_path, "Experiment config (JSON)")->required();
  run->add_flag("-q,--quiet", quiet, "Do not log per-run progress");

  std::string checkpoint, data, scope = "last_layer", out_dir;
  double tol = 1e-8;
  std::size_t max_iter = 20000;
  auto* analyze = app.add_subcommand("analyze", "Largest Hessian eigenvalue of a checkpoint");
  analyze->add_option("checkpoint", checkpoint, "Checkpoint file")->required();
  analyze->add_option("--data", data, "Dataset block: inline JSON, or a JSON file (bare block or full config)")
      ->required();
  analyze->add_option("--scope", scope, "last_layer or full")->capture_default_str();
  analyze->add_option("--tol", tol, "Power iteration tolerance")->capture_default_str();
  analyze->add_option("--max-iter", max_iter, "Power iteration budget")->capture_default_str();
  analyze->add_option("--out", out_dir, "Directory for analysis.csv (default: $NRS_OUTPUT_DIR or .)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitConfig;
  }

  try {
    if (*run) return do_run(config_path, quiet);
    if (*analyze) return do_analyze(checkpoint, data, scope, tol, max_iter, out_dir);
  } catch (const nrs::ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kExitConfig;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitRuntime;
  }
  return kExitOk;
}

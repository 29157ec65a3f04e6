// trailstop: solve | curves | sweep | verify --config <file>

#include <cstdlib>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#ifdef _OPENMP
#include <omp.h>
#endif

#include "trailstop/cli.hpp"
#include "trailstop/errors.hpp"

namespace {

// Exit codes.
constexpr int kConfigError = 2;
constexpr int kAssumptionError = 3;
constexpr int kOtherError = 4;

std::optional<int> threads_from_env() {
  const char* env = std::getenv("TRAILSTOP_THREADS");
  if (!env || !*env) return std::nullopt;
  try {
    const int n = std::stoi(env);
    if (n >= 1) return n;
  } catch (const std::exception&) {
  }
  throw trailstop::ValidationError(std::string("TRAILSTOP_THREADS must be a positive integer, got '") + env + "'");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Optimal entry and exit levels under a trailing stop"};
  app.require_subcommand(1);
  std::string config_path, out_dir;
  std::optional<std::uint64_t> seed;
  std::optional<int> threads;
  for (const char* name : {"solve", "curves", "sweep", "verify"}) {
    auto* sub = app.add_subcommand(name);
    sub->add_option("--config", config_path, "configuration file")->required()->check(CLI::ExistingFile);
    sub->add_option("--out", out_dir, "output directory (default: output.directory)");
    sub->add_option("--seed", seed, "Monte Carlo seed (default: mc.seed)");
    sub->add_option("--threads", threads, "worker threads (default: TRAILSTOP_THREADS)")->check(CLI::PositiveNumber);
  }
  CLI11_PARSE(app, argc, argv);
  const std::string command = app.get_subcommands().front()->get_name();

  try {
    auto cfg = trailstop::load_config(config_path);
    if (seed) cfg.mc.seed = *seed;
    if (!out_dir.empty()) cfg.output.directory = out_dir;
    if (!threads) threads = threads_from_env();
#ifdef _OPENMP
    if (threads) omp_set_num_threads(*threads);
#endif

    trailstop::cli::Report report;
    if (command == "solve") report = trailstop::cli::cmd_solve(cfg);
    else if (command == "curves") report = trailstop::cli::cmd_curves(cfg);
    else if (command == "sweep") report = trailstop::cli::cmd_sweep(cfg);
    else report = trailstop::cli::cmd_verify(cfg, {.threads = threads.value_or(0)});

    trailstop::cli::write_report(report, cfg.output.directory);
    std::cout << report.summary;
    return report.exit_code;
  } catch (const trailstop::ValidationError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kConfigError;
  } catch (const trailstop::DomainError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kConfigError;
  } catch (const trailstop::AssumptionFailure& e) {
    std::cerr << "assumption failed: " << e.clause() << "\n" << e.what() << "\n";
    return kAssumptionError;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kOtherError;
  }
}

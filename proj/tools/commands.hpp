#pragma once

#include "config.hpp"

#include <string>
#include <vector>

namespace retina::cli {

struct RunOptions {
  /// 0: RETINA_PMOR_THREADS or the OpenMP default.
  int threads = 0;
  bool emit_plot_data = false;
  /// estimate overrides
  std::string mode;
  std::optional<double> alpha_ch_fixed;
  std::optional<double> p_level;
};

/// Runs one subcommand with an already parsed configuration. Writes outputs
/// and resolved_config.json into config.out_dir and returns a one-line
/// summary. Throws ConfigError, std::invalid_argument or NumericalError.
std::string run_subcommand(const std::string& command, const ExperimentConfig& config, const RunOptions& options);

const std::vector<std::string>& subcommands();

/// Full command-line entry point. Exit codes: 0 success, 1 configuration or
/// usage error, 2 numerical failure.
int run_command(int argc, char** argv);

}  // namespace retina::cli

#pragma once

#include "retina/parameters.hpp"

#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace retina::cli {

/// Invalid or unreadable configuration; message names the offending field.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Laser power sequence: constant `level` for `steps` samples, or the
/// piecewise-constant signal levels[i] held for durations[i] samples.
struct InputConfig {
  std::string kind = "constant";
  double level = 0.03;
  int steps = 720;
  std::vector<double> levels;
  std::vector<int> durations;

  std::vector<double> sequence() const;
  bool operator==(const InputConfig&) const = default;
};

struct EstimationConfig {
  std::string mode = "two-param";
  AbsorptionScale alpha_true = reference::mean_alpha;
  AbsorptionScale alpha0{1.0, 1.0};
  double alpha_ch_fixed = reference::mean_alpha.ch;
  double p_level = 0.95;
  /// Absolute noise (K) or relative to max|y_clean|; at most one non-zero.
  double noise_std = 0.0;
  double noise_rel = 0.0;
  std::uint64_t seed = 1;
  /// Measurement CSV; synthetic data from alpha_true when empty.
  std::string data;
  int cohort_size = 20;
  AbsorptionScale cohort_mean = reference::mean_alpha;
  AbsorptionScale cohort_sigma = reference::sigma_alpha;
  std::vector<int> horizons;

  bool operator==(const EstimationConfig&) const = default;
};

struct SensitivityConfig {
  AbsorptionScale alpha = reference::mean_alpha;
  AbsorptionScale sigma = reference::sigma_alpha;
  int steps = 1000;
  double target = 30.0;

  bool operator==(const SensitivityConfig&) const = default;
};

struct MorConfig {
  std::string method = "deim_gb";
  int d = 6;
  int k = 3;
  bool two_param = true;
  double alpha_ch_fixed = reference::mean_alpha.ch;
  AbsorptionScale expansion = reference::mean_alpha;
  int deim_snapshots = 20;
  int basis_grid_2d = 3;
  int basis_grid_1d = 5;
  int scan_grid_2d = 5;
  int scan_grid_1d = 9;
  int horizon = 1000;
  double target = 30.0;
  std::vector<int> orders_d{5, 6, 7, 8};
  std::vector<int> orders_k{1, 2, 3};
  /// Load the ROM from this file instead of building it (mpc).
  std::string rom_path;

  bool operator==(const MorConfig&) const = default;
};

struct MpcConfig {
  int horizon = 20;
  double y_ref = 30.0;
  double y_max = 32.0;
  double u_max = 0.1;
  double rho_u = 5e4;
  std::optional<double> u_ref;
  AbsorptionScale alpha = reference::mean_alpha;
  std::optional<AbsorptionScale> plant_alpha;
  int steps = 200;
  std::string plant = "reduced";
  std::vector<int> horizons{2, 5, 10, 15, 20};

  bool operator==(const MpcConfig&) const = default;
};

struct ExperimentConfig {
  LayerStack layers;
  GridConfig grid;
  ParameterDomain domain;
  InputConfig input;
  /// Parameter for model-info, simulate and synth-data.
  AbsorptionScale alpha = reference::mean_alpha;
  EstimationConfig estimation;
  SensitivityConfig sensitivity;
  MorConfig mor;
  MpcConfig mpc;
  std::string out_dir = "out";

  bool operator==(const ExperimentConfig&) const = default;
};

/// Strict parse: unknown keys and type mismatches raise ConfigError with the
/// field path. An empty or whitespace-only text gives all defaults.
ExperimentConfig parse_config_text(const std::string& text);
ExperimentConfig parse_config(const std::string& path);

/// Fully resolved configuration as JSON text.
std::string dump_config(const ExperimentConfig& config);

/// Cross-field checks (also run by parse_config).
void validate(const ExperimentConfig& config);

}  // namespace retina::cli

#pragma once

#include "retina/model.hpp"
#include "retina/simulate.hpp"

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

namespace retina {

/// Input sequence and measured volume temperatures, sampled every dt.
struct MeasurementSet {
  double dt = 1e-3;
  std::vector<double> u;
  std::vector<double> y;

  std::size_t size() const { return y.size(); }
  void validate() const;
  /// First n samples.
  MeasurementSet prefix(std::size_t n) const;
};

enum class FitMode { two_param, rpe_only };

int free_parameters(FitMode mode);

struct FitOptions {
  int max_iterations = 100;
  double grad_tol = 1e-8;
  double step_tol = 1e-10;
  double alpha_min = 1e-6;
  double alpha_ch_fixed = reference::mean_alpha.ch;
  double cond_limit = 1e14;
  double p_level = 0.95;
};

struct ResidualJacobian {
  Vec F;  // F_i = y_i - C_vol(α) x_i
  Mat J;  // ∂F/∂α, one column per free parameter
};

struct EstimationResult {
  AbsorptionScale alpha;
  FitMode mode = FitMode::two_param;
  double resnorm = 0.0;
  int iterations = 0;
  bool converged = false;
  bool singular = false;
  double condition = 0.0;
  Mat cov;
  double p_level = 0.95;
  Vec half_width;

  /// Fitted values of the free parameters in order (rpe[, ch]).
  Vec free_values() const;
};

struct ConfidenceIntervals {
  double gamma = 0.0;
  Vec half_width;
  Vec low;
  Vec high;
};

/// Residual and Jacobian with the forward sensitivity recursion
/// s_{k+1} = (I - δA_c)⁻¹(s_k + δ ∂B u_k), x_0 = s_0 = 0.
ResidualJacobian residual_jacobian(const Stepper& stepper, const AbsorptionScale& alpha, const MeasurementSet& data,
                                   FitMode mode);

/// Responses of the beam-averaged temperature at every output depth to a unit
/// source at every absorbing depth, for one input sequence. Since B(α) and
/// C_vol(α) are separable in depth,
///   y_k(α) = h(α)ᵀ T_k g(α),
/// so outputs and Jacobians for any α cost O(depths²) per sample.
class ResponseCache {
 public:
  ResponseCache(const Stepper& stepper, const std::vector<double>& u, Policy policy = Policy::parallel);

  std::size_t steps() const { return u_.size(); }
  const std::vector<double>& input() const { return u_; }
  int source_depths() const { return static_cast<int>(src_.size()); }
  int output_depths() const { return static_cast<int>(out_.size()); }

  std::vector<double> outputs(const AbsorptionScale& alpha) const;
  /// Data may be any prefix of the cached input sequence.
  ResidualJacobian residual_jacobian(const AbsorptionScale& alpha, const MeasurementSet& data, FitMode mode) const;

 private:
  const FullOrderModel* model_;
  std::vector<double> u_;
  std::vector<int> src_;  // axial nodes carrying a source
  std::vector<int> out_;  // axial nodes with output weight
  double src_scale_ = 0.0;
  std::vector<Mat> t_;    // t_[k](l, j): output depth l, source depth j
};

using ResidualFunction = std::function<ResidualJacobian(const AbsorptionScale&)>;

/// Levenberg-Marquardt on ½‖F‖². Free parameters are projected to stay above
/// options.alpha_min; in rpe-only mode α_ch is held at options.alpha_ch_fixed.
EstimationResult fit(const ResidualFunction& residual, const AbsorptionScale& alpha0, FitMode mode,
                     const FitOptions& options = {});
EstimationResult fit(const Stepper& stepper, const MeasurementSet& data, const AbsorptionScale& alpha0, FitMode mode,
                     const FitOptions& options = {});
EstimationResult fit(const ResponseCache& cache, const MeasurementSet& data, const AbsorptionScale& alpha0,
                     FitMode mode, const FitOptions& options = {});

/// γ(p): χ² quantile at level p with `dof` degrees of freedom.
double chi2_quantile(double p, int dof);

/// α_i ± sqrt(γ(p) Cov_ii) for the free parameters.
ConfidenceIntervals confidence_intervals(const EstimationResult& result, double p);

struct ParameterStats {
  double mean = 0.0;
  double sigma = 0.0;
  double cv = 0.0;
};

struct CohortStats {
  ParameterStats rpe;
  ParameterStats ch;
  std::size_t count = 0;
};

ParameterStats sample_stats(const std::vector<double>& values);
CohortStats cohort_stats(const std::vector<AbsorptionScale>& fits);

/// y_meas = C_vol(α_true) x_k + ε_k with ε_k ~ N(0, noise_std²).
MeasurementSet synth_measurements(const Stepper& stepper, const AbsorptionScale& alpha_true,
                                  const std::vector<double>& u, double noise_std, std::uint64_t seed);
/// Same, reusing a response cache built for u.
MeasurementSet synth_measurements(const ResponseCache& cache, double dt, const AbsorptionScale& alpha_true,
                                  double noise_std, std::uint64_t seed);

/// Adds i.i.d. Gaussian noise to a clean output sequence.
std::vector<double> add_noise(const std::vector<double>& clean, double noise_std, std::uint64_t seed);

struct HorizonResult {
  std::size_t horizon = 0;
  AbsorptionScale alpha;
  double rel_err_rpe = 0.0;
  double rel_err_ch = 0.0;
  bool converged = false;
  std::string error;
};

/// Fits every prefix length and compares with the full-length fit.
std::vector<HorizonResult> horizon_study(const ResponseCache& cache, const MeasurementSet& data,
                                         const std::vector<std::size_t>& horizons, const AbsorptionScale& alpha0,
                                         FitMode mode, const FitOptions& options = {});

/// Columns t, u, y_meas.
void write_measurements_csv(const std::string& path, const MeasurementSet& data);
MeasurementSet read_measurements_csv(const std::string& path);

}  // namespace retina

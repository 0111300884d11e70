#pragma once

#include "retina/model.hpp"
#include "retina/simulate.hpp"

#include <optional>
#include <string>
#include <vector>

namespace retina {

enum class GParam { rpe, ch };

/// si: lengths in m, μ in 1/m. micron: lengths in µm, μ in 1/µm.
enum class Units { si, micron };

/// L2 norm over the RPE and the choroid of ∂g/∂α_which, adaptive quadrature.
double g_partial_norm(const LayerStack& layers, const AbsorptionScale& alpha, GParam which, Units units);

struct ScaledG {
  double rpe = 0.0;
  double ch = 0.0;
};

/// g-norms multiplied by one standard deviation per parameter.
ScaledG scaled_g_sensitivities(const LayerStack& layers, const AbsorptionScale& alpha, const AbsorptionScale& sigma,
                               Units units = Units::micron);

/// Partial derivatives of the DC gains (K/W per unit α).
struct DcSensitivities {
  double vol_rpe = 0.0;
  double vol_ch = 0.0;
  double peak_rpe = 0.0;
  double peak_ch = 0.0;
};

DcSensitivities dc_sensitivities(const SteadyStateSolver& solver, const FullOrderModel& model,
                                 const AbsorptionScale& alpha);
DcSensitivities dc_sensitivities(const FullOrderModel& model, const AbsorptionScale& alpha);

struct PerturbationResult {
  std::vector<double> t;
  std::vector<double> err_vol;
  std::vector<double> err_peak;
  double u = 0.0;
};

/// |y(ᾱ + δα) - y(ᾱ)| under a common constant input. Without an explicit
/// input the steady-state control of ᾱ for `target` K at the peak is used.
PerturbationResult perturbation_experiment(const Stepper& stepper, const AbsorptionScale& alpha,
                                           const AbsorptionScale& delta, int steps,
                                           std::optional<double> u = std::nullopt, double target = 30.0);

/// Columns t, err_vol, err_peak.
void write_perturbation_csv(const std::string& path, const PerturbationResult& res);

}  // namespace retina

#include "retina/sensitivity.hpp"

#include <boost/math/quadrature/gauss_kronrod.hpp>

#include <cmath>
#include <fstream>
#include <iomanip>
#include <stdexcept>

namespace retina {

namespace {

LayerStack in_units(const LayerStack& layers, Units units) {
  if (units == Units::si) return layers;
  LayerStack s = layers;
  s.d_retina *= 1e6;
  s.d_rpe *= 1e6;
  s.d_unpigmented *= 1e6;
  s.d_choroid *= 1e6;
  s.d_sclera *= 1e6;
  s.mu_rpe *= 1e-6;
  s.mu_ch *= 1e-6;
  return s;
}

double squared_integral(const LayerStack& L, const AbsorptionScale& alpha, DerivOrder order, double a, double b) {
  using boost::math::quadrature::gauss_kronrod;
  auto f = [&](double z) {
    const double v = absorbed_density(L, alpha, z, order);
    return v * v;
  };
  return gauss_kronrod<double, 31>::integrate(f, a, b, 15, 1e-10);
}

}  // namespace

double g_partial_norm(const LayerStack& layers, const AbsorptionScale& alpha, GParam which, Units units) {
  const LayerStack L = in_units(layers, units);
  const DerivOrder order = which == GParam::rpe ? DerivOrder{1, 0} : DerivOrder{0, 1};
  const double rpe = squared_integral(L, alpha, order, L.rpe_top(), L.rpe_bottom());
  const double ch = squared_integral(L, alpha, order, L.choroid_top(), L.choroid_bottom());
  return std::sqrt(rpe + ch);
}

ScaledG scaled_g_sensitivities(const LayerStack& layers, const AbsorptionScale& alpha, const AbsorptionScale& sigma,
                               Units units) {
  if (sigma.rpe < 0 || sigma.ch < 0) throw std::invalid_argument("scaled_g_sensitivities: sigma must be >= 0");
  return {g_partial_norm(layers, alpha, GParam::rpe, units) * sigma.rpe,
          g_partial_norm(layers, alpha, GParam::ch, units) * sigma.ch};
}

DcSensitivities dc_sensitivities(const SteadyStateSolver& solver, const FullOrderModel& model,
                                 const AbsorptionScale& alpha) {
  const Vec xbar = solver.solve(assemble_input(model, alpha));
  const Vec c = assemble_output_vol(model, alpha);
  const int peak = model.peak_index();
  DcSensitivities s;
  for (Deriv d : {Deriv::d_rpe, Deriv::d_ch}) {
    const Vec dx = solver.solve(assemble_input(model, alpha, d));
    const double dvol = assemble_output_vol(model, alpha, d).dot(xbar) + c.dot(dx);
    const double dpeak = dx[peak];
    if (d == Deriv::d_rpe) {
      s.vol_rpe = dvol;
      s.peak_rpe = dpeak;
    } else {
      s.vol_ch = dvol;
      s.peak_ch = dpeak;
    }
  }
  return s;
}

DcSensitivities dc_sensitivities(const FullOrderModel& model, const AbsorptionScale& alpha) {
  return dc_sensitivities(SteadyStateSolver(model), model, alpha);
}

PerturbationResult perturbation_experiment(const Stepper& stepper, const AbsorptionScale& alpha,
                                           const AbsorptionScale& delta, int steps, std::optional<double> u,
                                           double target) {
  if (steps < 1) throw std::invalid_argument("perturbation_experiment: steps must be positive");
  const FullOrderModel& m = stepper.model();
  PerturbationResult res;
  res.u = u ? *u : steady_state_control(m, alpha, target);
  const std::vector<double> useq(steps, res.u);
  const AbsorptionScale moved{alpha.rpe + delta.rpe, alpha.ch + delta.ch};
  const Trajectory a = simulate(stepper, alpha, useq);
  const Trajectory b = simulate(stepper, moved, useq);
  res.t = a.t;
  res.err_vol.resize(steps);
  res.err_peak.resize(steps);
  for (int k = 0; k < steps; ++k) {
    res.err_vol[k] = std::abs(b.y_vol[k] - a.y_vol[k]);
    res.err_peak[k] = std::abs(b.y_peak[k] - a.y_peak[k]);
  }
  return res;
}

void write_perturbation_csv(const std::string& path, const PerturbationResult& res) {
  std::ofstream f(path);
  if (!f) throw std::runtime_error("cannot open " + path);
  f << std::setprecision(10) << "t,err_vol,err_peak\n";
  for (std::size_t k = 0; k < res.t.size(); ++k) f << res.t[k] << ',' << res.err_vol[k] << ',' << res.err_peak[k] << '\n';
}

}  // namespace retina

#include "retina/simulate.hpp"

#include <cmath>
#include <fstream>
#include <iomanip>
#include <stdexcept>

namespace retina {

namespace {

template <class Solver>
void check_factorization(const Solver& s, const char* what) {
  if (s.info() != Eigen::Success) throw NumericalError(std::string(what) + ": sparse factorization failed");
}

}  // namespace

Stepper::Stepper(const FullOrderModel& model, double dt) : model_(&model), dt_(dt) {
  if (!(dt > 0.0)) throw std::invalid_argument("stepper: dt must be positive");
  SpMat k = -dt * model.symmetric_operator();
  k += SpMat(model.mass_weights().asDiagonal());
  ldlt_.compute(k);
  check_factorization(ldlt_, "stepper");
}

Vec Stepper::solve(const Vec& v) const { return ldlt_.solve(model_->mass_weights().cwiseProduct(v)); }

Vec Stepper::solve_transpose(const Vec& v) const { return model_->mass_weights().cwiseProduct(ldlt_.solve(v)); }

Mat Stepper::solve(const Mat& v) const { return ldlt_.solve(model_->mass_weights().asDiagonal() * v); }

Mat Stepper::solve_transpose(const Mat& v) const {
  return model_->mass_weights().asDiagonal() * Mat(ldlt_.solve(v));
}

void Stepper::step(Vec& x, const Vec& b, double u) const {
  if (u != 0.0) x.noalias() += (dt_ * u) * b;
  x = solve(x);
}

Stepper make_stepper(const FullOrderModel& model, double dt) { return Stepper(model, dt); }

Trajectory simulate(const Stepper& stepper, const Vec& b, const Vec& c_vol, const Vec& c_peak,
                    const std::vector<double>& u, const Vec& x0, bool store_states) {
  const int n = stepper.size();
  if (b.size() != n || c_vol.size() != n || c_peak.size() != n || x0.size() != n)
    throw std::invalid_argument("simulate: dimension mismatch");
  for (double v : u)
    if (!std::isfinite(v)) throw std::invalid_argument("simulate: input sequence must be finite");
  const std::size_t steps = u.size();
  Trajectory tr;
  tr.dt = stepper.dt();
  tr.t.resize(steps);
  tr.u = u;
  tr.y_vol.resize(steps);
  tr.y_peak.resize(steps);
  if (store_states) tr.states.resize(n, static_cast<Eigen::Index>(steps));
  Vec x = x0;
  for (std::size_t k = 0; k < steps; ++k) {
    tr.t[k] = static_cast<double>(k) * stepper.dt();
    tr.y_vol[k] = c_vol.dot(x);
    tr.y_peak[k] = c_peak.dot(x);
    if (store_states) tr.states.col(static_cast<Eigen::Index>(k)) = x;
    if (k + 1 < steps) stepper.step(x, b, u[k]);
  }
  return tr;
}

Trajectory simulate(const Stepper& stepper, const AbsorptionScale& alpha, const std::vector<double>& u,
                    const Vec& x0, bool store_states) {
  const FullOrderModel& m = stepper.model();
  return simulate(stepper, assemble_input(m, alpha), assemble_output_vol(m, alpha), assemble_output_peak(m), u, x0,
                  store_states);
}

Trajectory simulate(const Stepper& stepper, const AbsorptionScale& alpha, const std::vector<double>& u) {
  return simulate(stepper, alpha, u, Vec::Zero(stepper.size()));
}

std::vector<Trajectory> simulate_many(const Stepper& stepper, const std::vector<AbsorptionScale>& alphas,
                                      const std::vector<std::vector<double>>& u_per_case, Policy policy) {
  const int cases = static_cast<int>(alphas.size());
  if (u_per_case.size() != 1 && static_cast<int>(u_per_case.size()) != cases)
    throw std::invalid_argument("simulate_many: need one input sequence or one per case");
  std::vector<Trajectory> out(cases);
  auto run = [&](int c) {
    const auto& u = u_per_case.size() == 1 ? u_per_case[0] : u_per_case[c];
    out[c] = simulate(stepper, alphas[c], u);
  };
  if (policy == Policy::parallel) {
#pragma omp parallel for schedule(dynamic)
    for (int c = 0; c < cases; ++c) run(c);
  } else {
    for (int c = 0; c < cases; ++c) run(c);
  }
  return out;
}

SteadyStateSolver::SteadyStateSolver(const FullOrderModel& model) : model_(&model) {
  ldlt_.compute(-model.symmetric_operator());
  check_factorization(ldlt_, "steady state");
}

// A x = b  <=>  (M A) x = M b, and M A is symmetric negative definite.
Vec SteadyStateSolver::solve(const Vec& b) const { return ldlt_.solve(model_->mass_weights().cwiseProduct(b)); }

Vec SteadyStateSolver::solve_transpose(const Vec& c) const {
  return model_->mass_weights().cwiseProduct(ldlt_.solve(c));
}

DcGain dc_gain(const SteadyStateSolver& solver, const FullOrderModel& model, const AbsorptionScale& alpha) {
  const Vec xbar = solver.solve(assemble_input(model, alpha));
  return {assemble_output_vol(model, alpha).dot(xbar), xbar[model.peak_index()]};
}

DcGain dc_gain(const FullOrderModel& model, const AbsorptionScale& alpha) {
  return dc_gain(SteadyStateSolver(model), model, alpha);
}

double steady_state_control(const SteadyStateSolver& solver, const FullOrderModel& model,
                            const AbsorptionScale& alpha, double y_peak_target) {
  const double g = dc_gain(solver, model, alpha).peak;
  if (!(g > 0.0)) throw NumericalError("steady_state_control: peak gain is not positive");
  return y_peak_target / g;
}

double steady_state_control(const FullOrderModel& model, const AbsorptionScale& alpha, double y_peak_target) {
  return steady_state_control(SteadyStateSolver(model), model, alpha, y_peak_target);
}

void write_trajectory_csv(const std::string& path, const Trajectory& traj) {
  std::ofstream f(path);
  if (!f) throw std::runtime_error("cannot open " + path);
  f << std::setprecision(10) << "t,u,y_vol,y_peak\n";
  for (std::size_t k = 0; k < traj.size(); ++k)
    f << traj.t[k] << ',' << traj.u[k] << ',' << traj.y_vol[k] << ',' << traj.y_peak[k] << '\n';
}

}  // namespace retina

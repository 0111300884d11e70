#pragma once

#include "retina/model.hpp"
#include "retina/types.hpp"

#include <Eigen/SparseCholesky>

#include <string>
#include <vector>

namespace retina {

/// Implicit Euler propagator x⁺ = (I - δA_c)⁻¹ v with a cached sparse
/// factorization. The factorization is of the symmetric positive definite
/// M - δ M A_c, which is equivalent since M is a positive diagonal.
class Stepper {
 public:
  Stepper(const FullOrderModel& model, double dt);

  const FullOrderModel& model() const { return *model_; }
  double dt() const { return dt_; }
  int size() const { return model_->size(); }

  /// (I - δA_c)⁻¹ v
  Vec solve(const Vec& v) const;
  /// (I - δA_c)⁻ᵀ v
  Vec solve_transpose(const Vec& v) const;
  /// Multi-column variants.
  Mat solve(const Mat& v) const;
  Mat solve_transpose(const Mat& v) const;

  /// One step x⁺ = (I - δA_c)⁻¹ (x + δ b u), in place.
  void step(Vec& x, const Vec& b, double u) const;

 private:
  const FullOrderModel* model_;
  double dt_;
  Eigen::SimplicialLDLT<SpMat> ldlt_;
};

Stepper make_stepper(const FullOrderModel& model, double dt);

struct Trajectory {
  double dt = 0.0;
  std::vector<double> t;
  std::vector<double> u;
  std::vector<double> y_vol;
  std::vector<double> y_peak;
  /// Column k holds x_k; empty unless requested.
  Mat states;

  std::size_t size() const { return t.size(); }
};

/// Runs x_{k+1} = (I - δA_c)⁻¹(x_k + δ B u_k) for k = 0..N-1 and records
/// y_k = C x_k for k = 0..N-1 (N = u.size()).
Trajectory simulate(const Stepper& stepper, const Vec& b, const Vec& c_vol, const Vec& c_peak,
                    const std::vector<double>& u, const Vec& x0, bool store_states = false);
Trajectory simulate(const Stepper& stepper, const AbsorptionScale& alpha, const std::vector<double>& u,
                    const Vec& x0, bool store_states = false);
Trajectory simulate(const Stepper& stepper, const AbsorptionScale& alpha, const std::vector<double>& u);

/// One simulation per parameter value with a shared stepper and zero initial
/// state. `u_per_case` is either one sequence for all cases or one per case.
std::vector<Trajectory> simulate_many(const Stepper& stepper, const std::vector<AbsorptionScale>& alphas,
                                      const std::vector<std::vector<double>>& u_per_case,
                                      Policy policy = Policy::parallel);

/// Factorization of -A_c for steady states and DC gains.
class SteadyStateSolver {
 public:
  explicit SteadyStateSolver(const FullOrderModel& model);
  /// x̄ = -A_c⁻¹ b, the fixed point of the implicit Euler recursion for input b.
  Vec solve(const Vec& b) const;
  /// -A_c⁻ᵀ c
  Vec solve_transpose(const Vec& c) const;

 private:
  const FullOrderModel* model_;
  Eigen::SimplicialLDLT<SpMat> ldlt_;
};

struct DcGain {
  double vol = 0.0;   // K/W
  double peak = 0.0;  // K/W
};

/// G = -C A_c⁻¹ B(α).
DcGain dc_gain(const FullOrderModel& model, const AbsorptionScale& alpha);
DcGain dc_gain(const SteadyStateSolver& solver, const FullOrderModel& model, const AbsorptionScale& alpha);

/// Constant input whose steady peak temperature equals the target.
double steady_state_control(const FullOrderModel& model, const AbsorptionScale& alpha, double y_peak_target);
double steady_state_control(const SteadyStateSolver& solver, const FullOrderModel& model,
                            const AbsorptionScale& alpha, double y_peak_target);

/// Columns t, u, y_vol, y_peak.
void write_trajectory_csv(const std::string& path, const Trajectory& traj);

}  // namespace retina

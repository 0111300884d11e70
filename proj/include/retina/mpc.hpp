#pragma once

#include "retina/mor.hpp"
#include "retina/simulate.hpp"

#include <optional>
#include <string>
#include <vector>

namespace retina {

// ---------------------------------------------------------------------------
// Quadratic programs

/// min ½ xᵀHx + qᵀx + offset  s.t.  l ≤ A x ≤ u. Infinite bounds are allowed.
struct QpProblem {
  Mat H;
  Vec q;
  double offset = 0.0;
  Mat A;
  Vec l;
  Vec u;

  int variables() const { return static_cast<int>(q.size()); }
  int constraints() const { return static_cast<int>(A.rows()); }
  double objective(const Vec& x) const { return 0.5 * x.dot(H * x) + q.dot(x) + offset; }
  void validate() const;
};

enum class QpStatus { solved, inaccurate, infeasible };

std::string to_string(QpStatus s);

/// ADMM (operator splitting with over-relaxation) on the equilibrated problem,
/// followed by active-set polishing.
struct QpSettings {
  /// Absolute tolerance on the unscaled primal and dual residuals.
  double eps_abs = 1e-7;
  /// Relative part, only noticeable for badly scaled data.
  double eps_rel = 1e-12;
  double eps_infeasible = 1e-9;
  int max_iterations = 10000;
  double rho = 0.1;
  double sigma = 1e-6;
  double alpha = 1.6;
  bool scaling = true;
  int scaling_iterations = 10;
  bool adaptive_rho = true;
  int adapt_interval = 25;
  bool polish = true;
  /// Residual level (relative) at which the first polish is attempted.
  double polish_trigger = 1e-3;
};

struct QpWarmStart {
  Vec x;
  /// Optional, empty for primal-only.
  Vec y;
};

struct QpSolution {
  Vec x;
  /// Multipliers: y_i ≥ 0 on active upper bounds, ≤ 0 on active lower bounds.
  Vec y;
  QpStatus status = QpStatus::inaccurate;
  int iterations = 0;
  bool polished = false;
  double primal_residual = 0.0;
  double dual_residual = 0.0;
  double objective = 0.0;
};

struct KktResiduals {
  /// max bound violation of A x
  double primal = 0.0;
  /// ‖Hx + q + Aᵀy‖∞
  double dual = 0.0;
  /// max |y_i| · distance to the bound its sign points at
  double complementarity = 0.0;
  /// max wrong-sign multiplier magnitude
  double sign = 0.0;

  double max() const;
};

KktResiduals kkt_residuals(const QpProblem& qp, const Vec& x, const Vec& y);

QpSolution solve_qp(const QpProblem& qp, const QpSettings& settings = {}, const QpWarmStart* warm = nullptr);

// ---------------------------------------------------------------------------
// Optimal control problem

struct OcpSpec {
  int horizon = 20;
  double y_ref = 30.0;
  double y_max = 32.0;
  double u_max = 0.1;
  double rho_u = 5e4;
  /// Steady-state control of the prediction model when unset.
  std::optional<double> u_ref;
  /// Parameter used by the controller.
  AbsorptionScale alpha = reference::mean_alpha;

  void validate() const;
};

/// Dense condensed QP of the tracking problem over inputs u_0..u_{N-1}:
/// cost Σ_{k<N} |c_peak x_k - y_ref|² + ρ_u |u_k - u_ref|², bounds 0 ≤ u ≤ u_max,
/// c_peak x_k ≤ y_max for k = 1..N-1 (the k = 0 term does not depend on u).
struct CondensedQP {
  QpProblem qp;
  /// Predicted free response c_peak A^k x0, k = 0..N-1.
  Vec free_response;
  /// c_peak x0 already exceeds y_max.
  bool initial_violation = false;
};

/// x⁰-independent parts of the condensed problem.
class Condenser {
 public:
  /// `sys` provides Ad, bd and the peak row c.row(1).
  Condenser(const ReducedSystem& sys, const OcpSpec& spec);

  CondensedQP condense(const Vec& x0) const;

  int horizon() const { return spec_.horizon; }
  double u_ref() const { return u_ref_; }
  int state_size() const { return static_cast<int>(phi_.cols()); }
  /// G(k, i) = c A^{k-1-i} b for i < k.
  const Mat& markov() const { return g_; }
  /// Φ(k, :) = c A^k
  const Mat& free_map() const { return phi_; }
  const OcpSpec& spec() const { return spec_; }

 private:
  OcpSpec spec_;
  double u_ref_ = 0.0;
  Mat g_;
  Mat phi_;
  Mat h_;
  Mat a_;
};

/// y_ref / (c_peak (I - Ad)⁻¹ bd)
double reduced_steady_state_control(const ReducedSystem& sys, double y_ref);

CondensedQP condense(const ReducedSystem& sys, const OcpSpec& spec, const Vec& x0);

// ---------------------------------------------------------------------------
// Closed loop

enum class PlantKind { reduced, full };

struct ClosedLoopOptions {
  int steps = 200;
  PlantKind plant = PlantKind::reduced;
  /// Parameter of the simulated plant; defaults to the controller's.
  std::optional<AbsorptionScale> plant_alpha;
  bool warm_start = true;
  /// Seed the first solve with u ≡ u_ref instead of a cold start.
  bool seed_first = true;
  /// Additionally solve every step cold (untimed) to record cold iterations.
  bool compare_cold = false;
  QpSettings qp;
};

struct ClosedLoopResult {
  double dt = 0.0;
  double u_ref = 0.0;
  std::vector<double> t;
  std::vector<double> u;
  std::vector<double> y_vol;
  std::vector<double> y_peak;
  std::vector<int> iterations;
  std::vector<int> cold_iterations;
  std::vector<double> solve_seconds;
  std::vector<double> cost;
  std::vector<QpStatus> status;
  std::vector<KktResiduals> kkt;
  int failed_steps = 0;
  /// max over steps of (u - u_max)+, (-u)+ and (y_peak - y_max)+ of the plant.
  double max_violation = 0.0;

  double average_solve_ms() const;
  double max_solve_ms() const;
};

/// The controller predicts with rom_instantiate(rom, spec.alpha). A full
/// plant requires `full_plant` and is observed through x_r = Wᵀx.
ClosedLoopResult run_closed_loop(const OcpSpec& spec, const ParametricROM& rom, const ClosedLoopOptions& options,
                                 const Stepper* full_plant = nullptr);

/// t, u, y_vol, y_peak, qp_iters, solve_ms
void write_closed_loop_csv(const std::string& path, const ClosedLoopResult& result);

struct TimingRow {
  int horizon = 0;
  double avg_ms = 0.0;
  double max_ms = 0.0;
};

/// Header row N, then avg and max rows, one column per horizon.
void write_timing_summary_csv(const std::string& path, const std::vector<TimingRow>& rows);

}  // namespace retina

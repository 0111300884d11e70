#pragma once

#include "retina/irka.hpp"
#include "retina/model.hpp"
#include "retina/simulate.hpp"

#include <functional>
#include <string>
#include <vector>

namespace retina {

// ---------------------------------------------------------------------------
// DEIM

/// Greedy DEIM interpolation indices for the columns of U (orthonormal).
/// Ties go to the smallest index. Throws NumericalError on a vanishing
/// residual.
std::vector<int> deim_select(const Mat& u);

/// Σ_{i<k} σ_i² / Σ σ_i²
double cumulative_energy(const Vec& singular_values, int k);

/// f(α) ≈ U (PᵀU)⁻¹ Pᵀ f(α).
struct DeimOperator {
  Mat U;
  std::vector<int> indices;
  /// (PᵀU)⁻¹
  Mat interp;
  double condition = 0.0;
  /// Singular values of the full snapshot matrix.
  Vec singular_values;

  int order() const { return static_cast<int>(indices.size()); }
  Vec sample(const Vec& f) const;
  /// U (PᵀU)⁻¹ sampled
  Vec reconstruct_from_samples(const Vec& sampled) const;
  Vec reconstruct(const Vec& f) const { return reconstruct_from_samples(sample(f)); }
};

/// Left singular vectors of the snapshot matrix truncated to k, then greedy
/// index selection.
DeimOperator build_deim(const Mat& snapshots, int k);

// ---------------------------------------------------------------------------
// Parameter sampling

/// Uniform grid over D, α_rpe fastest.
std::vector<AbsorptionScale> parameter_grid(const ParameterDomain& domain, int n_rpe, int n_ch);
/// Uniform points in α_rpe at fixed α_ch.
std::vector<AbsorptionScale> parameter_line(const ParameterDomain& domain, int n_rpe, double alpha_ch);

/// Setup shared by the one- and two-parameter reduction studies.
struct MorStudy {
  ParameterDomain domain;
  bool two_param = true;
  double alpha_ch_fixed = reference::mean_alpha.ch;
  /// Taylor expansion point (α_ch replaced by alpha_ch_fixed in 1-parameter mode).
  AbsorptionScale expansion = reference::mean_alpha;
  int deim_snapshots = 20;
  /// Points per axis of the global-basis IRKA grid (two_param) ...
  int basis_grid_2d = 3;
  /// ... or along α_rpe (one parameter).
  int basis_grid_1d = 5;
  int scan_grid_2d = 5;
  int scan_grid_1d = 9;
  int horizon = 1000;
  double target = 30.0;
  IrkaOptions irka;

  AbsorptionScale expansion_point() const;
  std::vector<AbsorptionScale> deim_params() const;
  std::vector<AbsorptionScale> basis_params() const;
  std::vector<AbsorptionScale> scan_params() const;
};

// ---------------------------------------------------------------------------
// Global basis

/// Local IRKA (B(α_i), [C_vol(α_i); C_peak]) at every snapshot, SVD of the
/// stacked local bases truncated to d, then bi-orthonormalization. Failing
/// snapshots are skipped; fewer than two survivors (one if only one was
/// given) is fatal.
ProjectionPair global_basis(const FullOrderModel& model, const std::vector<AbsorptionScale>& snapshots,
                            int d_local, int d, const IrkaOptions& options = {},
                            Policy policy = Policy::parallel);

// ---------------------------------------------------------------------------
// Parametric reduced models

enum class RomVariant { taylor, deim_gb };

std::string to_string(RomVariant v);

/// Reduced matrices at one α. Continuous: x' = A x + b u. Discrete (projected
/// implicit Euler): x_{k+1} = Ad x_k + bd u_k. Outputs y = c x.
struct ReducedSystem {
  Mat A;
  Vec b;
  Mat Ad;
  Vec bd;
  /// Row 0: y_vol, row 1: y_peak.
  Mat c;
};

struct ParametricROM {
  RomVariant variant = RomVariant::deim_gb;
  int d = 0;
  /// k_D or k_T
  int k = 0;
  double dt = 0.0;
  bool two_param = true;
  LayerStack layers;

  Mat Ar;
  Mat Ard;
  Mat V;
  Mat W;

  // deim_gb
  std::vector<int> b_indices;
  std::vector<DepthStencil> b_stencils;
  /// Wᵀ U_B (P_BᵀU_B)⁻¹ and δ Wᵀ(I - δA)⁻¹ U_B (P_BᵀU_B)⁻¹, d×k_D
  Mat b_factor;
  Mat b_factor_d;
  std::vector<int> c_indices;
  std::vector<DepthStencil> c_stencils;
  std::vector<bool> c_is_peak;
  /// (P_CᵀU_C)⁻ᵀ U_Cᵀ V, k_D×d
  Mat c_factor;
  Vec b_singular_values;
  Vec c_singular_values;
  std::vector<AbsorptionScale> deim_snapshots;
  std::vector<AbsorptionScale> basis_snapshots;

  // taylor
  AbsorptionScale expansion;
  /// Offsets are measured in units of `taylor_scale` per parameter.
  AbsorptionScale taylor_scale{1.0, 1.0};
  std::vector<std::pair<int, int>> monomials;
  /// Columns: Wᵀ B_ij, δ Wᵀ(I - δA)⁻¹ B_ij and Vᵀ C_vol,ij (all pre-divided
  /// by i! j! and scaled).
  Mat b_table;
  Mat b_table_d;
  Mat c_vol_table;
  Vec c_peak_r;

  /// Eigenvalues of Ar in the open left half plane and of Ard inside the
  /// unit disc.
  bool stable = false;
  /// Non-empty when the build failed (†).
  std::string failure;

  bool ok() const { return failure.empty() && stable; }
};

ParametricROM build_deim_gb_rom(const FullOrderModel& model, const MorStudy& study, int d, int k_deim,
                                Policy policy = Policy::parallel);
/// Same, with an already computed global basis.
ParametricROM build_deim_gb_rom(const FullOrderModel& model, const MorStudy& study, const ProjectionPair& basis,
                                int k_deim);
ParametricROM build_taylor_rom(const FullOrderModel& model, const MorStudy& study, int d, int k_taylor);

/// Taylor coefficient vectors B_ij (or C_vol,ij) at α⁰, divided by i! j! and
/// multiplied by scale_rpe^i scale_ch^j.
Mat taylor_coefficients_input(const FullOrderModel& model, const AbsorptionScale& a0,
                              const std::vector<std::pair<int, int>>& monomials, const AbsorptionScale& scale);
Mat taylor_coefficients_output(const FullOrderModel& model, const AbsorptionScale& a0,
                               const std::vector<std::pair<int, int>>& monomials, const AbsorptionScale& scale);
/// (i, j) with i + j ≤ k (two parameters) or (i, 0) with i ≤ k.
std::vector<std::pair<int, int>> taylor_monomials(int k, bool two_param);
/// Σ coeff.col(m) ((α - α⁰)/scale)^(i_m, j_m)
Vec taylor_sum(const Mat& coeff, const std::vector<std::pair<int, int>>& monomials, const AbsorptionScale& a0,
               const AbsorptionScale& scale, const AbsorptionScale& alpha);

/// Exact Petrov-Galerkin projection of the full model at α (no parameter
/// reduction); reference for the parametric variants.
ReducedSystem project_system(const Stepper& stepper, const ProjectionPair& basis, const AbsorptionScale& alpha);

/// Online evaluation; cost independent of the full order.
ReducedSystem rom_instantiate(const ParametricROM& rom, const AbsorptionScale& alpha);

struct ReducedTrajectory {
  std::vector<double> y_vol;
  std::vector<double> y_peak;
};

/// y_k = c x_k for k = 0..N-1, x_{k+1} = Ad x_k + bd u_k.
ReducedTrajectory simulate_reduced(const ReducedSystem& sys, const std::vector<double>& u,
                                   const Vec& x0 = Vec());

// ---------------------------------------------------------------------------
// Error scans

/// Full-order reference trajectories over an α grid with the per-α constant
/// steady-state control.
struct ScanReference {
  std::vector<AbsorptionScale> alphas;
  std::vector<std::vector<double>> u;
  std::vector<Trajectory> full;
};

ScanReference make_scan_reference(const Stepper& stepper, const std::vector<AbsorptionScale>& alphas, int horizon,
                                  double target, Policy policy = Policy::parallel);

struct ErrorMetrics {
  double inf_vol = 0.0;
  double inf_peak = 0.0;
  double l2_vol = 0.0;
  double l2_peak = 0.0;
  bool failed = false;
};

/// Relative errors per α (samples with |y_f| < 1e-9 excluded).
ErrorMetrics trajectory_errors(const ReducedTrajectory& rom, const Trajectory& full);

/// Worst case over the reference grid. An unstable or failed ROM gives a
/// failed (†) result.
ErrorMetrics error_scan(const ParametricROM& rom, const ScanReference& ref, Policy policy = Policy::parallel);
/// Per-α metrics (for spot checks and plots).
std::vector<ErrorMetrics> error_scan_pointwise(const ParametricROM& rom, const ScanReference& ref,
                                               Policy policy = Policy::parallel);
/// Same for an arbitrary reduced system family.
std::vector<ErrorMetrics> error_scan_pointwise(const std::function<ReducedSystem(const AbsorptionScale&)>& family,
                                               const ScanReference& ref, Policy policy = Policy::parallel);
ErrorMetrics worst_case(const std::vector<ErrorMetrics>& pointwise);

struct ErrorCell {
  RomVariant method = RomVariant::deim_gb;
  int k = 0;
  int d = 0;
  ErrorMetrics metrics;
};

struct ErrorTable {
  std::vector<ErrorCell> cells;

  const ErrorCell* find(RomVariant method, int k, int d) const;
};

/// Sweep over d and k for both methods on a shared reference.
ErrorTable compare_mor(const FullOrderModel& model, const MorStudy& study, const ScanReference& ref,
                       const std::vector<int>& orders_d, const std::vector<int>& orders_k,
                       Policy policy = Policy::parallel);

enum class ErrorMetric { inf, l2 };

/// Rows: method, output, k; columns: one per d. "†" marks failures.
void write_error_table_csv(const std::string& path, const ErrorTable& table, ErrorMetric metric);
/// index, σ_B, cumulative energy B, σ_C, cumulative energy C
void write_singular_values_csv(const std::string& path, const Vec& sigma_b, const Vec& sigma_c);

/// Snapshot matrices used by the DEIM variant.
Mat input_snapshots(const FullOrderModel& model, const std::vector<AbsorptionScale>& params);
/// [C_vol(α_1)ᵀ, C_peakᵀ, C_vol(α_2)ᵀ, C_peakᵀ, ...]
Mat output_snapshots(const FullOrderModel& model, const std::vector<AbsorptionScale>& params);

// ---------------------------------------------------------------------------
// Serialization

void save_rom(const std::string& path, const ParametricROM& rom);
ParametricROM load_rom(const std::string& path);

}  // namespace retina

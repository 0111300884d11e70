#include "retina/mor.hpp"

#include <Eigen/Eigenvalues>
#include <Eigen/SVD>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <stdexcept>

namespace retina {

namespace {

Mat left_singular_vectors(const Mat& x, Vec* sigma) {
  Eigen::BDCSVD<Mat> svd(x, Eigen::ComputeThinU);
  if (sigma) *sigma = svd.singularValues();
  return svd.matrixU();
}

double spectral_radius(const Mat& a) {
  if (a.size() == 0) return 0.0;
  Eigen::EigenSolver<Mat> es(a, false);
  return es.eigenvalues().cwiseAbs().maxCoeff();
}

Mat output_rows(const FullOrderModel& model, const AbsorptionScale& alpha) {
  Mat c(2, model.size());
  c.row(0) = assemble_output_vol(model, alpha).transpose();
  c.row(1) = assemble_output_peak(model).transpose();
  return c;
}

double factorial(int k) {
  double f = 1.0;
  for (int i = 2; i <= k; ++i) f *= i;
  return f;
}

void mark_stability(ParametricROM& rom) {
  rom.stable = is_stable(rom.Ar) && spectral_radius(rom.Ard) < 1.0;
}

}  // namespace

// ---------------------------------------------------------------------------
// DEIM

std::vector<int> deim_select(const Mat& u) {
  const int n = static_cast<int>(u.rows());
  const int k = static_cast<int>(u.cols());
  if (k < 1 || k > n) throw std::invalid_argument("deim_select: need 1 <= k <= n");
  auto argmax_abs = [](const Vec& r) {
    Eigen::Index best = 0;
    for (Eigen::Index i = 1; i < r.size(); ++i)
      if (std::abs(r[i]) > std::abs(r[best])) best = i;
    return static_cast<int>(best);
  };
  std::vector<int> idx;
  idx.push_back(argmax_abs(u.col(0)));
  if (!(std::abs(u(idx[0], 0)) > 0.0)) throw NumericalError("deim_select: first basis vector is zero");
  for (int l = 1; l < k; ++l) {
    Mat pu(l, l);
    Vec pr(l);
    for (int a = 0; a < l; ++a) {
      pu.row(a) = u.row(idx[a]).head(l);
      pr[a] = u(idx[a], l);
    }
    const Vec c = pu.partialPivLu().solve(pr);
    const Vec r = u.col(l) - u.leftCols(l) * c;
    const int j = argmax_abs(r);
    if (!(std::abs(r[j]) > 1e-14 * u.col(l).cwiseAbs().maxCoeff()))
      throw NumericalError("deim_select: residual vanished at step " + std::to_string(l + 1) +
                           " (basis is rank deficient)");
    idx.push_back(j);
  }
  return idx;
}

double cumulative_energy(const Vec& s, int k) {
  const double total = s.squaredNorm();
  if (total == 0.0) return 1.0;
  const int m = std::min<int>(k, static_cast<int>(s.size()));
  return s.head(m).squaredNorm() / total;
}

Vec DeimOperator::sample(const Vec& f) const {
  Vec s(order());
  for (int i = 0; i < order(); ++i) s[i] = f[indices[i]];
  return s;
}

Vec DeimOperator::reconstruct_from_samples(const Vec& sampled) const { return U * (interp * sampled); }

DeimOperator build_deim(const Mat& snapshots, int k) {
  if (k < 1 || k > snapshots.cols()) throw std::invalid_argument("build_deim: need 1 <= k <= #snapshots");
  DeimOperator op;
  const Mat u = left_singular_vectors(snapshots, &op.singular_values);
  op.U = u.leftCols(k);
  op.indices = deim_select(op.U);
  Mat pu(k, k);
  for (int i = 0; i < k; ++i) pu.row(i) = op.U.row(op.indices[i]);
  Eigen::JacobiSVD<Mat> svd(pu);
  const Vec s = svd.singularValues();
  op.condition = s[0] / s[k - 1];
  if (op.condition > 1e12) std::cerr << "warning: DEIM interpolation matrix has condition " << op.condition << "\n";
  op.interp = pu.fullPivLu().inverse();
  return op;
}

// ---------------------------------------------------------------------------
// Parameter sampling

std::vector<AbsorptionScale> parameter_grid(const ParameterDomain& dom, int n_rpe, int n_ch) {
  if (n_rpe < 1 || n_ch < 1) throw std::invalid_argument("parameter_grid: need at least one point per axis");
  auto node = [](double lo, double hi, int n, int i) { return n == 1 ? 0.5 * (lo + hi) : lo + (hi - lo) * i / (n - 1); };
  std::vector<AbsorptionScale> out;
  for (int j = 0; j < n_ch; ++j)
    for (int i = 0; i < n_rpe; ++i)
      out.push_back({node(dom.rpe_lo, dom.rpe_hi, n_rpe, i), node(dom.ch_lo, dom.ch_hi, n_ch, j)});
  return out;
}

std::vector<AbsorptionScale> parameter_line(const ParameterDomain& dom, int n_rpe, double alpha_ch) {
  auto out = parameter_grid(dom, n_rpe, 1);
  for (auto& a : out) a.ch = alpha_ch;
  return out;
}

AbsorptionScale MorStudy::expansion_point() const {
  return two_param ? expansion : AbsorptionScale{expansion.rpe, alpha_ch_fixed};
}

std::vector<AbsorptionScale> MorStudy::deim_params() const {
  if (!two_param) return parameter_line(domain, deim_snapshots, alpha_ch_fixed);
  // near-square grid with n_rpe ≥ n_ch, e.g. 20 = 5 × 4
  int n_ch = static_cast<int>(std::floor(std::sqrt(static_cast<double>(deim_snapshots))));
  while (n_ch > 1 && deim_snapshots % n_ch != 0) --n_ch;
  return parameter_grid(domain, deim_snapshots / n_ch, n_ch);
}

std::vector<AbsorptionScale> MorStudy::basis_params() const {
  return two_param ? parameter_grid(domain, basis_grid_2d, basis_grid_2d)
                   : parameter_line(domain, basis_grid_1d, alpha_ch_fixed);
}

std::vector<AbsorptionScale> MorStudy::scan_params() const {
  return two_param ? parameter_grid(domain, scan_grid_2d, scan_grid_2d)
                   : parameter_line(domain, scan_grid_1d, alpha_ch_fixed);
}

// ---------------------------------------------------------------------------
// Global basis

ProjectionPair global_basis(const FullOrderModel& model, const std::vector<AbsorptionScale>& snapshots, int d_local,
                            int d, const IrkaOptions& options, Policy policy) {
  const int ns = static_cast<int>(snapshots.size());
  if (ns < 1) throw std::invalid_argument("global_basis: no snapshots");
  if (d < 1 || d > d_local * ns) throw std::invalid_argument("global_basis: need 1 <= d <= d_local * #snapshots");
  const SparseLti lti(model);
  std::vector<std::optional<ProjectionPair>> local(ns);
  std::vector<std::string> errors(ns);
#pragma omp parallel for schedule(dynamic) if (policy == Policy::parallel)
  for (int s = 0; s < ns; ++s) {
    try {
      const IrkaResult r =
          irka(lti, assemble_input(model, snapshots[s]), output_rows(model, snapshots[s]), d_local, options);
      local[s] = ProjectionPair{orthonormal_basis(r.basis.V), orthonormal_basis(r.basis.W)};
    } catch (const std::exception& e) {
      errors[s] = e.what();
    }
  }
  std::vector<const ProjectionPair*> ok;
  for (int s = 0; s < ns; ++s) {
    if (local[s])
      ok.push_back(&*local[s]);
    else
      std::cerr << "warning: global basis skips snapshot " << s << ": " << errors[s] << "\n";
  }
  if (static_cast<int>(ok.size()) < std::min(2, ns)) throw NumericalError("global_basis: too few IRKA snapshots survived");
  const int cols = d_local * static_cast<int>(ok.size());
  if (d > cols) throw NumericalError("global_basis: not enough surviving columns for the requested order");
  Mat vs(model.size(), cols), ws(model.size(), cols);
  for (std::size_t i = 0; i < ok.size(); ++i) {
    vs.middleCols(static_cast<Eigen::Index>(i) * d_local, d_local) = ok[i]->V;
    ws.middleCols(static_cast<Eigen::Index>(i) * d_local, d_local) = ok[i]->W;
  }
  ProjectionPair pp{left_singular_vectors(vs, nullptr).leftCols(d), left_singular_vectors(ws, nullptr).leftCols(d)};
  biorthonormalize(pp);
  return pp;
}

// ---------------------------------------------------------------------------
// Snapshots

Mat input_snapshots(const FullOrderModel& model, const std::vector<AbsorptionScale>& params) {
  Mat s(model.size(), static_cast<Eigen::Index>(params.size()));
  for (std::size_t i = 0; i < params.size(); ++i) s.col(static_cast<Eigen::Index>(i)) = assemble_input(model, params[i]);
  return s;
}

Mat output_snapshots(const FullOrderModel& model, const std::vector<AbsorptionScale>& params) {
  Mat s(model.size(), 2 * static_cast<Eigen::Index>(params.size()));
  const Vec peak = assemble_output_peak(model);
  for (std::size_t i = 0; i < params.size(); ++i) {
    s.col(2 * static_cast<Eigen::Index>(i)) = assemble_output_vol(model, params[i]);
    s.col(2 * static_cast<Eigen::Index>(i) + 1) = peak;
  }
  return s;
}

// ---------------------------------------------------------------------------
// Parametric ROMs

std::string to_string(RomVariant v) { return v == RomVariant::taylor ? "taylor" : "deim_gb"; }

ParametricROM build_deim_gb_rom(const FullOrderModel& model, const MorStudy& study, int d, int k_deim,
                                Policy policy) {
  ProjectionPair basis;
  try {
    basis = global_basis(model, study.basis_params(), d, d, study.irka, policy);
  } catch (const NumericalError& e) {
    ParametricROM rom;
    rom.variant = RomVariant::deim_gb;
    rom.d = d;
    rom.k = k_deim;
    rom.dt = model.grid().dt;
    rom.two_param = study.two_param;
    rom.layers = model.layers();
    rom.failure = e.what();
    return rom;
  }
  return build_deim_gb_rom(model, study, basis, k_deim);
}

ParametricROM build_deim_gb_rom(const FullOrderModel& model, const MorStudy& study, const ProjectionPair& basis,
                                int k_deim) {
  ParametricROM rom;
  rom.variant = RomVariant::deim_gb;
  rom.d = basis.order();
  rom.k = k_deim;
  rom.dt = model.grid().dt;
  rom.two_param = study.two_param;
  rom.layers = model.layers();
  rom.V = basis.V;
  rom.W = basis.W;
  rom.deim_snapshots = study.deim_params();
  rom.basis_snapshots = study.basis_params();
  try {
    const Stepper stepper(model, rom.dt);
    rom.Ar = basis.W.transpose() * (model.system_matrix() * basis.V);
    rom.Ard = basis.W.transpose() * stepper.solve(basis.V);

    const DeimOperator db = build_deim(input_snapshots(model, rom.deim_snapshots), k_deim);
    const DeimOperator dc = build_deim(output_snapshots(model, rom.deim_snapshots), k_deim);
    rom.b_singular_values = db.singular_values;
    rom.c_singular_values = dc.singular_values;
    const Mat ub = db.U * db.interp;
    rom.b_factor = basis.W.transpose() * ub;
    rom.b_factor_d = rom.dt * (basis.W.transpose() * stepper.solve(ub));
    rom.c_factor = dc.interp.transpose() * (dc.U.transpose() * basis.V);
    rom.b_indices = db.indices;
    rom.c_indices = dc.indices;
    for (int j : db.indices) rom.b_stencils.push_back(model.input_stencil(j));
    for (int j : dc.indices) {
      rom.c_stencils.push_back(model.output_vol_stencil(j));
      rom.c_is_peak.push_back(j == model.peak_index());
    }
    mark_stability(rom);
  } catch (const NumericalError& e) {
    rom.failure = e.what();
  }
  return rom;
}

std::vector<std::pair<int, int>> taylor_monomials(int k, bool two_param) {
  if (k < 0) throw std::invalid_argument("taylor_monomials: negative order");
  std::vector<std::pair<int, int>> m;
  for (int total = 0; total <= k; ++total) {
    if (!two_param) {
      m.emplace_back(total, 0);
      continue;
    }
    for (int j = 0; j <= total; ++j) m.emplace_back(total - j, j);
  }
  return m;
}

Mat taylor_coefficients_input(const FullOrderModel& model, const AbsorptionScale& a0,
                              const std::vector<std::pair<int, int>>& monomials, const AbsorptionScale& scale) {
  Mat out(model.size(), static_cast<Eigen::Index>(monomials.size()));
  for (std::size_t m = 0; m < monomials.size(); ++m) {
    const auto [i, j] = monomials[m];
    const double f = std::pow(scale.rpe, i) * std::pow(scale.ch, j) / (factorial(i) * factorial(j));
    out.col(static_cast<Eigen::Index>(m)) = f * assemble_input(model, a0, DerivOrder{i, j});
  }
  return out;
}

Mat taylor_coefficients_output(const FullOrderModel& model, const AbsorptionScale& a0,
                               const std::vector<std::pair<int, int>>& monomials, const AbsorptionScale& scale) {
  Mat out(model.size(), static_cast<Eigen::Index>(monomials.size()));
  for (std::size_t m = 0; m < monomials.size(); ++m) {
    const auto [i, j] = monomials[m];
    const double f = std::pow(scale.rpe, i) * std::pow(scale.ch, j) / (factorial(i) * factorial(j));
    out.col(static_cast<Eigen::Index>(m)) = f * assemble_output_vol(model, a0, DerivOrder{i, j});
  }
  return out;
}

Vec taylor_sum(const Mat& coeff, const std::vector<std::pair<int, int>>& monomials, const AbsorptionScale& a0,
               const AbsorptionScale& scale, const AbsorptionScale& alpha) {
  const double xr = (alpha.rpe - a0.rpe) / scale.rpe;
  const double xc = (alpha.ch - a0.ch) / scale.ch;
  Vec out = Vec::Zero(coeff.rows());
  for (std::size_t m = 0; m < monomials.size(); ++m) {
    const auto [i, j] = monomials[m];
    out += (std::pow(xr, i) * std::pow(xc, j)) * coeff.col(static_cast<Eigen::Index>(m));
  }
  return out;
}

ParametricROM build_taylor_rom(const FullOrderModel& model, const MorStudy& study, int d, int k_taylor) {
  ParametricROM rom;
  rom.variant = RomVariant::taylor;
  rom.d = d;
  rom.k = k_taylor;
  rom.dt = model.grid().dt;
  rom.two_param = study.two_param;
  rom.layers = model.layers();
  rom.expansion = study.expansion_point();
  const ParameterDomain& dom = study.domain;
  rom.taylor_scale = {0.5 * (dom.rpe_hi - dom.rpe_lo), 0.5 * (dom.ch_hi - dom.ch_lo)};
  rom.monomials = taylor_monomials(k_taylor, study.two_param);
  try {
    const Mat bt = taylor_coefficients_input(model, rom.expansion, rom.monomials, rom.taylor_scale);
    const Mat ct = taylor_coefficients_output(model, rom.expansion, rom.monomials, rom.taylor_scale);
    Mat caug(1 + ct.cols(), model.size());
    caug.row(0) = assemble_output_peak(model).transpose();
    caug.bottomRows(ct.cols()) = ct.transpose();
    const IrkaResult r = irka(SparseLti(model), bt, caug, d, study.irka);
    rom.V = r.basis.V;
    rom.W = r.basis.W;
    const Stepper stepper(model, rom.dt);
    rom.Ar = rom.W.transpose() * (model.system_matrix() * rom.V);
    rom.Ard = rom.W.transpose() * stepper.solve(rom.V);
    rom.b_table = rom.W.transpose() * bt;
    rom.b_table_d = rom.dt * (rom.W.transpose() * stepper.solve(bt));
    rom.c_vol_table = rom.V.transpose() * ct;
    rom.c_peak_r = rom.V.row(model.peak_index()).transpose();
    mark_stability(rom);
  } catch (const NumericalError& e) {
    rom.failure = e.what();
  }
  return rom;
}

ReducedSystem project_system(const Stepper& stepper, const ProjectionPair& basis, const AbsorptionScale& alpha) {
  const FullOrderModel& m = stepper.model();
  const Vec b = assemble_input(m, alpha);
  ReducedSystem s;
  s.A = basis.W.transpose() * (m.system_matrix() * basis.V);
  s.b = basis.W.transpose() * b;
  s.Ad = basis.W.transpose() * stepper.solve(basis.V);
  s.bd = stepper.dt() * (basis.W.transpose() * stepper.solve(b));
  s.c = output_rows(m, alpha) * basis.V;
  return s;
}

ReducedSystem rom_instantiate(const ParametricROM& rom, const AbsorptionScale& alpha) {
  if (!rom.failure.empty()) throw NumericalError("rom_instantiate: reduced model build failed: " + rom.failure);
  ReducedSystem s;
  s.A = rom.Ar;
  s.Ad = rom.Ard;
  s.c.resize(2, rom.d);
  if (rom.variant == RomVariant::deim_gb) {
    const int kb = static_cast<int>(rom.b_stencils.size());
    Vec bs(kb);
    for (int i = 0; i < kb; ++i) bs[i] = rom.b_stencils[i].evaluate(rom.layers, alpha);
    s.b = rom.b_factor * bs;
    s.bd = rom.b_factor_d * bs;
    const int kc = static_cast<int>(rom.c_stencils.size());
    Vec cv(kc), cp(kc);
    for (int i = 0; i < kc; ++i) {
      cv[i] = rom.c_stencils[i].evaluate(rom.layers, alpha);
      cp[i] = rom.c_is_peak[i] ? 1.0 : 0.0;
    }
    s.c.row(0) = cv.transpose() * rom.c_factor;
    s.c.row(1) = cp.transpose() * rom.c_factor;
  } else {
    s.b = taylor_sum(rom.b_table, rom.monomials, rom.expansion, rom.taylor_scale, alpha);
    s.bd = taylor_sum(rom.b_table_d, rom.monomials, rom.expansion, rom.taylor_scale, alpha);
    s.c.row(0) = taylor_sum(rom.c_vol_table, rom.monomials, rom.expansion, rom.taylor_scale, alpha).transpose();
    s.c.row(1) = rom.c_peak_r.transpose();
  }
  return s;
}

ReducedTrajectory simulate_reduced(const ReducedSystem& sys, const std::vector<double>& u, const Vec& x0) {
  const Eigen::Index d = sys.Ad.rows();
  Vec x = x0.size() == 0 ? Vec::Zero(d) : x0;
  if (x.size() != d) throw std::invalid_argument("simulate_reduced: initial state has the wrong size");
  ReducedTrajectory tr;
  tr.y_vol.resize(u.size());
  tr.y_peak.resize(u.size());
  Vec next(d);
  for (std::size_t k = 0; k < u.size(); ++k) {
    tr.y_vol[k] = sys.c.row(0).dot(x);
    tr.y_peak[k] = sys.c.row(1).dot(x);
    if (k + 1 < u.size()) {
      next.noalias() = sys.Ad * x;
      next += u[k] * sys.bd;
      x.swap(next);
    }
  }
  return tr;
}

// ---------------------------------------------------------------------------
// Error scans

ScanReference make_scan_reference(const Stepper& stepper, const std::vector<AbsorptionScale>& alphas, int horizon,
                                  double target, Policy policy) {
  if (horizon < 2) throw std::invalid_argument("make_scan_reference: horizon must be at least 2");
  ScanReference ref;
  ref.alphas = alphas;
  const SteadyStateSolver ss(stepper.model());
  for (const auto& a : alphas) {
    const double u = steady_state_control(ss, stepper.model(), a, target);
    ref.u.emplace_back(static_cast<std::size_t>(horizon), u);
  }
  ref.full = simulate_many(stepper, alphas, ref.u, policy);
  return ref;
}

ErrorMetrics trajectory_errors(const ReducedTrajectory& rom, const Trajectory& full) {
  auto one = [](const std::vector<double>& y, const std::vector<double>& yf, double& inf, double& l2) {
    if (y.size() != yf.size()) throw std::invalid_argument("trajectory_errors: length mismatch");
    double num = 0.0, den = 0.0;
    inf = 0.0;
    for (std::size_t i = 0; i < y.size(); ++i) {
      if (std::abs(yf[i]) < 1e-9) continue;
      const double e = y[i] - yf[i];
      inf = std::max(inf, std::abs(e) / std::abs(yf[i]));
      num += e * e;
      den += yf[i] * yf[i];
    }
    l2 = den > 0.0 ? std::sqrt(num / den) : 0.0;
  };
  ErrorMetrics m;
  one(rom.y_vol, full.y_vol, m.inf_vol, m.l2_vol);
  one(rom.y_peak, full.y_peak, m.inf_peak, m.l2_peak);
  m.failed = !(std::isfinite(m.inf_vol) && std::isfinite(m.inf_peak) && std::isfinite(m.l2_vol) &&
               std::isfinite(m.l2_peak));
  return m;
}

std::vector<ErrorMetrics> error_scan_pointwise(const std::function<ReducedSystem(const AbsorptionScale&)>& family,
                                               const ScanReference& ref, Policy policy) {
  const int na = static_cast<int>(ref.alphas.size());
  std::vector<ErrorMetrics> out(na);
#pragma omp parallel for schedule(dynamic) if (policy == Policy::parallel)
  for (int i = 0; i < na; ++i) {
    try {
      out[i] = trajectory_errors(simulate_reduced(family(ref.alphas[i]), ref.u[i]), ref.full[i]);
    } catch (const std::exception&) {
      out[i].failed = true;
    }
  }
  return out;
}

std::vector<ErrorMetrics> error_scan_pointwise(const ParametricROM& rom, const ScanReference& ref, Policy policy) {
  if (!rom.ok()) {
    ErrorMetrics f;
    f.failed = true;
    return std::vector<ErrorMetrics>(ref.alphas.size(), f);
  }
  return error_scan_pointwise([&rom](const AbsorptionScale& a) { return rom_instantiate(rom, a); }, ref, policy);
}

ErrorMetrics worst_case(const std::vector<ErrorMetrics>& pointwise) {
  ErrorMetrics w;
  for (const auto& m : pointwise) {
    w.failed = w.failed || m.failed;
    w.inf_vol = std::max(w.inf_vol, m.inf_vol);
    w.inf_peak = std::max(w.inf_peak, m.inf_peak);
    w.l2_vol = std::max(w.l2_vol, m.l2_vol);
    w.l2_peak = std::max(w.l2_peak, m.l2_peak);
  }
  return w;
}

ErrorMetrics error_scan(const ParametricROM& rom, const ScanReference& ref, Policy policy) {
  return worst_case(error_scan_pointwise(rom, ref, policy));
}

const ErrorCell* ErrorTable::find(RomVariant method, int k, int d) const {
  for (const auto& c : cells)
    if (c.method == method && c.k == k && c.d == d) return &c;
  return nullptr;
}

ErrorTable compare_mor(const FullOrderModel& model, const MorStudy& study, const ScanReference& ref,
                       const std::vector<int>& orders_d, const std::vector<int>& orders_k, Policy policy) {
  ErrorTable table;
  for (int d : orders_d) {
    std::optional<ProjectionPair> basis;
    try {
      basis = global_basis(model, study.basis_params(), d, d, study.irka, policy);
    } catch (const NumericalError& e) {
      std::cerr << "warning: global basis of order " << d << " failed: " << e.what() << "\n";
    }
    for (int k : orders_k) {
      ErrorCell deim{RomVariant::deim_gb, k, d, {}};
      if (basis) {
        deim.metrics = error_scan(build_deim_gb_rom(model, study, *basis, k), ref, policy);
      } else {
        deim.metrics.failed = true;
      }
      table.cells.push_back(deim);
      ErrorCell taylor{RomVariant::taylor, k, d, {}};
      taylor.metrics = error_scan(build_taylor_rom(model, study, d, k), ref, policy);
      table.cells.push_back(taylor);
    }
  }
  return table;
}

void write_error_table_csv(const std::string& path, const ErrorTable& table, ErrorMetric metric) {
  std::vector<int> ds, ks;
  for (const auto& c : table.cells) {
    if (std::find(ds.begin(), ds.end(), c.d) == ds.end()) ds.push_back(c.d);
    if (std::find(ks.begin(), ks.end(), c.k) == ks.end()) ks.push_back(c.k);
  }
  std::sort(ds.begin(), ds.end());
  std::sort(ks.begin(), ks.end());
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path);
  out << "method,output,k";
  for (int d : ds) out << ",d" << d;
  out << "\n";
  char buf[32];
  for (RomVariant m : {RomVariant::deim_gb, RomVariant::taylor}) {
    for (const char* output : {"vol", "peak"}) {
      const bool vol = std::string(output) == "vol";
      for (int k : ks) {
        out << to_string(m) << "," << output << "," << k;
        for (int d : ds) {
          const ErrorCell* c = table.find(m, k, d);
          out << ",";
          if (!c) continue;
          if (c->metrics.failed) {
            out << "†";
            continue;
          }
          const double v = metric == ErrorMetric::inf ? (vol ? c->metrics.inf_vol : c->metrics.inf_peak)
                                                      : (vol ? c->metrics.l2_vol : c->metrics.l2_peak);
          std::snprintf(buf, sizeof buf, "%.6e", v);
          out << buf;
        }
        out << "\n";
      }
    }
  }
}

void write_singular_values_csv(const std::string& path, const Vec& sigma_b, const Vec& sigma_c) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path);
  out << "index,sigma_B,energy_B,sigma_C,energy_C\n";
  const Eigen::Index n = std::max(sigma_b.size(), sigma_c.size());
  char buf[128];
  for (Eigen::Index i = 0; i < n; ++i) {
    out << i + 1;
    if (i < sigma_b.size()) {
      std::snprintf(buf, sizeof buf, ",%.12e,%.12f", sigma_b[i], cumulative_energy(sigma_b, static_cast<int>(i + 1)));
      out << buf;
    } else {
      out << ",,";
    }
    if (i < sigma_c.size()) {
      std::snprintf(buf, sizeof buf, ",%.12e,%.12f", sigma_c[i], cumulative_energy(sigma_c, static_cast<int>(i + 1)));
      out << buf;
    } else {
      out << ",,";
    }
    out << "\n";
  }
}

}  // namespace retina

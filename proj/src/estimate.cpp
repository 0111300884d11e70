#include "retina/estimate.hpp"

#include <boost/math/distributions/chi_squared.hpp>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <limits>
#include <numbers>
#include <random>
#include <sstream>
#include <stdexcept>

namespace retina {

namespace {

AbsorptionScale with_free(const Vec& v, FitMode mode, double alpha_ch_fixed) {
  if (mode == FitMode::rpe_only) return {v[0], alpha_ch_fixed};
  return {v[0], v[1]};
}

Vec free_of(const AbsorptionScale& a, FitMode mode) {
  if (mode == FitMode::rpe_only) return Vec::Constant(1, a.rpe);
  Vec v(2);
  v << a.rpe, a.ch;
  return v;
}

std::vector<Deriv> free_derivs(FitMode mode) {
  if (mode == FitMode::rpe_only) return {Deriv::d_rpe};
  return {Deriv::d_rpe, Deriv::d_ch};
}

}  // namespace

void MeasurementSet::validate() const {
  if (u.size() != y.size()) throw std::invalid_argument("measurements: u and y lengths differ");
  if (y.size() < 2) throw std::invalid_argument("measurements: need at least 2 samples");
  if (!(dt > 0)) throw std::invalid_argument("measurements: dt must be positive");
}

MeasurementSet MeasurementSet::prefix(std::size_t n) const {
  if (n > size()) throw std::invalid_argument("measurements: prefix longer than data");
  MeasurementSet p;
  p.dt = dt;
  p.u.assign(u.begin(), u.begin() + static_cast<std::ptrdiff_t>(n));
  p.y.assign(y.begin(), y.begin() + static_cast<std::ptrdiff_t>(n));
  return p;
}

int free_parameters(FitMode mode) { return mode == FitMode::rpe_only ? 1 : 2; }

Vec EstimationResult::free_values() const { return free_of(alpha, mode); }

ResidualJacobian residual_jacobian(const Stepper& stepper, const AbsorptionScale& alpha, const MeasurementSet& data,
                                   FitMode mode) {
  data.validate();
  const FullOrderModel& m = stepper.model();
  const int n = m.size();
  const auto derivs = free_derivs(mode);
  const int q = static_cast<int>(derivs.size());
  const Vec b = assemble_input(m, alpha);
  const Vec c = assemble_output_vol(m, alpha);
  std::vector<Vec> db, dc;
  for (Deriv d : derivs) {
    db.push_back(assemble_input(m, alpha, d));
    dc.push_back(assemble_output_vol(m, alpha, d));
  }
  const std::size_t steps = data.size();
  ResidualJacobian rj{Vec(steps), Mat(steps, q)};
  Vec x = Vec::Zero(n);
  std::vector<Vec> s(q, Vec::Zero(n));
  for (std::size_t k = 0; k < steps; ++k) {
    const auto i = static_cast<Eigen::Index>(k);
    rj.F[i] = data.y[k] - c.dot(x);
    for (int j = 0; j < q; ++j) rj.J(i, j) = -(dc[j].dot(x) + c.dot(s[j]));
    if (k + 1 == steps) break;
    const double u = data.u[k];
    stepper.step(x, b, u);
    for (int j = 0; j < q; ++j) stepper.step(s[j], db[j], u);
  }
  return rj;
}

ResponseCache::ResponseCache(const Stepper& stepper, const std::vector<double>& u, Policy policy)
    : model_(&stepper.model()), u_(u) {
  const FullOrderModel& m = *model_;
  const auto z = m.z_nodes();
  for (int j = 1; j <= m.axial_unknowns(); ++j) {
    const Tissue t = tissue_at(m.layers(), z[j]);
    if (t == Tissue::rpe || t == Tissue::choroid) src_.push_back(j);
    if (!m.axial_output_stencil(j).depth.empty()) out_.push_back(j);
  }
  const double ri = m.grid().beam_radius;
  src_scale_ = 1.0 / (m.layers().volumetric_heat_capacity() * std::numbers::pi * ri * ri);
  const auto w = m.beam_average_weights();
  const int ns = static_cast<int>(src_.size());
  const int no = static_cast<int>(out_.size());
  const std::size_t steps = u_.size();
  t_.assign(steps, Mat::Zero(no, ns));

  auto run_column = [&](int col) {
    Vec b = Vec::Zero(m.size());
    for (int i = 0; i < m.beam_nodes(); ++i) b[m.index(i, src_[col])] = src_scale_;
    Vec x = Vec::Zero(m.size());
    for (std::size_t k = 0; k < steps; ++k) {
      for (int l = 0; l < no; ++l) {
        double acc = 0.0;
        for (int i = 0; i < m.radial_unknowns(); ++i) acc += w[i] * x[m.index(i, out_[l])];
        t_[k](l, col) = acc;
      }
      if (k + 1 < steps) stepper.step(x, b, u_[k]);
    }
  };
  if (policy == Policy::parallel) {
#pragma omp parallel for schedule(dynamic)
    for (int col = 0; col < ns; ++col) run_column(col);
  } else {
    for (int col = 0; col < ns; ++col) run_column(col);
  }
}

std::vector<double> ResponseCache::outputs(const AbsorptionScale& alpha) const {
  const FullOrderModel& m = *model_;
  const auto z = m.z_nodes();
  Vec g(src_.size()), h(out_.size());
  for (std::size_t j = 0; j < src_.size(); ++j) g[j] = absorbed_density(m.layers(), alpha, z[src_[j]]);
  for (std::size_t l = 0; l < out_.size(); ++l) h[l] = m.axial_output_stencil(out_[l]).evaluate(m.layers(), alpha);
  std::vector<double> y(steps());
  for (std::size_t k = 0; k < steps(); ++k) y[k] = h.dot(t_[k] * g);
  return y;
}

ResidualJacobian ResponseCache::residual_jacobian(const AbsorptionScale& alpha, const MeasurementSet& data,
                                                  FitMode mode) const {
  data.validate();
  if (data.size() > steps()) throw std::invalid_argument("response cache: data longer than cached input");
  for (std::size_t k = 0; k < data.size(); ++k)
    if (data.u[k] != u_[k]) throw std::invalid_argument("response cache: input sequence differs from cached one");
  const FullOrderModel& m = *model_;
  const auto z = m.z_nodes();
  const auto derivs = free_derivs(mode);
  const int q = static_cast<int>(derivs.size());
  Vec g(src_.size()), h(out_.size());
  Mat dg(src_.size(), q), dh(out_.size(), q);
  for (std::size_t j = 0; j < src_.size(); ++j) {
    g[j] = absorbed_density(m.layers(), alpha, z[src_[j]]);
    for (int p = 0; p < q; ++p) dg(j, p) = absorbed_density(m.layers(), alpha, z[src_[j]], to_order(derivs[p]));
  }
  for (std::size_t l = 0; l < out_.size(); ++l) {
    const DepthStencil& st = m.axial_output_stencil(out_[l]);
    h[l] = st.evaluate(m.layers(), alpha);
    for (int p = 0; p < q; ++p) dh(l, p) = st.evaluate(m.layers(), alpha, to_order(derivs[p]));
  }
  const std::size_t steps = data.size();
  ResidualJacobian rj{Vec(steps), Mat(steps, q)};
  for (std::size_t k = 0; k < steps; ++k) {
    const auto i = static_cast<Eigen::Index>(k);
    const Vec tg = t_[k] * g;
    rj.F[i] = data.y[k] - h.dot(tg);
    for (int p = 0; p < q; ++p) rj.J(i, p) = -(dh.col(p).dot(tg) + h.dot(t_[k] * dg.col(p)));
  }
  return rj;
}

EstimationResult fit(const ResidualFunction& residual, const AbsorptionScale& alpha0, FitMode mode,
                     const FitOptions& opt) {
  const int q = free_parameters(mode);
  auto project = [&](Vec v) {
    for (auto& e : v) e = std::max(e, opt.alpha_min);
    return v;
  };
  Vec a = project(free_of(alpha0, mode));
  ResidualJacobian rj = residual(with_free(a, mode, opt.alpha_ch_fixed));
  double cost = 0.5 * rj.F.squaredNorm();
  Mat jtj = rj.J.transpose() * rj.J;
  Vec grad = rj.J.transpose() * rj.F;
  double lambda = 1e-3 * std::max(jtj.diagonal().maxCoeff(), 1e-300);
  double nu = 2.0;

  EstimationResult res;
  res.mode = mode;
  int iter = 0;
  for (; iter < opt.max_iterations; ++iter) {
    if (grad.lpNorm<Eigen::Infinity>() <= opt.grad_tol * std::max(1.0, rj.F.norm())) {
      res.converged = true;
      break;
    }
    bool stepped = false;
    bool tiny = false;
    while (!stepped) {
      const Mat damped = jtj + lambda * Mat::Identity(q, q);
      const Vec delta = damped.ldlt().solve(-grad);
      const Vec a_new = project(a + delta);
      const Vec actual = a_new - a;
      if (actual.norm() <= opt.step_tol * (a.norm() + opt.step_tol)) {
        tiny = true;
        break;
      }
      // Steps that shrink a parameter by more than half are treated as failed
      // (more damping) instead of being clipped to the bound.
      if (((a + delta).array() < 0.5 * a.array()).any() && (a.array() > opt.alpha_min).all()) {
        lambda *= nu;
        nu *= 2.0;
        continue;
      }
      ResidualJacobian trial = residual(with_free(a_new, mode, opt.alpha_ch_fixed));
      const double cost_new = 0.5 * trial.F.squaredNorm();
      const double predicted = -(grad.dot(actual) + 0.5 * actual.dot(jtj * actual));
      const double rho = predicted > 0 ? (cost - cost_new) / predicted : -1.0;
      if (rho > 0 && std::isfinite(cost_new)) {
        a = a_new;
        rj = std::move(trial);
        cost = cost_new;
        jtj = rj.J.transpose() * rj.J;
        grad = rj.J.transpose() * rj.F;
        lambda *= std::max(1.0 / 3.0, 1.0 - std::pow(2.0 * rho - 1.0, 3));
        nu = 2.0;
        stepped = true;
      } else {
        lambda *= nu;
        nu *= 2.0;
        if (!std::isfinite(lambda) || lambda > 1e300) {
          tiny = true;
          break;
        }
      }
    }
    if (tiny) {
      res.converged = true;
      break;
    }
  }

  res.alpha = with_free(a, mode, opt.alpha_ch_fixed);
  res.iterations = iter;
  res.resnorm = rj.F.norm();
  Eigen::SelfAdjointEigenSolver<Mat> es(jtj);
  const double lmax = es.eigenvalues().maxCoeff();
  const double lmin = es.eigenvalues().minCoeff();
  res.condition = lmin > 0 ? lmax / lmin : std::numeric_limits<double>::infinity();
  res.singular = !(res.condition <= opt.cond_limit);
  if (!res.singular) {
    res.cov = jtj.inverse();
    res.cov = 0.5 * (res.cov + res.cov.transpose());
  } else {
    res.cov = Mat::Constant(q, q, std::numeric_limits<double>::infinity());
  }
  res.p_level = opt.p_level;
  res.half_width = confidence_intervals(res, opt.p_level).half_width;
  return res;
}

EstimationResult fit(const Stepper& stepper, const MeasurementSet& data, const AbsorptionScale& alpha0, FitMode mode,
                     const FitOptions& options) {
  data.validate();
  return fit([&](const AbsorptionScale& a) { return residual_jacobian(stepper, a, data, mode); }, alpha0, mode,
             options);
}

EstimationResult fit(const ResponseCache& cache, const MeasurementSet& data, const AbsorptionScale& alpha0,
                     FitMode mode, const FitOptions& options) {
  data.validate();
  return fit([&](const AbsorptionScale& a) { return cache.residual_jacobian(a, data, mode); }, alpha0, mode, options);
}

double chi2_quantile(double p, int dof) {
  if (!(p > 0.0 && p < 1.0)) throw std::invalid_argument("chi2_quantile: p must lie in (0, 1)");
  if (dof < 1) throw std::invalid_argument("chi2_quantile: dof must be positive");
  return boost::math::quantile(boost::math::chi_squared_distribution<double>(dof), p);
}

ConfidenceIntervals confidence_intervals(const EstimationResult& result, double p) {
  const int q = free_parameters(result.mode);
  if (result.cov.rows() != q || result.cov.cols() != q)
    throw std::invalid_argument("confidence_intervals: covariance has the wrong size");
  ConfidenceIntervals ci;
  ci.gamma = chi2_quantile(p, q);
  const Vec a = result.free_values();
  ci.half_width.resize(q);
  for (int i = 0; i < q; ++i) ci.half_width[i] = std::sqrt(ci.gamma * result.cov(i, i));
  ci.low = a - ci.half_width;
  ci.high = a + ci.half_width;
  return ci;
}

ParameterStats sample_stats(const std::vector<double>& values) {
  if (values.size() < 2) throw std::invalid_argument("cohort_stats: need at least 2 samples");
  const double n = static_cast<double>(values.size());
  double mean = 0.0;
  for (double v : values) mean += v;
  mean /= n;
  double ss = 0.0;
  for (double v : values) ss += (v - mean) * (v - mean);
  ParameterStats s;
  s.mean = mean;
  s.sigma = std::sqrt(ss / (n - 1.0));
  s.cv = mean != 0.0 ? s.sigma / mean : 0.0;
  return s;
}

CohortStats cohort_stats(const std::vector<AbsorptionScale>& fits) {
  std::vector<double> r, c;
  for (const auto& f : fits) {
    r.push_back(f.rpe);
    c.push_back(f.ch);
  }
  return {sample_stats(r), sample_stats(c), fits.size()};
}

std::vector<double> add_noise(const std::vector<double>& clean, double noise_std, std::uint64_t seed) {
  if (noise_std < 0) throw std::invalid_argument("synth_measurements: noise_std must be >= 0");
  std::vector<double> y = clean;
  if (noise_std == 0.0) return y;
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> nd(0.0, noise_std);
  for (double& v : y) v += nd(rng);
  return y;
}

MeasurementSet synth_measurements(const Stepper& stepper, const AbsorptionScale& alpha_true,
                                  const std::vector<double>& u, double noise_std, std::uint64_t seed) {
  const Trajectory tr = simulate(stepper, alpha_true, u);
  return {stepper.dt(), u, add_noise(tr.y_vol, noise_std, seed)};
}

MeasurementSet synth_measurements(const ResponseCache& cache, double dt, const AbsorptionScale& alpha_true,
                                  double noise_std, std::uint64_t seed) {
  return {dt, cache.input(), add_noise(cache.outputs(alpha_true), noise_std, seed)};
}

std::vector<HorizonResult> horizon_study(const ResponseCache& cache, const MeasurementSet& data,
                                         const std::vector<std::size_t>& horizons, const AbsorptionScale& alpha0,
                                         FitMode mode, const FitOptions& options) {
  for (std::size_t n : horizons)
    if (n > data.size()) throw std::invalid_argument("horizon_study: horizon longer than data");
  const EstimationResult full = fit(cache, data, alpha0, mode, options);
  std::vector<HorizonResult> out;
  for (std::size_t n : horizons) {
    HorizonResult h;
    h.horizon = n;
    try {
      const EstimationResult r = fit(cache, data.prefix(n), alpha0, mode, options);
      h.alpha = r.alpha;
      h.converged = r.converged;
      h.rel_err_rpe = std::abs(r.alpha.rpe - full.alpha.rpe) / std::abs(full.alpha.rpe);
      h.rel_err_ch = mode == FitMode::two_param ? std::abs(r.alpha.ch - full.alpha.ch) / std::abs(full.alpha.ch) : 0.0;
    } catch (const std::exception& e) {
      h.error = e.what();
    }
    out.push_back(h);
  }
  return out;
}

void write_measurements_csv(const std::string& path, const MeasurementSet& data) {
  std::ofstream f(path);
  if (!f) throw std::runtime_error("cannot open " + path);
  f << std::setprecision(17) << "t,u,y_meas\n";
  for (std::size_t k = 0; k < data.size(); ++k)
    f << static_cast<double>(k) * data.dt << ',' << data.u[k] << ',' << data.y[k] << '\n';
}

MeasurementSet read_measurements_csv(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw std::runtime_error("cannot open " + path);
  std::string line;
  std::getline(f, line);
  if (line.rfind("t,u,y_meas", 0) != 0) throw std::runtime_error(path + ": expected header t,u,y_meas");
  MeasurementSet d;
  std::vector<double> t;
  int lineno = 1;
  while (std::getline(f, line)) {
    ++lineno;
    if (line.empty()) continue;
    std::stringstream ss(line);
    std::string a, b, c;
    if (!std::getline(ss, a, ',') || !std::getline(ss, b, ',') || !std::getline(ss, c, ','))
      throw std::runtime_error(path + ":" + std::to_string(lineno) + ": expected three columns");
    t.push_back(std::stod(a));
    d.u.push_back(std::stod(b));
    d.y.push_back(std::stod(c));
  }
  if (t.size() >= 2) d.dt = t[1] - t[0];
  d.validate();
  return d;
}

}  // namespace retina

#include "retina/mpc.hpp"

#include <Eigen/Cholesky>
#include <Eigen/LU>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <limits>
#include <stdexcept>

namespace retina {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

double inf_norm(const Vec& v) { return v.size() == 0 ? 0.0 : v.cwiseAbs().maxCoeff(); }

double limit_scale(double v) {
  if (v < 1e-4) return 1.0;
  return std::min(v, 1e4);
}

Vec clamp(const Vec& v, const Vec& lo, const Vec& hi) { return v.cwiseMax(lo).cwiseMin(hi); }

// Ruiz equilibration: x = D x̄, rows scaled by E, cost by c.
struct Scaling {
  Vec d;
  Vec e;
  double c = 1.0;
};

Scaling equilibrate(Mat& p, Vec& q, Mat& a, int iterations) {
  const Eigen::Index n = p.rows(), m = a.rows();
  Scaling s{Vec::Ones(n), Vec::Ones(m), 1.0};
  for (int it = 0; it < iterations; ++it) {
    Vec dd(n), de(m);
    for (Eigen::Index j = 0; j < n; ++j) {
      double nrm = p.col(j).cwiseAbs().maxCoeff();
      if (m > 0) nrm = std::max(nrm, a.col(j).cwiseAbs().maxCoeff());
      dd[j] = 1.0 / std::sqrt(limit_scale(nrm));
    }
    for (Eigen::Index i = 0; i < m; ++i) de[i] = 1.0 / std::sqrt(limit_scale(a.row(i).cwiseAbs().maxCoeff()));
    p = dd.asDiagonal() * p * dd.asDiagonal();
    q = dd.cwiseProduct(q);
    a = de.asDiagonal() * a * dd.asDiagonal();
    s.d = s.d.cwiseProduct(dd);
    s.e = s.e.cwiseProduct(de);
    double mean_col = 0.0;
    for (Eigen::Index j = 0; j < n; ++j) mean_col += p.col(j).cwiseAbs().maxCoeff();
    mean_col /= static_cast<double>(n);
    const double gamma = 1.0 / limit_scale(std::max(mean_col, inf_norm(q)));
    p *= gamma;
    q *= gamma;
    s.c *= gamma;
  }
  return s;
}

// Residuals against eps_abs + eps_rel · (data and iterate magnitudes).
bool kkt_acceptable(const QpProblem& qp, const Vec& x, const Vec& y, double eps_abs, double eps_rel) {
  const KktResiduals r = kkt_residuals(qp, x, y);
  const Vec ax = qp.A * x;
  double bound = 0.0;
  for (Eigen::Index i = 0; i < ax.size(); ++i) {
    if (std::isfinite(qp.l[i])) bound = std::max(bound, std::abs(qp.l[i]));
    if (std::isfinite(qp.u[i])) bound = std::max(bound, std::abs(qp.u[i]));
  }
  const double prim_scale = std::max(inf_norm(ax), bound);
  const double dual_scale =
      std::max({inf_norm(qp.H * x), inf_norm(qp.q), inf_norm(qp.A.transpose() * y)});
  return r.primal <= eps_abs + eps_rel * prim_scale && r.dual <= eps_abs + eps_rel * dual_scale &&
         r.sign <= eps_abs + eps_rel * dual_scale &&
         r.complementarity <= eps_abs + eps_rel * inf_norm(y) * std::max(1.0, prim_scale);
}

struct Polished {
  bool ok = false;
  Vec x;
  Vec y;
};

Polished polish(const QpProblem& qp, const Vec& z, const Vec& y, const QpSettings& s) {
  const int n = qp.variables(), m = qp.constraints();
  std::vector<int> rows;
  Vec rhs_b(m);
  for (int i = 0; i < m; ++i) {
    const bool eq = qp.u[i] - qp.l[i] < 1e-12;
    if (eq) {
      rows.push_back(i);
      rhs_b[static_cast<Eigen::Index>(rows.size()) - 1] = qp.u[i];
    } else if (std::isfinite(qp.l[i]) && z[i] - qp.l[i] < -y[i]) {
      rows.push_back(i);
      rhs_b[static_cast<Eigen::Index>(rows.size()) - 1] = qp.l[i];
    } else if (std::isfinite(qp.u[i]) && qp.u[i] - z[i] < y[i]) {
      rows.push_back(i);
      rhs_b[static_cast<Eigen::Index>(rows.size()) - 1] = qp.u[i];
    }
  }
  const int k = static_cast<int>(rows.size());
  Mat kkt = Mat::Zero(n + k, n + k);
  Vec rhs(n + k);
  kkt.topLeftCorner(n, n) = qp.H;
  rhs.head(n) = -qp.q;
  for (int r = 0; r < k; ++r) {
    kkt.block(n + r, 0, 1, n) = qp.A.row(rows[r]);
    kkt.block(0, n + r, n, 1) = qp.A.row(rows[r]).transpose();
    rhs[n + r] = rhs_b[r];
  }
  Eigen::FullPivLU<Mat> lu(kkt);
  Polished out;
  if (lu.rank() < n + k) return out;
  const Vec sol = lu.solve(rhs);
  out.x = sol.head(n);
  out.y = Vec::Zero(m);
  for (int r = 0; r < k; ++r) out.y[rows[r]] = sol[n + r];
  out.ok = kkt_acceptable(qp, out.x, out.y, s.eps_abs, s.eps_rel);
  return out;
}

// Farkas-type certificate on the unscaled problem from a dual increment.
bool primal_infeasible(const QpProblem& qp, const Vec& dy, double eps) {
  const double ndy = inf_norm(dy);
  if (ndy < 1e-30) return false;
  if (inf_norm(qp.A.transpose() * dy) > eps * ndy) return false;
  double support = 0.0;
  for (int i = 0; i < qp.constraints(); ++i) {
    if (dy[i] > 0.0) {
      if (!std::isfinite(qp.u[i])) return false;
      support += qp.u[i] * dy[i];
    } else if (dy[i] < 0.0) {
      if (!std::isfinite(qp.l[i])) return false;
      support += qp.l[i] * dy[i];
    }
  }
  return support < -eps * ndy;
}

}  // namespace

void QpProblem::validate() const {
  const Eigen::Index n = q.size();
  if (H.rows() != n || H.cols() != n) throw std::invalid_argument("qp: H must be n x n");
  if (A.cols() != n || l.size() != A.rows() || u.size() != A.rows())
    throw std::invalid_argument("qp: constraint dimensions mismatch");
  for (Eigen::Index i = 0; i < l.size(); ++i)
    if (l[i] > u[i]) throw std::invalid_argument("qp: lower bound above upper bound");
}

std::string to_string(QpStatus s) {
  switch (s) {
    case QpStatus::solved:
      return "solved";
    case QpStatus::inaccurate:
      return "inaccurate";
    case QpStatus::infeasible:
      return "infeasible";
  }
  return "unknown";
}

double KktResiduals::max() const { return std::max({primal, dual, complementarity, sign}); }

KktResiduals kkt_residuals(const QpProblem& qp, const Vec& x, const Vec& y) {
  KktResiduals r;
  const Vec ax = qp.A * x;
  for (Eigen::Index i = 0; i < ax.size(); ++i) {
    r.primal = std::max({r.primal, ax[i] - qp.u[i], qp.l[i] - ax[i]});
    if (y[i] > 0.0) {
      if (std::isfinite(qp.u[i]))
        r.complementarity = std::max(r.complementarity, y[i] * std::abs(qp.u[i] - ax[i]));
      else
        r.sign = std::max(r.sign, y[i]);
    } else if (y[i] < 0.0) {
      if (std::isfinite(qp.l[i]))
        r.complementarity = std::max(r.complementarity, -y[i] * std::abs(ax[i] - qp.l[i]));
      else
        r.sign = std::max(r.sign, -y[i]);
    }
  }
  r.dual = inf_norm(qp.H * x + qp.q + qp.A.transpose() * y);
  return r;
}

QpSolution solve_qp(const QpProblem& qp, const QpSettings& s, const QpWarmStart* warm) {
  qp.validate();
  const int n = qp.variables(), m = qp.constraints();

  Mat p = qp.H;
  Vec q = qp.q;
  Mat a = qp.A;
  Scaling sc{Vec::Ones(n), Vec::Ones(m), 1.0};
  if (s.scaling) sc = equilibrate(p, q, a, s.scaling_iterations);
  const Vec lo = sc.e.cwiseProduct(qp.l);
  const Vec hi = sc.e.cwiseProduct(qp.u);

  Vec x = Vec::Zero(n), z, y = Vec::Zero(m);
  if (warm && warm->x.size() == n) x = warm->x.cwiseQuotient(sc.d);
  z = clamp(a * x, lo, hi);
  if (warm && warm->y.size() == m) y = sc.c * warm->y.cwiseQuotient(sc.e);

  double rho = s.rho;
  Vec rho_vec(m);
  Eigen::LLT<Mat> llt;
  auto refactor = [&]() {
    for (int i = 0; i < m; ++i) {
      if (!std::isfinite(lo[i]) && !std::isfinite(hi[i]))
        rho_vec[i] = 1e-6;
      else if (hi[i] - lo[i] < 1e-12)
        rho_vec[i] = 1e3 * rho;
      else
        rho_vec[i] = rho;
    }
    Mat k = p + a.transpose() * rho_vec.asDiagonal() * a;
    k.diagonal().array() += s.sigma;
    llt.compute(k);
    if (llt.info() != Eigen::Success) throw NumericalError("solve_qp: KKT factorization failed");
  };
  refactor();

  QpSolution out;
  double trigger = s.polish_trigger;
  auto unscaled = [&](QpSolution& sol) {
    sol.x = sc.d.cwiseProduct(x);
    sol.y = sc.e.cwiseProduct(y) / sc.c;
  };

  int it = 0;
  bool converged = false;
  for (it = 1; it <= s.max_iterations; ++it) {
    const Vec rhs = s.sigma * x - q + a.transpose() * (rho_vec.cwiseProduct(z) - y);
    const Vec xt = llt.solve(rhs);
    const Vec zt = a * xt;
    const Vec x_new = s.alpha * xt + (1.0 - s.alpha) * x;
    const Vec z_relax = s.alpha * zt + (1.0 - s.alpha) * z;
    const Vec z_new = clamp(z_relax + y.cwiseQuotient(rho_vec), lo, hi);
    const Vec y_new = y + rho_vec.cwiseProduct(z_relax - z_new);
    const Vec dy = y_new - y;
    x = x_new;
    z = z_new;
    y = y_new;

    const Vec ax = a * x;
    const Vec px = p * x;
    const Vec aty = a.transpose() * y;
    const double r_prim = inf_norm((ax - z).cwiseQuotient(sc.e));
    const double r_dual = inf_norm((px + q + aty).cwiseQuotient(sc.d)) / sc.c;
    const double prim_scale = std::max(inf_norm(ax.cwiseQuotient(sc.e)), inf_norm(z.cwiseQuotient(sc.e)));
    const double dual_scale = std::max({inf_norm(px.cwiseQuotient(sc.d)), inf_norm(aty.cwiseQuotient(sc.d)),
                                        inf_norm(q.cwiseQuotient(sc.d))}) /
                              sc.c;
    out.primal_residual = r_prim;
    out.dual_residual = r_dual;

    if (r_prim <= s.eps_abs + s.eps_rel * prim_scale && r_dual <= s.eps_abs + s.eps_rel * dual_scale) {
      converged = true;
      break;
    }
    if (s.polish && r_prim <= trigger * (1.0 + prim_scale) && r_dual <= trigger * (1.0 + dual_scale)) {
      QpSolution tmp;
      unscaled(tmp);
      const Polished pol = polish(qp, z.cwiseQuotient(sc.e), tmp.y, s);
      if (pol.ok) {
        out.x = pol.x;
        out.y = pol.y;
        out.polished = true;
        out.status = QpStatus::solved;
        out.iterations = it;
        const KktResiduals kr = kkt_residuals(qp, out.x, out.y);
        out.primal_residual = kr.primal;
        out.dual_residual = kr.dual;
        out.objective = qp.objective(out.x);
        return out;
      }
      trigger *= 0.1;
    }
    if (it % 10 == 0 && primal_infeasible(qp, sc.e.cwiseProduct(dy) / sc.c, s.eps_infeasible)) {
      unscaled(out);
      out.status = QpStatus::infeasible;
      out.iterations = it;
      out.objective = qp.objective(out.x);
      return out;
    }
    if (s.adaptive_rho && it % s.adapt_interval == 0) {
      const double num = r_prim / (prim_scale + 1e-30);
      const double den = r_dual / (dual_scale + 1e-30);
      if (den > 0.0) {
        const double ratio = std::sqrt(num / den);
        if (ratio > 5.0 || ratio < 0.2) {
          rho = std::clamp(rho * ratio, 1e-6, 1e6);
          refactor();
        }
      }
    }
  }
  out.iterations = std::min(it, s.max_iterations);
  unscaled(out);
  if (s.polish) {
    const Polished pol = polish(qp, z.cwiseQuotient(sc.e), out.y, s);
    if (pol.ok) {
      out.x = pol.x;
      out.y = pol.y;
      out.polished = true;
      converged = true;
    }
  }
  out.status = converged ? QpStatus::solved : QpStatus::inaccurate;
  out.objective = qp.objective(out.x);
  return out;
}

// ---------------------------------------------------------------------------

void OcpSpec::validate() const {
  if (horizon < 2) throw std::invalid_argument("ocp: horizon must be at least 2");
  if (!(u_max >= 0.0)) throw std::invalid_argument("ocp: u_max must be non-negative");
  if (!(rho_u > 0.0)) throw std::invalid_argument("ocp: rho_u must be positive");
  if (y_ref > y_max) throw std::invalid_argument("ocp: y_ref must not exceed y_max");
  if (u_ref && (*u_ref < 0.0 || *u_ref > u_max)) throw std::invalid_argument("ocp: u_ref must lie in [0, u_max]");
}

double reduced_steady_state_control(const ReducedSystem& sys, double y_ref) {
  const Eigen::Index d = sys.Ad.rows();
  const Vec xbar = (Mat::Identity(d, d) - sys.Ad).partialPivLu().solve(sys.bd);
  const double g = sys.c.row(1).dot(xbar);
  if (!(g > 0.0)) throw NumericalError("reduced steady state: peak gain is not positive");
  return y_ref / g;
}

Condenser::Condenser(const ReducedSystem& sys, const OcpSpec& spec) : spec_(spec) {
  spec_.validate();
  const Eigen::Index d = sys.Ad.rows();
  if (sys.Ad.cols() != d || sys.bd.size() != d || sys.c.rows() < 2 || sys.c.cols() != d)
    throw std::invalid_argument("condense: dimension mismatch");
  u_ref_ = spec.u_ref ? *spec.u_ref : std::clamp(reduced_steady_state_control(sys, spec.y_ref), 0.0, spec.u_max);
  const int n = spec.horizon;
  phi_.resize(n, d);
  Vec markov(n);
  Eigen::RowVectorXd row = sys.c.row(1);
  for (int k = 0; k < n; ++k) {
    phi_.row(k) = row;
    markov[k] = row.dot(sys.bd);
    row = row * sys.Ad;
  }
  g_ = Mat::Zero(n, n);
  for (int k = 1; k < n; ++k)
    for (int i = 0; i < k; ++i) g_(k, i) = markov[k - 1 - i];
  h_ = 2.0 * (g_.transpose() * g_);
  h_.diagonal().array() += 2.0 * spec.rho_u;
  a_.resize(2 * n - 1, n);
  a_.topRows(n) = Mat::Identity(n, n);
  a_.bottomRows(n - 1) = g_.bottomRows(n - 1);
}

CondensedQP Condenser::condense(const Vec& x0) const {
  if (x0.size() != phi_.cols()) throw std::invalid_argument("condense: state dimension mismatch");
  const int n = spec_.horizon;
  CondensedQP out;
  out.free_response = phi_ * x0;
  const Vec dev = out.free_response.array() - spec_.y_ref;
  QpProblem& qp = out.qp;
  qp.H = h_;
  qp.q = 2.0 * (g_.transpose() * dev);
  qp.q.array() -= 2.0 * spec_.rho_u * u_ref_;
  qp.offset = dev.squaredNorm() + spec_.rho_u * n * u_ref_ * u_ref_;
  qp.A = a_;
  qp.l.resize(2 * n - 1);
  qp.u.resize(2 * n - 1);
  qp.l.head(n).setZero();
  qp.u.head(n).setConstant(spec_.u_max);
  qp.l.tail(n - 1).setConstant(-kInf);
  qp.u.tail(n - 1) = spec_.y_max - out.free_response.tail(n - 1).array();
  out.initial_violation = out.free_response[0] > spec_.y_max + 1e-9;
  return out;
}

CondensedQP condense(const ReducedSystem& sys, const OcpSpec& spec, const Vec& x0) {
  return Condenser(sys, spec).condense(x0);
}

// ---------------------------------------------------------------------------

double ClosedLoopResult::average_solve_ms() const {
  if (solve_seconds.empty()) return 0.0;
  double s = 0.0;
  for (double v : solve_seconds) s += v;
  return 1e3 * s / static_cast<double>(solve_seconds.size());
}

double ClosedLoopResult::max_solve_ms() const {
  return solve_seconds.empty() ? 0.0 : 1e3 * *std::max_element(solve_seconds.begin(), solve_seconds.end());
}

namespace {

Vec shift_block(const Vec& v, Eigen::Index start, Eigen::Index len) {
  Vec out = v.segment(start, len);
  if (len > 1) {
    out.head(len - 1) = v.segment(start + 1, len - 1);
    out[len - 1] = v[start + len - 1];
  }
  return out;
}

}  // namespace

ClosedLoopResult run_closed_loop(const OcpSpec& spec, const ParametricROM& rom, const ClosedLoopOptions& options,
                                 const Stepper* full_plant) {
  if (!rom.ok()) throw NumericalError("closed loop: reduced model is not usable");
  if (options.steps < 1) throw std::invalid_argument("closed loop: steps must be positive");
  const ReducedSystem ctrl = rom_instantiate(rom, spec.alpha);
  const Condenser condenser(ctrl, spec);
  const int n = spec.horizon;
  const AbsorptionScale pa = options.plant_alpha.value_or(spec.alpha);

  ReducedSystem plant_sys;
  Vec x;
  Vec b_full, cv_full, cp_full;
  if (options.plant == PlantKind::reduced) {
    plant_sys = rom_instantiate(rom, pa);
    x = Vec::Zero(rom.d);
  } else {
    if (!full_plant) throw std::invalid_argument("closed loop: full plant requires a stepper");
    if (std::abs(full_plant->dt() - rom.dt) > 1e-15) throw std::invalid_argument("closed loop: time step mismatch");
    const FullOrderModel& m = full_plant->model();
    if (m.size() != rom.W.rows()) throw std::invalid_argument("closed loop: plant size does not match the basis");
    b_full = assemble_input(m, pa);
    cv_full = assemble_output_vol(m, pa);
    cp_full = assemble_output_peak(m);
    x = Vec::Zero(m.size());
  }

  ClosedLoopResult res;
  res.dt = rom.dt;
  res.u_ref = condenser.u_ref();
  std::optional<QpSolution> prev;
  double u_prev = 0.0;
  for (int k = 0; k < options.steps; ++k) {
    double yv, yp;
    Vec xr;
    if (options.plant == PlantKind::reduced) {
      yv = plant_sys.c.row(0).dot(x);
      yp = plant_sys.c.row(1).dot(x);
      xr = x;
    } else {
      yv = cv_full.dot(x);
      yp = cp_full.dot(x);
      xr = rom.W.transpose() * x;
    }

    const auto t0 = std::chrono::steady_clock::now();
    const CondensedQP cq = condenser.condense(xr);
    QpWarmStart ws;
    const QpWarmStart* wsp = nullptr;
    if (prev && options.warm_start) {
      ws.x = shift_block(prev->x, 0, n);
      ws.y.resize(prev->y.size());
      ws.y.head(n) = shift_block(prev->y, 0, n);
      ws.y.tail(n - 1) = shift_block(prev->y, n, n - 1);
      wsp = &ws;
    } else if (!prev && options.seed_first) {
      ws.x = Vec::Constant(n, condenser.u_ref());
      wsp = &ws;
    }
    QpSolution sol;
    if (cq.initial_violation) {
      sol.status = QpStatus::infeasible;
    } else {
      sol = solve_qp(cq.qp, options.qp, wsp);
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();

    if (options.compare_cold && !cq.initial_violation)
      res.cold_iterations.push_back(solve_qp(cq.qp, options.qp).iterations);

    double u;
    if (sol.status == QpStatus::solved) {
      u = std::clamp(sol.x[0], 0.0, spec.u_max);
      res.kkt.push_back(kkt_residuals(cq.qp, sol.x, sol.y));
      res.cost.push_back(sol.objective);
      prev = sol;
    } else {
      u = u_prev;
      ++res.failed_steps;
      res.kkt.push_back({});
      res.cost.push_back(std::numeric_limits<double>::quiet_NaN());
    }
    res.t.push_back(k * rom.dt);
    res.u.push_back(u);
    res.y_vol.push_back(yv);
    res.y_peak.push_back(yp);
    res.iterations.push_back(sol.iterations);
    res.solve_seconds.push_back(secs);
    res.status.push_back(sol.status);
    res.max_violation = std::max({res.max_violation, yp - spec.y_max, u - spec.u_max, -u});

    if (options.plant == PlantKind::reduced)
      x = plant_sys.Ad * x + plant_sys.bd * u;
    else
      full_plant->step(x, b_full, u);
    u_prev = u;
  }
  return res;
}

void write_closed_loop_csv(const std::string& path, const ClosedLoopResult& r) {
  std::ofstream f(path);
  if (!f) throw std::runtime_error("cannot open " + path);
  f << std::setprecision(10) << "t,u,y_vol,y_peak,qp_iters,solve_ms\n";
  for (std::size_t k = 0; k < r.t.size(); ++k)
    f << r.t[k] << ',' << r.u[k] << ',' << r.y_vol[k] << ',' << r.y_peak[k] << ',' << r.iterations[k] << ','
      << 1e3 * r.solve_seconds[k] << '\n';
}

void write_timing_summary_csv(const std::string& path, const std::vector<TimingRow>& rows) {
  std::ofstream f(path);
  if (!f) throw std::runtime_error("cannot open " + path);
  f << std::setprecision(6) << "N";
  for (const auto& r : rows) f << ',' << r.horizon;
  f << "\navg_ms";
  for (const auto& r : rows) f << ',' << r.avg_ms;
  f << "\nmax_ms";
  for (const auto& r : rows) f << ',' << r.max_ms;
  f << '\n';
}

}  // namespace retina

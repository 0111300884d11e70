#include "oracles/active_set.hpp"
#include "retina/mpc.hpp"

#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <limits>
#include <random>

using namespace retina;

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

QpProblem random_box_qp(std::mt19937_64& rng, int n) {
  std::normal_distribution<double> nd;
  std::uniform_real_distribution<double> ud(-1.0, 1.0);
  Mat m(n, n);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) m(i, j) = nd(rng);
  QpProblem qp;
  qp.H = m.transpose() * m + 0.1 * Mat::Identity(n, n);
  qp.q.resize(n);
  qp.l.resize(n);
  qp.u.resize(n);
  for (int i = 0; i < n; ++i) {
    qp.q[i] = 3.0 * nd(rng);
    const double a = ud(rng), b = ud(rng);
    qp.l[i] = std::min(a, b);
    qp.u[i] = std::max(a, b) + 0.05;
  }
  qp.A = Mat::Identity(n, n);
  return qp;
}

ReducedSystem scalar_system(double a, double b, double c) {
  ReducedSystem s;
  s.Ad = Mat::Constant(1, 1, a);
  s.bd = Vec::Constant(1, b);
  s.c = Mat(2, 1);
  s.c << 0.5, c;
  return s;
}

const ParametricROM& small_rom() {
  static const ParametricROM rom = [] {
    GridConfig g;
    g.radius = 5e-4;
    g.n_r = 8;
    g.n_z = 36;
    static const FullOrderModel m(LayerStack{}, g);
    MorStudy s;
    return build_deim_gb_rom(m, s, 6, 3);
  }();
  return rom;
}

}  // namespace

TEST_CASE("box QPs match exhaustive active-set enumeration") {
  std::mt19937_64 rng(17);
  int warm_better = 0;
  for (int t = 0; t < 100; ++t) {
    const int n = 1 + t % 5;
    const QpProblem qp = random_box_qp(rng, n);
    const auto ref = oracle::box_qp_exhaustive(qp.H, qp.q, qp.l, qp.u);
    REQUIRE(ref.found);
    const QpSolution sol = solve_qp(qp);
    CAPTURE(t);
    REQUIRE(sol.status == QpStatus::solved);
    CHECK((sol.x - ref.x).cwiseAbs().maxCoeff() <= 1e-6);
    CHECK((sol.y - ref.y).cwiseAbs().maxCoeff() <= 1e-6);
    const KktResiduals r = kkt_residuals(qp, sol.x, sol.y);
    CHECK(r.max() <= 1e-6);
    QpWarmStart ws{ref.x, ref.y};
    if (solve_qp(qp, {}, &ws).iterations <= sol.iterations) ++warm_better;
  }
  CHECK(warm_better >= 90);
}

TEST_CASE("unconstrained QP equals the dense Newton step") {
  std::mt19937_64 rng(5);
  for (int n : {3, 8, 20}) {
    QpProblem qp = random_box_qp(rng, n);
    qp.l.setConstant(-kInf);
    qp.u.setConstant(kInf);
    const Vec exact = qp.H.llt().solve(-qp.q);
    const QpSolution sol = solve_qp(qp);
    REQUIRE(sol.status == QpStatus::solved);
    CHECK((sol.x - exact).norm() <= 1e-8 * std::max(1.0, exact.norm()));
  }
}

TEST_CASE("conflicting constraints are reported infeasible") {
  QpProblem qp;
  qp.H = Mat::Identity(1, 1);
  qp.q = Vec::Zero(1);
  qp.A = Mat::Ones(2, 1);
  qp.l.resize(2);
  qp.u.resize(2);
  qp.l << 1.0, -kInf;
  qp.u << kInf, 0.0;
  CHECK(solve_qp(qp).status == QpStatus::infeasible);
}

TEST_CASE("invalid QP data is rejected") {
  QpProblem qp;
  qp.H = Mat::Identity(2, 2);
  qp.q = Vec::Zero(2);
  qp.A = Mat::Identity(2, 2);
  qp.l = Vec::Ones(2);
  qp.u = Vec::Zero(2);
  CHECK_THROWS_AS(solve_qp(qp), std::invalid_argument);
}

TEST_CASE("condensing a scalar model with N = 2 matches the hand expansion") {
  const double a = 0.9, b = 0.2, c = 3.0, x0 = 1.5;
  OcpSpec spec;
  spec.horizon = 2;
  spec.y_ref = 5.0;
  spec.y_max = 7.0;
  spec.u_max = 4.0;
  spec.rho_u = 0.7;
  spec.u_ref = 1.2;
  const CondensedQP cq = condense(scalar_system(a, b, c), spec, Vec::Constant(1, x0));
  // J = (c x0 - r)² + (c a x0 + c b u0 - r)² + ρ(u0 - ur)² + ρ(u1 - ur)²
  const double r = spec.y_ref, rho = spec.rho_u, ur = *spec.u_ref;
  Mat h(2, 2);
  h << 2 * (c * b * c * b + rho), 0, 0, 2 * rho;
  Vec q(2);
  q << 2 * c * b * (c * a * x0 - r) - 2 * rho * ur, -2 * rho * ur;
  const double offset = (c * x0 - r) * (c * x0 - r) + (c * a * x0 - r) * (c * a * x0 - r) + 2 * rho * ur * ur;
  CHECK((cq.qp.H - h).norm() <= 1e-12);
  CHECK((cq.qp.q - q).norm() <= 1e-12);
  CHECK(cq.qp.offset == doctest::Approx(offset).epsilon(1e-14));
  REQUIRE(cq.qp.A.rows() == 3);
  CHECK(cq.qp.A(2, 0) == doctest::Approx(c * b));
  CHECK(cq.qp.A(2, 1) == 0.0);
  CHECK(cq.qp.u[2] == doctest::Approx(spec.y_max - c * a * x0));
  const Vec u(Vec::Constant(2, 0.3));
  const double direct = (c * x0 - r) * (c * x0 - r) +
                        (c * a * x0 + c * b * u[0] - r) * (c * a * x0 + c * b * u[0] - r) +
                        rho * (u[0] - ur) * (u[0] - ur) + rho * (u[1] - ur) * (u[1] - ur);
  CHECK(cq.qp.objective(u) == doctest::Approx(direct).epsilon(1e-13));
}

TEST_CASE("condensed Hessian is symmetric and bounded below by the input weight") {
  const ReducedSystem sys = rom_instantiate(small_rom(), reference::mean_alpha);
  OcpSpec spec;
  const Condenser cd(sys, spec);
  const CondensedQP cq = cd.condense(Vec::Zero(sys.Ad.rows()));
  CHECK((cq.qp.H - cq.qp.H.transpose()).norm() == 0.0);
  const Vec ev = Eigen::SelfAdjointEigenSolver<Mat>(cq.qp.H).eigenvalues();
  CHECK(ev.minCoeff() >= spec.rho_u);
  // markov entries against an explicit state recursion
  Vec x = Vec::Zero(sys.Ad.rows());
  for (int k = 0; k < spec.horizon; ++k) {
    CHECK(cd.markov()(k, 0) == doctest::Approx(sys.c.row(1).dot(x)).epsilon(1e-12).scale(1e-12));
    x = sys.Ad * x + (k == 0 ? sys.bd : Vec::Zero(x.size()));
  }
}

TEST_CASE("steady state at the reference input is stationary") {
  const ReducedSystem sys = rom_instantiate(small_rom(), reference::mean_alpha);
  OcpSpec spec;
  const Condenser cd(sys, spec);
  const Eigen::Index d = sys.Ad.rows();
  const Vec xs = (Mat::Identity(d, d) - sys.Ad).partialPivLu().solve(sys.bd * cd.u_ref());
  CHECK(sys.c.row(1).dot(xs) == doctest::Approx(spec.y_ref).epsilon(1e-12));
  const CondensedQP cq = cd.condense(xs);
  const Vec grad = cq.qp.H * Vec::Constant(spec.horizon, cd.u_ref()) + cq.qp.q;
  CHECK(grad.cwiseAbs().maxCoeff() <= 1e-8);
}

TEST_CASE("large input weight pins the unconstrained minimizer to the reference") {
  const ReducedSystem sys = rom_instantiate(small_rom(), reference::mean_alpha);
  OcpSpec spec;
  spec.rho_u = 1e12;
  const Condenser cd(sys, spec);
  const CondensedQP cq = cd.condense(Vec::Zero(sys.Ad.rows()));
  const Vec u = cq.qp.H.llt().solve(-cq.qp.q);
  CHECK((u.array() - cd.u_ref()).abs().maxCoeff() <= 1e-4 * cd.u_ref());
}

TEST_CASE("unreachable reference saturates the input") {
  const ReducedSystem sys = rom_instantiate(small_rom(), reference::mean_alpha);
  OcpSpec spec;
  spec.y_ref = 1e6;
  spec.y_max = 2e6;
  const CondensedQP cq = condense(sys, spec, Vec::Zero(sys.Ad.rows()));
  const QpSolution sol = solve_qp(cq.qp);
  REQUIRE(sol.status == QpStatus::solved);
  CHECK((sol.x.array() - spec.u_max).abs().maxCoeff() <= 1e-9);
}

TEST_CASE("initial peak above the bound is flagged") {
  OcpSpec spec;
  spec.horizon = 3;
  spec.u_ref = 0.0;
  const CondensedQP cq = condense(scalar_system(0.5, 1.0, 1.0), spec, Vec::Constant(1, 40.0));
  CHECK(cq.initial_violation);
}

TEST_CASE("OCP settings are validated") {
  OcpSpec spec;
  spec.horizon = 1;
  CHECK_THROWS(spec.validate());
  spec = {};
  spec.y_ref = 33.0;
  CHECK_THROWS(spec.validate());
  spec = {};
  spec.u_ref = 0.2;
  CHECK_THROWS(spec.validate());
}

TEST_CASE("closed loop on the reduced plant tracks the reference safely") {
  const ParametricROM& rom = small_rom();
  REQUIRE(rom.ok());
  OcpSpec spec;
  ClosedLoopOptions opt;
  opt.steps = 200;
  opt.compare_cold = true;
  const ClosedLoopResult r = run_closed_loop(spec, rom, opt);
  CHECK(r.failed_steps == 0);
  CHECK(r.max_violation <= 1e-6);
  for (double y : r.y_peak) CHECK(y <= spec.y_max + 1e-6);
  for (double u : r.u) {
    CHECK(u >= -1e-9);
    CHECK(u <= spec.u_max + 1e-9);
  }
  for (std::size_t k = 150; k < r.y_peak.size(); ++k) {
    CHECK(r.y_peak[k] >= 29.5);
    CHECK(r.y_peak[k] <= 30.5);
  }
  for (const auto& kr : r.kkt) CHECK(kr.max() <= 1e-6);
  int no_worse = 0;
  for (std::size_t k = 1; k < r.iterations.size(); ++k)
    if (r.iterations[k] <= r.cold_iterations[k]) ++no_worse;
  CHECK(no_worse >= 0.8 * static_cast<double>(r.iterations.size() - 1));
}

TEST_CASE("closed loop without actuation stays at zero") {
  OcpSpec spec;
  spec.u_max = 0.0;
  spec.u_ref = 0.0;
  ClosedLoopOptions opt;
  opt.steps = 30;
  const ClosedLoopResult r = run_closed_loop(spec, small_rom(), opt);
  CHECK(r.failed_steps == 0);
  for (double y : r.y_peak) CHECK(y == 0.0);
  for (double u : r.u) CHECK(u == 0.0);
}

TEST_CASE("closed loop with the full plant and projection observer") {
  GridConfig g;
  g.radius = 5e-4;
  g.n_r = 8;
  g.n_z = 36;
  const FullOrderModel m(LayerStack{}, g);
  const Stepper st(m, 1e-3);
  OcpSpec spec;
  ClosedLoopOptions opt;
  opt.steps = 100;
  opt.plant = PlantKind::full;
  CHECK_THROWS(run_closed_loop(spec, small_rom(), opt));
  const ClosedLoopResult r = run_closed_loop(spec, small_rom(), opt, &st);
  CHECK(r.failed_steps == 0);
  CHECK(r.y_peak.back() == doctest::Approx(30.0).epsilon(0.05));
  for (double u : r.u) CHECK(u <= spec.u_max + 1e-9);
}

TEST_CASE("closed-loop CSV and timing summary layout") {
  OcpSpec spec;
  spec.horizon = 5;
  ClosedLoopOptions opt;
  opt.steps = 3;
  const ClosedLoopResult r = run_closed_loop(spec, small_rom(), opt);
  const auto dir = std::filesystem::temp_directory_path();
  const std::string p1 = (dir / "retina_cl.csv").string(), p2 = (dir / "retina_timing.csv").string();
  write_closed_loop_csv(p1, r);
  write_timing_summary_csv(p2, {{2, 0.1, 0.2}, {5, 0.3, 0.4}});
  std::ifstream f1(p1), f2(p2);
  std::string line;
  std::getline(f1, line);
  CHECK(line == "t,u,y_vol,y_peak,qp_iters,solve_ms");
  int rows = 0;
  while (std::getline(f1, line)) ++rows;
  CHECK(rows == 3);
  std::getline(f2, line);
  CHECK(line == "N,2,5");
  std::getline(f2, line);
  CHECK(line == "avg_ms,0.1,0.3");
  std::getline(f2, line);
  CHECK(line == "max_ms,0.2,0.4");
  std::filesystem::remove(p1);
  std::filesystem::remove(p2);
}

#include "retina/mor.hpp"

#include <doctest.h>

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <random>
#include <set>

using namespace retina;

namespace {

GridConfig small_grid() {
  GridConfig g;
  g.radius = 5e-4;
  g.n_r = 8;
  g.n_z = 36;
  return g;
}

GridConfig tiny_grid() {
  GridConfig g;
  g.radius = 5e-4;
  g.n_r = 4;
  g.n_z = 12;
  return g;
}

MorStudy quick_study(bool two_param) {
  MorStudy s;
  s.two_param = two_param;
  s.scan_grid_2d = 3;
  s.scan_grid_1d = 4;
  s.horizon = 200;
  return s;
}

// sine of the largest principal angle between two column spans
double subspace_gap(const Mat& a, const Mat& b) {
  const Mat qa = orthonormal_basis(a);
  const Mat qb = orthonormal_basis(b);
  return (qb - qa * (qa.transpose() * qb)).norm();
}

Mat random_orthonormal(int n, int k, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> nd;
  Mat m(n, k);
  for (int j = 0; j < k; ++j)
    for (int i = 0; i < n; ++i) m(i, j) = nd(rng);
  return orthonormal_basis(m);
}

}  // namespace

TEST_CASE("DEIM selection on identity columns") {
  const Mat u = Mat::Identity(6, 3);
  CHECK(deim_select(u) == std::vector<int>{0, 1, 2});
}

TEST_CASE("DEIM selection matches the hand-executed greedy rule") {
  Mat u(3, 2);
  u.col(0) << 1.0, 2.0, 2.0;
  u.col(1) << 2.0, 1.0, -2.0;
  u /= 3.0;
  // |u1| ties at entries 1 and 2 -> 1; residual of u2 is (1.5, 0, -3)/3 -> 2
  CHECK(deim_select(u) == std::vector<int>{1, 2});
}

TEST_CASE("DEIM indices are distinct and rank deficiency is reported") {
  for (std::uint64_t seed = 1; seed <= 20; ++seed) {
    const auto idx = deim_select(random_orthonormal(40, 8, seed));
    CHECK(std::set<int>(idx.begin(), idx.end()).size() == idx.size());
  }
  Mat u = Mat::Zero(5, 2);
  u(0, 0) = 1.0;
  u(0, 1) = 1.0;
  CHECK_THROWS_AS(deim_select(u), NumericalError);
}

TEST_CASE("cumulative energy is monotone and reaches one") {
  const FullOrderModel m(LayerStack{}, small_grid());
  MorStudy s;
  const DeimOperator op = build_deim(input_snapshots(m, s.deim_params()), 3);
  const Vec& sv = op.singular_values;
  for (Eigen::Index i = 1; i < sv.size(); ++i) CHECK(sv[i] <= sv[i - 1]);
  double prev = 0.0;
  for (int k = 1; k <= sv.size(); ++k) {
    const double e = cumulative_energy(sv, k);
    CHECK(e >= prev);
    prev = e;
  }
  CHECK(prev == doctest::Approx(1.0).epsilon(1e-14));
}

TEST_CASE("DEIM interpolates exactly at the selected indices") {
  const FullOrderModel m(LayerStack{}, small_grid());
  MorStudy s;
  const DeimOperator db = build_deim(input_snapshots(m, s.deim_params()), 3);
  const DeimOperator dc = build_deim(output_snapshots(m, s.deim_params()), 3);
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> ur(0.2, 1.4), uc(0.0, 0.3);
  for (int t = 0; t < 10; ++t) {
    const AbsorptionScale a{ur(rng), uc(rng)};
    const Vec b = assemble_input(m, a);
    const Vec rb = db.reconstruct(b);
    for (int j : db.indices) CHECK(std::abs(rb[j] - b[j]) <= 1e-12 * b.cwiseAbs().maxCoeff());
    const Vec c = assemble_output_vol(m, a);
    const Vec rc = dc.reconstruct(c);
    for (int j : dc.indices) CHECK(std::abs(rc[j] - c[j]) <= 1e-12 * c.cwiseAbs().maxCoeff());
  }
}

TEST_CASE("DEIM reproduces snapshots when k equals the snapshot rank") {
  const FullOrderModel m(LayerStack{}, small_grid());
  const ParameterDomain dom;
  const auto params = parameter_grid(dom, 2, 2);
  const DeimOperator op = build_deim(input_snapshots(m, params), 4);
  for (const auto& a : params) {
    const Vec b = assemble_input(m, a);
    CHECK((op.reconstruct(b) - b).norm() <= 1e-10 * b.norm());
  }
}

TEST_CASE("parameter sampling") {
  const ParameterDomain dom;
  const auto g = parameter_grid(dom, 5, 4);
  REQUIRE(g.size() == 20);
  CHECK(g.front().rpe == dom.rpe_lo);
  CHECK(g.front().ch == dom.ch_lo);
  CHECK(g.back().rpe == dom.rpe_hi);
  CHECK(g.back().ch == dom.ch_hi);
  MorStudy s;
  CHECK(s.deim_params().size() == 20);
  CHECK(s.basis_params().size() == 9);
  CHECK(s.scan_params().size() == 25);
  s.two_param = false;
  CHECK(s.basis_params().size() == 5);
  CHECK(s.scan_params().size() == 9);
  for (const auto& a : s.deim_params()) CHECK(a.ch == s.alpha_ch_fixed);
}

TEST_CASE("global basis from one snapshot spans the local IRKA basis") {
  const FullOrderModel m(LayerStack{}, small_grid());
  const AbsorptionScale a = reference::mean_alpha;
  Mat c(2, m.size());
  c.row(0) = assemble_output_vol(m, a).transpose();
  c.row(1) = assemble_output_peak(m).transpose();
  const IrkaResult r = irka(SparseLti(m), assemble_input(m, a), c, 5);
  const ProjectionPair gb = global_basis(m, {a}, 5, 5);
  CHECK(subspace_gap(gb.V, r.basis.V) <= 1e-8);
  CHECK(subspace_gap(gb.W, r.basis.W) <= 1e-8);
  CHECK(gb.biorthogonality_defect() <= 1e-10);
}

TEST_CASE("global basis is identical with serial and parallel execution") {
  const FullOrderModel m(LayerStack{}, small_grid());
  const auto snaps = parameter_grid(ParameterDomain{}, 2, 2);
  const ProjectionPair p = global_basis(m, snaps, 4, 6, {}, Policy::parallel);
  const ProjectionPair s = global_basis(m, snaps, 4, 6, {}, Policy::serial);
  CHECK(p.V == s.V);
  CHECK(p.W == s.W);
}

TEST_CASE("exact projection with d = n reproduces the full model") {
  const FullOrderModel m(LayerStack{}, tiny_grid());
  const Stepper st(m, 1e-3);
  const int n = m.size();
  const ProjectionPair id{Mat::Identity(n, n), Mat::Identity(n, n)};
  const auto alphas = parameter_grid(ParameterDomain{}, 2, 2);
  const ScanReference ref = make_scan_reference(st, alphas, 300, 30.0, Policy::serial);
  const auto pw = error_scan_pointwise([&](const AbsorptionScale& a) { return project_system(st, id, a); }, ref);
  const ErrorMetrics w = worst_case(pw);
  CHECK_FALSE(w.failed);
  CHECK(w.inf_vol <= 1e-8);
  CHECK(w.inf_peak <= 1e-8);
  CHECK(w.l2_vol <= 1e-8);
  CHECK(w.l2_peak <= 1e-8);
  // DC gain of the d = n projection
  const ReducedSystem rs = project_system(st, id, alphas[0]);
  const Mat g = -rs.c * rs.A.partialPivLu().solve(rs.b);
  const DcGain full = dc_gain(m, alphas[0]);
  CHECK(g(0, 0) == doctest::Approx(full.vol).epsilon(1e-8));
  CHECK(g(1, 0) == doctest::Approx(full.peak).epsilon(1e-8));
}

TEST_CASE("worst-case errors dominate every grid point") {
  const FullOrderModel m(LayerStack{}, small_grid());
  const Stepper st(m, 1e-3);
  const MorStudy s = quick_study(true);
  const ScanReference ref = make_scan_reference(st, s.scan_params(), s.horizon, s.target);
  const ParametricROM rom = build_deim_gb_rom(m, s, 5, 3);
  REQUIRE(rom.ok());
  const auto pw = error_scan_pointwise(rom, ref);
  const ErrorMetrics w = error_scan(rom, ref);
  for (const auto& e : pw) {
    CHECK(w.inf_vol >= e.inf_vol);
    CHECK(w.inf_peak >= e.inf_peak);
    CHECK(w.l2_vol >= e.l2_vol);
    CHECK(w.l2_peak >= e.l2_peak);
  }
  const auto ps = error_scan_pointwise(rom, ref, Policy::serial);
  for (std::size_t i = 0; i < pw.size(); ++i) {
    CHECK(ps[i].l2_vol == pw[i].l2_vol);
    CHECK(ps[i].inf_peak == pw[i].inf_peak);
  }
}

TEST_CASE("trajectory errors skip vanishing reference samples") {
  Trajectory full;
  full.y_vol = {0.0, 1.0, 2.0};
  full.y_peak = {0.0, 2.0, 4.0};
  ReducedTrajectory r;
  r.y_vol = {0.5, 1.1, 2.0};
  r.y_peak = {0.0, 2.0, 3.0};
  const ErrorMetrics e = trajectory_errors(r, full);
  CHECK(e.inf_vol == doctest::Approx(0.1));
  CHECK(e.l2_vol == doctest::Approx(std::sqrt(0.01 / 5.0)));
  CHECK(e.inf_peak == doctest::Approx(0.25));
  CHECK(e.l2_peak == doctest::Approx(std::sqrt(1.0 / 20.0)));
}

TEST_CASE("DEIM ROM input is exact at snapshots when k equals the snapshot rank") {
  const FullOrderModel m(LayerStack{}, small_grid());
  MorStudy s;
  s.deim_snapshots = 4;  // 2 x 2 grid
  const ProjectionPair gb = global_basis(m, s.basis_params(), 4, 6);
  const ParametricROM rom = build_deim_gb_rom(m, s, gb, 4);
  REQUIRE(rom.failure.empty());
  for (const auto& a : s.deim_params()) {
    const Vec wb = gb.W.transpose() * assemble_input(m, a);
    const ReducedSystem rs = rom_instantiate(rom, a);
    CHECK((wb - rs.b).norm() <= 1e-8 * wb.norm());
    const Mat cv = assemble_output_vol(m, a).transpose() * gb.V;
    CHECK((cv - rs.c.row(0)).norm() <= 1e-8 * cv.norm());
  }
}

TEST_CASE("DEIM ROM stores n-independent online data") {
  const FullOrderModel m(LayerStack{}, small_grid());
  const MorStudy s = quick_study(true);
  const ParametricROM rom = build_deim_gb_rom(m, s, 5, 3);
  REQUIRE(rom.failure.empty());
  CHECK(rom.b_stencils.size() == 3);
  CHECK(rom.c_stencils.size() == 3);
  CHECK(rom.b_factor.rows() == 5);
  CHECK(rom.b_factor.cols() == 3);
  CHECK(rom.c_factor.rows() == 3);
  CHECK(rom.c_factor.cols() == 5);
  const auto& sv = rom.b_singular_values;
  CHECK(sv.size() == 20);
}

TEST_CASE("Taylor coefficients match finite differences of lower orders") {
  const FullOrderModel m(LayerStack{}, small_grid());
  const AbsorptionScale a0 = reference::mean_alpha;
  const double h = 1e-5;
  const Vec b11 = assemble_input(m, a0, DerivOrder{1, 1});
  const Vec fd = (assemble_input(m, {a0.rpe, a0.ch + h}, DerivOrder{1, 0}) -
                  assemble_input(m, {a0.rpe, a0.ch - h}, DerivOrder{1, 0})) /
                 (2 * h);
  CHECK((fd - b11).norm() <= 1e-6 * b11.norm());
  const Vec c30 = assemble_output_vol(m, a0, DerivOrder{3, 0});
  const Vec fdc = (assemble_output_vol(m, {a0.rpe + h, a0.ch}, DerivOrder{2, 0}) -
                   assemble_output_vol(m, {a0.rpe - h, a0.ch}, DerivOrder{2, 0})) /
                  (2 * h);
  CHECK((fdc - c30).norm() <= 1e-6 * c30.norm());
}

TEST_CASE("full-vector Taylor truncation error decreases with order") {
  const FullOrderModel m(LayerStack{}, small_grid());
  const AbsorptionScale a0 = reference::mean_alpha;
  const AbsorptionScale scale{0.5, 0.05};
  const AbsorptionScale a{a0.rpe + 0.1, a0.ch};
  const Vec exact = assemble_input(m, a);
  auto err = [&](int k) {
    const auto mon = taylor_monomials(k, true);
    return (taylor_sum(taylor_coefficients_input(m, a0, mon, scale), mon, a0, scale, a) - exact).norm();
  };
  CHECK(err(4) <= err(2));
  CHECK(err(2) <= err(1));
  CHECK(taylor_monomials(3, true).size() == 10);
  CHECK(taylor_monomials(3, false).size() == 4);
}

TEST_CASE("Taylor ROM is exact at the expansion point") {
  const FullOrderModel m(LayerStack{}, small_grid());
  const MorStudy s = quick_study(true);
  const ParametricROM rom = build_taylor_rom(m, s, 6, 3);
  REQUIRE(rom.failure.empty());
  const AbsorptionScale a0 = s.expansion_point();
  const ReducedSystem rs = rom_instantiate(rom, a0);
  const Vec wb = rom.W.transpose() * assemble_input(m, a0);
  CHECK((rs.b - wb).norm() <= 1e-13 * wb.norm());
  const Mat cv = assemble_output_vol(m, a0).transpose() * rom.V;
  CHECK((rs.c.row(0) - cv).norm() <= 1e-13 * cv.norm());
  const Mat cp = assemble_output_peak(m).transpose() * rom.V;
  CHECK((rs.c.row(1) - cp).norm() <= 1e-14 * cp.norm());
}

TEST_CASE("first-order Taylor ROM difference quotient equals the projected derivative") {
  const FullOrderModel m(LayerStack{}, small_grid());
  const MorStudy s = quick_study(true);
  const ParametricROM rom = build_taylor_rom(m, s, 5, 1);
  REQUIRE(rom.failure.empty());
  const AbsorptionScale a0 = s.expansion_point();
  const Vec wd = rom.W.transpose() * assemble_input(m, a0, Deriv::d_rpe);
  for (double h : {1e-2, 1e-4}) {
    const Vec q = (rom_instantiate(rom, {a0.rpe + h, a0.ch}).b - rom_instantiate(rom, a0).b) / h;
    CHECK((q - wd).norm() <= 1e-8 * wd.norm());
  }
}

TEST_CASE("one-parameter Taylor ROM ignores the choroid value") {
  const FullOrderModel m(LayerStack{}, small_grid());
  const MorStudy s = quick_study(false);
  const ParametricROM rom = build_taylor_rom(m, s, 5, 2);
  REQUIRE(rom.failure.empty());
  CHECK(rom.monomials.size() == 3);
  const ReducedSystem a = rom_instantiate(rom, {0.9, 0.05});
  const ReducedSystem b = rom_instantiate(rom, {0.9, 0.15});
  CHECK(a.b == b.b);
}

TEST_CASE("reduced simulation follows the discrete recursion") {
  ReducedSystem s;
  s.Ad = Mat::Identity(1, 1) * 0.5;
  s.bd = Vec::Ones(1);
  s.c = Mat::Ones(2, 1);
  s.c(0, 0) = 2.0;
  const ReducedTrajectory tr = simulate_reduced(s, {1.0, 1.0, 1.0, 1.0});
  CHECK(tr.y_peak == std::vector<double>{0.0, 1.0, 1.5, 1.75});
  CHECK(tr.y_vol[3] == 3.5);
}

TEST_CASE("ROM file round trip") {
  const FullOrderModel m(LayerStack{}, small_grid());
  const MorStudy s = quick_study(true);
  const std::string path = (std::filesystem::temp_directory_path() / "retina_rom_roundtrip.json").string();
  for (const ParametricROM& rom : {build_deim_gb_rom(m, s, 5, 3), build_taylor_rom(m, s, 5, 2)}) {
    REQUIRE(rom.failure.empty());
    save_rom(path, rom);
    const ParametricROM back = load_rom(path);
    CHECK(back.variant == rom.variant);
    CHECK(back.Ard == rom.Ard);
    const AbsorptionScale a{0.5, 0.07};
    const ReducedSystem x = rom_instantiate(rom, a);
    const ReducedSystem y = rom_instantiate(back, a);
    CHECK(x.b == y.b);
    CHECK(x.bd == y.bd);
    CHECK(x.c == y.c);
  }
  std::filesystem::remove(path);
  CHECK_THROWS(load_rom(path));
}

TEST_CASE("error table CSV layout") {
  ErrorTable t;
  ErrorMetrics ok{0.1, 0.2, 0.01, 0.02, false};
  ErrorMetrics bad;
  bad.failed = true;
  t.cells = {{RomVariant::deim_gb, 3, 5, ok}, {RomVariant::deim_gb, 3, 6, ok}, {RomVariant::taylor, 3, 5, ok},
             {RomVariant::taylor, 3, 6, bad}};
  const std::string path = (std::filesystem::temp_directory_path() / "retina_err_table.csv").string();
  write_error_table_csv(path, t, ErrorMetric::l2);
  std::ifstream in(path);
  std::string line;
  std::getline(in, line);
  CHECK(line == "method,output,k,d5,d6");
  std::getline(in, line);
  CHECK(line == "deim_gb,vol,3,1.000000e-02,1.000000e-02");
  std::getline(in, line);
  CHECK(line == "deim_gb,peak,3,2.000000e-02,2.000000e-02");
  std::getline(in, line);
  CHECK(line == "taylor,vol,3,1.000000e-02,†");
  std::filesystem::remove(path);
}

TEST_CASE("ROM instantiation cost does not grow with the full order") {
  auto time_instantiations = [](const GridConfig& g) {
    const FullOrderModel m(LayerStack{}, g);
    MorStudy s = quick_study(true);
    const ParametricROM rom = build_deim_gb_rom(m, s, 6, 3);
    REQUIRE(rom.failure.empty());
    double best = 1e300;
    double sink = 0.0;
    for (int rep = 0; rep < 5; ++rep) {
      const auto t0 = std::chrono::steady_clock::now();
      for (int i = 0; i < 100000; ++i) {
        const ReducedSystem rs = rom_instantiate(rom, {0.4 + 1e-6 * (i % 1000), 0.1});
        sink += rs.b[0];
      }
      best = std::min(best, std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count());
    }
    CHECK(std::isfinite(sink));
    return best;
  };
  GridConfig small = small_grid();
  GridConfig large;
  large.n_r = 41;
  large.n_z = 61;
  const double ts = time_instantiations(small);
  const double tl = time_instantiations(large);
  MESSAGE("instantiation time (1e5 calls): n small " << ts << " s, n large " << tl << " s");
  CHECK(tl / ts <= 1.2);
}

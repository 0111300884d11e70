#include "commands.hpp"

#include "retina/estimate.hpp"
#include "retina/mor.hpp"
#include "retina/mpc.hpp"
#include "retina/sensitivity.hpp"

#include <CLI11.hpp>
#include <json.hpp>
#include <omp.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <random>
#include <sstream>

namespace retina::cli {

namespace {

using ojson = nlohmann::ordered_json;
namespace fs = std::filesystem;

ojson alpha_json(const AbsorptionScale& a) { return ojson{{"rpe", a.rpe}, {"ch", a.ch}}; }

ojson vec_json(const Vec& v) { return ojson(std::vector<double>(v.data(), v.data() + v.size())); }

ojson mat_json(const Mat& m) {
  ojson rows = ojson::array();
  for (Eigen::Index i = 0; i < m.rows(); ++i) rows.push_back(vec_json(m.row(i).transpose()));
  return rows;
}

void write_json(const fs::path& path, const ojson& j) {
  std::ofstream f(path);
  if (!f) throw std::runtime_error("cannot open " + path.string());
  f << j.dump(2) << '\n';
}

FitMode fit_mode(const std::string& s) { return s == "rpe-only" ? FitMode::rpe_only : FitMode::two_param; }

MorStudy make_study(const ExperimentConfig& c) {
  MorStudy s;
  s.domain = c.domain;
  s.two_param = c.mor.two_param;
  s.alpha_ch_fixed = c.mor.alpha_ch_fixed;
  s.expansion = c.mor.expansion;
  s.deim_snapshots = c.mor.deim_snapshots;
  s.basis_grid_2d = c.mor.basis_grid_2d;
  s.basis_grid_1d = c.mor.basis_grid_1d;
  s.scan_grid_2d = c.mor.scan_grid_2d;
  s.scan_grid_1d = c.mor.scan_grid_1d;
  s.horizon = c.mor.horizon;
  s.target = c.mor.target;
  return s;
}

ParametricROM build_rom(const FullOrderModel& m, const ExperimentConfig& c, int d, int k) {
  const MorStudy s = make_study(c);
  return c.mor.method == "taylor" ? build_taylor_rom(m, s, d, k) : build_deim_gb_rom(m, s, d, k);
}

struct Context {
  const ExperimentConfig& cfg;
  const RunOptions& opt;
  fs::path out;
  FullOrderModel model;
  Stepper stepper;

  Context(const ExperimentConfig& c, const RunOptions& o)
      : cfg(c), opt(o), out(c.out_dir), model(c.layers, c.grid), stepper(model, c.grid.dt) {}
};

double noise_level(const EstimationConfig& e, const std::vector<double>& clean) {
  if (e.noise_rel == 0.0) return e.noise_std;
  double peak = 0.0;
  for (double v : clean) peak = std::max(peak, std::abs(v));
  return e.noise_rel * peak;
}

MeasurementSet synthetic_data(const Context& ctx, const AbsorptionScale& alpha, std::uint64_t seed) {
  const std::vector<double> u = ctx.cfg.input.sequence();
  const MeasurementSet clean = synth_measurements(ctx.stepper, alpha, u, 0.0, seed);
  const double std = noise_level(ctx.cfg.estimation, clean.y);
  if (std == 0.0) return clean;
  MeasurementSet noisy = clean;
  noisy.y = add_noise(clean.y, std, seed);
  return noisy;
}

ojson estimation_json(const EstimationResult& r) {
  const ConfidenceIntervals ci = confidence_intervals(r, r.p_level);
  return ojson{{"mode", r.mode == FitMode::rpe_only ? "rpe-only" : "two-param"},
               {"alpha", alpha_json(r.alpha)},
               {"cov", mat_json(r.cov)},
               {"p_level", r.p_level},
               {"half_width", vec_json(ci.half_width)},
               {"ci_low", vec_json(ci.low)},
               {"ci_high", vec_json(ci.high)},
               {"resnorm", r.resnorm},
               {"iters", r.iterations},
               {"converged", r.converged},
               {"singular", r.singular},
               {"condition", r.condition}};
}

FitOptions fit_options(const Context& ctx) {
  FitOptions fo;
  fo.alpha_ch_fixed = ctx.opt.alpha_ch_fixed.value_or(ctx.cfg.estimation.alpha_ch_fixed);
  fo.p_level = ctx.opt.p_level.value_or(ctx.cfg.estimation.p_level);
  return fo;
}

std::string cmd_model_info(Context& ctx) {
  const FullOrderModel& m = ctx.model;
  const DcGain g = dc_gain(m, ctx.cfg.alpha);
  const auto iv = axial_intervals(ctx.cfg.layers, ctx.cfg.grid);
  const double u_ss = steady_state_control(m, ctx.cfg.alpha, 30.0);
  write_json(ctx.out / "model_info.json",
             ojson{{"n", m.size()},
                   {"n_r", ctx.cfg.grid.n_r},
                   {"n_z", ctx.cfg.grid.n_z},
                   {"axial_intervals", std::vector<int>(iv.begin(), iv.end())},
                   {"peak_index", m.peak_index()},
                   {"beam_nodes", m.beam_nodes()},
                   {"alpha", alpha_json(ctx.cfg.alpha)},
                   {"dc_gain_vol", g.vol},
                   {"dc_gain_peak", g.peak},
                   {"steady_state_control_30K", u_ss}});
  std::ostringstream s;
  s << "model-info: n=" << m.size() << " dc_vol=" << g.vol << " dc_peak=" << g.peak;
  return s.str();
}

std::string cmd_simulate(Context& ctx) {
  const Trajectory tr = simulate(ctx.stepper, ctx.cfg.alpha, ctx.cfg.input.sequence());
  write_trajectory_csv((ctx.out / "trajectory.csv").string(), tr);
  std::ostringstream s;
  s << "simulate: " << tr.size() << " samples, final y_vol=" << tr.y_vol.back() << " y_peak=" << tr.y_peak.back();
  return s.str();
}

std::string cmd_synth_data(Context& ctx) {
  const auto& e = ctx.cfg.estimation;
  const MeasurementSet data = synthetic_data(ctx, e.alpha_true, e.seed);
  write_measurements_csv((ctx.out / "measurements.csv").string(), data);
  if (ctx.opt.emit_plot_data) {
    const MeasurementSet clean = synth_measurements(ctx.stepper, e.alpha_true, data.u, 0.0, e.seed);
    write_measurements_csv((ctx.out / "measurements_clean.csv").string(), clean);
  }
  return "synth-data: " + std::to_string(data.size()) + " samples -> measurements.csv";
}

std::string cmd_estimate(Context& ctx) {
  const auto& e = ctx.cfg.estimation;
  const FitMode mode = fit_mode(ctx.opt.mode.empty() ? e.mode : ctx.opt.mode);
  const MeasurementSet data = e.data.empty() ? synthetic_data(ctx, e.alpha_true, e.seed) : read_measurements_csv(e.data);
  const ResponseCache cache(ctx.stepper, data.u);
  const FitOptions fo = fit_options(ctx);
  const EstimationResult r = fit(cache, data, e.alpha0, mode, fo);
  write_json(ctx.out / "estimate.json", estimation_json(r));
  if (!e.horizons.empty()) {
    std::vector<std::size_t> hs(e.horizons.begin(), e.horizons.end());
    const auto hr = horizon_study(cache, data, hs, e.alpha0, mode, fo);
    std::ofstream f(ctx.out / "horizon_study.csv");
    f << std::setprecision(10) << "horizon,alpha_rpe,alpha_ch,rel_err_rpe,rel_err_ch,converged\n";
    for (const auto& h : hr)
      f << h.horizon << ',' << h.alpha.rpe << ',' << h.alpha.ch << ',' << h.rel_err_rpe << ',' << h.rel_err_ch << ','
        << (h.converged ? 1 : 0) << '\n';
  }
  if (ctx.opt.emit_plot_data) {
    const std::vector<double> yf = cache.outputs(r.alpha);
    std::ofstream f(ctx.out / "fit_trajectory.csv");
    f << std::setprecision(10) << "t,y_meas,y_fit\n";
    for (std::size_t k = 0; k < data.size(); ++k) f << k * data.dt << ',' << data.y[k] << ',' << yf[k] << '\n';
  }
  std::ostringstream s;
  s << "estimate: alpha_rpe=" << r.alpha.rpe;
  if (mode == FitMode::two_param) s << " alpha_ch=" << r.alpha.ch;
  s << " converged=" << (r.converged ? "yes" : "no") << " -> estimate.json";
  return s.str();
}

std::string cmd_cohort(Context& ctx) {
  const auto& e = ctx.cfg.estimation;
  const FitMode mode = fit_mode(ctx.opt.mode.empty() ? e.mode : ctx.opt.mode);
  const int n = e.cohort_size;
  std::mt19937_64 rng(e.seed);
  std::normal_distribution<double> nr(e.cohort_mean.rpe, e.cohort_sigma.rpe), nc(e.cohort_mean.ch, e.cohort_sigma.ch);
  std::vector<AbsorptionScale> truth(n);
  for (auto& a : truth) {
    do a.rpe = nr(rng);
    while (a.rpe <= 1e-3);
    do a.ch = nc(rng);
    while (a.ch <= 1e-3);
  }
  const std::vector<double> u = ctx.cfg.input.sequence();
  const ResponseCache cache(ctx.stepper, u);
  const FitOptions fo = fit_options(ctx);
  std::vector<EstimationResult> fits(n);
#pragma omp parallel for schedule(dynamic)
  for (int i = 0; i < n; ++i) {
    const std::uint64_t seed = e.seed + 1 + static_cast<std::uint64_t>(i);
    const std::vector<double> clean = cache.outputs(truth[i]);
    const MeasurementSet data = synth_measurements(cache, ctx.cfg.grid.dt, truth[i], noise_level(e, clean), seed);
    fits[i] = fit(cache, data, e.alpha0, mode, fo);
  }
  std::vector<AbsorptionScale> fitted;
  std::ofstream f(ctx.out / "cohort_fits.csv");
  f << std::setprecision(10) << "spot,rpe_true,ch_true,rpe_fit,ch_fit,converged\n";
  for (int i = 0; i < n; ++i) {
    f << i << ',' << truth[i].rpe << ',' << truth[i].ch << ',' << fits[i].alpha.rpe << ',' << fits[i].alpha.ch << ','
      << (fits[i].converged ? 1 : 0) << '\n';
    fitted.push_back(fits[i].alpha);
  }
  const CohortStats cs = cohort_stats(fitted);
  auto stats = [](const ParameterStats& p) { return ojson{{"mean", p.mean}, {"sigma", p.sigma}, {"cv", p.cv}}; };
  write_json(ctx.out / "cohort.json", ojson{{"count", cs.count}, {"rpe", stats(cs.rpe)}, {"ch", stats(cs.ch)}});
  std::ostringstream s;
  s << "cohort: " << n << " spots, mean rpe=" << cs.rpe.mean << " ch=" << cs.ch.mean;
  return s.str();
}

std::string cmd_sensitivity(Context& ctx) {
  const auto& sc = ctx.cfg.sensitivity;
  const LayerStack& l = ctx.cfg.layers;
  const double g_rpe = g_partial_norm(l, sc.alpha, GParam::rpe, Units::micron);
  const double g_ch = g_partial_norm(l, sc.alpha, GParam::ch, Units::micron);
  const ScaledG sg = scaled_g_sensitivities(l, sc.alpha, sc.sigma);
  const DcSensitivities ds = dc_sensitivities(ctx.model, sc.alpha);
  const PerturbationResult pr = perturbation_experiment(ctx.stepper, sc.alpha, {sc.sigma.rpe, 0.0}, sc.steps,
                                                        std::nullopt, sc.target);
  write_perturbation_csv((ctx.out / "perturbation.csv").string(), pr);
  write_json(ctx.out / "sensitivity.json",
             ojson{{"alpha", alpha_json(sc.alpha)},
                   {"g_norm_micron", ojson{{"rpe", g_rpe}, {"ch", g_ch}}},
                   {"g_norm_scaled", ojson{{"rpe", sg.rpe}, {"ch", sg.ch}, {"ratio", sg.rpe / sg.ch}}},
                   {"dc_sensitivities", ojson{{"vol_rpe", ds.vol_rpe},
                                              {"vol_ch", ds.vol_ch},
                                              {"peak_rpe", ds.peak_rpe},
                                              {"peak_ch", ds.peak_ch}}},
                   {"dc_sensitivities_scaled", ojson{{"vol_rpe", sc.sigma.rpe * ds.vol_rpe},
                                                     {"vol_ch", sc.sigma.ch * ds.vol_ch},
                                                     {"peak_rpe", sc.sigma.rpe * ds.peak_rpe},
                                                     {"peak_ch", sc.sigma.ch * ds.peak_ch}}},
                   {"perturbation_u", pr.u},
                   {"perturbation_final_err_vol", pr.err_vol.back()}});
  std::ostringstream s;
  s << "sensitivity: g_rpe=" << g_rpe << " g_ch=" << g_ch << " scaled ratio=" << sg.rpe / sg.ch;
  return s.str();
}

std::string cmd_reduce(Context& ctx) {
  const auto& mc = ctx.cfg.mor;
  const ParametricROM rom = build_rom(ctx.model, ctx.cfg, mc.d, mc.k);
  if (!rom.failure.empty()) throw NumericalError("reduce: " + rom.failure);
  save_rom((ctx.out / "rom.json").string(), rom);
  const MorStudy study = make_study(ctx.cfg);
  const ScanReference ref = make_scan_reference(ctx.stepper, study.scan_params(), study.horizon, study.target);
  const ErrorMetrics em = error_scan(rom, ref);
  if (rom.variant == RomVariant::deim_gb)
    write_singular_values_csv((ctx.out / "singular_values.csv").string(), rom.b_singular_values,
                              rom.c_singular_values);
  write_json(ctx.out / "rom_summary.json", ojson{{"method", to_string(rom.variant)},
                                                 {"d", rom.d},
                                                 {"k", rom.k},
                                                 {"n", ctx.model.size()},
                                                 {"stable", rom.stable},
                                                 {"failed", em.failed},
                                                 {"err_inf_vol", em.inf_vol},
                                                 {"err_inf_peak", em.inf_peak},
                                                 {"err_l2_vol", em.l2_vol},
                                                 {"err_l2_peak", em.l2_peak}});
  if (ctx.opt.emit_plot_data) {
    const AbsorptionScale a = study.expansion_point();
    const std::vector<double> u(study.horizon, steady_state_control(ctx.model, a, study.target));
    const Trajectory full = simulate(ctx.stepper, a, u);
    const ReducedTrajectory red = simulate_reduced(rom_instantiate(rom, a), u);
    std::ofstream f(ctx.out / "rom_vs_full.csv");
    f << std::setprecision(10) << "t,y_vol_full,y_vol_rom,y_peak_full,y_peak_rom\n";
    for (std::size_t k = 0; k < u.size(); ++k)
      f << full.t[k] << ',' << full.y_vol[k] << ',' << red.y_vol[k] << ',' << full.y_peak[k] << ',' << red.y_peak[k]
        << '\n';
  }
  std::ostringstream s;
  s << "reduce: " << to_string(rom.variant) << " d=" << rom.d << " k=" << rom.k << " stable=" << rom.stable
    << " err_l2 vol=" << em.l2_vol << " peak=" << em.l2_peak << " -> rom.json";
  return s.str();
}

std::string cmd_compare_mor(Context& ctx) {
  const auto& mc = ctx.cfg.mor;
  const MorStudy study = make_study(ctx.cfg);
  const ScanReference ref = make_scan_reference(ctx.stepper, study.scan_params(), study.horizon, study.target);
  const ErrorTable t = compare_mor(ctx.model, study, ref, mc.orders_d, mc.orders_k);
  write_error_table_csv((ctx.out / "err_inf.csv").string(), t, ErrorMetric::inf);
  write_error_table_csv((ctx.out / "err_l2.csv").string(), t, ErrorMetric::l2);
  const int k = std::max(1, *std::max_element(mc.orders_k.begin(), mc.orders_k.end()));
  const auto params = study.deim_params();
  const Vec sb = build_deim(input_snapshots(ctx.model, params), k).singular_values;
  const Vec sc = build_deim(output_snapshots(ctx.model, params), k).singular_values;
  write_singular_values_csv((ctx.out / "singular_values.csv").string(), sb, sc);
  int failed = 0;
  for (const auto& c : t.cells) failed += c.metrics.failed ? 1 : 0;
  return "compare-mor: " + std::to_string(t.cells.size()) + " cells (" + std::to_string(failed) +
         " failed) -> err_inf.csv, err_l2.csv, singular_values.csv";
}

std::string cmd_mpc(Context& ctx) {
  const auto& pc = ctx.cfg.mpc;
  const ParametricROM rom =
      ctx.cfg.mor.rom_path.empty() ? build_rom(ctx.model, ctx.cfg, ctx.cfg.mor.d, ctx.cfg.mor.k)
                                   : load_rom(ctx.cfg.mor.rom_path);
  if (!rom.ok()) throw NumericalError("mpc: reduced model unusable " + rom.failure);
  std::vector<int> horizons = pc.horizons.empty() ? std::vector<int>{pc.horizon} : pc.horizons;
  std::vector<TimingRow> rows;
  ojson runs = ojson::array();
  for (int n : horizons) {
    OcpSpec spec;
    spec.horizon = n;
    spec.y_ref = pc.y_ref;
    spec.y_max = pc.y_max;
    spec.u_max = pc.u_max;
    spec.rho_u = pc.rho_u;
    spec.u_ref = pc.u_ref;
    spec.alpha = pc.alpha;
    ClosedLoopOptions opt;
    opt.steps = pc.steps;
    opt.plant = pc.plant == "full" ? PlantKind::full : PlantKind::reduced;
    opt.plant_alpha = pc.plant_alpha;
    const ClosedLoopResult r = run_closed_loop(spec, rom, opt, opt.plant == PlantKind::full ? &ctx.stepper : nullptr);
    write_closed_loop_csv((ctx.out / ("closed_loop_N" + std::to_string(n) + ".csv")).string(), r);
    rows.push_back({n, r.average_solve_ms(), r.max_solve_ms()});
    double ymax = 0.0;
    for (double y : r.y_peak) ymax = std::max(ymax, y);
    runs.push_back(ojson{{"horizon", n},
                         {"u_ref", r.u_ref},
                         {"failed_steps", r.failed_steps},
                         {"max_violation", r.max_violation},
                         {"max_y_peak", ymax},
                         {"final_y_peak", r.y_peak.back()}});
  }
  write_timing_summary_csv((ctx.out / "timing.csv").string(), rows);
  write_json(ctx.out / "mpc.json", ojson{{"plant", pc.plant}, {"runs", runs}});
  std::ostringstream s;
  s << "mpc: " << horizons.size() << " horizon(s), N=" << rows.back().horizon << " avg " << rows.back().avg_ms
    << " ms max " << rows.back().max_ms << " ms -> timing.csv";
  return s.str();
}

void set_threads(int threads) {
  if (threads <= 0) {
    if (const char* env = std::getenv("RETINA_PMOR_THREADS")) {
      try {
        threads = std::stoi(env);
      } catch (const std::exception&) {
        throw ConfigError("RETINA_PMOR_THREADS: expected a positive integer");
      }
      if (threads <= 0) throw ConfigError("RETINA_PMOR_THREADS: expected a positive integer");
    }
  }
  if (threads > 0) omp_set_num_threads(threads);
}

}  // namespace

const std::vector<std::string>& subcommands() {
  static const std::vector<std::string> names{"model-info", "simulate", "synth-data",  "estimate", "cohort",
                                              "sensitivity", "reduce",  "compare-mor", "mpc"};
  return names;
}

std::string run_subcommand(const std::string& command, const ExperimentConfig& config, const RunOptions& options) {
  if (!options.mode.empty() && options.mode != "two-param" && options.mode != "rpe-only")
    throw ConfigError("--mode: must be two-param or rpe-only");
  if (options.p_level && !(*options.p_level > 0.0 && *options.p_level < 1.0))
    throw ConfigError("--p-level: must lie in (0, 1)");
  set_threads(options.threads);
  fs::create_directories(config.out_dir);
  {
    std::ofstream f(fs::path(config.out_dir) / "resolved_config.json");
    f << dump_config(config);
  }
  Context ctx(config, options);
  if (command == "model-info") return cmd_model_info(ctx);
  if (command == "simulate") return cmd_simulate(ctx);
  if (command == "synth-data") return cmd_synth_data(ctx);
  if (command == "estimate") return cmd_estimate(ctx);
  if (command == "cohort") return cmd_cohort(ctx);
  if (command == "sensitivity") return cmd_sensitivity(ctx);
  if (command == "reduce") return cmd_reduce(ctx);
  if (command == "compare-mor") return cmd_compare_mor(ctx);
  if (command == "mpc") return cmd_mpc(ctx);
  throw ConfigError("unknown subcommand " + command);
}

int run_command(int argc, char** argv) {
  CLI::App app{"Parametric model reduction, identification and MPC for retinal laser heating"};
  app.require_subcommand(1);
  app.fallthrough();
  std::string config_path, out_dir;
  RunOptions opt;
  app.add_option("--config", config_path, "JSON configuration file (defaults when omitted)");
  app.add_option("--out-dir", out_dir, "Output directory (overrides out_dir)");
  app.add_option("--threads", opt.threads, "OpenMP threads (fallback: RETINA_PMOR_THREADS)");
  app.add_flag("--emit-plot-data", opt.emit_plot_data, "Write additional plot-ready CSV files");
  for (const auto& name : subcommands()) {
    CLI::App* sub = app.add_subcommand(name);
    if (name == "estimate" || name == "cohort") {
      sub->add_option("--mode", opt.mode, "two-param or rpe-only");
      sub->add_option("--alpha-ch-fixed", opt.alpha_ch_fixed, "Fixed choroid prefactor in rpe-only mode");
      sub->add_option("--p-level", opt.p_level, "Confidence level");
    }
  }
  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 1;
  }
  const std::string command = app.get_subcommands().front()->get_name();
  try {
    ExperimentConfig cfg = config_path.empty() ? ExperimentConfig{} : parse_config(config_path);
    if (!out_dir.empty()) cfg.out_dir = out_dir;
    std::cout << run_subcommand(command, cfg, opt) << std::endl;
    return 0;
  } catch (const ConfigError& e) {
    std::cerr << "configuration error: " << e.what() << '\n';
    return 1;
  } catch (const std::invalid_argument& e) {
    std::cerr << "configuration error: " << command << ": " << e.what() << '\n';
    return 1;
  } catch (const NumericalError& e) {
    std::cerr << "numerical failure in " << command << ": " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "failure in " << command << ": " << e.what() << '\n';
    return 2;
  }
}

}  // namespace retina::cli

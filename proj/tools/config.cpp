#include "config.hpp"

#include "retina/model.hpp"

#include <json.hpp>

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

namespace retina::cli {

namespace {

using json = nlohmann::json;
using ojson = nlohmann::ordered_json;

class Section {
 public:
  Section(const json& j, std::string path) : j_(j), path_(std::move(path)) {
    if (!j_.is_object()) fail(path_.empty() ? "<root>" : path_, "expected an object");
  }

  void finish() const {
    for (const auto& [key, _] : j_.items())
      if (!seen_.count(key)) fail(field(key), "unknown key");
  }

  bool has(const std::string& key) {
    seen_.insert(key);
    return j_.contains(key);
  }

  void get(const std::string& key, double& out) {
    if (!has(key)) return;
    const json& v = j_.at(key);
    if (!v.is_number()) fail(field(key), "expected a number");
    out = v.get<double>();
  }

  void get(const std::string& key, int& out) {
    if (!has(key)) return;
    const json& v = j_.at(key);
    if (!v.is_number_integer()) fail(field(key), "expected an integer");
    out = v.get<int>();
  }

  void get(const std::string& key, std::uint64_t& out) {
    if (!has(key)) return;
    const json& v = j_.at(key);
    if (!v.is_number_unsigned()) fail(field(key), "expected a non-negative integer");
    out = v.get<std::uint64_t>();
  }

  void get(const std::string& key, bool& out) {
    if (!has(key)) return;
    const json& v = j_.at(key);
    if (!v.is_boolean()) fail(field(key), "expected true or false");
    out = v.get<bool>();
  }

  void get(const std::string& key, std::string& out) {
    if (!has(key)) return;
    const json& v = j_.at(key);
    if (!v.is_string()) fail(field(key), "expected a string");
    out = v.get<std::string>();
  }

  void get(const std::string& key, std::vector<double>& out) {
    if (!has(key)) return;
    const json& v = j_.at(key);
    if (!v.is_array()) fail(field(key), "expected an array of numbers");
    out.clear();
    for (const auto& e : v) {
      if (!e.is_number()) fail(field(key), "expected an array of numbers");
      out.push_back(e.get<double>());
    }
  }

  void get(const std::string& key, std::vector<int>& out) {
    if (!has(key)) return;
    const json& v = j_.at(key);
    if (!v.is_array()) fail(field(key), "expected an array of integers");
    out.clear();
    for (const auto& e : v) {
      if (!e.is_number_integer()) fail(field(key), "expected an array of integers");
      out.push_back(e.get<int>());
    }
  }

  void get(const std::string& key, AbsorptionScale& out) {
    if (!has(key)) return;
    Section s(j_.at(key), field(key));
    s.get("rpe", out.rpe);
    s.get("ch", out.ch);
    s.finish();
  }

  void get(const std::string& key, std::optional<double>& out) {
    if (!has(key)) return;
    if (j_.at(key).is_null()) {
      out.reset();
      return;
    }
    double v = 0.0;
    get(key, v);
    out = v;
  }

  void get(const std::string& key, std::optional<AbsorptionScale>& out) {
    if (!has(key)) return;
    if (j_.at(key).is_null()) {
      out.reset();
      return;
    }
    AbsorptionScale a;
    get(key, a);
    out = a;
  }

  template <class F>
  void section(const std::string& key, F&& body) {
    if (!has(key)) return;
    Section s(j_.at(key), field(key));
    body(s);
    s.finish();
  }

  std::string field(const std::string& key) const { return path_.empty() ? key : path_ + "." + key; }

  [[noreturn]] static void fail(const std::string& f, const std::string& what) {
    throw ConfigError(f + ": " + what);
  }

 private:
  const json& j_;
  std::string path_;
  std::set<std::string> seen_;
};

ojson alpha_json(const AbsorptionScale& a) { return ojson{{"rpe", a.rpe}, {"ch", a.ch}}; }

void check(bool ok, const std::string& field, const std::string& what) {
  if (!ok) throw ConfigError(field + ": " + what);
}

}  // namespace

std::vector<double> InputConfig::sequence() const {
  if (kind == "constant") return std::vector<double>(static_cast<std::size_t>(steps), level);
  std::vector<double> u;
  for (std::size_t i = 0; i < levels.size(); ++i) u.insert(u.end(), static_cast<std::size_t>(durations[i]), levels[i]);
  return u;
}

ExperimentConfig parse_config_text(const std::string& text) {
  ExperimentConfig c;
  if (std::all_of(text.begin(), text.end(), [](unsigned char ch) { return std::isspace(ch); })) return c;
  json root;
  try {
    root = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ConfigError(std::string("syntax: ") + e.what());
  }
  {
    Section s(root, "");
    s.section("layers", [&](Section& l) {
      l.get("d_retina", c.layers.d_retina);
      l.get("d_rpe", c.layers.d_rpe);
      l.get("d_unpigmented", c.layers.d_unpigmented);
      l.get("d_choroid", c.layers.d_choroid);
      l.get("d_sclera", c.layers.d_sclera);
      l.get("mu_rpe", c.layers.mu_rpe);
      l.get("mu_ch", c.layers.mu_ch);
      l.get("rho", c.layers.rho);
      l.get("cp", c.layers.cp);
      l.get("k", c.layers.k);
    });
    s.section("grid", [&](Section& g) {
      g.get("radius", c.grid.radius);
      g.get("beam_radius", c.grid.beam_radius);
      g.get("margin_top", c.grid.margin_top);
      g.get("margin_bottom", c.grid.margin_bottom);
      g.get("n_r", c.grid.n_r);
      g.get("n_z", c.grid.n_z);
      g.get("dt", c.grid.dt);
    });
    s.section("domain", [&](Section& d) {
      d.get("rpe_lo", c.domain.rpe_lo);
      d.get("rpe_hi", c.domain.rpe_hi);
      d.get("ch_lo", c.domain.ch_lo);
      d.get("ch_hi", c.domain.ch_hi);
    });
    s.section("input", [&](Section& i) {
      i.get("kind", c.input.kind);
      i.get("level", c.input.level);
      i.get("steps", c.input.steps);
      i.get("levels", c.input.levels);
      i.get("durations", c.input.durations);
    });
    s.get("alpha", c.alpha);
    s.section("estimation", [&](Section& e) {
      auto& x = c.estimation;
      e.get("mode", x.mode);
      e.get("alpha_true", x.alpha_true);
      e.get("alpha0", x.alpha0);
      e.get("alpha_ch_fixed", x.alpha_ch_fixed);
      e.get("p_level", x.p_level);
      e.get("noise_std", x.noise_std);
      e.get("noise_rel", x.noise_rel);
      e.get("seed", x.seed);
      e.get("data", x.data);
      e.get("cohort_size", x.cohort_size);
      e.get("cohort_mean", x.cohort_mean);
      e.get("cohort_sigma", x.cohort_sigma);
      e.get("horizons", x.horizons);
    });
    s.section("sensitivity", [&](Section& e) {
      auto& x = c.sensitivity;
      e.get("alpha", x.alpha);
      e.get("sigma", x.sigma);
      e.get("steps", x.steps);
      e.get("target", x.target);
    });
    s.section("mor", [&](Section& e) {
      auto& x = c.mor;
      e.get("method", x.method);
      e.get("d", x.d);
      e.get("k", x.k);
      e.get("two_param", x.two_param);
      e.get("alpha_ch_fixed", x.alpha_ch_fixed);
      e.get("expansion", x.expansion);
      e.get("deim_snapshots", x.deim_snapshots);
      e.get("basis_grid_2d", x.basis_grid_2d);
      e.get("basis_grid_1d", x.basis_grid_1d);
      e.get("scan_grid_2d", x.scan_grid_2d);
      e.get("scan_grid_1d", x.scan_grid_1d);
      e.get("horizon", x.horizon);
      e.get("target", x.target);
      e.get("orders_d", x.orders_d);
      e.get("orders_k", x.orders_k);
      e.get("rom_path", x.rom_path);
    });
    s.section("mpc", [&](Section& e) {
      auto& x = c.mpc;
      e.get("horizon", x.horizon);
      e.get("y_ref", x.y_ref);
      e.get("y_max", x.y_max);
      e.get("u_max", x.u_max);
      e.get("rho_u", x.rho_u);
      e.get("u_ref", x.u_ref);
      e.get("alpha", x.alpha);
      e.get("plant_alpha", x.plant_alpha);
      e.get("steps", x.steps);
      e.get("plant", x.plant);
      e.get("horizons", x.horizons);
    });
    s.get("out_dir", c.out_dir);
    s.finish();
  }
  validate(c);
  return c;
}

ExperimentConfig parse_config(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw ConfigError(path + ": cannot open configuration file");
  std::stringstream ss;
  ss << f.rdbuf();
  return parse_config_text(ss.str());
}

void validate(const ExperimentConfig& c) {
  auto wrap = [](const char* field, auto&& fn) {
    try {
      fn();
    } catch (const std::invalid_argument& e) {
      const std::string msg = e.what();
      if (msg.rfind(field, 0) == 0) throw ConfigError(msg);
      throw ConfigError(std::string(field) + ": " + msg);
    }
  };
  wrap("layers", [&] { c.layers.validate(); });
  wrap("grid", [&] {
    c.grid.validate();
    axial_intervals(c.layers, c.grid);
  });
  wrap("domain", [&] { c.domain.validate(); });

  const auto& in = c.input;
  check(in.kind == "constant" || in.kind == "piecewise", "input.kind", "must be \"constant\" or \"piecewise\"");
  if (in.kind == "constant") {
    check(in.steps >= 2, "input.steps", "must be at least 2");
  } else {
    check(!in.levels.empty() && in.levels.size() == in.durations.size(), "input.levels",
          "needs one duration per level");
    for (int dur : in.durations) check(dur >= 1, "input.durations", "must be positive");
  }
  for (double v : in.sequence()) check(std::isfinite(v), "input", "must be finite");

  const auto& e = c.estimation;
  check(e.mode == "two-param" || e.mode == "rpe-only", "estimation.mode", "must be \"two-param\" or \"rpe-only\"");
  check(e.p_level > 0.0 && e.p_level < 1.0, "estimation.p_level", "must lie in (0, 1)");
  check(e.noise_std >= 0.0, "estimation.noise_std", "must be non-negative");
  check(e.noise_rel >= 0.0, "estimation.noise_rel", "must be non-negative");
  check(e.noise_std == 0.0 || e.noise_rel == 0.0, "estimation.noise_rel", "noise_std and noise_rel are exclusive");
  check(e.cohort_size >= 2, "estimation.cohort_size", "must be at least 2");
  check(e.alpha0.rpe > 0.0 && e.alpha0.ch > 0.0, "estimation.alpha0", "must be positive");
  check(e.cohort_sigma.rpe >= 0.0 && e.cohort_sigma.ch >= 0.0, "estimation.cohort_sigma", "must be non-negative");
  for (int h : e.horizons) check(h >= 2, "estimation.horizons", "entries must be at least 2");

  check(c.sensitivity.steps >= 2, "sensitivity.steps", "must be at least 2");

  const auto& m = c.mor;
  check(m.method == "deim_gb" || m.method == "taylor", "mor.method", "must be \"deim_gb\" or \"taylor\"");
  check(m.d >= 1, "mor.d", "must be positive");
  check(m.k >= 1, "mor.k", "must be positive");
  check(m.deim_snapshots >= 2, "mor.deim_snapshots", "must be at least 2");
  check(m.basis_grid_2d >= 1 && m.basis_grid_1d >= 1, "mor.basis_grid", "must be positive");
  check(m.scan_grid_2d >= 1 && m.scan_grid_1d >= 1, "mor.scan_grid", "must be positive");
  check(m.horizon >= 2, "mor.horizon", "must be at least 2");
  for (int d : m.orders_d) check(d >= 1, "mor.orders_d", "entries must be positive");
  for (int k : m.orders_k) check(k >= 1, "mor.orders_k", "entries must be positive");

  const auto& p = c.mpc;
  check(p.horizon >= 2, "mpc.horizon", "must be at least 2");
  check(p.u_max >= 0.0, "mpc.u_max", "must be non-negative");
  check(p.rho_u > 0.0, "mpc.rho_u", "must be positive");
  check(p.y_ref <= p.y_max, "mpc.y_ref", "must not exceed mpc.y_max");
  if (p.u_ref) check(*p.u_ref >= 0.0 && *p.u_ref <= p.u_max, "mpc.u_ref", "must lie in [0, u_max]");
  check(p.steps >= 1, "mpc.steps", "must be positive");
  check(p.plant == "reduced" || p.plant == "full", "mpc.plant", "must be \"reduced\" or \"full\"");
  for (int h : p.horizons) check(h >= 2, "mpc.horizons", "entries must be at least 2");
  check(!c.out_dir.empty(), "out_dir", "must not be empty");
}

std::string dump_config(const ExperimentConfig& c) {
  ojson j;
  const auto& l = c.layers;
  j["layers"] = ojson{{"d_retina", l.d_retina}, {"d_rpe", l.d_rpe}, {"d_unpigmented", l.d_unpigmented},
                      {"d_choroid", l.d_choroid}, {"d_sclera", l.d_sclera}, {"mu_rpe", l.mu_rpe},
                      {"mu_ch", l.mu_ch}, {"rho", l.rho}, {"cp", l.cp}, {"k", l.k}};
  const auto& g = c.grid;
  j["grid"] = ojson{{"radius", g.radius}, {"beam_radius", g.beam_radius}, {"margin_top", g.margin_top},
                    {"margin_bottom", g.margin_bottom}, {"n_r", g.n_r}, {"n_z", g.n_z}, {"dt", g.dt}};
  const auto& d = c.domain;
  j["domain"] = ojson{{"rpe_lo", d.rpe_lo}, {"rpe_hi", d.rpe_hi}, {"ch_lo", d.ch_lo}, {"ch_hi", d.ch_hi}};
  const auto& in = c.input;
  j["input"] = ojson{{"kind", in.kind},     {"level", in.level},         {"steps", in.steps},
                     {"levels", in.levels}, {"durations", in.durations}};
  j["alpha"] = alpha_json(c.alpha);
  const auto& e = c.estimation;
  j["estimation"] = ojson{{"mode", e.mode},
                          {"alpha_true", alpha_json(e.alpha_true)},
                          {"alpha0", alpha_json(e.alpha0)},
                          {"alpha_ch_fixed", e.alpha_ch_fixed},
                          {"p_level", e.p_level},
                          {"noise_std", e.noise_std},
                          {"noise_rel", e.noise_rel},
                          {"seed", e.seed},
                          {"data", e.data},
                          {"cohort_size", e.cohort_size},
                          {"cohort_mean", alpha_json(e.cohort_mean)},
                          {"cohort_sigma", alpha_json(e.cohort_sigma)},
                          {"horizons", e.horizons}};
  const auto& s = c.sensitivity;
  j["sensitivity"] = ojson{
      {"alpha", alpha_json(s.alpha)}, {"sigma", alpha_json(s.sigma)}, {"steps", s.steps}, {"target", s.target}};
  const auto& m = c.mor;
  j["mor"] = ojson{{"method", m.method},
                   {"d", m.d},
                   {"k", m.k},
                   {"two_param", m.two_param},
                   {"alpha_ch_fixed", m.alpha_ch_fixed},
                   {"expansion", alpha_json(m.expansion)},
                   {"deim_snapshots", m.deim_snapshots},
                   {"basis_grid_2d", m.basis_grid_2d},
                   {"basis_grid_1d", m.basis_grid_1d},
                   {"scan_grid_2d", m.scan_grid_2d},
                   {"scan_grid_1d", m.scan_grid_1d},
                   {"horizon", m.horizon},
                   {"target", m.target},
                   {"orders_d", m.orders_d},
                   {"orders_k", m.orders_k},
                   {"rom_path", m.rom_path}};
  const auto& p = c.mpc;
  j["mpc"] = ojson{{"horizon", p.horizon},
                   {"y_ref", p.y_ref},
                   {"y_max", p.y_max},
                   {"u_max", p.u_max},
                   {"rho_u", p.rho_u},
                   {"u_ref", p.u_ref ? ojson(*p.u_ref) : ojson(nullptr)},
                   {"alpha", alpha_json(p.alpha)},
                   {"plant_alpha", p.plant_alpha ? alpha_json(*p.plant_alpha) : ojson(nullptr)},
                   {"steps", p.steps},
                   {"plant", p.plant},
                   {"horizons", p.horizons}};
  j["out_dir"] = c.out_dir;
  return j.dump(2) + "\n";
}

}  // namespace retina::cli

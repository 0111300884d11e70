#include "retina/mor.hpp"

#include <json.hpp>

#include <fstream>
#include <stdexcept>

namespace retina {

namespace {

using nlohmann::json;

json to_json_mat(const Mat& m) {
  std::vector<double> data(m.data(), m.data() + m.size());
  return {{"rows", m.rows()}, {"cols", m.cols()}, {"data", data}};
}

Mat mat_from_json(const json& j) {
  const auto rows = j.at("rows").get<Eigen::Index>();
  const auto cols = j.at("cols").get<Eigen::Index>();
  const auto data = j.at("data").get<std::vector<double>>();
  if (static_cast<Eigen::Index>(data.size()) != rows * cols) throw std::runtime_error("rom file: matrix size mismatch");
  return Eigen::Map<const Mat>(data.data(), rows, cols);
}

json to_json_vec(const Vec& v) { return std::vector<double>(v.data(), v.data() + v.size()); }

Vec vec_from_json(const json& j) {
  const auto data = j.get<std::vector<double>>();
  return Eigen::Map<const Vec>(data.data(), static_cast<Eigen::Index>(data.size()));
}

json stencils_to_json(const std::vector<DepthStencil>& st) {
  json arr = json::array();
  for (const auto& s : st) arr.push_back({{"scale", s.scale}, {"depth", s.depth}, {"weight", s.weight}});
  return arr;
}

std::vector<DepthStencil> stencils_from_json(const json& j) {
  std::vector<DepthStencil> out;
  for (const auto& s : j) {
    DepthStencil d;
    d.scale = s.at("scale").get<double>();
    d.depth = s.at("depth").get<std::vector<double>>();
    d.weight = s.at("weight").get<std::vector<double>>();
    out.push_back(std::move(d));
  }
  return out;
}

json alphas_to_json(const std::vector<AbsorptionScale>& a) {
  json arr = json::array();
  for (const auto& x : a) arr.push_back({x.rpe, x.ch});
  return arr;
}

std::vector<AbsorptionScale> alphas_from_json(const json& j) {
  std::vector<AbsorptionScale> out;
  for (const auto& x : j) out.push_back({x.at(0).get<double>(), x.at(1).get<double>()});
  return out;
}

json layers_to_json(const LayerStack& l) {
  return {{"d_retina", l.d_retina}, {"d_rpe", l.d_rpe},   {"d_unpigmented", l.d_unpigmented},
          {"d_choroid", l.d_choroid}, {"d_sclera", l.d_sclera}, {"mu_rpe", l.mu_rpe},
          {"mu_ch", l.mu_ch},       {"rho", l.rho},         {"cp", l.cp},
          {"k", l.k}};
}

LayerStack layers_from_json(const json& j) {
  LayerStack l;
  l.d_retina = j.at("d_retina");
  l.d_rpe = j.at("d_rpe");
  l.d_unpigmented = j.at("d_unpigmented");
  l.d_choroid = j.at("d_choroid");
  l.d_sclera = j.at("d_sclera");
  l.mu_rpe = j.at("mu_rpe");
  l.mu_ch = j.at("mu_ch");
  l.rho = j.at("rho");
  l.cp = j.at("cp");
  l.k = j.at("k");
  return l;
}

}  // namespace

void save_rom(const std::string& path, const ParametricROM& rom) {
  json j;
  j["format"] = "retina-pmor-rom";
  j["version"] = 1;
  j["variant"] = to_string(rom.variant);
  j["d"] = rom.d;
  j["k"] = rom.k;
  j["dt"] = rom.dt;
  j["two_param"] = rom.two_param;
  j["layers"] = layers_to_json(rom.layers);
  j["stable"] = rom.stable;
  j["failure"] = rom.failure;
  j["Ar"] = to_json_mat(rom.Ar);
  j["Ard"] = to_json_mat(rom.Ard);
  j["V"] = to_json_mat(rom.V);
  j["W"] = to_json_mat(rom.W);
  j["b_indices"] = rom.b_indices;
  j["b_stencils"] = stencils_to_json(rom.b_stencils);
  j["b_factor"] = to_json_mat(rom.b_factor);
  j["b_factor_d"] = to_json_mat(rom.b_factor_d);
  j["c_indices"] = rom.c_indices;
  j["c_stencils"] = stencils_to_json(rom.c_stencils);
  j["c_is_peak"] = std::vector<bool>(rom.c_is_peak.begin(), rom.c_is_peak.end());
  j["c_factor"] = to_json_mat(rom.c_factor);
  j["b_singular_values"] = to_json_vec(rom.b_singular_values);
  j["c_singular_values"] = to_json_vec(rom.c_singular_values);
  j["deim_snapshots"] = alphas_to_json(rom.deim_snapshots);
  j["basis_snapshots"] = alphas_to_json(rom.basis_snapshots);
  j["expansion"] = {rom.expansion.rpe, rom.expansion.ch};
  j["taylor_scale"] = {rom.taylor_scale.rpe, rom.taylor_scale.ch};
  json mon = json::array();
  for (const auto& [a, b] : rom.monomials) mon.push_back({a, b});
  j["monomials"] = mon;
  j["b_table"] = to_json_mat(rom.b_table);
  j["b_table_d"] = to_json_mat(rom.b_table_d);
  j["c_vol_table"] = to_json_mat(rom.c_vol_table);
  j["c_peak_r"] = to_json_vec(rom.c_peak_r);
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path);
  out << j.dump(1) << "\n";
}

ParametricROM load_rom(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot read " + path);
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw std::runtime_error(path + ": " + e.what());
  }
  if (j.value("format", std::string()) != "retina-pmor-rom") throw std::runtime_error(path + ": not a reduced model file");
  ParametricROM rom;
  try {
    const std::string variant = j.at("variant");
    if (variant == "taylor")
      rom.variant = RomVariant::taylor;
    else if (variant == "deim_gb")
      rom.variant = RomVariant::deim_gb;
    else
      throw std::runtime_error(path + ": unknown variant " + variant);
    rom.d = j.at("d");
    rom.k = j.at("k");
    rom.dt = j.at("dt");
    rom.two_param = j.at("two_param");
    rom.layers = layers_from_json(j.at("layers"));
    rom.stable = j.at("stable");
    rom.failure = j.at("failure");
    rom.Ar = mat_from_json(j.at("Ar"));
    rom.Ard = mat_from_json(j.at("Ard"));
    rom.V = mat_from_json(j.at("V"));
    rom.W = mat_from_json(j.at("W"));
    rom.b_indices = j.at("b_indices").get<std::vector<int>>();
    rom.b_stencils = stencils_from_json(j.at("b_stencils"));
    rom.b_factor = mat_from_json(j.at("b_factor"));
    rom.b_factor_d = mat_from_json(j.at("b_factor_d"));
    rom.c_indices = j.at("c_indices").get<std::vector<int>>();
    rom.c_stencils = stencils_from_json(j.at("c_stencils"));
    rom.c_is_peak = j.at("c_is_peak").get<std::vector<bool>>();
    rom.c_factor = mat_from_json(j.at("c_factor"));
    rom.b_singular_values = vec_from_json(j.at("b_singular_values"));
    rom.c_singular_values = vec_from_json(j.at("c_singular_values"));
    rom.deim_snapshots = alphas_from_json(j.at("deim_snapshots"));
    rom.basis_snapshots = alphas_from_json(j.at("basis_snapshots"));
    rom.expansion = {j.at("expansion").at(0).get<double>(), j.at("expansion").at(1).get<double>()};
    rom.taylor_scale = {j.at("taylor_scale").at(0).get<double>(), j.at("taylor_scale").at(1).get<double>()};
    for (const auto& m : j.at("monomials")) rom.monomials.emplace_back(m.at(0).get<int>(), m.at(1).get<int>());
    rom.b_table = mat_from_json(j.at("b_table"));
    rom.b_table_d = mat_from_json(j.at("b_table_d"));
    rom.c_vol_table = mat_from_json(j.at("c_vol_table"));
    rom.c_peak_r = vec_from_json(j.at("c_peak_r"));
  } catch (const json::exception& e) {
    throw std::runtime_error(path + ": " + e.what());
  }
  return rom;
}

}  // namespace retina

#pragma once

#include <algorithm>
#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "heatinv/binary_io.hpp"
#include "heatinv/common.hpp"

namespace heatinv {

using PropertyTable = std::vector<std::pair<double, double>>;  // (T kelvin, value)

struct MaterialTable {
  std::string id = "custom";
  PropertyTable k;   // W/(m K)
  PropertyTable cp;  // J/(kg K)
  double rho = 0;    // kg/m^3
  double emissivity = 0;
  static constexpr double sigma = kStefanBoltzmann;

  bool constant_properties() const {
    auto flat = [](const PropertyTable& t) {
      return std::all_of(t.begin(), t.end(), [&](const auto& p) { return p.second == t.front().second; });
    };
    return flat(k) && flat(cp);
  }
};

namespace detail {

inline void validate_table(const PropertyTable& t, const char* name) {
  if (t.empty()) throw ConfigError(std::string("material: ") + name + " table is empty");
  for (std::size_t i = 0; i < t.size(); ++i) {
    if (!(t[i].first > 0)) throw ConfigError(std::string("material: ") + name + " table temperature must be > 0");
    if (!(t[i].second > 0)) throw ConfigError(std::string("material: ") + name + " values must be > 0");
    if (i > 0 && !(t[i].first > t[i - 1].first))
      throw ConfigError(std::string("material: ") + name + " temperatures must be strictly increasing");
  }
}

inline double interpolate(const PropertyTable& t, double T) {
  if (!(T > 0)) throw DomainError("material property requested at non-positive temperature");
  if (T <= t.front().first) return t.front().second;
  if (T >= t.back().first) return t.back().second;
  const auto hi = std::upper_bound(t.begin(), t.end(), T, [](double v, const auto& p) { return v < p.first; });
  const auto lo = hi - 1;
  if (T == lo->first) return lo->second;
  const double w = (T - lo->first) / (hi->first - lo->first);
  return lo->second + w * (hi->second - lo->second);
}

// Slope of the active segment; at a breakpoint the right-hand segment wins.
inline double slope(const PropertyTable& t, double T) {
  if (!(T > 0)) throw DomainError("material property requested at non-positive temperature");
  if (T < t.front().first || T >= t.back().first) return 0.0;
  const auto hi = std::upper_bound(t.begin(), t.end(), T, [](double v, const auto& p) { return v < p.first; });
  const auto lo = hi - 1;
  return (hi->second - lo->second) / (hi->first - lo->first);
}

}  // namespace detail

inline void validate(const MaterialTable& m) {
  detail::validate_table(m.k, "k");
  detail::validate_table(m.cp, "cp");
  if (!(m.rho > 0)) throw ConfigError("material: rho must be > 0");
  if (!(m.emissivity >= 0 && m.emissivity <= 1)) throw ConfigError("material: emissivity must lie in [0, 1]");
}

inline double eval_k(const MaterialTable& m, double T) { return detail::interpolate(m.k, T); }
inline double eval_cp(const MaterialTable& m, double T) { return detail::interpolate(m.cp, T); }
inline double eval_dk_dT(const MaterialTable& m, double T) { return detail::slope(m.k, T); }
inline double eval_dcp_dT(const MaterialTable& m, double T) { return detail::slope(m.cp, T); }

// Synthetic alloy-like defaults: k rises 7 -> 22 W/(m K) and Cp 450 -> 700
// J/(kg K) over 273.15..1273.15 K in five segments each.
inline MaterialTable default_material() {
  MaterialTable m;
  m.id = "default-alloy";
  m.k = {{273.15, 7.0}, {473.15, 9.5}, {673.15, 12.3}, {873.15, 15.3}, {1073.15, 18.6}, {1273.15, 22.0}};
  m.cp = {{273.15, 450.0}, {473.15, 495.0}, {673.15, 543.0}, {873.15, 595.0}, {1073.15, 648.0}, {1273.15, 700.0}};
  m.rho = 4500.0;
  m.emissivity = 0.8;
  return m;
}

inline MaterialTable constant_material(double k, double cp, double rho, double emissivity) {
  MaterialTable m;
  m.id = "constant";
  m.k = {{1.0, k}};
  m.cp = {{1.0, cp}};
  m.rho = rho;
  m.emissivity = emissivity;
  return m;
}

inline io::json to_json(const MaterialTable& m) {
  io::json k = io::json::array(), cp = io::json::array();
  for (auto [T, v] : m.k) k.push_back({T, v});
  for (auto [T, v] : m.cp) cp.push_back({T, v});
  return {{"id", m.id}, {"k", k}, {"cp", cp}, {"rho", m.rho}, {"emissivity", m.emissivity}};
}

inline MaterialTable material_from_json(const io::json& j) {
  MaterialTable m;
  try {
    m.id = j.value("id", std::string("custom"));
    for (const auto& p : j.at("k")) m.k.emplace_back(p.at(0).get<double>(), p.at(1).get<double>());
    for (const auto& p : j.at("cp")) m.cp.emplace_back(p.at(0).get<double>(), p.at(1).get<double>());
    m.rho = j.at("rho").get<double>();
    m.emissivity = j.at("emissivity").get<double>();
  } catch (const io::json::exception& e) {
    throw ConfigError(std::string("material JSON: ") + e.what());
  }
  validate(m);
  return m;
}

inline MaterialTable load_material(const std::filesystem::path& path) {
  return material_from_json(io::read_json_file(path));
}

}  // namespace heatinv

#pragma once

// Affine maps between physical units and network units, and the assembly of
// network inputs/targets from dataset samples.

#include <span>
#include <vector>

#include <json.hpp>

#include "heatinv/datagen.hpp"
#include "heatinv/lstm.hpp"

namespace heatinv {

struct Normalizer {
  double t0 = kZeroCelsius;  // K
  double t_scale = 200.0;    // K
  double q_max = 5e5;        // W/m^2
  double h_max = 0.05;       // m

  float temperature(double T) const { return static_cast<float>((T - t0) / t_scale); }
  double temperature_inverse(float u) const { return t0 + t_scale * u; }
  float flux(double q) const { return static_cast<float>(q / q_max); }
  double flux_inverse(float u) const { return q_max * u; }
  float height(double h) const { return static_cast<float>(h / h_max); }
  double height_inverse(float u) const { return h_max * u; }

  // nt x 2 x grid x grid: channel 0 the height map (same every step),
  // channel 1 the sensor temperature frame.
  std::vector<float> input(const Sample& s, int grid, int nt) const {
    const std::size_t fs = static_cast<std::size_t>(grid) * grid;
    if (s.height_map.size() != fs || s.temperatures.size() != fs * nt)
      throw DimensionError("sample does not match a " + std::to_string(grid) + "x" + std::to_string(grid) + "x" +
                           std::to_string(nt) + " layout");
    std::vector<float> x(2 * fs * nt);
    for (int t = 0; t < nt; ++t) {
      float* frame = x.data() + 2 * fs * t;
      for (std::size_t j = 0; j < fs; ++j) {
        frame[j] = height(s.height_map[j]);
        frame[fs + j] = temperature(s.temperatures[fs * t + j]);
      }
    }
    return x;
  }

  // grid^2 x nt, column t = frame t.
  MatrixC<float> target(const Sample& s, int grid, int nt) const {
    const std::size_t fs = static_cast<std::size_t>(grid) * grid;
    if (s.flux.size() != fs * nt) throw DimensionError("sample flux does not match the dataset layout");
    MatrixC<float> y(static_cast<Eigen::Index>(fs), nt);
    for (std::size_t i = 0; i < fs * nt; ++i) y.data()[i] = flux(s.flux[i]);
    return y;
  }

  // Flux in W/m^2 from a network output, frame-major like Sample::flux.
  std::vector<float> flux_field(const MatrixC<float>& y) const {
    std::vector<float> q(y.size());
    for (Eigen::Index i = 0; i < y.size(); ++i) q[i] = static_cast<float>(flux_inverse(y.data()[i]));
    return q;
  }

  nlohmann::json to_json() const { return {{"t0", t0}, {"t_scale", t_scale}, {"q_max", q_max}, {"h_max", h_max}}; }

  static Normalizer from_json(const nlohmann::json& j) {
    Normalizer n;
    n.t0 = j.at("t0").get<double>();
    n.t_scale = j.at("t_scale").get<double>();
    n.q_max = j.at("q_max").get<double>();
    n.h_max = j.at("h_max").get<double>();
    if (!(n.t_scale > 0 && n.q_max > 0 && n.h_max > 0)) throw ConfigError("normalizer: scales must be > 0");
    return n;
  }

  // T0 and q_max from the dataset header; defaults for the scales.
  static Normalizer for_dataset(const Dataset& d) {
    Normalizer n;
    n.t0 = d.header.value("t0", n.t0);
    n.q_max = d.header.value("q_max", n.q_max);
    return n;
  }

  bool operator==(const Normalizer&) const = default;
};

}  // namespace heatinv

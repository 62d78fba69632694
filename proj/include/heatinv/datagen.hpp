#pragma once

// Randomized geometries and flux histories, forward simulation, and the binary
// dataset container.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <limits>
#include <optional>
#include <random>
#include <set>
#include <span>
#include <string>
#include <vector>

#include "heatinv/binary_io.hpp"
#include "heatinv/fem.hpp"
#include "heatinv/flux.hpp"
#include "heatinv/geometry.hpp"
#include "heatinv/materials.hpp"
#include "heatinv/parallel.hpp"

namespace heatinv {

enum class BodyClass { regular, complex };

inline const char* to_string(BodyClass c) { return c == BodyClass::regular ? "regular" : "complex"; }

inline BodyClass body_class_from_string(const std::string& s) {
  if (s == "regular") return BodyClass::regular;
  if (s == "complex") return BodyClass::complex;
  throw ConfigError("class: expected \"regular\" or \"complex\", got \"" + s + "\"");
}

struct Range {
  double lo = 0, hi = 0;
};

struct IntRange {
  int lo = 0, hi = 0;
};

struct GeneratorConfig {
  int n = 1;
  int nt = 71;
  double dt = 0.5;
  int grid = kDefaultGrid;
  std::string body_class = "regular";  // regular | complex | mixed (alternating, even indices regular)
  double q_max = 5e5;
  std::uint64_t seed = 0;
  Range thickness{0.01, 0.05};

  int nz = 4;
  int mesh_refine = 1;  // mesh has mesh_refine * grid sensor nodes per side
  double t0 = kZeroCelsius;
  double ambient = kZeroCelsius;

  IntRange bumps{1, 4};
  Range flux_width{0.03, 0.08};
  IntRange knots{5, 8};
  double rate_limit = 1e5;  // W/m^2 per second

  IntRange geometry_bumps{1, 3};
  Range geometry_width{0.04, 0.1};
  double slope_limit = 0.3;

  MaterialTable material = default_material();
  double newton_tol = 1e-6;
  int max_iter = 25;

  BodyClass class_of(int index) const {
    if (body_class == "mixed") return index % 2 == 0 ? BodyClass::regular : BodyClass::complex;
    return body_class_from_string(body_class);
  }
  int mesh_cells() const { return mesh_refine * grid - 1; }
};

inline void validate(const GeneratorConfig& c) {
  auto require = [](bool ok, const std::string& field, const std::string& what) {
    if (!ok) throw ConfigError(field + ": " + what);
  };
  require(c.n >= 1, "n", "must be >= 1");
  require(c.nt >= 1, "nt", "must be >= 1");
  require(c.dt > 0, "dt", "must be > 0");
  require(c.grid >= 2, "grid", "must be >= 2");
  require(c.body_class == "regular" || c.body_class == "complex" || c.body_class == "mixed", "class",
          "must be \"regular\", \"complex\" or \"mixed\"");
  require(c.q_max > 0, "q_max", "must be > 0");
  require(c.thickness.lo > 0, "thickness", "h_min must be > 0");
  require(c.thickness.hi >= c.thickness.lo, "thickness", "h_max must be >= h_min");
  require(c.nz >= 1, "nz", "must be >= 1");
  require(c.mesh_refine >= 1, "mesh_refine", "must be >= 1");
  require(c.t0 > 0, "t0", "must be > 0");
  require(c.ambient > 0, "ambient", "must be > 0");
  require(c.bumps.lo >= 0 && c.bumps.hi >= c.bumps.lo, "bumps", "need 0 <= min <= max");
  require(c.flux_width.lo > 0 && c.flux_width.hi >= c.flux_width.lo, "flux_width", "need 0 < min <= max");
  require(c.knots.lo >= 1 && c.knots.hi >= c.knots.lo, "knots", "need 1 <= min <= max");
  require(c.rate_limit > 0, "rate_limit", "must be > 0");
  require(c.geometry_bumps.lo >= 1 && c.geometry_bumps.hi >= c.geometry_bumps.lo, "geometry_bumps",
          "need 1 <= min <= max");
  require(c.geometry_width.lo > 0 && c.geometry_width.hi >= c.geometry_width.lo, "geometry_width",
          "need 0 < min <= max");
  require(c.slope_limit > 0, "slope_limit", "must be > 0");
  require(c.newton_tol > 0, "newton_tol", "must be > 0");
  require(c.max_iter >= 1, "max_iter", "must be >= 1");
  try {
    validate(c.material);
  } catch (const ConfigError& e) {
    throw ConfigError(std::string("material: ") + e.what());
  }
}

namespace detail {

template <class T>
T get_field(const io::json& j, const char* key) {
  try {
    return j.at(key).get<T>();
  } catch (const io::json::exception&) {
    throw ConfigError(std::string(key) + ": missing or wrong type");
  }
}

inline Range get_range(const io::json& j, const char* key) {
  const auto v = get_field<std::vector<double>>(j, key);
  if (v.size() != 2) throw ConfigError(std::string(key) + ": expected [min, max]");
  return {v[0], v[1]};
}

inline IntRange get_int_range(const io::json& j, const char* key) {
  const auto v = get_field<std::vector<int>>(j, key);
  if (v.size() != 2) throw ConfigError(std::string(key) + ": expected [min, max]");
  return {v[0], v[1]};
}

}  // namespace detail

// Relative material paths resolve against base_dir.
inline GeneratorConfig generator_config_from_json(const io::json& j, const std::filesystem::path& base_dir = {}) {
  if (!j.is_object()) throw ConfigError("generator config must be a JSON object");
  static const std::set<std::string> known = {
      "n",         "nt",         "dt",          "grid",           "class",          "q_max",       "seed",
      "thickness", "nz",         "mesh_refine", "t0",             "ambient",        "bumps",       "flux_width",
      "knots",     "rate_limit", "geometry_bumps", "geometry_width", "slope_limit", "material",    "newton_tol",
      "max_iter"};
  for (const auto& [key, value] : j.items())
    if (!known.count(key)) throw ConfigError(key + ": unknown field");
  using detail::get_field;
  GeneratorConfig c;
  if (j.contains("n")) c.n = get_field<int>(j, "n");
  if (j.contains("nt")) c.nt = get_field<int>(j, "nt");
  if (j.contains("dt")) c.dt = get_field<double>(j, "dt");
  if (j.contains("grid")) c.grid = get_field<int>(j, "grid");
  if (j.contains("class")) c.body_class = get_field<std::string>(j, "class");
  if (j.contains("q_max")) c.q_max = get_field<double>(j, "q_max");
  if (j.contains("seed")) c.seed = get_field<std::uint64_t>(j, "seed");
  if (j.contains("thickness")) c.thickness = detail::get_range(j, "thickness");
  if (j.contains("nz")) c.nz = get_field<int>(j, "nz");
  if (j.contains("mesh_refine")) c.mesh_refine = get_field<int>(j, "mesh_refine");
  if (j.contains("t0")) c.t0 = get_field<double>(j, "t0");
  if (j.contains("ambient")) c.ambient = get_field<double>(j, "ambient");
  if (j.contains("bumps")) c.bumps = detail::get_int_range(j, "bumps");
  if (j.contains("flux_width")) c.flux_width = detail::get_range(j, "flux_width");
  if (j.contains("knots")) c.knots = detail::get_int_range(j, "knots");
  if (j.contains("rate_limit")) c.rate_limit = get_field<double>(j, "rate_limit");
  if (j.contains("geometry_bumps")) c.geometry_bumps = detail::get_int_range(j, "geometry_bumps");
  if (j.contains("geometry_width")) c.geometry_width = detail::get_range(j, "geometry_width");
  if (j.contains("slope_limit")) c.slope_limit = get_field<double>(j, "slope_limit");
  if (j.contains("newton_tol")) c.newton_tol = get_field<double>(j, "newton_tol");
  if (j.contains("max_iter")) c.max_iter = get_field<int>(j, "max_iter");
  if (j.contains("material")) {
    const auto& m = j.at("material");
    try {
      if (m.is_string()) {
        std::filesystem::path p = m.get<std::string>();
        c.material = load_material(p.is_relative() && !base_dir.empty() ? base_dir / p : p);
      } else {
        c.material = material_from_json(m);
      }
    } catch (const IoError& e) {
      throw ConfigError(std::string("material: ") + e.what());
    }
  }
  validate(c);
  return c;
}

inline io::json to_json(const GeneratorConfig& c) {
  return {{"n", c.n},
          {"nt", c.nt},
          {"dt", c.dt},
          {"grid", c.grid},
          {"class", c.body_class},
          {"q_max", c.q_max},
          {"seed", c.seed},
          {"thickness", {c.thickness.lo, c.thickness.hi}},
          {"nz", c.nz},
          {"mesh_refine", c.mesh_refine},
          {"t0", c.t0},
          {"ambient", c.ambient},
          {"bumps", {c.bumps.lo, c.bumps.hi}},
          {"flux_width", {c.flux_width.lo, c.flux_width.hi}},
          {"knots", {c.knots.lo, c.knots.hi}},
          {"rate_limit", c.rate_limit},
          {"geometry_bumps", {c.geometry_bumps.lo, c.geometry_bumps.hi}},
          {"geometry_width", {c.geometry_width.lo, c.geometry_width.hi}},
          {"slope_limit", c.slope_limit},
          {"material", to_json(c.material)},
          {"newton_tol", c.newton_tol},
          {"max_iter", c.max_iter}};
}

// ---------------------------------------------------------------- flux

// One Gaussian component; the amplitude follows a Catmull-Rom curve through
// knots spaced evenly over [0, nt * dt].
struct FluxBump {
  double cx = 0, cy = 0;  // m
  double width = 0.05;    // m, standard deviation
  std::vector<double> knots;
};

inline double catmull_rom(std::span<const double> knots, double u) {
  const int n = static_cast<int>(knots.size());
  if (n == 1) return knots[0];
  const double x = std::clamp(u, 0.0, 1.0) * (n - 1);
  const int s = std::min(static_cast<int>(x), n - 2);
  const double t = x - s;
  auto k = [&](int i) { return knots[std::clamp(i, 0, n - 1)]; };
  const double p0 = k(s - 1), p1 = k(s), p2 = k(s + 1), p3 = k(s + 2);
  return 0.5 * (2 * p1 + (p2 - p0) * t + (2 * p0 - 5 * p1 + 4 * p2 - p3) * t * t +
                (3 * p1 - p0 - 3 * p2 + p3) * t * t * t);
}

// Frame k is evaluated at t = (k + 1) dt, the end of step k; values are clipped
// to [0, q_max] and then slew-limited per cell to rate_limit * dt per frame.
inline FluxField evaluate_flux(std::span<const FluxBump> bumps, const GeneratorConfig& c) {
  FluxField f(c.nt, c.grid);
  const auto centers = flux_cell_centers(c.grid);
  const double horizon = c.nt * c.dt;
  for (int t = 0; t < c.nt; ++t) {
    auto frame = f.frame(t);
    for (const auto& b : bumps) {
      const double a = catmull_rom(b.knots, (t + 1) * c.dt / horizon);
      for (std::size_t p = 0; p < centers.size(); ++p) {
        const double dx = centers[p][0] - b.cx, dy = centers[p][1] - b.cy;
        frame[p] += a * std::exp(-(dx * dx + dy * dy) / (2 * b.width * b.width));
      }
    }
    for (auto& v : frame) v = std::clamp(v, 0.0, c.q_max);
  }
  const double step = c.rate_limit * c.dt;
  for (int t = 1; t < c.nt; ++t) {
    auto prev = f.frame(t - 1);
    auto cur = f.frame(t);
    for (std::size_t p = 0; p < cur.size(); ++p) cur[p] = prev[p] + std::clamp(cur[p] - prev[p], -step, step);
  }
  return f;
}

inline std::vector<FluxBump> sample_flux_bumps(std::uint64_t seed, const GeneratorConfig& c) {
  std::mt19937_64 rng(seed);
  const int n = uniform_int(rng, c.bumps.lo, c.bumps.hi);
  std::vector<FluxBump> bumps(n);
  for (auto& b : bumps) {
    b.cx = uniform(rng, 0.1, 0.9) * kFootprint;
    b.cy = uniform(rng, 0.1, 0.9) * kFootprint;
    b.width = uniform(rng, c.flux_width.lo, c.flux_width.hi);
    b.knots.resize(uniform_int(rng, c.knots.lo, c.knots.hi));
    for (auto& k : b.knots) k = uniform(rng, 0.0, c.q_max);
  }
  return bumps;
}

inline FluxField sample_flux(std::uint64_t seed, const GeneratorConfig& c) {
  return evaluate_flux(sample_flux_bumps(seed, c), c);
}

// ---------------------------------------------------------------- geometry

namespace detail {

// Nearest float32 inside [lo, hi].
inline float to_float_within(double v, double lo, double hi) {
  float f = static_cast<float>(std::clamp(v, lo, hi));
  while (static_cast<double>(f) < lo) f = std::nextafter(f, std::numeric_limits<float>::infinity());
  while (static_cast<double>(f) > hi) f = std::nextafter(f, -std::numeric_limits<float>::infinity());
  return f;
}

}  // namespace detail

// Heights at the grid x grid flux cell centers, float32-representable. The
// cell map is the defining description of a generated body: the mesh is
// rebuilt from it by height_field_from_cells.
inline std::vector<float> sample_height_map(std::uint64_t seed, const GeneratorConfig& c, BodyClass body) {
  if (!(c.thickness.lo > 0)) throw ConfigError("thickness: h_min must be > 0");
  std::mt19937_64 rng(seed);
  const double lo = c.thickness.lo, hi = c.thickness.hi;
  const std::size_t cells = static_cast<std::size_t>(c.grid) * c.grid;
  if (body == BodyClass::regular) return std::vector<float>(cells, detail::to_float_within(uniform(rng, lo, hi), lo, hi));

  const double base = uniform(rng, lo, 0.5 * (lo + hi));
  const int n = uniform_int(rng, c.geometry_bumps.lo, c.geometry_bumps.hi);
  struct Bump {
    double cx, cy, w, a;
  };
  std::vector<Bump> bumps(n);
  for (auto& b : bumps) {
    b.cx = uniform(rng, 0.15, 0.85) * kFootprint;
    b.cy = uniform(rng, 0.15, 0.85) * kFootprint;
    b.w = uniform(rng, c.geometry_width.lo, c.geometry_width.hi);
    // The steepest slope of a exp(-r^2/2w^2) is a e^{-1/2} / w; n such bumps stay within the limits.
    const double a_max = std::min((hi - base) / n, c.slope_limit * b.w * std::exp(0.5) / n);
    b.a = uniform(rng, 0.3, 1.0) * a_max;
  }
  std::vector<float> map;
  map.reserve(cells);
  for (auto [x, y] : flux_cell_centers(c.grid)) {
    double h = base;
    for (const auto& b : bumps) h += b.a * std::exp(-((x - b.cx) * (x - b.cx) + (y - b.cy) * (y - b.cy)) / (2 * b.w * b.w));
    map.push_back(detail::to_float_within(h, lo, hi));
  }
  return map;
}

inline HeightField height_field_for(std::span<const float> map, const GeneratorConfig& c) {
  const std::vector<double> m(map.begin(), map.end());
  const double base = *std::min_element(m.begin(), m.end());
  return height_field_from_cells(m, c.grid, c.mesh_cells(), c.mesh_cells(), base);
}

inline HeightField sample_geometry(std::uint64_t seed, const GeneratorConfig& c, BodyClass body) {
  return height_field_for(sample_height_map(seed, c, body), c);
}

// ---------------------------------------------------------------- samples

struct Sample {
  int index = 0;  // position in the generation sequence (seeds derive from it)
  BodyClass body_class = BodyClass::regular;
  std::vector<float> height_map;    // grid^2, m
  std::vector<float> temperatures;  // nt * grid^2, K, frame k after step k
  std::vector<float> flux;          // nt * grid^2, W/m^2
};

struct Dataset {
  int grid = kDefaultGrid;
  int nt = 0;
  double dt = 0;
  io::json header;
  std::vector<Sample> samples;

  std::size_t frame_size() const { return static_cast<std::size_t>(grid) * grid; }
};

inline std::uint64_t geometry_seed(std::uint64_t seed, int index) { return mix_seed(seed, 2 * static_cast<std::uint64_t>(index)); }
inline std::uint64_t flux_seed(std::uint64_t seed, int index) { return mix_seed(seed, 2 * static_cast<std::uint64_t>(index) + 1); }

// Forward-simulates one body under a stored flux history; the temperatures are
// the float32-rounded sensor readings.
inline std::vector<float> simulate_sensors(std::span<const float> height_map, std::span<const float> flux,
                                           const GeneratorConfig& c) {
  const std::size_t fs = static_cast<std::size_t>(c.grid) * c.grid;
  if (height_map.size() != fs || flux.size() != fs * c.nt) throw DimensionError("sample arrays do not match grid/nt");
  const Mesh mesh = build_mesh(height_field_for(height_map, c), c.nz);
  const SensorLayout sensors = sensor_layout(mesh, c.grid);
  const ThermalModel model(mesh, c.material, c.grid);
  FluxField f(c.nt, c.grid);
  std::copy(flux.begin(), flux.end(), f.values.begin());
  SolverOptions opt;
  opt.newton_tol = c.newton_tol;
  opt.max_iter = c.max_iter;
  opt.bc.ambient = c.ambient;
  const TransientResult r = solve_transient(model, sensors, f, c.t0, c.dt, opt);
  return std::vector<float>(r.sensor_T.begin(), r.sensor_T.end());
}

inline Sample generate_sample(int index, const GeneratorConfig& c) {
  Sample s;
  s.index = index;
  s.body_class = c.class_of(index);
  s.height_map = sample_height_map(geometry_seed(c.seed, index), c, s.body_class);
  const FluxField f = sample_flux(flux_seed(c.seed, index), c);
  s.flux.assign(f.values.begin(), f.values.end());
  s.temperatures = simulate_sensors(s.height_map, s.flux, c);
  return s;
}

// ---------------------------------------------------------------- files

inline void write_dataset(const std::filesystem::path& path, const Dataset& d) {
  io::json header = d.header;
  header["format"] = "heatinv-dataset";
  header["version"] = 1;
  header["grid"] = d.grid;
  header["nt"] = d.nt;
  header["dt"] = d.dt;
  header["n_samples"] = d.samples.size();
  header["arrays"] = {"height_map", "temperatures", "flux"};
  io::json entries = io::json::array();
  std::set<std::string> classes;
  for (const auto& s : d.samples) {
    entries.push_back({{"index", s.index}, {"class", to_string(s.body_class)}});
    classes.insert(to_string(s.body_class));
  }
  header["samples"] = entries;
  header["classes"] = classes;
  const std::size_t fs = d.frame_size();
  for (const auto& s : d.samples)
    if (s.height_map.size() != fs || s.temperatures.size() != fs * d.nt || s.flux.size() != fs * d.nt)
      throw DimensionError("sample " + std::to_string(s.index) + " does not match the dataset dimensions");
  io::write_atomically(path, [&](io::BinaryWriter& w) {
    w.header(header);
    for (const auto& s : d.samples) {
      w.floats<float>(s.height_map);
      w.floats<float>(s.temperatures);
      w.floats<float>(s.flux);
    }
  });
}

inline Dataset read_dataset(const std::filesystem::path& path) {
  if (!std::filesystem::exists(path)) throw IoError("dataset '" + path.string() + "' does not exist");
  io::BinaryReader r(path);
  Dataset d;
  d.header = r.header();
  try {
    if (d.header.at("format") != "heatinv-dataset") throw IoError("'" + path.string() + "' is not a dataset file");
    d.grid = d.header.at("grid").get<int>();
    d.nt = d.header.at("nt").get<int>();
    d.dt = d.header.at("dt").get<double>();
    const auto& entries = d.header.at("samples");
    if (entries.size() != d.header.at("n_samples").get<std::size_t>())
      throw IoError("dataset header sample list disagrees with n_samples");
    const std::size_t fs = d.frame_size();
    for (const auto& e : entries) {
      Sample s;
      s.index = e.at("index").get<int>();
      s.body_class = body_class_from_string(e.at("class").get<std::string>());
      s.height_map.resize(fs);
      s.temperatures.resize(fs * d.nt);
      s.flux.resize(fs * d.nt);
      r.floats<float>(s.height_map);
      r.floats<float>(s.temperatures);
      r.floats<float>(s.flux);
      d.samples.push_back(std::move(s));
    }
  } catch (const io::json::exception& e) {
    throw IoError("malformed dataset header in '" + path.string() + "': " + e.what());
  }
  if (!r.at_end()) throw IoError("trailing bytes in dataset '" + path.string() + "'");
  return d;
}

// ---------------------------------------------------------------- generation

struct GenerationSummary {
  int requested = 0;
  int written = 0;
  int failures = 0;
  double T_min = std::numeric_limits<double>::infinity();
  double T_max = -std::numeric_limits<double>::infinity();
  std::vector<std::string> failure_messages;  // "sample i: ..." in index order

  io::json to_json() const {
    return {{"requested", requested}, {"written", written},   {"failures", failures},
            {"T_min", T_min},         {"T_max", T_max},       {"failure_messages", failure_messages}};
  }
};

// Samples run in a worker pool; the file is written in index order, so the
// bytes do not depend on the thread count. Solver failures are skipped (seeds
// are not redrawn); more than 10% failures abort without writing.
inline GenerationSummary generate_dataset(const GeneratorConfig& c, const std::filesystem::path& out_path,
                                          int threads = 1, Dataset* out = nullptr) {
  validate(c);
  const auto parent = out_path.parent_path();
  if (!parent.empty() && !std::filesystem::is_directory(parent))
    throw IoError("output directory '" + parent.string() + "' does not exist");

  const int max_failures = c.n / 10;
  std::vector<std::optional<Sample>> slots(c.n);
  std::vector<std::string> errors(c.n);
  std::atomic<int> failures{0};
  parallel_for(c.n, threads, [&](int i) {
    if (failures.load() > max_failures) return;
    try {
      slots[i] = generate_sample(i, c);
    } catch (const SolverError& e) {
      errors[i] = e.what();
      ++failures;
    }
  });

  GenerationSummary summary;
  summary.requested = c.n;
  for (int i = 0; i < c.n; ++i)
    if (!errors[i].empty()) summary.failure_messages.push_back("sample " + std::to_string(i) + ": " + errors[i]);
  summary.failures = static_cast<int>(summary.failure_messages.size());
  if (summary.failures > max_failures) {
    std::string msg = "generation aborted: " + std::to_string(summary.failures) + " solver failures (limit " +
                      std::to_string(max_failures) + " of " + std::to_string(c.n) + ")";
    for (const auto& m : summary.failure_messages) msg += "\n  " + m;
    throw SolverError(msg);
  }

  Dataset d;
  d.grid = c.grid;
  d.nt = c.nt;
  d.dt = c.dt;
  d.header = {{"generator", to_json(c)},
              {"body_class", c.body_class},
              {"seed", c.seed},
              {"material_id", c.material.id},
              {"t0", c.t0},
              {"ambient", c.ambient},
              {"q_max", c.q_max},
              {"failures", summary.failures},
              {"units", {{"height_map", "m"}, {"temperatures", "K"}, {"flux", "W/m^2"}}}};
  for (auto& s : slots) {
    if (!s) continue;
    for (float T : s->temperatures) {
      summary.T_min = std::min(summary.T_min, static_cast<double>(T));
      summary.T_max = std::max(summary.T_max, static_cast<double>(T));
    }
    d.samples.push_back(std::move(*s));
  }
  summary.written = static_cast<int>(d.samples.size());
  write_dataset(out_path, d);
  if (out) *out = std::move(d);
  return summary;
}

// Generator settings recorded in a dataset header.
inline GeneratorConfig generator_config_of(const Dataset& d) {
  if (!d.header.contains("generator")) throw ConfigError("dataset header carries no generator config");
  return generator_config_from_json(d.header.at("generator"));
}

}  // namespace heatinv

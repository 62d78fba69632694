#pragma once

// Prediction files, relative-error fields, per-class statistics and report
// files.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "heatinv/checkpoint.hpp"
#include "heatinv/parallel.hpp"

namespace heatinv {

// ---------------------------------------------------------------- predictions

struct Predictions {
  int grid = 0;
  int nt = 0;
  double dt = 0;
  std::vector<int> indices;
  std::vector<BodyClass> classes;
  std::vector<std::vector<float>> flux;  // per sample: nt * grid^2, W/m^2
  io::json header;
};

struct Timing {
  int nt = 0;
  int repeats = 0;
  double seconds_per_sample = 0;  // median over repeats
  double ms_per_step = 0;

  io::json to_json() const {
    return {{"nt", nt}, {"repeats", repeats}, {"seconds_per_sample", seconds_per_sample}, {"ms_per_step", ms_per_step}};
  }
};

// Median wall time of `repeats` single-threaded forward passes.
inline Timing measure_timing(const Network<float>& net, std::span<const float> input, int nt, int repeats = 5) {
  std::vector<double> seconds;
  for (int r = 0; r < repeats; ++r) {
    const auto start = std::chrono::steady_clock::now();
    const auto y = net.forward(input, nt);
    const auto stop = std::chrono::steady_clock::now();
    if (y.size() == 0) throw StateError("forward produced no output");
    seconds.push_back(std::chrono::duration<double>(stop - start).count());
  }
  std::sort(seconds.begin(), seconds.end());
  const double median = repeats % 2 ? seconds[repeats / 2] : 0.5 * (seconds[repeats / 2 - 1] + seconds[repeats / 2]);
  return {nt, repeats, median, 1000.0 * median / nt};
}

inline void check_compatible(const Checkpoint& ck, const Dataset& d) {
  if (ck.network.grid != d.grid)
    throw ConfigError("checkpoint grid " + std::to_string(ck.network.grid) + " does not match dataset grid " +
                      std::to_string(d.grid));
}

// Runs the checkpoint's network on every sample.
inline Predictions predict(const Checkpoint& ck, const Dataset& d, int threads = 1) {
  check_compatible(ck, d);
  const Network<float> net = network_from(ck);
  Predictions p;
  p.grid = d.grid;
  p.nt = d.nt;
  p.dt = d.dt;
  p.flux.resize(d.samples.size());
  parallel_for(static_cast<int>(d.samples.size()), threads, [&](int i) {
    const auto x = ck.normalizer.input(d.samples[i], d.grid, d.nt);
    p.flux[i] = ck.normalizer.flux_field(net.forward(x, d.nt));
  });
  for (const auto& s : d.samples) {
    p.indices.push_back(s.index);
    p.classes.push_back(s.body_class);
  }
  return p;
}

inline Timing predict_timing(const Checkpoint& ck, const Dataset& d, int repeats = 5) {
  check_compatible(ck, d);
  if (d.samples.empty()) throw ConfigError("dataset has no samples");
  const Network<float> net = network_from(ck);
  return measure_timing(net, ck.normalizer.input(d.samples.front(), d.grid, d.nt), d.nt, repeats);
}

inline void write_predictions(const std::filesystem::path& path, const Predictions& p) {
  io::json entries = io::json::array();
  for (std::size_t i = 0; i < p.indices.size(); ++i)
    entries.push_back({{"index", p.indices[i]}, {"class", to_string(p.classes[i])}});
  io::json header = p.header.is_null() ? io::json::object() : p.header;
  header["format"] = "heatinv-prediction";
  header["version"] = 1;
  header["grid"] = p.grid;
  header["nt"] = p.nt;
  header["dt"] = p.dt;
  header["n_samples"] = p.flux.size();
  header["samples"] = entries;
  header["arrays"] = {"flux"};
  header["units"] = {{"flux", "W/m^2"}};
  const std::size_t n = static_cast<std::size_t>(p.nt) * p.grid * p.grid;
  for (const auto& f : p.flux)
    if (f.size() != n) throw DimensionError("prediction does not match its grid and step count");
  io::write_atomically(path, [&](io::BinaryWriter& w) {
    w.header(header);
    for (const auto& f : p.flux) w.floats<float>(f);
  });
}

inline Predictions read_predictions(const std::filesystem::path& path) {
  if (!std::filesystem::exists(path)) throw IoError("prediction file '" + path.string() + "' does not exist");
  io::BinaryReader r(path);
  Predictions p;
  p.header = r.header();
  try {
    if (p.header.at("format") != "heatinv-prediction")
      throw IoError("'" + path.string() + "' is not a prediction file");
    p.grid = p.header.at("grid").get<int>();
    p.nt = p.header.at("nt").get<int>();
    p.dt = p.header.at("dt").get<double>();
    for (const auto& e : p.header.at("samples")) {
      p.indices.push_back(e.at("index").get<int>());
      p.classes.push_back(body_class_from_string(e.at("class").get<std::string>()));
      std::vector<float> f(static_cast<std::size_t>(p.nt) * p.grid * p.grid);
      r.floats<float>(f);
      p.flux.push_back(std::move(f));
    }
  } catch (const io::json::exception& e) {
    throw IoError("malformed prediction header in '" + path.string() + "': " + e.what());
  }
  if (!r.at_end()) throw IoError("trailing bytes in prediction file '" + path.string() + "'");
  return p;
}

// ---------------------------------------------------------------- error fields

struct ErrorField {
  int nt = 0, grid = 0;
  std::vector<float> values;  // nt * grid^2; 0 where masked
  std::vector<std::uint8_t> valid;

  std::vector<float> unmasked() const {
    std::vector<float> out;
    for (std::size_t i = 0; i < values.size(); ++i)
      if (valid[i]) out.push_back(values[i]);
    return out;
  }
};

// |pred - real| / |real| where |real| >= floor; other cells are masked.
inline ErrorField relative_error(std::span<const float> pred, std::span<const float> real, int nt, int grid,
                                 double floor) {
  const std::size_t n = static_cast<std::size_t>(nt) * grid * grid;
  if (pred.size() != n || real.size() != n)
    throw DimensionError("relative_error: fields must both hold nt x grid x grid values");
  if (!(floor > 0)) throw DomainError("relative_error: floor must be > 0");
  ErrorField e{nt, grid, std::vector<float>(n, 0.0f), std::vector<std::uint8_t>(n, 0)};
  for (std::size_t i = 0; i < n; ++i) {
    const double r = real[i];
    if (std::abs(r) < floor) continue;
    e.values[i] = static_cast<float>(std::abs((static_cast<double>(pred[i]) - r) / r));
    e.valid[i] = 1;
  }
  return e;
}

struct PointSeries {
  int i = 0, j = 0;
  std::vector<float> real, pred;  // one entry per step
};

// Grid coordinates along the diagonal at fractions 4/30, 14/30, 24/30.
inline std::vector<std::pair<int, int>> default_points(int grid) {
  std::vector<std::pair<int, int>> pts;
  for (int k : {4, 14, 24}) {
    const int c = grid == kDefaultGrid ? k : static_cast<int>(std::lround(k * (grid - 1) / 29.0));
    pts.emplace_back(c, c);
  }
  return pts;
}

inline std::vector<PointSeries> point_timeseries(std::span<const float> pred, std::span<const float> real, int nt,
                                                 int grid, const std::vector<std::pair<int, int>>& points) {
  const std::size_t fs = static_cast<std::size_t>(grid) * grid;
  if (pred.size() != fs * nt || real.size() != fs * nt)
    throw DimensionError("point_timeseries: fields must both hold nt x grid x grid values");
  std::vector<PointSeries> out;
  for (auto [i, j] : points) {
    if (i < 0 || j < 0 || i >= grid || j >= grid)
      throw DimensionError("point (" + std::to_string(i) + ", " + std::to_string(j) + ") is outside the grid");
    PointSeries s{i, j, {}, {}};
    for (int t = 0; t < nt; ++t) {
      const std::size_t k = t * fs + static_cast<std::size_t>(j) * grid + i;
      s.real.push_back(real[k]);
      s.pred.push_back(pred[k]);
    }
    out.push_back(std::move(s));
  }
  return out;
}

// ---------------------------------------------------------------- statistics

struct ErrorStats {
  std::size_t cells = 0;
  double median = NAN, mean = NAN, p90 = NAN, max = NAN;
};

// Percentiles by linear interpolation between order statistics.
inline double percentile_sorted(const std::vector<float>& v, double q) {
  if (v.empty()) return NAN;
  const double pos = q * static_cast<double>(v.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const std::size_t hi = std::min(lo + 1, v.size() - 1);
  return v[lo] + (pos - static_cast<double>(lo)) * (static_cast<double>(v[hi]) - v[lo]);
}

inline ErrorStats error_stats(std::vector<float> v) {
  ErrorStats s;
  s.cells = v.size();
  if (v.empty()) return s;
  std::sort(v.begin(), v.end());
  double sum = 0;
  for (float x : v) sum += x;
  s.mean = sum / static_cast<double>(v.size());
  s.median = percentile_sorted(v, 0.5);
  s.p90 = percentile_sorted(v, 0.9);
  s.max = v.back();
  return s;
}

struct Histogram {
  double lo = 0, hi = 1;
  std::vector<std::uint64_t> counts;

  Histogram(int bins = 32, double clip = 1.0) : lo(0), hi(clip), counts(bins, 0) {}
  // Values at or above the clip land in the last bin.
  void add(float v) {
    const int bins = static_cast<int>(counts.size());
    int b = static_cast<int>(std::floor((v - lo) / (hi - lo) * bins));
    counts[std::clamp(b, 0, bins - 1)] += 1;
  }
  std::uint64_t total() const {
    std::uint64_t t = 0;
    for (auto c : counts) t += c;
    return t;
  }
  std::string csv() const {
    std::string s = "bin_lo,bin_hi,count\n";
    const int bins = static_cast<int>(counts.size());
    char buf[96];
    for (int b = 0; b < bins; ++b) {
      std::snprintf(buf, sizeof buf, "%.9g,%.9g,%llu\n", lo + (hi - lo) * b / bins, lo + (hi - lo) * (b + 1) / bins,
                    static_cast<unsigned long long>(counts[b]));
      s += buf;
    }
    return s;
  }
};

struct EvalOptions {
  double floor = -1;  // W/m^2; negative: 1% of the dataset's q_max
  double clip = 1.0;
  int bins = 32;
  std::vector<std::pair<int, int>> points;  // empty: default_points
  int series_sample = 0;                    // dataset position whose time series is reported
  int threads = 1;
};

struct SampleReport {
  int index = 0;
  BodyClass body_class = BodyClass::regular;
  ErrorStats stats;
};

struct ClassReport {
  std::string name;  // regular, complex or all
  int samples = 0;
  ErrorStats stats;  // over the pooled unmasked cells
  Histogram histogram;
};

struct EvalReport {
  double floor = 0;
  double clip = 1;
  int grid = 0, nt = 0;
  double dt = 0;
  std::vector<SampleReport> samples;
  std::vector<ClassReport> classes;  // each class present, then "all"
  int series_sample_index = 0;
  std::vector<PointSeries> series;
  std::optional<Timing> timing;  // wall-clock, kept out of summary.json

  const ClassReport* find_class(const std::string& name) const {
    for (const auto& c : classes)
      if (c.name == name) return &c;
    return nullptr;
  }
};

inline double dataset_q_max(const Dataset& d) { return d.header.value("q_max", 5e5); }

// Compares predicted flux with the dataset's flux sample by sample.
inline EvalReport evaluate_predictions(const Dataset& d, const Predictions& p, const EvalOptions& o = {}) {
  if (d.samples.empty()) throw ConfigError("dataset has no samples to evaluate");
  if (p.grid != d.grid || p.nt != d.nt || p.flux.size() != d.samples.size())
    throw ConfigError("predictions do not match the dataset (grid, steps or sample count)");
  for (std::size_t i = 0; i < p.indices.size(); ++i)
    if (p.indices[i] != d.samples[i].index) throw ConfigError("predictions and dataset list different samples");
  if (o.bins < 1 || !(o.clip > 0)) throw ConfigError("histogram: bins and clip must be positive");
  EvalReport r;
  r.floor = o.floor > 0 ? o.floor : 0.01 * dataset_q_max(d);
  r.clip = o.clip;
  r.grid = d.grid;
  r.nt = d.nt;
  r.dt = d.dt;
  const int n = static_cast<int>(d.samples.size());
  std::vector<std::vector<float>> errors(n);
  r.samples.resize(n);
  parallel_for(n, o.threads, [&](int i) {
    errors[i] = relative_error(p.flux[i], d.samples[i].flux, d.nt, d.grid, r.floor).unmasked();
    r.samples[i] = {d.samples[i].index, d.samples[i].body_class, error_stats(errors[i])};
  });
  std::map<std::string, std::vector<int>> members;
  for (int i = 0; i < n; ++i) members[to_string(d.samples[i].body_class)].push_back(i);
  std::vector<int> all(n);
  for (int i = 0; i < n; ++i) all[i] = i;
  auto pooled = [&](const std::string& name, const std::vector<int>& ids) {
    ClassReport c{name, static_cast<int>(ids.size()), {}, Histogram(o.bins, o.clip)};
    std::vector<float> v;
    for (int i : ids) {
      v.insert(v.end(), errors[i].begin(), errors[i].end());
      for (float e : errors[i]) c.histogram.add(e);
    }
    c.stats = error_stats(std::move(v));
    return c;
  };
  for (const char* name : {"regular", "complex"})
    if (members.count(name)) r.classes.push_back(pooled(name, members[name]));
  r.classes.push_back(pooled("all", all));
  if (o.series_sample < 0 || o.series_sample >= n) throw ConfigError("series_sample is outside the dataset");
  r.series_sample_index = d.samples[o.series_sample].index;
  r.series = point_timeseries(p.flux[o.series_sample], d.samples[o.series_sample].flux, d.nt, d.grid,
                              o.points.empty() ? default_points(d.grid) : o.points);
  return r;
}

inline EvalReport evaluate(const Checkpoint& ck, const Dataset& d, const EvalOptions& o = {}) {
  if (d.samples.empty()) throw ConfigError("dataset has no samples to evaluate");
  EvalReport r = evaluate_predictions(d, predict(ck, d, o.threads), o);
  r.timing = predict_timing(ck, d);
  return r;
}

// ---------------------------------------------------------------- report files

inline io::json stats_json(const ErrorStats& s) {
  auto num = [](double v) { return std::isnan(v) ? io::json(nullptr) : io::json(v); };
  return {{"cells", s.cells}, {"median", num(s.median)}, {"mean", num(s.mean)}, {"p90", num(s.p90)}, {"max", num(s.max)}};
}

inline io::json to_json(const EvalReport& r) {
  io::json samples = io::json::array(), classes = io::json::array();
  for (const auto& s : r.samples) {
    io::json j = stats_json(s.stats);
    j["index"] = s.index;
    j["class"] = to_string(s.body_class);
    samples.push_back(j);
  }
  for (const auto& c : r.classes) {
    io::json j = stats_json(c.stats);
    j["class"] = c.name;
    j["samples"] = c.samples;
    j["histogram"] = c.histogram.counts;
    classes.push_back(j);
  }
  return {{"floor", r.floor},   {"clip", r.clip},       {"bins", r.classes.front().histogram.counts.size()},
          {"grid", r.grid},     {"nt", r.nt},           {"dt", r.dt},
          {"classes", classes}, {"samples", samples},   {"series_sample", r.series_sample_index}};
}

inline std::string format_number(double v) {
  if (std::isnan(v)) return "nan";
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.9g", v);
  return buf;
}

// summary.json, samples.csv, histogram_<class>.csv, timeseries_<i>_<j>.csv and,
// when measured, timing.json.
inline std::vector<std::filesystem::path> write_report(const EvalReport& r, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  std::vector<std::filesystem::path> written;
  auto put = [&](const std::string& name, const std::string& text) {
    io::write_text_file(dir / name, text);
    written.push_back(dir / name);
  };
  put("summary.json", to_json(r).dump(2) + "\n");
  std::string rows = "index,class,cells,median,mean,p90,max\n";
  for (const auto& s : r.samples)
    rows += std::to_string(s.index) + "," + to_string(s.body_class) + "," + std::to_string(s.stats.cells) + "," +
            format_number(s.stats.median) + "," + format_number(s.stats.mean) + "," + format_number(s.stats.p90) +
            "," + format_number(s.stats.max) + "\n";
  put("samples.csv", rows);
  for (const auto& c : r.classes) put("histogram_" + c.name + ".csv", c.histogram.csv());
  for (const auto& s : r.series) {
    std::string t = "step,time_s,q_real,q_pred\n";
    for (std::size_t k = 0; k < s.real.size(); ++k)
      t += std::to_string(k) + "," + format_number((k + 1) * r.dt) + "," + format_number(s.real[k]) + "," +
           format_number(s.pred[k]) + "\n";
    put("timeseries_" + std::to_string(s.i) + "_" + std::to_string(s.j) + ".csv", t);
  }
  if (r.timing) put("timing.json", r.timing->to_json().dump(2) + "\n");
  return written;
}

}  // namespace heatinv

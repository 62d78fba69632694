// heatinv: dataset generation, solver verification, training, prediction and
// evaluation from one binary.

#include <cstdio>
#include <cstdlib>
#include <ctime>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "heatinv/heatinv.hpp"

namespace fs = std::filesystem;
using namespace heatinv;

namespace {

struct Globals {
  std::uint64_t seed = 0;
  int threads = 1;
  std::string config;
  CLI::Option* seed_opt = nullptr;
};

io::json load_config(const Globals& g, const std::string& section) {
  if (g.config.empty()) return io::json::object();
  io::json j = io::read_json_file(g.config);
  if (!j.is_object()) throw ConfigError("config '" + g.config + "' must hold a JSON object");
  if (j.contains(section) && j.at(section).is_object()) {
    io::json out = j.at(section);
    if (j.contains("seed") && !out.contains("seed")) out["seed"] = j.at("seed");
    return out;
  }
  for (const char* other : {"generate", "train", "evaluate"})
    if (section != other) j.erase(other);
  return j;
}

// Flag > config > default.
std::uint64_t resolve_seed(const Globals& g, const io::json& cfg) {
  if (g.seed_opt->count()) return g.seed;
  if (cfg.contains("seed")) {
    try {
      return cfg.at("seed").get<std::uint64_t>();
    } catch (const io::json::exception&) {
      throw ConfigError("seed: must be a non-negative integer");
    }
  }
  return 0;
}

std::string timestamp() {
  std::time_t t = std::time(nullptr);
  if (const char* epoch = std::getenv("SOURCE_DATE_EPOCH")) t = static_cast<std::time_t>(std::strtoll(epoch, nullptr, 10));
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", std::gmtime(&t));
  return buf;
}

void write_manifest(const fs::path& path, const std::string& sub, const Globals& g, std::uint64_t seed,
                    const fs::path& output, io::json extra = io::json::object()) {
  io::json m = {{"subcommand", sub},
                {"config", g.config.empty() ? io::json(nullptr) : io::json(g.config)},
                {"seed", seed},
                {"threads", g.threads},
                {"output", output.string()},
                {"tool_version", kVersion},
                {"timestamp", timestamp()}};
  m.update(extra);
  io::write_text_file(path, m.dump(2) + "\n");
}

fs::path sidecar(const fs::path& file, const std::string& suffix) {
  fs::path p = file;
  p += suffix;
  return p;
}

void ensure_parent(const fs::path& file) {
  if (file.has_parent_path() && !fs::is_directory(file.parent_path()))
    throw IoError("output directory '" + file.parent_path().string() + "' does not exist");
}

// ---------------------------------------------------------------- subcommands

struct GenerateArgs {
  std::string out;
  std::optional<int> n, grid, nt;
  std::optional<std::string> body;
};

int cmd_generate(const Globals& g, const GenerateArgs& a) {
  io::json cfg = load_config(g, "generate");
  const std::uint64_t seed = resolve_seed(g, cfg);
  cfg["seed"] = seed;
  if (a.n) cfg["n"] = *a.n;
  if (a.grid) cfg["grid"] = *a.grid;
  if (a.nt) cfg["nt"] = *a.nt;
  if (a.body) cfg["class"] = *a.body;
  const GeneratorConfig c =
      generator_config_from_json(cfg, g.config.empty() ? fs::path{} : fs::path(g.config).parent_path());
  const auto summary = generate_dataset(c, a.out, g.threads);
  std::printf("generated %d of %d samples (%d failed) grid=%d nt=%d class=%s T_min=%.6f K T_max=%.6f K -> %s\n",
              summary.written, summary.requested, summary.failures, c.grid, c.nt, c.body_class.c_str(),
              summary.T_min, summary.T_max, a.out.c_str());
  write_manifest(sidecar(a.out, ".manifest.json"), "generate", g, seed, a.out,
                 {{"generator", to_json(c)}, {"summary", summary.to_json()}});
  return 0;
}

int cmd_verify(const Globals& g, const std::string& out) {
  int failed = 0;
  io::json checks = io::json::array();
  for (const VerifyCheck& c : verify_all()) {
    std::printf("%-18s %s  %s = %.6g (pass range [%g, %g], %.2f s)\n", c.name.c_str(), c.passed() ? "PASS" : "FAIL",
                c.metric.c_str(), c.value, c.lo, c.hi, c.seconds);
    failed += c.passed() ? 0 : 1;
    checks.push_back(c.to_json());
  }
  if (!out.empty()) {
    fs::create_directories(out);
    io::write_text_file(fs::path(out) / "verify.json", checks.dump(2) + "\n");
    write_manifest(fs::path(out) / "manifest.json", "verify", g, g.seed, out);
  }
  std::printf("%s\n", failed ? "verification FAILED" : "all checks passed");
  return failed ? 1 : 0;
}

struct TrainArgs {
  std::string dataset, out;
  std::optional<int> epochs, batch_size;
  std::optional<double> lr;
  bool quiet = false;
};

int cmd_train(const Globals& g, const TrainArgs& a) {
  io::json cfg = load_config(g, "train");
  const std::uint64_t seed = resolve_seed(g, cfg);
  cfg["seed"] = seed;
  if (a.epochs) cfg["epochs"] = *a.epochs;
  if (a.batch_size) cfg["batch_size"] = *a.batch_size;
  if (a.lr) cfg["learning_rate"] = *a.lr;
  TrainConfig c = TrainConfig::from_json(cfg);
  c.threads = g.threads;
  const Dataset d = read_dataset(a.dataset);
  fs::create_directories(a.out);
  const fs::path dir = a.out;
  const TrainOutputs outputs{dir / "checkpoint.bin", dir / "loss.csv"};
  const auto result = train(d, c, outputs, [&](const EpochLoss& e) {
    if (!a.quiet)
      std::printf("epoch %d train_loss %s val_loss %s\n", e.epoch, format_loss(e.train_loss).c_str(),
                  format_loss(e.val_loss).c_str());
  });
  const auto& last = result.history.back();
  std::printf("trained %d epochs on %zu samples (%zu validation): final train_loss %s val_loss %s -> %s\n", c.epochs,
              result.train_ids.size(), result.val_ids.size(), format_loss(last.train_loss).c_str(),
              format_loss(last.val_loss).c_str(), outputs.checkpoint.string().c_str());
  write_manifest(dir / "manifest.json", "train", g, seed, dir,
                 {{"dataset", a.dataset},
                  {"train_config", c.to_json()},
                  {"train_ids", result.train_ids},
                  {"val_ids", result.val_ids}});
  return 0;
}

struct PredictArgs {
  std::string checkpoint, dataset, out;
};

int cmd_predict(const Globals& g, const PredictArgs& a) {
  const Checkpoint ck = load_checkpoint(a.checkpoint);
  const Dataset d = read_dataset(a.dataset);
  ensure_parent(a.out);
  Predictions p = predict(ck, d, g.threads);
  write_predictions(a.out, p);
  const Timing t = predict_timing(ck, d);
  io::write_text_file(sidecar(a.out, ".timing.json"), t.to_json().dump(2) + "\n");
  std::printf("predicted %zu samples -> %s\n", p.flux.size(), a.out.c_str());
  std::printf("timing: %.3f ms per step, %.4f s per sample (nt=%d, median of %d single-threaded runs)\n",
              t.ms_per_step, t.seconds_per_sample, t.nt, t.repeats);
  write_manifest(sidecar(a.out, ".manifest.json"), "predict", g, g.seed, a.out,
                 {{"checkpoint", a.checkpoint}, {"dataset", a.dataset}});
  return 0;
}

struct EvaluateArgs {
  std::string checkpoint, dataset, out, predictions;
  std::optional<double> floor, clip;
  std::optional<int> bins, sample;
};

int cmd_evaluate(const Globals& g, const EvaluateArgs& a) {
  const io::json cfg = load_config(g, "evaluate");
  static const std::set<std::string> known = {"floor", "clip", "bins", "points", "series_sample", "seed"};
  for (const auto& [key, value] : cfg.items())
    if (!known.count(key)) throw ConfigError(key + ": unknown evaluation config field");
  EvalOptions o;
  try {
    o.floor = a.floor.value_or(cfg.value("floor", o.floor));
    o.clip = a.clip.value_or(cfg.value("clip", o.clip));
    o.bins = a.bins.value_or(cfg.value("bins", o.bins));
    o.series_sample = a.sample.value_or(cfg.value("series_sample", o.series_sample));
    if (cfg.contains("points"))
      for (const auto& p : cfg.at("points")) o.points.emplace_back(p.at(0).get<int>(), p.at(1).get<int>());
  } catch (const io::json::exception& e) {
    throw ConfigError(std::string("evaluation config: ") + e.what());
  }
  o.threads = g.threads;
  if (a.checkpoint.empty() && a.predictions.empty())
    throw ConfigError("evaluate needs --checkpoint or --predictions");
  const Dataset d = read_dataset(a.dataset);
  EvalReport r;
  if (!a.predictions.empty()) {
    r = evaluate_predictions(d, read_predictions(a.predictions), o);
  } else {
    r = evaluate(load_checkpoint(a.checkpoint), d, o);
  }
  const auto files = write_report(r, a.out);
  for (const auto& c : r.classes)
    std::printf("%-8s samples %d cells %zu median %s mean %s p90 %s max %s\n", c.name.c_str(), c.samples,
                c.stats.cells, format_number(c.stats.median).c_str(), format_number(c.stats.mean).c_str(),
                format_number(c.stats.p90).c_str(), format_number(c.stats.max).c_str());
  if (r.timing) std::printf("timing: %.3f ms per step, %.4f s per sample\n", r.timing->ms_per_step, r.timing->seconds_per_sample);
  std::printf("wrote %zu report files to %s\n", files.size(), a.out.c_str());
  write_manifest(fs::path(a.out) / "manifest.json", "evaluate", g, g.seed, a.out,
                 {{"checkpoint", a.checkpoint.empty() ? io::json(nullptr) : io::json(a.checkpoint)},
                  {"predictions", a.predictions.empty() ? io::json(nullptr) : io::json(a.predictions)},
                  {"dataset", a.dataset},
                  {"floor", r.floor}});
  return 0;
}

int cmd_inspect(const Globals& g, const std::string& file, bool material) {
  if (material) {
    const MaterialTable m = file.empty() ? default_material() : load_material(file);
    std::printf("%s\n", to_json(m).dump(2).c_str());
    for (double T : {273.15, 500.0, 1000.0, 1500.0})
      std::printf("T=%7.2f K  k=%.4g W/(m K)  cp=%.4g J/(kg K)  alpha=%.4g m^2/s\n", T, eval_k(m, T), eval_cp(m, T),
                  eval_k(m, T) / (m.rho * eval_cp(m, T)));
    return 0;
  }
  if (file.empty()) {
    const io::json cfg = load_config(g, "generate");
    io::json c = cfg;
    c["seed"] = resolve_seed(g, cfg);
    const GeneratorConfig gc = generator_config_from_json(c);
    for (const BodyClass body : {BodyClass::regular, BodyClass::complex}) {
      const HeightField h = sample_geometry(geometry_seed(gc.seed, 0), gc, body);
      const Mesh mesh = build_mesh(h, gc.nz);
      std::printf("%-8s mesh %dx%dx%d: %d nodes, %d elements, %d S1 / %d S2 faces, thickness %.4f..%.4f m\n",
                  to_string(body), mesh.nx, mesh.ny, mesh.nz, mesh.node_count(), mesh.element_count(),
                  mesh.face_count(Surface::S1), mesh.face_count(Surface::S2), h.min(), h.max());
    }
    return 0;
  }
  io::BinaryReader r(file);
  io::json h = r.header();
  if (h.contains("samples") && h["samples"].size() > 8) h["samples"] = std::to_string(h["samples"].size()) + " entries";
  std::printf("%s\n", h.dump(2).c_str());
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"heatinv: surface heat-flux inversion from interior temperatures.\n"
               "Precedence for every setting: command-line flag > --config JSON field > built-in default.\n"
               "A config file may hold the fields directly or per-subcommand sections\n"
               "(\"generate\", \"train\", \"evaluate\")."};
  app.require_subcommand(1);
  app.fallthrough();
  Globals g;
  g.seed_opt = app.add_option("--seed", g.seed, "Seed for all randomness (flag > config \"seed\" > 0)");
  app.add_option("--threads", g.threads, "Worker cap; 0 = all cores; outputs do not depend on it")
      ->default_val(1)
      ->check(CLI::NonNegativeNumber);
  app.add_option("--config", g.config, "JSON config file")->check(CLI::ExistingFile);
  app.set_version_flag("--version", std::string(kVersion));

  GenerateArgs ga;
  auto* gen = app.add_subcommand("generate", "Generate a synthetic dataset");
  gen->add_option("-o,--out", ga.out, "Dataset file to write")->required();
  gen->add_option("-n,--samples", ga.n, "Number of samples");
  gen->add_option("--grid", ga.grid, "Flux/sensor grid size");
  gen->add_option("--nt", ga.nt, "Time steps");
  gen->add_option("--class", ga.body, "regular | complex | mixed");

  std::string verify_out;
  auto* ver = app.add_subcommand("verify", "Run the analytical solver checks");
  ver->add_option("-o,--out", verify_out, "Optional directory for verify.json and a manifest");

  TrainArgs ta;
  auto* tr = app.add_subcommand("train", "Train the network on a dataset");
  tr->add_option("-d,--dataset", ta.dataset, "Dataset file")->required();
  tr->add_option("-o,--out", ta.out, "Output directory (checkpoint.bin, loss.csv, manifest.json)")->required();
  tr->add_option("--epochs", ta.epochs, "Epochs");
  tr->add_option("--batch-size", ta.batch_size, "Mini-batch size");
  tr->add_option("--lr", ta.lr, "Adam learning rate");
  tr->add_flag("-q,--quiet", ta.quiet, "Only print the final summary");

  PredictArgs pa;
  auto* pr = app.add_subcommand("predict", "Predict flux for every sample of a dataset");
  pr->add_option("-c,--checkpoint", pa.checkpoint, "Checkpoint file")->required();
  pr->add_option("-d,--dataset", pa.dataset, "Dataset file")->required();
  pr->add_option("-o,--out", pa.out, "Prediction file to write")->required();

  EvaluateArgs ea;
  auto* ev = app.add_subcommand("evaluate", "Relative-error report for a checkpoint or a prediction file");
  ev->add_option("-c,--checkpoint", ea.checkpoint, "Checkpoint file");
  ev->add_option("-p,--predictions", ea.predictions, "Prediction file (skips running the network)");
  ev->add_option("-d,--dataset", ea.dataset, "Dataset file")->required();
  ev->add_option("-o,--out", ea.out, "Report directory")->required();
  ev->add_option("--floor", ea.floor, "Division floor in W/m^2 (default 1% of q_max)");
  ev->add_option("--clip", ea.clip, "Histogram upper edge (default 1)");
  ev->add_option("--bins", ea.bins, "Histogram bins (default 32)");
  ev->add_option("--sample", ea.sample, "Dataset position for the time-series files (default 0)");

  std::string inspect_file;
  bool inspect_material = false;
  auto* in = app.add_subcommand("inspect", "Print a file header, a material table, or the meshes a config builds");
  in->add_option("file", inspect_file, "Dataset, prediction or checkpoint file (or material JSON with --material)");
  in->add_flag("--material", inspect_material, "Show a material table (default material without a file)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  }

  try {
    if (*gen) return cmd_generate(g, ga);
    if (*ver) return cmd_verify(g, verify_out);
    if (*tr) return cmd_train(g, ta);
    if (*pr) return cmd_predict(g, pa);
    if (*ev) return cmd_evaluate(g, ea);
    if (*in) return cmd_inspect(g, inspect_file, inspect_material);
  } catch (const heatinv::Error& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return 1;
}

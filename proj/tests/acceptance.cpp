// Acceptance suite. Prints one PASS/FAIL line per criterion and exits nonzero
// if any requested criterion fails.
//
//   acceptance            all criteria, 1 through 8
//   acceptance 1 2 4      the listed criteria only

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iterator>
#include <map>
#include <random>
#include <string>
#include <vector>

#include <sys/wait.h>

#include "heatinv/heatinv.hpp"

using namespace heatinv;
namespace fs = std::filesystem;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

double seconds_since(std::chrono::steady_clock::time_point t) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t).count();
}

fs::path work_dir() {
  static const fs::path d = [] {
    const fs::path p = fs::temp_directory_path() / "heatinv_acceptance";
    fs::create_directories(p);
    return p;
  }();
  return d;
}

double mean_of(const std::vector<double>& v) {
  double s = 0;
  for (double x : v) s += x;
  return s / static_cast<double>(v.size());
}

// ---------------------------------------------------------------- 1

Outcome fem_equilibrium() {
  const auto start = std::chrono::steady_clock::now();
  const Mesh mesh = build_mesh(HeightField::flat(29, 29, 0.02), 4);
  const ThermalModel model(mesh, default_material(), 30);
  BoundaryOptions bc;
  bc.ambient = 273.15;
  SolverOptions opt;
  opt.bc = bc;
  const auto r = solve_transient(model, sensor_layout(mesh, 30), FluxField(71, 30), 273.15, 0.5, opt);
  const double runtime = seconds_since(start);
  double worst = 0;
  for (double T : r.sensor_T) worst = std::max(worst, std::abs(T - 273.15));
  const bool ok = r.sensor_T.size() == 71u * 900u && worst < 1e-9 && runtime < 10.0;
  return {ok, fmt("max sensor deviation %.3g K (< 1e-9), 71 steps on 29x29x4 in %.2f s (< 10 s)", worst, runtime)};
}

// ---------------------------------------------------------------- 2

// Exact time for the lumped body to cool from T0 to T under
// rho cp L dT/dt = -sigma eps (T^4 - Ta^4).
double radiation_time(double T, double T0, double Ta, double a) {
  auto F = [&](double x) { return (std::log((x - Ta) / (x + Ta)) - 2.0 * std::atan(x / Ta)) / (4.0 * Ta * Ta * Ta); };
  return -(F(T) - F(T0)) / a;
}

double radiation_exact(double t, double T0, double Ta, double a) {
  double lo = Ta + 1e-9, hi = T0;
  for (int i = 0; i < 200; ++i) {
    const double mid = 0.5 * (lo + hi);
    (radiation_time(mid, T0, Ta, a) > t ? lo : hi) = mid;
  }
  return 0.5 * (lo + hi);
}

Outcome fem_analytical() {
  // Slab: constant flux on top, fixed bottom temperature.
  const double k = 12, q = 2e5, L = 0.015, Tb = 290;
  const ThermalModel slab(build_mesh(HeightField::flat(3, 3, L), 5), constant_material(k, 450, 4500, 0.7), 1);
  SolverOptions so;
  so.bc.fixed_bottom = Tb;
  FluxField f(80, 1);
  for (auto& v : f.values) v = q;
  const auto rs = solve_transient(slab, SensorLayout{1, 1, {0}}, f, Tb, 20.0, so);
  std::vector<double> top;
  for (int n = 0; n < slab.node_count(); ++n)
    if (slab.mesh().nodes[n].z > L - 1e-12) top.push_back(rs.final_state.T[n]);
  const double rise = mean_of(top) - Tb, expected = q * L / k;
  const double slab_err = std::abs(rise - expected) / expected;

  // Lumped radiation: thin, highly conductive plate.
  const double Lr = 0.01, rho = 4500, cp = 500, eps = 0.8, T0 = 1000, Ta = 273.15, dt = 0.5;
  const ThermalModel plate(build_mesh(HeightField::flat(3, 3, Lr), 2), constant_material(500, cp, rho, eps), 1);
  SolverOptions ro;
  ro.bc.ambient = Ta;
  ro.bc.flux = false;
  ThermalState s{std::vector<double>(plate.node_count(), T0), 0};
  const double a = MaterialTable::sigma * eps / (rho * cp * Lr);
  double worst = 0;
  for (int step = 1; step <= 100; ++step) {
    s = plate.newton_step_transient(s, std::vector<double>{0.0}, dt, ro);
    std::vector<double> T(s.T.begin(), s.T.end());
    const double exact = radiation_exact(step * dt, T0, Ta, a);
    worst = std::max(worst, std::abs(mean_of(T) - exact) / exact);
  }
  return {slab_err < 0.01 && worst < 0.005,
          fmt("slab rise %.5g K vs qL/k %.5g K (rel %.2e < 1e-2); radiation max rel dev %.2e over 100 steps (< 5e-3)",
              rise, expected, slab_err, worst)};
}

// ---------------------------------------------------------------- 3

Outcome fem_conservation_order() {
  // Insulated body, nonuniform start, curved top.
  HeightField h = HeightField::flat(5, 4, 0.02);
  h.at(2, 2) = 0.03;
  h.at(3, 1) = 0.026;
  const ThermalModel model(build_mesh(h, 3), default_material(), 1);
  std::mt19937_64 rng(17);
  ThermalState st{std::vector<double>(model.node_count()), 0};
  for (auto& T : st.T) T = uniform(rng, 280, 900);
  SolverOptions opt;
  opt.bc.radiation = false;
  opt.bc.flux = false;
  const std::vector<double> q{0.0};
  // Discrete enthalpy change of the lumped scheme: sum over steps and nodes of
  // C_ii(T_new) (T_new - T_old), with C_ii from the capacity at the new state.
  auto capacity_diag = [&](const std::vector<double>& T) {
    const SystemMatrices m = model.assemble(T, q, opt.bc);
    std::vector<double> d(model.node_count());
    for (int i = 0; i < model.node_count(); ++i) d[i] = m.C.val[m.C.find(i, i)];
    return d;
  };
  double capacity = 0;
  for (double c : capacity_diag(st.T)) capacity += c;
  const int steps = 20;
  double drift = 0;
  for (int k = 0; k < steps; ++k) {
    const ThermalState next = model.newton_step_transient(st, q, 0.5, opt);
    const auto c = capacity_diag(next.T);
    for (int i = 0; i < model.node_count(); ++i) drift += c[i] * (next.T[i] - st.T[i]);
    st = next;
  }
  drift = std::abs(drift);
  const double bound = opt.newton_tol * steps * capacity;

  // Temporal order from dt, dt/2, dt/4.
  const int G = 6;
  const Mesh mesh = build_mesh(HeightField::flat(G - 1, G - 1, 0.012), 3);
  const ThermalModel m2(mesh, default_material(), G);
  auto run = [&](double dt) {
    const int nt = static_cast<int>(std::lround(10.0 / dt));
    FluxField f(nt, G);
    for (int t = 0; t < nt; ++t)
      for (int j = 0; j < G; ++j)
        for (int i = 0; i < G; ++i) f.at(t, i, j) = 5e4 * (2 + std::sin(i + 0.5 * j));
    SolverOptions o;
    o.newton_tol = 1e-11;
    o.linear_tol = 1e-13;
    const auto r = solve_transient(m2, sensor_layout(mesh, G), f, 273.15, dt, o);
    return r.final_state.T;
  };
  const auto a = run(0.5), b = run(0.25), c = run(0.125);
  double e1 = 0, e2 = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    e1 = std::max(e1, std::abs(a[i] - b[i]));
    e2 = std::max(e2, std::abs(b[i] - c[i]));
  }
  const double order = std::log2(e1 / e2);
  return {drift <= bound && order >= 0.8 && order <= 1.2,
          fmt("enthalpy drift %.3e J (bound newton_tol x steps x capacity = %.3e J); observed order %.3f (in [0.8, 1.2])",
              drift, bound, order)};
}

// ---------------------------------------------------------------- 4

double sig(double z) { return 1.0 / (1.0 + std::exp(-z)); }

Outcome convlstm_correctness() {
  std::mt19937_64 rng(404);
  auto rnd = [&](std::size_t n, double lo, double hi) {
    std::vector<float> v(n);
    for (auto& x : v) x = static_cast<float>(uniform(rng, lo, hi));
    return v;
  };
  // (a) 2-channel input, 4x4 kernel, nested-loop reference. Same padding:
  // (k-1)/2 before, the rest after.
  const int ci = 2, co = 3, k = 4, H = 9, W = 8;
  const auto x = rnd(ci * H * W, -1, 1), kern = rnd(co * ci * k * k, -1, 1);
  const auto y = conv2d_same<float>(x, ci, H, W, kern, co, k);
  double conv_err = 0;
  for (int o = 0; o < co; ++o)
    for (int r = 0; r < H; ++r)
      for (int c = 0; c < W; ++c) {
        double acc = 0;
        for (int ch = 0; ch < ci; ++ch)
          for (int a = 0; a < k; ++a)
            for (int b = 0; b < k; ++b) {
              const int rr = r + a - (k - 1) / 2, cc = c + b - (k - 1) / 2;
              if (rr >= 0 && rr < H && cc >= 0 && cc < W)
                acc += double(kern[((o * ci + ch) * k + a) * k + b]) * x[(ch * H + rr) * W + cc];
            }
        conv_err = std::max(conv_err, std::abs(acc - y[(o * H + r) * W + c]));
      }

  // (b) 1x1 grid, 1x1 kernel versus a scalar peephole LSTM.
  double cell_err = 0;
  for (int trial = 0; trial < 20; ++trial) {
    const auto p = rnd(15, -1.5, 1.5);  // Wx[i f c o], Wh[i f c o], Wci, Wcf, Wco, b[i f c o]
    const ConvLSTMShape s{1, 1, 1, 1, 1};
    std::vector<float> Hs = {0.0f}, Cs = {0.0f};
    double h = 0, c = 0;
    for (int t = 0; t < 12; ++t) {
      const float in = static_cast<float>(uniform(rng, -2, 2));
      const auto out = convlstm_step<float>(s, p, std::vector<float>{in}, Hs, Cs);
      const double i = sig(p[0] * in + p[4] * h + p[8] * c + p[11]);
      const double f = sig(p[1] * in + p[5] * h + p[9] * c + p[12]);
      const double g = std::tanh(p[2] * in + p[6] * h + p[13]);
      c = f * c + i * g;
      const double o = sig(p[3] * in + p[7] * h + p[10] * c + p[14]);
      h = o * std::tanh(c);
      cell_err = std::max({cell_err, std::abs(out.H[0] - h), std::abs(out.C[0] - c)});
      Hs = out.H;
      Cs = out.C;
    }
  }

  // (c) BPTT against central differences (h = 1e-3) on 50 parameters of the
  // full-size network.
  const auto gc = gradient_check<float, double>(NetworkConfig{}, 2024, 3, 50, 1e-3);

  // (d) 100 random forward passes.
  bool gates_ok = true, growth_ok = true;
  const ConvLSTMShape s{2, 2, 4, 8, 8};
  for (int pass = 0; pass < 100; ++pass) {
    const auto p = rnd(s.param_count(), -0.3, 0.3);
    std::vector<float> Hc = rnd(s.state_size(), -1, 1), Cc = rnd(s.state_size(), -3, 3);
    const auto C0 = Cc;
    for (int t = 1; t <= 5; ++t) {
      ConvLSTMStepCache<float> cache;
      const auto out = convlstm_step<float>(s, p, rnd(s.input_size(), -2, 2), Hc, Cc, &cache);
      const std::size_t n = s.state_size();
      for (std::size_t j = 0; j < n; ++j) {
        for (int q : {0, 1, 3}) gates_ok &= cache.gates[q * n + j] > 0.0f && cache.gates[q * n + j] < 1.0f;
        gates_ok &= std::abs(out.H[j]) < 1.0f;
        growth_ok &= std::abs(out.C[j]) <= std::abs(Cc[j]) + 1.0f;
        growth_ok &= std::abs(out.C[j]) <= std::abs(C0[j]) + static_cast<float>(t);
      }
      Hc = out.H;
      Cc = out.C;
    }
  }
  const bool ok = conv_err < 1e-5 && cell_err < 1e-6 && gc.entries.size() == 50 && gc.worst() < 1e-3 && gates_ok &&
                  growth_ok;
  return {ok, fmt("(a) conv max diff %.2e (< 1e-5); (b) peephole max diff %.2e (< 1e-6); (c) worst gradient rel "
                  "error %.2e over %zu params (< 1e-3); (d) gates %s, cell growth %s",
                  conv_err, cell_err, gc.worst(), gc.entries.size(), gates_ok ? "in range" : "OUT OF RANGE",
                  growth_ok ? "bounded" : "UNBOUNDED")};
}

// ---------------------------------------------------------------- 5, 6

// Network and optimizer settings of the learning criteria: module defaults
// plus a unit-variance initialization gain.
TrainConfig learning_config(int epochs) {
  TrainConfig c;
  c.epochs = epochs;
  c.seed = 1;
  c.network.init_gain = std::sqrt(3.0);
  return c;
}

Outcome overfit() {
  const auto start = std::chrono::steady_clock::now();
  GeneratorConfig g;
  g.n = 2;
  g.body_class = "complex";
  g.grid = 30;
  g.nt = 71;
  g.dt = 0.5;
  g.seed = 5;
  Dataset d;
  generate_dataset(g, work_dir() / "overfit.bin", 1, &d);
  const TrainConfig c = learning_config(500);
  const auto r = train(d, c, {work_dir() / "overfit.ckpt", work_dir() / "overfit_loss.csv"});
  const double first = r.history.front().train_loss, last = r.history.back().train_loss;
  EvalOptions o;
  const EvalReport rep = evaluate(load_checkpoint(work_dir() / "overfit.ckpt"), d, o);
  const double median = rep.find_class("all")->stats.median;
  const double minutes = seconds_since(start) / 60;
  const bool ok = last < 0.01 * first && median < 0.05 && minutes < 30;
  return {ok, fmt("loss %.4g -> %.4g after 500 epochs (ratio %.4f, < 0.01); median relative error on the training "
                  "samples %.4f (< 0.05, floor %.0f W/m^2); %.1f min (< 30)",
                  first, last, last / first, median, rep.floor, minutes)};
}

Outcome generalization() {
  const auto start = std::chrono::steady_clock::now();
  GeneratorConfig g;
  g.body_class = "mixed";
  g.grid = 10;
  g.nt = 71;
  g.dt = 0.5;
  g.nz = 4;
  g.n = 400;
  g.seed = 600;
  Dataset train_set, test_set;
  generate_dataset(g, work_dir() / "gen_train.bin", 1, &train_set);
  g.n = 80;
  g.seed = 601;
  generate_dataset(g, work_dir() / "gen_test.bin", 1, &test_set);
  const TrainConfig c = learning_config(300);
  const auto r = train(train_set, c, {work_dir() / "gen.ckpt", work_dir() / "gen_loss.csv"});
  const EvalReport rep = evaluate(load_checkpoint(work_dir() / "gen.ckpt"), test_set, {});
  write_report(rep, work_dir() / "gen_report");
  const double reg = rep.find_class("regular")->stats.median, cpx = rep.find_class("complex")->stats.median;
  const bool ok = reg < 0.30 && reg <= cpx;
  return {ok, fmt("grid 10, %zu train / %zu validation / %zu test samples, 300 epochs (final train %.4g, val %.4g): "
                  "test median relative error regular %.4f (< 0.30), complex %.4f (regular <= complex); %.1f min",
                  r.train_ids.size(), r.val_ids.size(), test_set.samples.size(), r.history.back().train_loss,
                  r.history.back().val_loss, reg, cpx, seconds_since(start) / 60)};
}

// ---------------------------------------------------------------- 7, 8

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

int cli(const std::string& args, const fs::path& log) {
  const std::string cmd = "SOURCE_DATE_EPOCH=0 " + std::string(HEATINV_CLI) + " --threads 1 " + args + " > " +
                          log.string() + " 2>&1";
  const int raw = std::system(cmd.c_str());
  return WIFEXITED(raw) ? WEXITSTATUS(raw) : -1;
}

std::map<std::string, std::string> snapshot(const fs::path& dir) {
  std::map<std::string, std::string> files;
  for (const auto& e : fs::recursive_directory_iterator(dir))
    if (e.is_regular_file()) files[fs::relative(e.path(), dir).string()] = slurp(e.path());
  return files;
}

Outcome determinism() {
  const fs::path root = work_dir() / "determinism";
  const fs::path out = root / "out";
  const fs::path cfg = root / "generate.json";
  const fs::path log = root / "log.txt";
  auto pipeline = [&]() -> bool {
    fs::remove_all(out);
    fs::create_directories(out);
    return cli("--seed 11 --config " + cfg.string() + " generate -o " + (out / "data.bin").string(), log) == 0 &&
           cli("--seed 11 train -q --epochs 3 -d " + (out / "data.bin").string() + " -o " + (out / "train").string(),
               log) == 0 &&
           cli("predict -c " + (out / "train/checkpoint.bin").string() + " -d " + (out / "data.bin").string() +
                   " -o " + (out / "pred.bin").string(),
               log) == 0 &&
           cli("evaluate -c " + (out / "train/checkpoint.bin").string() + " -d " + (out / "data.bin").string() +
                   " -o " + (out / "report").string(),
               log) == 0;
  };
  fs::create_directories(root);
  std::ofstream(cfg) << R"({"n": 4, "class": "mixed", "grid": 10, "nt": 12, "nz": 2})";
  if (!pipeline()) return {false, "pipeline run 1 failed: " + slurp(log)};
  auto first = snapshot(out);
  if (!pipeline()) return {false, "pipeline run 2 failed: " + slurp(log)};
  auto second = snapshot(out);
  // Wall-clock timing files are the only outputs allowed to differ.
  int compared = 0, differing = 0;
  std::string diffs;
  for (const auto& [name, bytes] : first) {
    if (name.find("timing") != std::string::npos) continue;
    ++compared;
    if (!second.count(name) || second[name] != bytes) {
      ++differing;
      diffs += " " + name;
    }
  }
  const bool ok = differing == 0 && compared >= 10 && first.size() == second.size();
  return {ok, fmt("generate, train, predict, evaluate run twice with --seed 11 --threads 1: %d files byte-identical, "
                  "%d differ%s (timing files excluded)",
                  compared - differing, differing, diffs.c_str())};
}

Outcome timing_report() {
  const fs::path root = work_dir() / "timing";
  fs::create_directories(root);
  const fs::path cfg = root / "generate.json", log = root / "log.txt";
  std::ofstream(cfg) << R"({"n": 1, "class": "complex", "grid": 30, "nt": 71})";
  if (cli("--config " + cfg.string() + " generate -o " + (root / "data.bin").string(), log) != 0)
    return {false, "generate failed: " + slurp(log)};
  // An untrained checkpoint of the full-size network.
  Checkpoint ck;
  Network<float> net(ck.network);
  net.init(1);
  ck.params.assign(net.params().begin(), net.params().end());
  save_checkpoint(root / "init.ckpt", ck);
  if (cli("predict -c " + (root / "init.ckpt").string() + " -d " + (root / "data.bin").string() + " -o " +
              (root / "pred.bin").string(),
          log) != 0)
    return {false, "predict failed: " + slurp(log)};
  const std::string text = slurp(log);
  const auto pos = text.find("timing: ");
  if (pos == std::string::npos || text.find("ms per step", pos) == std::string::npos)
    return {false, "no timing line in predict output"};
  const double ms = std::stod(text.substr(pos + 8));
  return {ms > 0, fmt("predict prints %.3f ms per step at 30x30, Nt = 71 (must be present and > 0, no threshold)",
                      ms)};
}

}  // namespace

int main(int argc, char** argv) {
  const std::map<int, std::pair<const char*, std::function<Outcome()>>> criteria = {
      {1, {"FEM equilibrium", fem_equilibrium}},
      {2, {"FEM analytical slab and radiation", fem_analytical}},
      {3, {"FEM conservation and order", fem_conservation_order}},
      {4, {"ConvLSTM correctness", convlstm_correctness}},
      {5, {"Overfit sanity", overfit}},
      {6, {"Generalization smoke test", generalization}},
      {7, {"Determinism", determinism}},
      {8, {"Timing report", timing_report}},
  };
  std::vector<int> selected;
  for (int i = 1; i < argc; ++i) selected.push_back(std::atoi(argv[i]));
  if (selected.empty())
    for (const auto& [id, c] : criteria) selected.push_back(id);
  int failed = 0;
  for (int id : selected) {
    const auto it = criteria.find(id);
    if (it == criteria.end()) {
      std::printf("criterion %d: FAIL unknown criterion\n", id);
      ++failed;
      continue;
    }
    Outcome o;
    try {
      o = it->second.second();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    std::printf("criterion %d [%s]: %s  %s\n", id, it->second.first, o.pass ? "PASS" : "FAIL", o.detail.c_str());
    std::fflush(stdout);
    failed += o.pass ? 0 : 1;
  }
  return failed ? 1 : 0;
}

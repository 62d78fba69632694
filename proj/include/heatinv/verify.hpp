#pragma once

// Analytical checks of the transient solver, run by `heatinv verify`.

#include <chrono>
#include <cmath>
#include <numeric>
#include <string>
#include <vector>

#include "heatinv/fem.hpp"

namespace heatinv {

struct VerifyCheck {
  std::string name;
  std::string metric;
  double value = 0;
  double lo = 0, hi = 0;  // pass iff lo <= value <= hi
  double seconds = 0;

  bool passed() const { return std::isfinite(value) && value >= lo && value <= hi; }
  io::json to_json() const {
    return {{"name", name}, {"metric", metric}, {"value", value}, {"lo", lo}, {"hi", hi}, {"passed", passed()}};
  }
};

namespace detail {

inline double mean_of(std::span<const double> v) {
  return std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

template <class Fn>
VerifyCheck timed(Fn&& fn) {
  const auto start = std::chrono::steady_clock::now();
  VerifyCheck c = fn();
  c.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return c;
}

}  // namespace detail

// Zero flux with everything at ambient: sensors must stay put.
inline VerifyCheck verify_equilibrium(int grid = kDefaultGrid, int nz = 4, int nt = 71) {
  return detail::timed([&] {
    const Mesh mesh = build_mesh(HeightField::flat(grid - 1, grid - 1, 0.02), nz);
    const ThermalModel model(mesh, default_material(), grid);
    const auto r = solve_transient(model, sensor_layout(mesh, grid), FluxField(nt, grid), kZeroCelsius, 0.5);
    double worst = 0;
    for (double T : r.sensor_T) worst = std::max(worst, std::abs(T - kZeroCelsius));
    return VerifyCheck{"equilibrium", "max sensor deviation (K)", worst, 0, 1e-9};
  });
}

// Constant flux into a slab with a fixed-temperature bottom: steady rise qL/k.
inline VerifyCheck verify_steady_slab() {
  return detail::timed([] {
    const double k = 10, q = 1e5, L = 0.02, Tb = 300;
    const ThermalModel model(build_mesh(HeightField::flat(2, 2, L), 4), constant_material(k, 500, 4500, 0.8), 1);
    SolverOptions opt;
    opt.bc.fixed_bottom = Tb;
    FluxField f(60, 1);
    for (auto& v : f.values) v = q;
    const auto r = solve_transient(model, SensorLayout{1, 1, {0}}, f, Tb, 20.0, opt);
    std::vector<double> top;
    for (int n = 0; n < model.node_count(); ++n)
      if (model.mesh().nodes[n].z > L - 1e-12) top.push_back(r.final_state.T[n]);
    const double expected = q * L / k;
    return VerifyCheck{"steady_slab", "relative error of top rise vs qL/k",
                       std::abs(detail::mean_of(top) - Tb - expected) / expected, 0, 0.01};
  });
}

// Thin, highly conductive plate cooling by radiation against a lumped ODE
// integrated with fine RK4.
inline VerifyCheck verify_lumped_radiation() {
  return detail::timed([] {
    const double L = 0.01, rho = 4500, cp = 500, eps = 0.8, T0 = 1000, Ta = kZeroCelsius, dt = 0.5;
    const ThermalModel model(build_mesh(HeightField::flat(3, 3, L), 2), constant_material(500, cp, rho, eps), 1);
    SolverOptions opt;
    opt.bc.ambient = Ta;
    opt.bc.flux = false;
    ThermalState s{std::vector<double>(model.node_count(), T0), 0};
    auto rhs = [&](double T) {
      return -MaterialTable::sigma * eps * (std::pow(T, 4) - std::pow(Ta, 4)) / (rho * cp * L);
    };
    const std::vector<double> q{0.0};
    double Tode = T0, worst = 0;
    for (int step = 0; step < 100; ++step) {
      s = model.newton_step_transient(s, q, dt, opt);
      const double h = dt / 100;
      for (int r = 0; r < 100; ++r) {
        const double k1 = rhs(Tode), k2 = rhs(Tode + 0.5 * h * k1), k3 = rhs(Tode + 0.5 * h * k2),
                     k4 = rhs(Tode + h * k3);
        Tode += h / 6 * (k1 + 2 * k2 + 2 * k3 + k4);
      }
      worst = std::max(worst, std::abs(detail::mean_of(s.T) - Tode) / Tode);
    }
    return VerifyCheck{"lumped_radiation", "max relative deviation from ODE", worst, 0, 0.005};
  });
}

// Insulated body with a nonuniform start: total enthalpy must not drift by
// more than the Newton tolerance per step.
inline VerifyCheck verify_enthalpy(int steps = 20) {
  return detail::timed([&] {
    HeightField h = HeightField::flat(4, 3, 0.02);
    h.at(2, 1) = 0.035;
    const ThermalModel model(build_mesh(h, 3), constant_material(15, 600, 4500, 0.8), 1);
    ThermalState s{std::vector<double>(model.node_count()), 0};
    for (int n = 0; n < model.node_count(); ++n) s.T[n] = 300 + 500 * ((n * 7919) % 101) / 100.0;
    SolverOptions opt;
    opt.bc.radiation = false;
    opt.bc.flux = false;
    const std::vector<double> q{0.0};
    const SystemMatrices m = model.assemble(s.T, q, opt.bc);
    auto enthalpy = [&](const std::vector<double>& T) {
      const auto ct = m.C.multiply(T);
      return std::accumulate(ct.begin(), ct.end(), 0.0);
    };
    const double H0 = enthalpy(s.T);
    const double capacity = std::accumulate(m.C.val.begin(), m.C.val.end(), 0.0);
    for (int k = 0; k < steps; ++k) s = model.newton_step_transient(s, q, 0.5, opt);
    return VerifyCheck{"enthalpy", "enthalpy drift / (newton_tol x steps x capacity)",
                       std::abs(enthalpy(s.T) - H0) / (opt.newton_tol * steps * capacity), 0, 1};
  });
}

// Observed temporal order from runs at dt, dt/2, dt/4.
inline VerifyCheck verify_convergence_order() {
  return detail::timed([] {
    const int G = 5;
    const Mesh mesh = build_mesh(HeightField::flat(G - 1, G - 1, 0.015), 2);
    const ThermalModel model(mesh, default_material(), G);
    const SensorLayout sensors = sensor_layout(mesh, G);
    auto run = [&](double dt) {
      const int nt = static_cast<int>(std::lround(4.0 / dt));
      FluxField f(nt, G);
      for (int t = 0; t < nt; ++t)
        for (int j = 0; j < G; ++j)
          for (int i = 0; i < G; ++i) f.at(t, i, j) = 1e5 * (1 + i + 2 * j);
      SolverOptions opt;
      opt.newton_tol = 1e-10;
      const auto r = solve_transient(model, sensors, f, kZeroCelsius, dt, opt);
      return std::vector<double>(r.sensor_T.end() - G * G, r.sensor_T.end());
    };
    const auto a = run(0.5), b = run(0.25), c = run(0.125);
    double e1 = 0, e2 = 0;
    for (int i = 0; i < G * G; ++i) {
      e1 = std::max(e1, std::abs(a[i] - b[i]));
      e2 = std::max(e2, std::abs(b[i] - c[i]));
    }
    return VerifyCheck{"convergence_order", "observed temporal order", std::log2(e1 / e2), 0.8, 1.2};
  });
}

inline std::vector<VerifyCheck> verify_all() {
  return {verify_equilibrium(), verify_steady_slab(), verify_lumped_radiation(), verify_enthalpy(),
          verify_convergence_order()};
}

}  // namespace heatinv

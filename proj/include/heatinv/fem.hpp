#pragma once

// Galerkin finite elements for the nonlinear transient conduction problem
//
//   rho Cp(T) dT/dt = div(k(T) grad T)             in the body
//   -k dT/dn        = -q(r, t)   (heat entering)   on S1
//   -k dT/dn        = sigma eps (T^4 - T_amb^4)    on S2 (n = -z)
//   -k dT/dn        = 0                            on S3
//
// on trilinear hexahedra, with backward Euler in time and a full Newton
// iteration (property slopes and the T^4 tangent in the Jacobian).

#include <algorithm>
#include <array>
#include <cassert>
#include <cmath>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "heatinv/common.hpp"
#include "heatinv/flux.hpp"
#include "heatinv/geometry.hpp"
#include "heatinv/materials.hpp"
#include "heatinv/sparse.hpp"

namespace heatinv {

struct ShapeEval {
  std::array<double, 8> N{};
  std::array<Vec3, 8> dN{};  // physical gradients, 1/m
  double det_J = 0;          // m^3 per unit reference volume
  double weight = 1;         // quadrature weight
};

inline ShapeEval shape_eval(std::span<const Vec3, 8> x, Vec3 local) {
  ShapeEval s;
  std::array<Vec3, 8> dref;
  for (int a = 0; a < 8; ++a) {
    const double sa = kHexCorners[a][0], ta = kHexCorners[a][1], ua = kHexCorners[a][2];
    const double fx = 1 + sa * local.x, fy = 1 + ta * local.y, fz = 1 + ua * local.z;
    s.N[a] = 0.125 * fx * fy * fz;
    dref[a] = {0.125 * sa * fy * fz, 0.125 * ta * fx * fz, 0.125 * ua * fx * fy};
  }
  // J[r][c] = d x_r / d xi_c
  double J[3][3] = {};
  for (int a = 0; a < 8; ++a) {
    const double xa[3] = {x[a].x, x[a].y, x[a].z};
    const double da[3] = {dref[a].x, dref[a].y, dref[a].z};
    for (int r = 0; r < 3; ++r)
      for (int c = 0; c < 3; ++c) J[r][c] += xa[r] * da[c];
  }
  const double det = J[0][0] * (J[1][1] * J[2][2] - J[1][2] * J[2][1]) -
                     J[0][1] * (J[1][0] * J[2][2] - J[1][2] * J[2][0]) +
                     J[0][2] * (J[1][0] * J[2][1] - J[1][1] * J[2][0]);
  if (!(det > 0)) throw DimensionError("shape_eval: inverted element (det J <= 0)");
  s.det_J = det;
  // inverse of J; grad N = J^{-T} dN/dxi
  double inv[3][3];
  inv[0][0] = (J[1][1] * J[2][2] - J[1][2] * J[2][1]) / det;
  inv[0][1] = (J[0][2] * J[2][1] - J[0][1] * J[2][2]) / det;
  inv[0][2] = (J[0][1] * J[1][2] - J[0][2] * J[1][1]) / det;
  inv[1][0] = (J[1][2] * J[2][0] - J[1][0] * J[2][2]) / det;
  inv[1][1] = (J[0][0] * J[2][2] - J[0][2] * J[2][0]) / det;
  inv[1][2] = (J[0][2] * J[1][0] - J[0][0] * J[1][2]) / det;
  inv[2][0] = (J[1][0] * J[2][1] - J[1][1] * J[2][0]) / det;
  inv[2][1] = (J[0][1] * J[2][0] - J[0][0] * J[2][1]) / det;
  inv[2][2] = (J[0][0] * J[1][1] - J[0][1] * J[1][0]) / det;
  for (int a = 0; a < 8; ++a) {
    const double d[3] = {dref[a].x, dref[a].y, dref[a].z};
    double g[3];
    for (int r = 0; r < 3; ++r) g[r] = inv[0][r] * d[0] + inv[1][r] * d[1] + inv[2][r] * d[2];
    s.dN[a] = {g[0], g[1], g[2]};
  }
  return s;
}

struct BoundaryOptions {
  double ambient = kZeroCelsius;
  bool radiation = true;                // S2 radiates; false leaves S2 insulated
  bool flux = true;                     // S1 flux load
  std::optional<double> fixed_bottom;   // S2 held at a fixed temperature instead
};

struct SolverOptions {
  double newton_tol = 1e-6;  // K, on max |dT|
  int max_iter = 25;
  double linear_tol = 1e-10;
  BoundaryOptions bc;
};

struct ThermalState {
  std::vector<double> T;  // K, per node
  double t = 0;           // s
};

// K: conduction plus the radiation tangent 4 sigma eps T^3 on S2.
// C: capacity (consistent mass with rho Cp).
// P: boundary load at the current temperatures: S1 flux in, net radiation out.
struct SystemMatrices {
  CsrMatrix K;
  CsrMatrix C;
  std::vector<double> P;
};

namespace detail {

inline constexpr double kGauss = 0.57735026918962576451;  // 1/sqrt(3)

struct ElementQuad {
  std::array<double, 8> N;
  std::array<Vec3, 8> dN;
  double w;  // weight * det J
};

struct FaceQuad {
  std::array<int, 4> nodes;
  std::array<double, 4> N;
  double w;  // weight * area element
  int cell;  // flux cell for S1 points, -1 otherwise
};

// Bilinear face map evaluated at (s, t); returns area element |dx/ds x dx/dt|.
inline double face_eval(const std::array<Vec3, 4>& x, double s, double t, std::array<double, 4>& N) {
  static constexpr int cs[4] = {-1, 1, 1, -1}, ct[4] = {-1, -1, 1, 1};
  Vec3 ds, dt;
  for (int a = 0; a < 4; ++a) {
    N[a] = 0.25 * (1 + cs[a] * s) * (1 + ct[a] * t);
    ds = ds + (0.25 * cs[a] * (1 + ct[a] * t)) * x[a];
    dt = dt + (0.25 * ct[a] * (1 + cs[a] * s)) * x[a];
  }
  return norm(cross(ds, dt));
}

// Interior cut points of [lo, hi] by a uniform partition of [0, length] into n.
inline std::vector<double> cut_points(double lo, double hi, double length, int n) {
  std::vector<double> pts{lo};
  const double eps = 1e-12 * length;
  for (int a = 1; a < n; ++a) {
    const double c = a * length / n;
    if (c > lo + eps && c < hi - eps) pts.push_back(c);
  }
  pts.push_back(hi);
  return pts;
}

// T^4 - Ta^4 without cancellation near equilibrium.
inline double fourth_power_difference(double T, double Ta) { return (T - Ta) * (T + Ta) * (T * T + Ta * Ta); }

}  // namespace detail

// Lumped (row-sum) capacity keeps the discrete solution free of the
// undershoot a consistent capacity produces under sudden surface heating.
enum class Capacity { lumped, consistent };

// Precomputed quadrature data and sparsity for one mesh. Immutable once built.
class ThermalModel {
 public:
  ThermalModel(Mesh mesh, MaterialTable material, int flux_grid = kDefaultGrid, Capacity capacity = Capacity::lumped)
      : mesh_(std::move(mesh)), material_(std::move(material)), flux_grid_(flux_grid), capacity_(capacity) {
    validate(material_);
    if (flux_grid_ < 1) throw DimensionError("flux grid must be >= 1");
    build_element_quadrature();
    build_face_quadrature();
    pattern_ = pattern_from_cells<8>(mesh_.node_count(), mesh_.elements);
    scatter_.resize(static_cast<std::size_t>(mesh_.element_count()) * 64);
    for (int e = 0; e < mesh_.element_count(); ++e)
      for (int a = 0; a < 8; ++a)
        for (int b = 0; b < 8; ++b)
          scatter_[e * 64 + a * 8 + b] = pattern_.find(mesh_.elements[e][a], mesh_.elements[e][b]);
  }

  const Mesh& mesh() const { return mesh_; }
  const MaterialTable& material() const { return material_; }
  int flux_grid() const { return flux_grid_; }
  Capacity capacity() const { return capacity_; }
  int node_count() const { return mesh_.node_count(); }

  // Linearized operators at T (see SystemMatrices).
  SystemMatrices assemble(std::span<const double> T, std::span<const double> flux_frame,
                          const BoundaryOptions& bc = {}) const {
    check_sizes(T, flux_frame);
    SystemMatrices s{pattern_, pattern_, std::vector<double>(node_count(), 0.0)};
    s.K.zero();
    s.C.zero();
    const double rho = material_.rho;
    for (int e = 0; e < mesh_.element_count(); ++e) {
      const auto& nodes = mesh_.elements[e];
      for (int q = 0; q < 8; ++q) {
        const auto& g = equad_[e * 8 + q];
        double Tq = 0;
        for (int a = 0; a < 8; ++a) Tq += g.N[a] * T[nodes[a]];
        const double k = eval_k(material_, Tq), c = rho * eval_cp(material_, Tq);
        for (int a = 0; a < 8; ++a)
          for (int b = 0; b < 8; ++b) {
            const int p = scatter_[e * 64 + a * 8 + b];
            s.K.val[p] += g.w * k * dot(g.dN[a], g.dN[b]);
            if (capacity_ == Capacity::consistent)
              s.C.val[p] += g.w * c * g.N[a] * g.N[b];
            else if (a == b)
              s.C.val[p] += g.w * c * g.N[a];
          }
      }
    }
    if (bc.radiation && !bc.fixed_bottom) {
      const double se = material_.sigma * material_.emissivity;
      for (const auto& f : s2quad_) {
        const double Tq = face_temperature(f, T, bc.ambient);
        const double emit = detail::fourth_power_difference(Tq, bc.ambient);
        for (int a = 0; a < 4; ++a) {
          s.P[f.nodes[a]] -= f.w * se * emit * f.N[a];
          for (int b = 0; b < 4; ++b)
            s.K.val[s.K.find(f.nodes[a], f.nodes[b])] += f.w * 4 * se * Tq * Tq * Tq * f.N[a] * f.N[b];
        }
      }
    }
    if (bc.flux)
      for (const auto& f : s1quad_)
        for (int a = 0; a < 4; ++a) s.P[f.nodes[a]] += f.w * flux_frame[f.cell] * f.N[a];
    return s;
  }

  struct StepInfo {
    int iterations = 0;
    double last_update = 0;
  };

  // One backward-Euler step: solves
  //   C(T)(T - T_old)/dt + K_cond(T) T - P(T) = 0
  // by Newton iteration from T_old.
  ThermalState newton_step_transient(const ThermalState& state, std::span<const double> flux_frame, double dt,
                                     const SolverOptions& opt = {}, StepInfo* info = nullptr) const {
    if (!(dt > 0)) throw DomainError("newton_step_transient: dt must be > 0");
    check_sizes(state.T, flux_frame);
    const int n = node_count();
    ThermalState next{state.T, state.t + dt};
    std::vector<char> fixed(n, 0);
    if (opt.bc.fixed_bottom) {
      for (const auto& f : s2quad_)
        for (int a : f.nodes) fixed[a] = 1;
      for (int i = 0; i < n; ++i)
        if (fixed[i]) next.T[i] = *opt.bc.fixed_bottom;
    }

    const bool symmetric = material_.constant_properties();
    CsrMatrix J = pattern_;
    std::vector<double> R(n);
    double residual_norm = 0;
    for (int it = 1; it <= opt.max_iter; ++it) {
      residual_and_jacobian(next.T, state.T, flux_frame, dt, opt.bc, J, R);
      for (int i = 0; i < n; ++i)
        if (fixed[i]) {
          R[i] = 0;
          for (int p = J.row_ptr[i]; p < J.row_ptr[i + 1]; ++p) J.val[p] = (J.col[p] == i) ? 1.0 : 0.0;
        } else if (opt.bc.fixed_bottom) {
          for (int p = J.row_ptr[i]; p < J.row_ptr[i + 1]; ++p)
            if (fixed[J.col[p]]) J.val[p] = 0.0;
        }
      residual_norm = std::sqrt(detail::dotp(R, R));
      for (auto& r : R) r = -r;
      std::vector<double> delta;
      try {
        delta = linear_solve(J, R, {symmetric, opt.linear_tol, -1});
      } catch (const SolverError& e) {
        throw SolverError(std::string("newton: ") + e.what(), residual_norm);
      }
      double max_delta = 0;
      for (int i = 0; i < n; ++i) {
        next.T[i] += delta[i];
        max_delta = std::max(max_delta, std::abs(delta[i]));
      }
      for (double v : next.T)
        if (!std::isfinite(v) || !(v > 0)) throw SolverError("newton: non-physical temperature", residual_norm);
      if (max_delta < opt.newton_tol) {
        if (info) *info = {it, max_delta};
        return next;
      }
    }
    throw SolverError("newton: no convergence in " + std::to_string(opt.max_iter) + " iterations", residual_norm);
  }

 private:
  // Interpolated from offsets to the ambient so a face at ambient gives it back exactly.
  static double face_temperature(const detail::FaceQuad& f, std::span<const double> T, double ambient) {
    double d = 0;
    for (int a = 0; a < 4; ++a) d += f.N[a] * (T[f.nodes[a]] - ambient);
    return ambient + d;
  }

  void check_sizes(std::span<const double> T, std::span<const double> flux_frame) const {
    if (static_cast<int>(T.size()) != node_count()) throw DimensionError("temperature vector size != node count");
    if (flux_frame.size() != static_cast<std::size_t>(flux_grid_) * flux_grid_)
      throw DimensionError("flux frame has " + std::to_string(flux_frame.size()) + " values, expected " +
                           std::to_string(flux_grid_ * flux_grid_));
  }

  void residual_and_jacobian(std::span<const double> T, std::span<const double> T_old,
                             std::span<const double> flux_frame, double dt, const BoundaryOptions& bc, CsrMatrix& J,
                             std::vector<double>& R) const {
    J.zero();
    std::fill(R.begin(), R.end(), 0.0);
    const double rho = material_.rho;
    for (int e = 0; e < mesh_.element_count(); ++e) {
      const auto& nodes = mesh_.elements[e];
      double Te[8], To[8], Je[64] = {}, Re[8] = {};
      for (int a = 0; a < 8; ++a) {
        Te[a] = T[nodes[a]];
        To[a] = T_old[nodes[a]];
      }
      for (int q = 0; q < 8; ++q) {
        const auto& g = equad_[e * 8 + q];
        double Tq = 0, Toq = 0;
        Vec3 grad;
        for (int a = 0; a < 8; ++a) {
          Tq += g.N[a] * Te[a];
          Toq += g.N[a] * To[a];
          grad = grad + Te[a] * g.dN[a];
        }
        const double k = eval_k(material_, Tq), dk = eval_dk_dT(material_, Tq);
        const double c = rho * eval_cp(material_, Tq), dc = rho * eval_dcp_dT(material_, Tq);
        const bool lumped = capacity_ == Capacity::lumped;
        for (int a = 0; a < 8; ++a) {
          const double gradNa_gradT = dot(g.dN[a], grad);
          // Capacity term: rate at the quadrature point (consistent) or at the node (lumped).
          const double rate = lumped ? (Te[a] - To[a]) / dt : (Tq - Toq) / dt;
          Re[a] += g.w * (c * g.N[a] * rate + k * gradNa_gradT);
          for (int b = 0; b < 8; ++b) {
            const double mass = lumped ? (a == b ? g.N[a] : 0.0) : g.N[a] * g.N[b];
            Je[a * 8 + b] += g.w * (c * mass / dt + dc * g.N[b] * g.N[a] * rate + k * dot(g.dN[a], g.dN[b]) +
                                    dk * g.N[b] * gradNa_gradT);
          }
        }
      }
      for (int a = 0; a < 8; ++a) {
        R[nodes[a]] += Re[a];
        for (int b = 0; b < 8; ++b) J.val[scatter_[e * 64 + a * 8 + b]] += Je[a * 8 + b];
      }
    }
    if (bc.radiation && !bc.fixed_bottom) {
      const double se = material_.sigma * material_.emissivity;
      for (const auto& f : s2quad_) {
        const double Tq = face_temperature(f, T, bc.ambient);
        const double T3 = Tq * Tq * Tq, emit = detail::fourth_power_difference(Tq, bc.ambient);
        for (int a = 0; a < 4; ++a) {
          R[f.nodes[a]] += f.w * se * emit * f.N[a];
          for (int b = 0; b < 4; ++b) J.val[J.find(f.nodes[a], f.nodes[b])] += f.w * 4 * se * T3 * f.N[a] * f.N[b];
        }
      }
    }
    if (bc.flux)
      for (const auto& f : s1quad_)
        for (int a = 0; a < 4; ++a) R[f.nodes[a]] -= f.w * flux_frame[f.cell] * f.N[a];
  }

  void build_element_quadrature() {
    equad_.reserve(static_cast<std::size_t>(mesh_.element_count()) * 8);
    for (int e = 0; e < mesh_.element_count(); ++e) {
      const auto x = mesh_.element_nodes(e);
      for (int q = 0; q < 8; ++q) {
        const Vec3 p{kHexCorners[q][0] * detail::kGauss, kHexCorners[q][1] * detail::kGauss,
                     kHexCorners[q][2] * detail::kGauss};
        const ShapeEval s = shape_eval(x, p);
#ifndef NDEBUG
        double sumN = 0;
        Vec3 sumdN;
        for (int a = 0; a < 8; ++a) {
          sumN += s.N[a];
          sumdN = sumdN + s.dN[a];
        }
        assert(std::abs(sumN - 1) < 1e-12);
        assert(norm(sumdN) < 1e-9 * (1 + norm(s.dN[0])));
#endif
        equad_.push_back({s.N, s.dN, s.det_J});
      }
    }
  }

  void build_face_quadrature() {
    const int G = flux_grid_;
    for (const auto& face : mesh_.faces) {
      if (face.tag == Surface::S3) continue;
      std::array<Vec3, 4> x;
      for (int a = 0; a < 4; ++a) x[a] = mesh_.nodes[face.nodes[a]];
      if (face.tag == Surface::S2) {
        for (int q = 0; q < 4; ++q) {
          const double s = (q == 1 || q == 2 ? 1 : -1) * detail::kGauss, t = (q >= 2 ? 1 : -1) * detail::kGauss;
          detail::FaceQuad fq{face.nodes, {}, 0, -1};
          fq.w = detail::face_eval(x, s, t, fq.N);
          s2quad_.push_back(fq);
        }
        continue;
      }
      // S1: split the face along flux cell boundaries so each piece sees one
      // constant flux value; x (y) is affine in s (t) on the structured grid.
      const double x0 = x[0].x, x1 = x[1].x, y0 = x[0].y, y1 = x[3].y;
      const auto xs = detail::cut_points(x0, x1, mesh_.length_x, G);
      const auto ys = detail::cut_points(y0, y1, mesh_.length_y, G);
      for (std::size_t bj = 0; bj + 1 < ys.size(); ++bj)
        for (std::size_t bi = 0; bi + 1 < xs.size(); ++bi) {
          const double sa = 2 * (xs[bi] - x0) / (x1 - x0) - 1, sb = 2 * (xs[bi + 1] - x0) / (x1 - x0) - 1;
          const double ta = 2 * (ys[bj] - y0) / (y1 - y0) - 1, tb = 2 * (ys[bj + 1] - y0) / (y1 - y0) - 1;
          const double xm = 0.5 * (xs[bi] + xs[bi + 1]), ym = 0.5 * (ys[bj] + ys[bj + 1]);
          const int ci = std::clamp(static_cast<int>(xm / mesh_.length_x * G), 0, G - 1);
          const int cj = std::clamp(static_cast<int>(ym / mesh_.length_y * G), 0, G - 1);
          const double hs = 0.5 * (sb - sa), ht = 0.5 * (tb - ta);
          for (int q = 0; q < 4; ++q) {
            const double s = 0.5 * (sa + sb) + hs * (q == 1 || q == 2 ? 1 : -1) * detail::kGauss;
            const double t = 0.5 * (ta + tb) + ht * (q >= 2 ? 1 : -1) * detail::kGauss;
            detail::FaceQuad fq{face.nodes, {}, 0, cj * G + ci};
            fq.w = hs * ht * detail::face_eval(x, s, t, fq.N);
            s1quad_.push_back(fq);
          }
        }
    }
  }

  Mesh mesh_;
  MaterialTable material_;
  int flux_grid_;
  Capacity capacity_;
  std::vector<detail::ElementQuad> equad_;
  std::vector<detail::FaceQuad> s1quad_, s2quad_;
  CsrMatrix pattern_;
  std::vector<int> scatter_;
};

inline SystemMatrices assemble(const Mesh& mesh, const MaterialTable& material, std::span<const double> T,
                               std::span<const double> flux_frame, int flux_grid, const BoundaryOptions& bc = {}) {
  return ThermalModel(mesh, material, flux_grid).assemble(T, flux_frame, bc);
}

struct TransientResult {
  int nt = 0;
  int sensors = 0;
  std::vector<double> sensor_T;  // nt x sensors, K
  ThermalState final_state;
  int newton_iterations = 0;
};

using StepObserver = std::function<void(int step, const ThermalState&)>;

// Marches nt backward-Euler steps from a uniform T0 and records the sensor
// temperatures after every step (the initial frame is not recorded).
inline TransientResult solve_transient(const ThermalModel& model, const SensorLayout& sensors,
                                       const FluxField& flux, double T0, double dt, const SolverOptions& opt = {},
                                       const StepObserver& observe = {}, const ThermalState* initial = nullptr) {
  if (!(dt > 0)) throw DomainError("solve_transient: dt must be > 0");
  if (flux.grid != model.flux_grid()) throw DimensionError("solve_transient: flux grid does not match the model");
  TransientResult r;
  r.nt = flux.nt;
  r.sensors = static_cast<int>(sensors.nodes.size());
  r.sensor_T.reserve(static_cast<std::size_t>(r.nt) * r.sensors);
  ThermalState state = initial ? *initial : ThermalState{std::vector<double>(model.node_count(), T0), 0.0};
  for (int k = 0; k < flux.nt; ++k) {
    ThermalModel::StepInfo info;
    try {
      state = model.newton_step_transient(state, flux.frame(k), dt, opt, &info);
    } catch (const SolverError& e) {
      throw SolverError("step " + std::to_string(k) + ": " + e.what(), e.residual, k);
    }
    r.newton_iterations += info.iterations;
    for (int n : sensors.nodes) r.sensor_T.push_back(state.T[n]);
    if (observe) observe(k, state);
  }
  r.final_state = std::move(state);
  return r;
}

}  // namespace heatinv

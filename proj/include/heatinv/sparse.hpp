#pragma once

#include <algorithm>
#include <cmath>
#include <span>
#include <string>
#include <vector>

#include "heatinv/common.hpp"

namespace heatinv {

// Compressed sparse row matrix with sorted column indices per row.
struct CsrMatrix {
  int n = 0;
  std::vector<int> row_ptr;
  std::vector<int> col;
  std::vector<double> val;

  int nnz() const { return static_cast<int>(col.size()); }

  // Position of (r, c) in val, or -1 if outside the pattern.
  int find(int r, int c) const {
    const auto b = col.begin() + row_ptr[r], e = col.begin() + row_ptr[r + 1];
    const auto it = std::lower_bound(b, e, c);
    return (it != e && *it == c) ? static_cast<int>(it - col.begin()) : -1;
  }

  double at(int r, int c) const {
    const int p = find(r, c);
    return p < 0 ? 0.0 : val[p];
  }

  void zero() { std::fill(val.begin(), val.end(), 0.0); }

  void multiply(std::span<const double> x, std::span<double> y) const {
    for (int r = 0; r < n; ++r) {
      double s = 0;
      for (int p = row_ptr[r]; p < row_ptr[r + 1]; ++p) s += val[p] * x[col[p]];
      y[r] = s;
    }
  }

  std::vector<double> multiply(std::span<const double> x) const {
    std::vector<double> y(n);
    multiply(x, y);
    return y;
  }

  static CsrMatrix from_dense(int n, std::span<const double> a) {
    CsrMatrix m;
    m.n = n;
    m.row_ptr.assign(n + 1, 0);
    for (int r = 0; r < n; ++r) {
      for (int c = 0; c < n; ++c)
        if (a[static_cast<std::size_t>(r) * n + c] != 0.0) {
          m.col.push_back(c);
          m.val.push_back(a[static_cast<std::size_t>(r) * n + c]);
        }
      m.row_ptr[r + 1] = m.nnz();
    }
    return m;
  }

  static CsrMatrix identity(int n) {
    std::vector<double> a(static_cast<std::size_t>(n) * n, 0.0);
    for (int i = 0; i < n; ++i) a[static_cast<std::size_t>(i) * n + i] = 1.0;
    return from_dense(n, a);
  }
};

// Symmetric pattern with a nonzero slot for every node pair sharing a cell.
template <std::size_t K>
CsrMatrix pattern_from_cells(int n, std::span<const std::array<int, K>> cells) {
  std::vector<std::vector<int>> adj(n);
  for (const auto& cell : cells)
    for (int a : cell)
      for (int b : cell) adj[a].push_back(b);
  CsrMatrix m;
  m.n = n;
  m.row_ptr.assign(n + 1, 0);
  for (int r = 0; r < n; ++r) {
    auto& row = adj[r];
    row.push_back(r);
    std::sort(row.begin(), row.end());
    row.erase(std::unique(row.begin(), row.end()), row.end());
    m.col.insert(m.col.end(), row.begin(), row.end());
    m.row_ptr[r + 1] = m.nnz();
  }
  m.val.assign(m.col.size(), 0.0);
  return m;
}

struct LinearSolveOptions {
  bool symmetric = true;  // SPD path (CG); otherwise BiCGSTAB
  double rel_tol = 1e-10;
  int max_iter = -1;  // -1: max(dimension, 1000)
};

struct LinearSolveStats {
  int iterations = 0;
  double rel_residual = 0;
};

namespace detail {

inline double dotp(std::span<const double> a, std::span<const double> b) {
  double s = 0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

inline std::vector<double> inverse_diagonal(const CsrMatrix& A) {
  std::vector<double> d(A.n);
  for (int r = 0; r < A.n; ++r) {
    const double a = A.at(r, r);
    if (a == 0.0 || !std::isfinite(a)) throw SolverError("linear_solve: zero or non-finite diagonal at row " + std::to_string(r));
    d[r] = 1.0 / a;
  }
  return d;
}

}  // namespace detail

// Jacobi-preconditioned conjugate gradients (symmetric positive definite A) or
// BiCGSTAB (general A). Throws SolverError on breakdown or when the relative
// residual is not below rel_tol after max_iter iterations.
inline std::vector<double> linear_solve(const CsrMatrix& A, std::span<const double> b,
                                        const LinearSolveOptions& opt = {}, LinearSolveStats* stats = nullptr) {
  if (static_cast<int>(b.size()) != A.n) throw DimensionError("linear_solve: rhs length != matrix dimension");
  const int n = A.n;
  const int max_iter = opt.max_iter > 0 ? opt.max_iter : std::max(n, 1000);
  std::vector<double> x(n, 0.0);
  const double bnorm = std::sqrt(detail::dotp(b, b));
  if (bnorm == 0.0) {
    if (stats) *stats = {};
    return x;
  }
  const auto dinv = detail::inverse_diagonal(A);
  std::vector<double> r(b.begin(), b.end());
  const double tol = opt.rel_tol * bnorm;

  // Recurrence residuals drift; convergence is confirmed on the true residual
  // and the iteration restarts from it otherwise.
  auto converged = [&](int it) {
    std::vector<double> ax = A.multiply(x);
    for (int i = 0; i < n; ++i) r[i] = b[i] - ax[i];
    const double rel = std::sqrt(detail::dotp(r, r)) / bnorm;
    if (!(rel < opt.rel_tol)) return false;
    if (stats) *stats = {it, rel};
    return true;
  };

  if (opt.symmetric) {
    std::vector<double> z(n), p(n), q(n);
    auto restart = [&] {
      for (int i = 0; i < n; ++i) z[i] = dinv[i] * r[i];
      p = z;
      return detail::dotp(r, z);
    };
    double rz = restart();
    for (int it = 1; it <= max_iter; ++it) {
      A.multiply(p, q);
      const double pq = detail::dotp(p, q);
      if (!(pq > 0)) throw SolverError("linear_solve: CG breakdown (matrix not positive definite)", std::sqrt(detail::dotp(r, r)) / bnorm);
      const double alpha = rz / pq;
      for (int i = 0; i < n; ++i) {
        x[i] += alpha * p[i];
        r[i] -= alpha * q[i];
      }
      if (std::sqrt(detail::dotp(r, r)) < tol) {
        if (converged(it)) return x;
        rz = restart();
        continue;
      }
      for (int i = 0; i < n; ++i) z[i] = dinv[i] * r[i];
      const double rz_new = detail::dotp(r, z);
      const double beta = rz_new / rz;
      rz = rz_new;
      for (int i = 0; i < n; ++i) p[i] = z[i] + beta * p[i];
    }
    throw SolverError("linear_solve: CG did not converge in " + std::to_string(max_iter) + " iterations",
                      std::sqrt(detail::dotp(r, r)) / bnorm);
  }

  // Right-preconditioned BiCGSTAB.
  std::vector<double> r0 = r, p(n, 0.0), v(n, 0.0), s(n), t(n), ph(n), sh(n);
  double rho = 1, alpha = 1, omega = 1;
  for (int it = 1; it <= max_iter; ++it) {
    const double rho_new = detail::dotp(r0, r);
    if (rho_new == 0.0) throw SolverError("linear_solve: BiCGSTAB breakdown (rho = 0)", std::sqrt(detail::dotp(r, r)) / bnorm);
    const double beta = (rho_new / rho) * (alpha / omega);
    rho = rho_new;
    for (int i = 0; i < n; ++i) p[i] = r[i] + beta * (p[i] - omega * v[i]);
    for (int i = 0; i < n; ++i) ph[i] = dinv[i] * p[i];
    A.multiply(ph, v);
    const double r0v = detail::dotp(r0, v);
    if (r0v == 0.0) throw SolverError("linear_solve: BiCGSTAB breakdown", std::sqrt(detail::dotp(r, r)) / bnorm);
    alpha = rho / r0v;
    for (int i = 0; i < n; ++i) s[i] = r[i] - alpha * v[i];
    if (std::sqrt(detail::dotp(s, s)) < tol) {
      for (int i = 0; i < n; ++i) x[i] += alpha * ph[i];
      if (converged(it)) return x;
      r0 = r;
      rho = alpha = omega = 1;
      std::fill(p.begin(), p.end(), 0.0);
      std::fill(v.begin(), v.end(), 0.0);
      continue;
    }
    for (int i = 0; i < n; ++i) sh[i] = dinv[i] * s[i];
    A.multiply(sh, t);
    const double tt = detail::dotp(t, t);
    if (tt == 0.0) throw SolverError("linear_solve: BiCGSTAB breakdown (t = 0)", std::sqrt(detail::dotp(s, s)) / bnorm);
    omega = detail::dotp(t, s) / tt;
    for (int i = 0; i < n; ++i) {
      x[i] += alpha * ph[i] + omega * sh[i];
      r[i] = s[i] - omega * t[i];
    }
    if (std::sqrt(detail::dotp(r, r)) < tol) {
      if (converged(it)) return x;
      r0 = r;
      rho = alpha = omega = 1;
      std::fill(p.begin(), p.end(), 0.0);
      std::fill(v.begin(), v.end(), 0.0);
      continue;
    }
    if (omega == 0.0) throw SolverError("linear_solve: BiCGSTAB breakdown (omega = 0)", std::sqrt(detail::dotp(r, r)) / bnorm);
  }
  throw SolverError("linear_solve: BiCGSTAB did not converge in " + std::to_string(max_iter) + " iterations",
                    std::sqrt(detail::dotp(r, r)) / bnorm);
}

}  // namespace heatinv

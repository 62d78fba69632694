#pragma once

// Fully connected LSTM (no peepholes) and the dense output layer. Sequences
// are column-major matrices with one column per time step.

#include <span>
#include <vector>

#include <Eigen/Dense>

#include "heatinv/nn_ops.hpp"

namespace heatinv {

template <class S>
using MatrixR = Eigen::Matrix<S, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <class S>
using MatrixC = Eigen::Matrix<S, Eigen::Dynamic, Eigen::Dynamic>;
template <class S>
using VectorC = Eigen::Matrix<S, Eigen::Dynamic, 1>;

// Eigen's vectorized kernels pick their summation order from pointer
// alignment, so buffers mapped into Eigen use a fixed alignment to keep
// results independent of where the allocator places them.
template <class S>
using AlignedVector = std::vector<S, Eigen::aligned_allocator<S>>;

struct LstmShape {
  int m = 1;  // input size
  int n = 1;  // hidden size

  // W_x [4n, m] row-major, W_h [4n, n] row-major, b [4n]; gate order i, f, g, o.
  std::size_t off_wh() const { return static_cast<std::size_t>(4) * n * m; }
  std::size_t off_b() const { return off_wh() + static_cast<std::size_t>(4) * n * n; }
  std::size_t param_count() const { return off_b() + 4 * static_cast<std::size_t>(n); }
};

namespace detail {

// Gate nonlinearities and state update from the pre-activation z (4n).
template <class S>
void lstm_cell(int n, const S* z, const S* c_prev, S* gates, S* c, S* tanh_c, S* h) {
  for (int j = 0; j < n; ++j) {
    const S i = sigmoid(z[j]), f = sigmoid(z[n + j]), g = std::tanh(z[2 * n + j]), o = sigmoid(z[3 * n + j]);
    const S cj = f * (c_prev ? c_prev[j] : S(0)) + i * g;
    const S tc = std::tanh(cj);
    gates[j] = i;
    gates[n + j] = f;
    gates[2 * n + j] = g;
    gates[3 * n + j] = o;
    c[j] = cj;
    tanh_c[j] = tc;
    h[j] = o * tc;
  }
}

}  // namespace detail

template <class S>
struct LstmState {
  std::vector<S> h, c;
  std::vector<S> gates;  // i, f, g, o
};

// One step with direct matrix-vector products.
template <class S>
LstmState<S> lstm_step(const LstmShape& s, std::span<const S> params, std::span<const S> x, std::span<const S> h_prev,
                       std::span<const S> c_prev) {
  if (params.size() != s.param_count()) throw DimensionError("lstm_step: parameter block size mismatch");
  if (x.size() != static_cast<std::size_t>(s.m)) throw DimensionError("lstm_step: input size mismatch");
  if (h_prev.size() != static_cast<std::size_t>(s.n) || c_prev.size() != static_cast<std::size_t>(s.n))
    throw DimensionError("lstm_step: state size mismatch");
  const Eigen::Map<const MatrixR<S>> Wx(params.data(), 4 * s.n, s.m), Wh(params.data() + s.off_wh(), 4 * s.n, s.n);
  const Eigen::Map<const VectorC<S>> b(params.data() + s.off_b(), 4 * s.n), xv(x.data(), s.m),
      hv(h_prev.data(), s.n);
  const VectorC<S> z = Wx * xv + Wh * hv + b;
  LstmState<S> out{std::vector<S>(s.n), std::vector<S>(s.n), std::vector<S>(4 * s.n)};
  std::vector<S> tc(s.n);
  detail::lstm_cell(s.n, z.data(), c_prev.data(), out.gates.data(), out.c.data(), tc.data(), out.h.data());
  return out;
}

template <class S>
struct LstmSequenceCache {
  int nt = 0;
  MatrixC<S> x;       // m x nt
  MatrixC<S> gates;   // 4n x nt
  MatrixC<S> c;       // n x nt
  MatrixC<S> tanh_c;  // n x nt
  MatrixC<S> h;       // n x nt (the layer output)
};

// The input projection W_x X runs as one matrix product over all steps; the
// recurrent term is a matrix-vector product per step.
template <class S>
void lstm_forward(const LstmShape& s, const S* p, const MatrixC<S>& x, LstmSequenceCache<S>& out) {
  const int nt = static_cast<int>(x.cols());
  const Eigen::Map<const MatrixR<S>> Wx(p, 4 * s.n, s.m), Wh(p + s.off_wh(), 4 * s.n, s.n);
  const Eigen::Map<const VectorC<S>> b(p + s.off_b(), 4 * s.n);
  out.nt = nt;
  out.x = x;
  MatrixC<S> z = Wx * x;
  z.colwise() += b;
  out.gates.resize(4 * s.n, nt);
  out.c.resize(s.n, nt);
  out.tanh_c.resize(s.n, nt);
  out.h.resize(s.n, nt);
  for (int t = 0; t < nt; ++t) {
    if (t > 0) z.col(t).noalias() += Wh * out.h.col(t - 1);
    detail::lstm_cell(s.n, z.col(t).data(), t > 0 ? out.c.col(t - 1).data() : nullptr, out.gates.col(t).data(),
                      out.c.col(t).data(), out.tanh_c.col(t).data(), out.h.col(t).data());
  }
}

// Accumulates parameter gradients into grad; returns dL/dx (m x nt).
template <class S>
MatrixC<S> lstm_backward(const LstmShape& s, const S* p, const LstmSequenceCache<S>& cache, const MatrixC<S>& dh_out,
                         S* grad) {
  const int n = s.n, nt = cache.nt;
  const Eigen::Map<const MatrixR<S>> Wx(p, 4 * n, s.m), Wh(p + s.off_wh(), 4 * n, n);
  Eigen::Map<MatrixR<S>> gWx(grad, 4 * n, s.m), gWh(grad + s.off_wh(), 4 * n, n);
  Eigen::Map<VectorC<S>> gb(grad + s.off_b(), 4 * n);
  MatrixC<S> dz(4 * n, nt);
  VectorC<S> dh_carry = VectorC<S>::Zero(n), dc_carry = VectorC<S>::Zero(n);
  for (int t = nt - 1; t >= 0; --t) {
    const S* g = cache.gates.col(t).data();
    const S* tc = cache.tanh_c.col(t).data();
    S* d = dz.col(t).data();
    for (int j = 0; j < n; ++j) {
      const S i = g[j], f = g[n + j], gg = g[2 * n + j], o = g[3 * n + j];
      const S cp = t > 0 ? cache.c(j, t - 1) : S(0);
      const S dh = dh_out(j, t) + dh_carry[j];
      const S dc = dc_carry[j] + dh * o * (S(1) - tc[j] * tc[j]);
      d[j] = dc * gg * i * (S(1) - i);
      d[n + j] = dc * cp * f * (S(1) - f);
      d[2 * n + j] = dc * i * (S(1) - gg * gg);
      d[3 * n + j] = dh * tc[j] * o * (S(1) - o);
      dc_carry[j] = dc * f;
    }
    if (t > 0) dh_carry.noalias() = Wh.transpose() * dz.col(t);
  }
  gWx.noalias() += dz * cache.x.transpose();
  if (nt > 1) gWh.noalias() += dz.rightCols(nt - 1) * cache.h.leftCols(nt - 1).transpose();
  gb += dz.rowwise().sum();
  return Wx.transpose() * dz;
}

struct DenseShape {
  int in = 1, out = 1;
  std::size_t off_b() const { return static_cast<std::size_t>(in) * out; }
  std::size_t param_count() const { return off_b() + out; }
};

template <class S>
MatrixC<S> dense_forward(const DenseShape& s, const S* p, const MatrixC<S>& x) {
  const Eigen::Map<const MatrixR<S>> W(p, s.out, s.in);
  const Eigen::Map<const VectorC<S>> b(p + s.off_b(), s.out);
  MatrixC<S> y = W * x;
  y.colwise() += b;
  return y;
}

template <class S>
MatrixC<S> dense_backward(const DenseShape& s, const S* p, const MatrixC<S>& x, const MatrixC<S>& dy, S* grad) {
  const Eigen::Map<const MatrixR<S>> W(p, s.out, s.in);
  Eigen::Map<MatrixR<S>> gW(grad, s.out, s.in);
  Eigen::Map<VectorC<S>> gb(grad + s.off_b(), s.out);
  gW.noalias() += dy * x.transpose();
  gb += dy.rowwise().sum();
  return W.transpose() * dy;
}

}  // namespace heatinv

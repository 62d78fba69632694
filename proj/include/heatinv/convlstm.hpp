#pragma once

// Convolutional LSTM with peephole connections:
//
//   i_t = sigma(W_xi * X_t + W_hi * H_{t-1} + W_ci o C_{t-1} + b_i)
//   f_t = sigma(W_xf * X_t + W_hf * H_{t-1} + W_cf o C_{t-1} + b_f)
//   C_t = f_t o C_{t-1} + i_t o tanh(W_xc * X_t + W_hc * H_{t-1} + b_c)
//   o_t = sigma(W_xo * X_t + W_ho * H_{t-1} + W_co o C_t + b_o)
//   H_t = o_t o tanh(C_t)
//
// Gate blocks are stacked in the order i, f, c, o.

#include <span>
#include <vector>

#include "heatinv/nn_ops.hpp"

namespace heatinv {

struct ConvLSTMShape {
  int ci = 1, co = 1, k = 1, h = 1, w = 1;

  std::size_t plane() const { return static_cast<std::size_t>(h) * w; }
  std::size_t state_size() const { return co * plane(); }
  std::size_t input_size() const { return ci * plane(); }

  // Parameter block layout, relative to the layer's first value:
  //   W_x [4co, ci, k, k], W_h [4co, co, k, k], W_ci, W_cf, W_co [co, h, w], b [4co]
  std::size_t wx_count() const { return static_cast<std::size_t>(4) * co * ci * k * k; }
  std::size_t wh_count() const { return static_cast<std::size_t>(4) * co * co * k * k; }
  std::size_t off_wh() const { return wx_count(); }
  std::size_t off_wci() const { return off_wh() + wh_count(); }
  std::size_t off_wcf() const { return off_wci() + state_size(); }
  std::size_t off_wco() const { return off_wcf() + state_size(); }
  std::size_t off_b() const { return off_wco() + state_size(); }
  std::size_t param_count() const { return off_b() + 4 * co; }
};

template <class S>
struct ConvLSTMStepCache {
  std::vector<S> gates;   // 4 * state: i, f, g = tanh(candidate), o
  std::vector<S> tanh_c;  // state
};

namespace detail {

template <class S>
void convlstm_step_raw(const ConvLSTMShape& s, const S* p, const S* x, const S* H_prev, const S* C_prev, S* H, S* C,
                       S* gates, S* tanh_c, std::vector<S>& z) {
  const std::size_t n = s.state_size(), plane = s.plane();
  z.resize(4 * n);
  const S* b = p + s.off_b();
  for (int q = 0; q < 4 * s.co; ++q) std::fill(z.begin() + q * plane, z.begin() + (q + 1) * plane, b[q]);
  conv2d_same_accumulate(x, s.ci, s.h, s.w, p, 4 * s.co, s.k, z.data());
  if (H_prev) conv2d_same_accumulate(H_prev, s.co, s.h, s.w, p + s.off_wh(), 4 * s.co, s.k, z.data());
  const S* wci = p + s.off_wci();
  const S* wcf = p + s.off_wcf();
  const S* wco = p + s.off_wco();
  for (std::size_t j = 0; j < n; ++j) {
    const S cp = C_prev ? C_prev[j] : S(0);
    const S i = sigmoid(z[j] + wci[j] * cp);
    const S f = sigmoid(z[n + j] + wcf[j] * cp);
    const S g = std::tanh(z[2 * n + j]);
    const S c = f * cp + i * g;
    const S o = sigmoid(z[3 * n + j] + wco[j] * c);
    const S tc = std::tanh(c);
    gates[j] = i;
    gates[n + j] = f;
    gates[2 * n + j] = g;
    gates[3 * n + j] = o;
    tanh_c[j] = tc;
    C[j] = c;
    H[j] = o * tc;
  }
}

}  // namespace detail

template <class S>
struct ConvLSTMState {
  std::vector<S> H, C;
};

// One time step. params holds the layer block (see ConvLSTMShape).
template <class S>
ConvLSTMState<S> convlstm_step(const ConvLSTMShape& s, std::span<const S> params, std::span<const S> x,
                               std::span<const S> H_prev, std::span<const S> C_prev,
                               ConvLSTMStepCache<S>* cache = nullptr) {
  if (params.size() != s.param_count()) throw DimensionError("convlstm_step: parameter block size mismatch");
  if (x.size() != s.input_size()) throw DimensionError("convlstm_step: input shape mismatch");
  if (H_prev.size() != s.state_size() || C_prev.size() != s.state_size())
    throw DimensionError("convlstm_step: state shape mismatch");
  ConvLSTMState<S> out{std::vector<S>(s.state_size()), std::vector<S>(s.state_size())};
  ConvLSTMStepCache<S> local;
  ConvLSTMStepCache<S>& c = cache ? *cache : local;
  c.gates.resize(4 * s.state_size());
  c.tanh_c.resize(s.state_size());
  std::vector<S> z;
  detail::convlstm_step_raw(s, params.data(), x.data(), H_prev.data(), C_prev.data(), out.H.data(), out.C.data(),
                            c.gates.data(), c.tanh_c.data(), z);
  return out;
}

// Sequence-level forward/backward over T steps from zero initial states.
template <class S>
struct ConvLSTMSequenceCache {
  int nt = 0;
  std::vector<S> x;       // nt * input
  std::vector<S> gates;   // nt * 4 * state
  std::vector<S> c;       // nt * state
  std::vector<S> tanh_c;  // nt * state
  std::vector<S> h;       // nt * state (the layer output)
};

template <class S>
void convlstm_forward(const ConvLSTMShape& s, const S* p, std::span<const S> x, int nt, ConvLSTMSequenceCache<S>& out) {
  const std::size_t n = s.state_size();
  out.nt = nt;
  out.x.assign(x.begin(), x.end());
  out.gates.resize(nt * 4 * n);
  out.c.resize(nt * n);
  out.tanh_c.resize(nt * n);
  out.h.resize(nt * n);
  std::vector<S> z;
  for (int t = 0; t < nt; ++t) {
    const S* hp = t > 0 ? out.h.data() + (t - 1) * n : nullptr;
    const S* cp = t > 0 ? out.c.data() + (t - 1) * n : nullptr;
    detail::convlstm_step_raw(s, p, out.x.data() + t * s.input_size(), hp, cp, out.h.data() + t * n,
                              out.c.data() + t * n, out.gates.data() + t * 4 * n, out.tanh_c.data() + t * n, z);
  }
}

// Accumulates parameter gradients into grad (same layout as p) and, if dx is
// non-empty, writes the input gradient (nt * input).
template <class S>
void convlstm_backward(const ConvLSTMShape& s, const S* p, const ConvLSTMSequenceCache<S>& cache,
                       std::span<const S> dh_out, S* grad, std::span<S> dx) {
  const std::size_t n = s.state_size(), plane = s.plane();
  const int nt = cache.nt;
  if (!dx.empty()) std::fill(dx.begin(), dx.end(), S(0));
  std::vector<S> dh_carry(n, S(0)), dc_carry(n, S(0)), dz(4 * n);
  const S* wci = p + s.off_wci();
  const S* wcf = p + s.off_wcf();
  const S* wco = p + s.off_wco();
  S* g_wci = grad + s.off_wci();
  S* g_wcf = grad + s.off_wcf();
  S* g_wco = grad + s.off_wco();
  S* g_b = grad + s.off_b();
  for (int t = nt - 1; t >= 0; --t) {
    const S* gates = cache.gates.data() + t * 4 * n;
    const S* c = cache.c.data() + t * n;
    const S* tc = cache.tanh_c.data() + t * n;
    const S* cprev = t > 0 ? cache.c.data() + (t - 1) * n : nullptr;
    const S* dh_in = dh_out.data() + t * n;
    for (std::size_t j = 0; j < n; ++j) {
      const S i = gates[j], f = gates[n + j], g = gates[2 * n + j], o = gates[3 * n + j];
      const S cp = cprev ? cprev[j] : S(0);
      const S dh = dh_in[j] + dh_carry[j];
      const S dzo = dh * tc[j] * o * (S(1) - o);
      const S dc = dc_carry[j] + dh * o * (S(1) - tc[j] * tc[j]) + dzo * wco[j];
      const S dzf = dc * cp * f * (S(1) - f);
      const S dzi = dc * g * i * (S(1) - i);
      const S dzg = dc * i * (S(1) - g * g);
      g_wco[j] += dzo * c[j];
      g_wci[j] += dzi * cp;
      g_wcf[j] += dzf * cp;
      dc_carry[j] = dc * f + dzi * wci[j] + dzf * wcf[j];
      dz[j] = dzi;
      dz[n + j] = dzf;
      dz[2 * n + j] = dzg;
      dz[3 * n + j] = dzo;
    }
    for (int q = 0; q < 4 * s.co; ++q) {
      S acc = 0;
      for (std::size_t j = 0; j < plane; ++j) acc += dz[q * plane + j];
      g_b[q] += acc;
    }
    conv2d_same_backward(cache.x.data() + t * s.input_size(), s.ci, s.h, s.w, p, 4 * s.co, s.k, dz.data(),
                         dx.empty() ? nullptr : dx.data() + t * s.input_size(), grad);
    std::fill(dh_carry.begin(), dh_carry.end(), S(0));
    if (t > 0)
      conv2d_same_backward(cache.h.data() + (t - 1) * n, s.co, s.h, s.w, p + s.off_wh(), 4 * s.co, s.k, dz.data(),
                           dh_carry.data(), grad + s.off_wh());
  }
}

}  // namespace heatinv

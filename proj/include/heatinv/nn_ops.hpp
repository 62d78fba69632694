#pragma once

// Dense tensors, activations and the "same" 2D convolution used by the
// ConvLSTM layers.

#include <algorithm>
#include <cmath>
#include <span>
#include <string>
#include <vector>

#include "heatinv/common.hpp"

namespace heatinv {

// (time, channels, height, width), row-major with width fastest. A
// (channels, height, width) tensor is the t = 1 case.
template <class S>
struct Tensor4 {
  int t = 0, c = 0, h = 0, w = 0;
  std::vector<S> data;

  Tensor4() = default;
  Tensor4(int t_, int c_, int h_, int w_)
      : t(t_), c(c_), h(h_), w(w_), data(static_cast<std::size_t>(t_) * c_ * h_ * w_, S(0)) {}

  std::size_t frame_size() const { return static_cast<std::size_t>(c) * h * w; }
  std::size_t index(int ti, int ci, int y, int x) const {
    return ((static_cast<std::size_t>(ti) * c + ci) * h + y) * w + x;
  }
  S& at(int ti, int ci, int y, int x) { return data[index(ti, ci, y, x)]; }
  S at(int ti, int ci, int y, int x) const { return data[index(ti, ci, y, x)]; }
  std::span<S> frame(int ti) { return {data.data() + ti * frame_size(), frame_size()}; }
  std::span<const S> frame(int ti) const { return {data.data() + ti * frame_size(), frame_size()}; }
};

template <class S>
inline S sigmoid(S x) {
  return S(1) / (S(1) + std::exp(-x));
}

// Zero padding for an even or odd kernel of size k: (k-1)/2 before, the rest after.
inline int pad_before(int k) { return (k - 1) / 2; }

// out[o] += sum_c kernel[o][c] (*) in[c], cross-correlation with "same" output.
template <class S>
void conv2d_same_accumulate(const S* in, int ci, int h, int w, const S* kernel, int co, int k, S* out) {
  const int pb = pad_before(k);
  const std::size_t plane = static_cast<std::size_t>(h) * w;
  for (int o = 0; o < co; ++o)
    for (int c = 0; c < ci; ++c)
      for (int dy = 0; dy < k; ++dy)
        for (int dx = 0; dx < k; ++dx) {
          const S kv = kernel[((static_cast<std::size_t>(o) * ci + c) * k + dy) * k + dx];
          const int sy = dy - pb, sx = dx - pb;
          const int y0 = std::max(0, -sy), y1 = std::min(h, h - sy);
          const int x0 = std::max(0, -sx), x1 = std::min(w, w - sx);
          S* op = out + o * plane;
          const S* ip = in + c * plane;
          for (int y = y0; y < y1; ++y) {
            S* orow = op + static_cast<std::size_t>(y) * w;
            const S* irow = ip + static_cast<std::size_t>(y + sy) * w + sx;
            for (int x = x0; x < x1; ++x) orow[x] += kv * irow[x];
          }
        }
}

// Adjoint of conv2d_same_accumulate: din += K^T dout (if din), dkernel += dout x in.
template <class S>
void conv2d_same_backward(const S* in, int ci, int h, int w, const S* kernel, int co, int k, const S* dout, S* din,
                          S* dkernel) {
  const int pb = pad_before(k);
  const std::size_t plane = static_cast<std::size_t>(h) * w;
  for (int o = 0; o < co; ++o)
    for (int c = 0; c < ci; ++c)
      for (int dy = 0; dy < k; ++dy)
        for (int dx = 0; dx < k; ++dx) {
          const std::size_t kidx = ((static_cast<std::size_t>(o) * ci + c) * k + dy) * k + dx;
          const S kv = kernel[kidx];
          const int sy = dy - pb, sx = dx - pb;
          const int y0 = std::max(0, -sy), y1 = std::min(h, h - sy);
          const int x0 = std::max(0, -sx), x1 = std::min(w, w - sx);
          const S* gp = dout + o * plane;
          const S* ip = in + c * plane;
          S acc = 0;
          for (int y = y0; y < y1; ++y) {
            const S* grow = gp + static_cast<std::size_t>(y) * w;
            const S* irow = ip + static_cast<std::size_t>(y + sy) * w + sx;
            for (int x = x0; x < x1; ++x) acc += grow[x] * irow[x];
            if (din) {
              S* drow = din + c * plane + static_cast<std::size_t>(y + sy) * w + sx;
              for (int x = x0; x < x1; ++x) drow[x] += kv * grow[x];
            }
          }
          dkernel[kidx] += acc;
        }
}

// input: ci x h x w, kernel: co x ci x k x k, bias: co (or empty).
template <class S>
std::vector<S> conv2d_same(std::span<const S> input, int ci, int h, int w, std::span<const S> kernel, int co, int k,
                           std::span<const S> bias = {}) {
  if (ci < 1 || co < 1 || k < 1 || h < 1 || w < 1) throw DimensionError("conv2d_same: sizes must be positive");
  if (input.size() != static_cast<std::size_t>(ci) * h * w)
    throw DimensionError("conv2d_same: input has " + std::to_string(input.size()) + " values, expected ci*h*w");
  if (kernel.size() != static_cast<std::size_t>(co) * ci * k * k)
    throw DimensionError("conv2d_same: kernel channel counts do not match the input");
  if (!bias.empty() && bias.size() != static_cast<std::size_t>(co))
    throw DimensionError("conv2d_same: bias size != output channels");
  const std::size_t plane = static_cast<std::size_t>(h) * w;
  std::vector<S> out(static_cast<std::size_t>(co) * plane, S(0));
  if (!bias.empty())
    for (int o = 0; o < co; ++o) std::fill(out.begin() + o * plane, out.begin() + (o + 1) * plane, bias[o]);
  conv2d_same_accumulate(input.data(), ci, h, w, kernel.data(), co, k, out.data());
  return out;
}

}  // namespace heatinv

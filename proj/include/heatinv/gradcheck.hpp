#pragma once

// Central-difference check of Network::backward on the scalar loss
// L = sum(w o y) with a fixed random weighting w.

#include <algorithm>
#include <cmath>
#include <random>
#include <string>
#include <vector>

#include "heatinv/network.hpp"

namespace heatinv {

struct GradCheckEntry {
  std::string tensor;
  std::size_t index = 0;
  double analytic = 0, numeric = 0, relative_error = 0;
};

struct GradCheckResult {
  std::vector<GradCheckEntry> entries;
  double worst() const {
    double w = 0;
    for (const auto& e : entries) w = std::max(w, e.relative_error);
    return w;
  }
};

// Analytic gradients come from the precision-A network; the differences are
// taken on a precision-F copy holding the same parameter values. Parameters
// are drawn by choosing a tensor uniformly, then an element within it.
template <class A, class F = A>
GradCheckResult gradient_check(const NetworkConfig& config, std::uint64_t seed, int nt, int samples, double h) {
  Network<A> net(config);
  net.init(seed);
  std::mt19937_64 rng(mix_seed(seed, 1));
  for (auto& v : net.params()) v += static_cast<A>(uniform(rng, -0.1, 0.1));
  std::vector<A> x(nt * net.input_frame_size());
  for (auto& v : x) v = static_cast<A>(uniform(rng, -1, 1));
  MatrixC<A> w(config.outputs(), nt);
  for (Eigen::Index i = 0; i < w.size(); ++i) w.data()[i] = static_cast<A>(uniform(rng, -1, 1));

  typename Network<A>::Cache cache;
  net.forward(x, nt, &cache);
  AlignedVector<A> grad(net.param_count(), A(0));
  net.backward(cache, w, grad);

  Network<F> probe(config);
  std::copy(net.params().begin(), net.params().end(), probe.params().begin());
  const std::vector<F> xf(x.begin(), x.end());
  const MatrixC<F> wf = w.template cast<F>();
  auto loss = [&] { return static_cast<double>((probe.forward(xf, nt).array() * wf.array()).sum()); };

  GradCheckResult result;
  const auto& tensors = net.tensors();
  for (int s = 0; s < samples; ++s) {
    const TensorInfo& t = tensors[uniform_int(rng, 0, static_cast<int>(tensors.size()) - 1)];
    const std::size_t i = t.offset + uniform_int(rng, 0, static_cast<int>(t.count) - 1);
    const F keep = probe.params()[i];
    probe.params()[i] = keep + static_cast<F>(h);
    const double lp = loss();
    probe.params()[i] = keep - static_cast<F>(h);
    const double lm = loss();
    probe.params()[i] = keep;
    GradCheckEntry e{t.name, i - t.offset, static_cast<double>(grad[i]), (lp - lm) / (2 * h), 0};
    const double scale = std::max(std::abs(e.analytic), std::abs(e.numeric));
    e.relative_error = scale > 0 ? std::abs(e.analytic - e.numeric) / scale : 0.0;
    result.entries.push_back(e);
  }
  return result;
}

}  // namespace heatinv

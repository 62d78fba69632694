#include <cmath>
#include <random>
#include <vector>

#include <gtest/gtest.h>

#include "heatinv/gradcheck.hpp"
#include "heatinv/network.hpp"

using namespace heatinv;

namespace {

template <class S>
std::vector<S> random_vector(std::size_t n, std::mt19937_64& rng, double lo = -1, double hi = 1) {
  std::vector<S> v(n);
  for (auto& x : v) x = static_cast<S>(uniform(rng, lo, hi));
  return v;
}

double sig(double z) { return 1.0 / (1.0 + std::exp(-z)); }

// Independent scalar peephole LSTM.
struct ScalarPeephole {
  double wxi, whi, wci, bi, wxf, whf, wcf, bf, wxc, whc, bc, wxo, who, wco, bo;
  void step(double x, double& h, double& c) const {
    const double i = sig(wxi * x + whi * h + wci * c + bi);
    const double f = sig(wxf * x + whf * h + wcf * c + bf);
    const double cn = f * c + i * std::tanh(wxc * x + whc * h + bc);
    const double o = sig(wxo * x + who * h + wco * cn + bo);
    c = cn;
    h = o * std::tanh(cn);
  }
};

NetworkConfig small_net(int grid = 5) {
  NetworkConfig c;
  c.grid = grid;
  return c;
}

}  // namespace

TEST(Conv2d, IdentityKernel) {
  std::mt19937_64 rng(1);
  const auto x = random_vector<float>(3 * 4 * 5, rng);
  std::vector<float> k(9, 0.0f);
  for (int c = 0; c < 3; ++c) k[c * 3 + c] = 1.0f;
  EXPECT_EQ(conv2d_same<float>(x, 3, 4, 5, k, 3, 1), x);
}

TEST(Conv2d, OnesKernelZeroPadding) {
  const std::vector<float> x(25, 1.0f), k(9, 1.0f);
  const auto y = conv2d_same<float>(x, 1, 5, 5, k, 1, 3);
  EXPECT_EQ(y[2 * 5 + 2], 9.0f);
  EXPECT_EQ(y[0], 4.0f);
  EXPECT_EQ(y[24], 4.0f);
  EXPECT_EQ(y[2], 6.0f);
}

TEST(Conv2d, MatchesBruteForceForEvenKernel) {
  std::mt19937_64 rng(2);
  const int ci = 2, co = 3, k = 4, h = 7, w = 6;
  const auto x = random_vector<float>(ci * h * w, rng);
  const auto kern = random_vector<float>(co * ci * k * k, rng);
  const auto bias = random_vector<float>(co, rng);
  const auto y = conv2d_same<float>(x, ci, h, w, kern, co, k, bias);
  // Padding: one row/column before, two after.
  double worst = 0;
  for (int o = 0; o < co; ++o)
    for (int r = 0; r < h; ++r)
      for (int q = 0; q < w; ++q) {
        double acc = bias[o];
        for (int c = 0; c < ci; ++c)
          for (int a = 0; a < k; ++a)
            for (int b = 0; b < k; ++b) {
              const int rr = r + a - 1, qq = q + b - 1;
              if (rr < 0 || rr >= h || qq < 0 || qq >= w) continue;
              acc += static_cast<double>(kern[((o * ci + c) * k + a) * k + b]) * x[(c * h + rr) * w + qq];
            }
        worst = std::max(worst, std::abs(acc - y[(o * h + r) * w + q]));
      }
  EXPECT_LT(worst, 1e-5);
}

TEST(Conv2d, ChannelMismatchIsADimensionError) {
  const std::vector<float> x(2 * 9, 1.0f), k(3 * 9, 1.0f);
  EXPECT_THROW(conv2d_same<float>(x, 2, 3, 3, k, 1, 3), DimensionError);
  EXPECT_THROW(conv2d_same<float>(x, 2, 3, 3, std::vector<float>(2 * 9), 1, 3, std::vector<float>(2)),
               DimensionError);
}

TEST(Conv2d, BackwardIsTheAdjoint) {
  std::mt19937_64 rng(3);
  const int ci = 2, co = 3, k = 2, h = 5, w = 4;
  const auto x = random_vector<double>(ci * h * w, rng);
  const auto kern = random_vector<double>(co * ci * k * k, rng);
  const auto g = random_vector<double>(co * h * w, rng);
  std::vector<double> y(co * h * w, 0.0), dx(x.size(), 0.0), dk(kern.size(), 0.0);
  conv2d_same_accumulate(x.data(), ci, h, w, kern.data(), co, k, y.data());
  conv2d_same_backward(x.data(), ci, h, w, kern.data(), co, k, g.data(), dx.data(), dk.data());
  double lhs = 0, rhs_x = 0, rhs_k = 0;
  for (std::size_t i = 0; i < y.size(); ++i) lhs += y[i] * g[i];
  for (std::size_t i = 0; i < x.size(); ++i) rhs_x += x[i] * dx[i];
  for (std::size_t i = 0; i < kern.size(); ++i) rhs_k += kern[i] * dk[i];
  EXPECT_NEAR(lhs, rhs_x, 1e-12);
  EXPECT_NEAR(lhs, rhs_k, 1e-12);
}

TEST(ConvLSTMStep, ZeroWeightsHalveTheCellState) {
  const ConvLSTMShape s{2, 2, 3, 4, 4};
  std::mt19937_64 rng(4);
  const std::vector<float> p(s.param_count(), 0.0f);
  const auto x = random_vector<float>(s.input_size(), rng);
  const auto H = random_vector<float>(s.state_size(), rng);
  const auto C = random_vector<float>(s.state_size(), rng, -3, 3);
  ConvLSTMStepCache<float> cache;
  const auto out = convlstm_step<float>(s, p, x, H, C, &cache);
  const std::size_t n = s.state_size();
  for (std::size_t j = 0; j < n; ++j) {
    EXPECT_EQ(cache.gates[j], 0.5f);
    EXPECT_EQ(cache.gates[n + j], 0.5f);
    EXPECT_EQ(cache.gates[2 * n + j], 0.0f);
    EXPECT_EQ(cache.gates[3 * n + j], 0.5f);
  }
  for (std::size_t j = 0; j < n; ++j) {
    EXPECT_FLOAT_EQ(out.C[j], 0.5f * C[j]);
    EXPECT_FLOAT_EQ(out.H[j], 0.5f * std::tanh(0.5f * C[j]));
  }
}

TEST(ConvLSTMStep, OneByOneReducesToScalarPeepholeLstm) {
  std::mt19937_64 rng(5);
  for (int trial = 0; trial < 20; ++trial) {
    ScalarPeephole r;
    double* fields[] = {&r.wxi, &r.whi, &r.wci, &r.bi, &r.wxf, &r.whf, &r.wcf, &r.bf,
                        &r.wxc, &r.whc, &r.bc,  &r.wxo, &r.who, &r.wco, &r.bo};
    for (double* f : fields) *f = static_cast<float>(uniform(rng, -1.5, 1.5));
    const ConvLSTMShape s{1, 1, 1, 1, 1};
    // W_x, W_h, W_ci, W_cf, W_co, b
    const std::vector<float> p = {float(r.wxi), float(r.wxf), float(r.wxc), float(r.wxo), float(r.whi),
                                  float(r.whf), float(r.whc), float(r.who), float(r.wci), float(r.wcf),
                                  float(r.wco), float(r.bi),  float(r.bf),  float(r.bc),  float(r.bo)};
    ASSERT_EQ(p.size(), s.param_count());
    std::vector<float> H = {0.0f}, C = {0.0f};
    double h = 0, c = 0;
    for (int t = 0; t < 10; ++t) {
      const float x = static_cast<float>(uniform(rng, -2, 2));
      const auto out = convlstm_step<float>(s, p, std::vector<float>{x}, H, C);
      r.step(x, h, c);
      EXPECT_NEAR(out.H[0], h, 1e-6);
      EXPECT_NEAR(out.C[0], c, 1e-6);
      H = out.H;
      C = out.C;
    }
  }
}

TEST(ConvLSTMStep, GateRangesAndCellGrowthBound) {
  std::mt19937_64 rng(6);
  const ConvLSTMShape s{2, 2, 4, 6, 6};
  for (int pass = 0; pass < 100; ++pass) {
    // Magnitudes of the initialization scale; far larger pre-activations
    // saturate float32 sigmoid to exactly 0 or 1.
    const auto p = random_vector<float>(s.param_count(), rng, -0.3, 0.3);
    const auto x = random_vector<float>(s.input_size(), rng, -2, 2);
    const auto H = random_vector<float>(s.state_size(), rng);
    const auto C = random_vector<float>(s.state_size(), rng, -4, 4);
    ConvLSTMStepCache<float> cache;
    const auto out = convlstm_step<float>(s, p, x, H, C, &cache);
    const std::size_t n = s.state_size();
    for (std::size_t j = 0; j < n; ++j) {
      for (int q : {0, 1, 3}) {
        EXPECT_GT(cache.gates[q * n + j], 0.0f);
        EXPECT_LT(cache.gates[q * n + j], 1.0f);
      }
      EXPECT_LT(std::abs(out.H[j]), 1.0f);
      EXPECT_LE(std::abs(out.C[j]), std::abs(C[j]) + 1.0f);
    }
  }
}

TEST(ConvLSTMStep, ShapeMismatchIsADimensionError) {
  const ConvLSTMShape s{2, 1, 2, 3, 3};
  const std::vector<float> p(s.param_count()), x(s.input_size()), st(s.state_size());
  EXPECT_THROW(convlstm_step<float>(s, p, std::vector<float>(5), st, st), DimensionError);
  EXPECT_THROW(convlstm_step<float>(s, std::vector<float>(3), x, st, st), DimensionError);
  EXPECT_THROW(convlstm_step<float>(s, p, x, std::vector<float>(2), st), DimensionError);
}

TEST(ConvLSTMSequence, MatchesRepeatedSteps) {
  std::mt19937_64 rng(7);
  const ConvLSTMShape s{2, 2, 2, 5, 4};
  const int nt = 6;
  const auto p = random_vector<float>(s.param_count(), rng);
  const auto x = random_vector<float>(nt * s.input_size(), rng);
  ConvLSTMSequenceCache<float> cache;
  convlstm_forward(s, p.data(), std::span<const float>(x), nt, cache);
  std::vector<float> H(s.state_size(), 0.0f), C(s.state_size(), 0.0f);
  for (int t = 0; t < nt; ++t) {
    const auto out = convlstm_step<float>(s, p, std::span<const float>(x).subspan(t * s.input_size(), s.input_size()),
                                          H, C);
    H = out.H;
    C = out.C;
    for (std::size_t j = 0; j < s.state_size(); ++j) EXPECT_EQ(cache.h[t * s.state_size() + j], H[j]);
  }
}

TEST(LstmStep, ZeroWeights) {
  const LstmShape s{3, 4};
  std::mt19937_64 rng(8);
  const std::vector<float> p(s.param_count(), 0.0f);
  const auto x = random_vector<float>(3, rng), h = random_vector<float>(4, rng);
  const auto c = random_vector<float>(4, rng, -3, 3);
  const auto out = lstm_step<float>(s, p, x, h, c);
  for (int j = 0; j < 4; ++j) EXPECT_FLOAT_EQ(out.h[j], 0.5f * std::tanh(0.5f * c[j]));
}

TEST(LstmStep, HandComputedSingleUnit) {
  const LstmShape s{1, 1};
  const std::vector<double> p = {0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.01, 0.02, 0.03, 0.04};
  const auto out = lstm_step<double>(s, p, std::vector<double>{1.0}, std::vector<double>{0.5},
                                     std::vector<double>{0.25});
  EXPECT_NEAR(out.gates[0], 0.5890404340586651, 1e-12);
  EXPECT_NEAR(out.gates[1], 0.6271477663131956, 1e-12);
  EXPECT_NEAR(out.gates[2], 0.5915193954318165, 1e-12);
  EXPECT_NEAR(out.gates[3], 0.6984652160025387, 1e-12);
  EXPECT_NEAR(out.c[0], 0.5052157830175753, 1e-12);
  EXPECT_NEAR(out.h[0], 0.32563090806177675, 1e-12);
}

TEST(LstmStep, GatesInOpenUnitInterval) {
  std::mt19937_64 rng(9);
  const LstmShape s{6, 5};
  for (int pass = 0; pass < 100; ++pass) {
    const auto p = random_vector<float>(s.param_count(), rng, -2, 2);
    const auto out = lstm_step<float>(s, p, random_vector<float>(6, rng, -3, 3), random_vector<float>(5, rng),
                                      random_vector<float>(5, rng, -4, 4));
    for (int j = 0; j < 5; ++j)
      for (int q : {0, 1, 3}) {
        EXPECT_GT(out.gates[q * 5 + j], 0.0f);
        EXPECT_LT(out.gates[q * 5 + j], 1.0f);
      }
  }
}

TEST(LstmSequence, BatchedProjectionMatchesSteps) {
  std::mt19937_64 rng(10);
  const LstmShape s{7, 5};
  const int nt = 9;
  const auto p = random_vector<double>(s.param_count(), rng);
  MatrixC<double> x(7, nt);
  for (Eigen::Index i = 0; i < x.size(); ++i) x.data()[i] = uniform(rng, -1, 1);
  LstmSequenceCache<double> cache;
  lstm_forward(s, p.data(), x, cache);
  std::vector<double> h(5, 0.0), c(5, 0.0);
  for (int t = 0; t < nt; ++t) {
    const auto out = lstm_step<double>(s, p, std::span<const double>(x.col(t).data(), 7), h, c);
    h = out.h;
    c = out.c;
    for (int j = 0; j < 5; ++j) EXPECT_NEAR(cache.h(j, t), h[j], 1e-14);
  }
}

TEST(Network, DefaultParameterLayout) {
  const Network<float> net;
  const std::size_t G2 = 900;
  const std::size_t conv1 = 8 * 2 * 16 + 8 * 2 * 16 + 3 * 2 * G2 + 8;
  const std::size_t conv2 = 8 * 2 * 4 + 8 * 2 * 4 + 3 * 2 * G2 + 8;
  const std::size_t conv3 = 4 * 2 + 4 * 1 + 3 * G2 + 4;
  const std::size_t lstm = 4 * G2 * G2 * 2 + 4 * G2;
  const std::size_t dense = G2 * G2 + G2;
  EXPECT_EQ(net.param_count(), conv1 + conv2 + conv3 + 3 * lstm + dense);
  std::size_t next = 0;
  for (const auto& t : net.tensors()) {
    EXPECT_EQ(t.offset, next);
    next += t.count;
  }
  EXPECT_EQ(next, net.param_count());
  EXPECT_EQ(net.tensors().back().name, "dense.b");
}

TEST(Network, InitIsSeededAndBounded) {
  Network<float> a(small_net()), b(small_net());
  a.init(11);
  b.init(11);
  EXPECT_TRUE(std::equal(a.params().begin(), a.params().end(), b.params().begin()));
  b.init(12);
  EXPECT_FALSE(std::equal(a.params().begin(), a.params().end(), b.params().begin()));
  for (const auto& t : a.tensors()) {
    const auto v = a.params().subspan(t.offset, t.count);
    if (t.is_bias) {
      const std::size_t q = t.count / 4;
      for (std::size_t i = 0; i < t.count; ++i) EXPECT_EQ(v[i], (i >= q && i < 2 * q) ? 1.0f : 0.0f) << t.name;
    } else {
      const float bound = 1.0f / std::sqrt(static_cast<float>(t.fan_in));
      for (float x : v) EXPECT_LE(std::abs(x), bound) << t.name;
    }
  }
}

TEST(Network, InitGainScalesWeightsOnly) {
  NetworkConfig c;
  c.grid = 4;
  Network<double> a(c);
  c.init_gain = 2.0;
  Network<double> b(c);
  a.init(5);
  b.init(5);
  for (const auto& t : a.tensors())
    for (std::size_t i = t.offset; i < t.offset + t.count; ++i) {
      if (t.is_bias) {
        EXPECT_EQ(a.params()[i], b.params()[i]) << t.name;
      } else {
        EXPECT_NEAR(b.params()[i], 2.0 * a.params()[i], 1e-15) << t.name;
      }
    }
  c.init_gain = 0.0;
  EXPECT_THROW(c.validate(), ConfigError);
}

TEST(Network, OutputShapes) {
  Network<float> net;
  net.init(1);
  std::mt19937_64 rng(13);
  for (int nt : {1, 7, 71}) {
    const auto x = random_vector<float>(nt * net.input_frame_size(), rng);
    const auto y = net.forward(x, nt);
    EXPECT_EQ(y.rows(), 900);
    EXPECT_EQ(y.cols(), nt);
    EXPECT_TRUE(y.allFinite());
  }
  EXPECT_THROW(net.forward(std::vector<float>(2 * 29 * 29), 1), DimensionError);
}

TEST(Network, ZeroParametersGiveZeroOutput) {
  Network<float> net(small_net());
  std::mt19937_64 rng(14);
  const auto x = random_vector<float>(net.input_frame_size(), rng);
  const auto y = net.forward(x, 1);
  for (Eigen::Index i = 0; i < y.size(); ++i) EXPECT_EQ(y.data()[i], 0.0f);
}

TEST(Network, IsCausalInTime) {
  Network<float> net(small_net(6));
  net.init(15);
  std::mt19937_64 rng(16);
  const int nt = 8, k = 5;
  auto x = random_vector<float>(nt * net.input_frame_size(), rng);
  const auto y0 = net.forward(x, nt);
  const std::size_t plane = 36;
  for (std::size_t j = 0; j < plane; ++j) x[k * net.input_frame_size() + plane + j] += 0.3f;
  const auto y1 = net.forward(x, nt);
  for (int t = 0; t < k; ++t) EXPECT_TRUE((y0.col(t).array() == y1.col(t).array()).all()) << t;
  EXPECT_FALSE((y0.col(k).array() == y1.col(k).array()).all());
}

TEST(Network, DeterministicForward) {
  Network<float> net(small_net());
  net.init(17);
  std::mt19937_64 rng(18);
  const auto x = random_vector<float>(4 * net.input_frame_size(), rng);
  const auto a = net.forward(x, 4), b = net.forward(x, 4);
  EXPECT_TRUE((a.array() == b.array()).all());
}

TEST(NetworkBackward, ZeroOutputGradientGivesZeroGradients) {
  Network<float> net(small_net());
  net.init(19);
  std::mt19937_64 rng(20);
  const auto x = random_vector<float>(3 * net.input_frame_size(), rng);
  Network<float>::Cache cache;
  net.forward(x, 3, &cache);
  std::vector<float> grad(net.param_count(), 0.0f);
  net.backward(cache, MatrixC<float>::Zero(25, 3), grad);
  for (float g : grad) EXPECT_EQ(g, 0.0f);
}

TEST(NetworkBackward, MissingCacheIsAStateError) {
  Network<float> net(small_net());
  std::vector<float> grad(net.param_count());
  EXPECT_THROW(net.backward(Network<float>::Cache{}, MatrixC<float>::Zero(25, 1), grad), StateError);
}

TEST(NetworkBackward, DenseGradientIsAnOuterProduct) {
  Network<float> net(small_net());
  net.init(21);
  std::mt19937_64 rng(22);
  const auto x = random_vector<float>(net.input_frame_size(), rng);
  Network<float>::Cache cache;
  net.forward(x, 1, &cache);
  MatrixC<float> g(25, 1);
  for (Eigen::Index i = 0; i < 25; ++i) g(i) = static_cast<float>(uniform(rng, -1, 1));
  std::vector<float> grad(net.param_count(), 0.0f);
  net.backward(cache, g, grad);
  const auto& W = net.tensors()[net.tensors().size() - 2];
  const auto& b = net.tensors().back();
  const auto& in = cache.lstm.back().h;
  for (int r = 0; r < 25; ++r) {
    EXPECT_EQ(grad[b.offset + r], g(r));
    for (int c = 0; c < 25; ++c) EXPECT_FLOAT_EQ(grad[W.offset + r * 25 + c], g(r) * in(c, 0));
  }
}

TEST(NetworkBackward, Float32GradientsMatchCentralDifferences) {
  // The differences run on a float64 copy: float32 rounding in the loss
  // (~1e-7 |L| / h) would swamp the smallest recurrent-kernel gradients.
  const auto r = gradient_check<float, double>(small_net(), 23, 4, 50, 1e-3);
  ASSERT_EQ(r.entries.size(), 50u);
  for (const auto& e : r.entries) EXPECT_LT(e.relative_error, 1e-3) << e.tensor << "[" << e.index << "]";
}

TEST(NetworkBackward, Float64GradientsMatchCentralDifferences) {
  const auto r = gradient_check<double>(small_net(4), 31, 6, 50, 1e-3);
  EXPECT_LT(r.worst(), 1e-3);
}

#pragma once

// Stacked ConvLSTM -> LSTM -> dense network mapping a sequence of
// (height, temperature) frames to per-step surface flux on the same grid.

#include <cmath>
#include <cstdint>
#include <random>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "heatinv/convlstm.hpp"
#include "heatinv/lstm.hpp"

namespace heatinv {

struct NetworkConfig {
  int grid = kDefaultGrid;
  int in_channels = 2;
  std::vector<int> conv_channels = {2, 2, 1};
  std::vector<int> conv_kernels = {4, 2, 1};
  int lstm_layers = 3;
  double init_gain = 1.0;  // weight bound is init_gain / sqrt(fan_in)

  int outputs() const { return grid * grid; }
  int hidden() const { return grid * grid; }

  void validate() const {
    if (grid < 1) throw ConfigError("grid: must be >= 1");
    if (in_channels < 1) throw ConfigError("in_channels: must be >= 1");
    if (conv_channels.empty() || conv_channels.size() != conv_kernels.size())
      throw ConfigError("conv_channels: must be non-empty and match conv_kernels in length");
    for (int c : conv_channels)
      if (c < 1) throw ConfigError("conv_channels: entries must be >= 1");
    for (int k : conv_kernels)
      if (k < 1) throw ConfigError("conv_kernels: entries must be >= 1");
    if (lstm_layers < 1) throw ConfigError("lstm_layers: must be >= 1");
    if (!(init_gain > 0)) throw ConfigError("init_gain: must be > 0");
  }

  nlohmann::json to_json() const {
    return {{"grid", grid},
            {"in_channels", in_channels},
            {"conv_channels", conv_channels},
            {"conv_kernels", conv_kernels},
            {"lstm_layers", lstm_layers},
            {"init_gain", init_gain}};
  }

  static NetworkConfig from_json(const nlohmann::json& j) {
    NetworkConfig c;
    try {
      c.grid = j.value("grid", c.grid);
      c.in_channels = j.value("in_channels", c.in_channels);
      c.conv_channels = j.value("conv_channels", c.conv_channels);
      c.conv_kernels = j.value("conv_kernels", c.conv_kernels);
      c.lstm_layers = j.value("lstm_layers", c.lstm_layers);
      c.init_gain = j.value("init_gain", c.init_gain);
    } catch (const nlohmann::json::exception& e) {
      throw ConfigError(std::string("network config: ") + e.what());
    }
    c.validate();
    return c;
  }

  bool operator==(const NetworkConfig&) const = default;
};

struct TensorInfo {
  std::string name;
  std::vector<int> shape;
  std::size_t offset = 0;
  std::size_t count = 0;
  int fan_in = 1;
  bool is_bias = false;
};

template <class S = float>
class Network {
 public:
  struct Cache {
    int nt = 0;
    std::vector<ConvLSTMSequenceCache<S>> conv;
    std::vector<LstmSequenceCache<S>> lstm;
  };

  explicit Network(NetworkConfig config = {}) : config_(std::move(config)) {
    config_.validate();
    const int G = config_.grid;
    int ci = config_.in_channels;
    std::size_t offset = 0;
    auto add = [&](std::string name, std::vector<int> shape, int fan_in, bool bias) {
      std::size_t count = 1;
      for (int d : shape) count *= static_cast<std::size_t>(d);
      tensors_.push_back({std::move(name), std::move(shape), offset, count, fan_in, bias});
      offset += count;
    };
    for (std::size_t l = 0; l < config_.conv_channels.size(); ++l) {
      const int co = config_.conv_channels[l], k = config_.conv_kernels[l];
      ConvLSTMShape s{ci, co, k, G, G};
      conv_.push_back(s);
      conv_offsets_.push_back(offset);
      const std::string p = "convlstm" + std::to_string(l + 1) + ".";
      add(p + "W_x", {4 * co, ci, k, k}, ci * k * k, false);
      add(p + "W_h", {4 * co, co, k, k}, co * k * k, false);
      add(p + "W_ci", {co, G, G}, co * k * k, false);
      add(p + "W_cf", {co, G, G}, co * k * k, false);
      add(p + "W_co", {co, G, G}, co * k * k, false);
      add(p + "b", {4 * co}, 1, true);
      ci = co;
    }
    int m = ci * G * G;
    const int n = config_.hidden();
    for (int l = 0; l < config_.lstm_layers; ++l) {
      lstm_.push_back({m, n});
      lstm_offsets_.push_back(offset);
      const std::string p = "lstm" + std::to_string(l + 1) + ".";
      add(p + "W_x", {4 * n, m}, m, false);
      add(p + "W_h", {4 * n, n}, n, false);
      add(p + "b", {4 * n}, 1, true);
      m = n;
    }
    dense_ = {n, config_.outputs()};
    dense_offset_ = offset;
    add("dense.W", {config_.outputs(), n}, n, false);
    add("dense.b", {config_.outputs()}, 1, true);
    params_.assign(offset, S(0));
  }

  const NetworkConfig& config() const { return config_; }
  const std::vector<TensorInfo>& tensors() const { return tensors_; }
  std::size_t param_count() const { return params_.size(); }
  std::span<S> params() { return params_; }
  std::span<const S> params() const { return params_; }
  std::size_t input_frame_size() const {
    return static_cast<std::size_t>(config_.in_channels) * config_.grid * config_.grid;
  }

  // Weights uniform in +-init_gain/sqrt(fan_in); biases zero except forget gates at 1.
  void init(std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    for (const TensorInfo& t : tensors_) {
      S* p = params_.data() + t.offset;
      if (t.is_bias) {
        std::fill(p, p + t.count, S(0));
        const std::size_t block = t.count / 4;
        std::fill(p + block, p + 2 * block, S(1));
      } else {
        const double a = config_.init_gain / std::sqrt(static_cast<double>(t.fan_in));
        for (std::size_t i = 0; i < t.count; ++i) p[i] = static_cast<S>(uniform(rng, -a, a));
      }
    }
  }

  // input: nt x in_channels x grid x grid. Returns grid^2 x nt (column t is step t).
  MatrixC<S> forward(std::span<const S> input, int nt, Cache* cache = nullptr) const {
    if (nt < 1) throw DimensionError("forward: need at least one time step");
    if (input.size() != nt * input_frame_size())
      throw DimensionError("forward: input has " + std::to_string(input.size()) + " values, expected nt x " +
                           std::to_string(config_.in_channels) + " x " + std::to_string(config_.grid) + " x " +
                           std::to_string(config_.grid));
    Cache local;
    Cache& c = cache ? *cache : local;
    c.nt = nt;
    c.conv.resize(conv_.size());
    c.lstm.resize(lstm_.size());
    std::span<const S> x = input;
    for (std::size_t l = 0; l < conv_.size(); ++l) {
      convlstm_forward(conv_[l], params_.data() + conv_offsets_[l], x, nt, c.conv[l]);
      x = c.conv[l].h;
    }
    MatrixC<S> seq = Eigen::Map<const MatrixC<S>>(x.data(), static_cast<Eigen::Index>(x.size() / nt), nt);
    for (std::size_t l = 0; l < lstm_.size(); ++l) {
      lstm_forward(lstm_[l], params_.data() + lstm_offsets_[l], seq, c.lstm[l]);
      seq = c.lstm[l].h;
    }
    return dense_forward(dense_, params_.data() + dense_offset_, seq);
  }

  // Accumulates dL/dparams into grad given dL/doutput (grid^2 x nt).
  void backward(const Cache& cache, const MatrixC<S>& dout, std::span<S> grad) const {
    const int nt = cache.nt;
    if (nt < 1 || cache.conv.size() != conv_.size() || cache.lstm.size() != lstm_.size())
      throw StateError("backward: no forward cache available");
    if (grad.size() != params_.size()) throw DimensionError("backward: gradient buffer size mismatch");
    if (dout.rows() != config_.outputs() || dout.cols() != nt)
      throw DimensionError("backward: output gradient shape mismatch");
    const S* p = params_.data();
    MatrixC<S> d = dense_backward(dense_, p + dense_offset_, cache.lstm.back().h, dout, grad.data() + dense_offset_);
    for (std::size_t l = lstm_.size(); l-- > 0;)
      d = lstm_backward(lstm_[l], p + lstm_offsets_[l], cache.lstm[l], d, grad.data() + lstm_offsets_[l]);
    std::vector<S> dh(d.data(), d.data() + d.size()), dx;
    for (std::size_t l = conv_.size(); l-- > 0;) {
      dx.assign(l > 0 ? nt * conv_[l].input_size() : 0, S(0));
      convlstm_backward(conv_[l], p + conv_offsets_[l], cache.conv[l], std::span<const S>(dh),
                        grad.data() + conv_offsets_[l], std::span<S>(dx));
      dh.swap(dx);
    }
  }

 private:
  NetworkConfig config_;
  std::vector<TensorInfo> tensors_;
  std::vector<ConvLSTMShape> conv_;
  std::vector<std::size_t> conv_offsets_;
  std::vector<LstmShape> lstm_;
  std::vector<std::size_t> lstm_offsets_;
  DenseShape dense_;
  std::size_t dense_offset_ = 0;
  AlignedVector<S> params_;
};

}  // namespace heatinv

#pragma once

// MSE loss, Adam and the epoch loop.

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <limits>
#include <set>
#include <string>
#include <vector>

#include "heatinv/checkpoint.hpp"
#include "heatinv/parallel.hpp"

namespace heatinv {

struct AdamConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

struct TrainConfig {
  int epochs = 300;
  int batch_size = 4;
  AdamConfig adam;
  double val_fraction = 0.2;
  std::uint64_t seed = 0;
  NetworkConfig network;  // grid is taken from the dataset
  int checkpoint_every = 0;  // epochs between intermediate checkpoints, 0 = final only
  int threads = 1;           // workers over the samples of a batch; results do not depend on it

  void validate() const {
    if (epochs < 1) throw ConfigError("epochs: must be >= 1");
    if (batch_size < 1) throw ConfigError("batch_size: must be >= 1");
    if (!(adam.lr > 0)) throw ConfigError("learning_rate: must be > 0");
    if (!(adam.beta1 >= 0 && adam.beta1 < 1)) throw ConfigError("beta1: must be in [0, 1)");
    if (!(adam.beta2 >= 0 && adam.beta2 < 1)) throw ConfigError("beta2: must be in [0, 1)");
    if (!(adam.eps > 0)) throw ConfigError("epsilon: must be > 0");
    if (!(val_fraction > 0 && val_fraction < 1)) throw ConfigError("val_fraction: must be in (0, 1)");
    if (checkpoint_every < 0) throw ConfigError("checkpoint_every: must be >= 0");
    network.validate();
  }

  nlohmann::json to_json() const {
    return {{"epochs", epochs},
            {"batch_size", batch_size},
            {"learning_rate", adam.lr},
            {"beta1", adam.beta1},
            {"beta2", adam.beta2},
            {"epsilon", adam.eps},
            {"val_fraction", val_fraction},
            {"seed", seed},
            {"checkpoint_every", checkpoint_every},
            {"network", network.to_json()}};
  }

  static TrainConfig from_json(const nlohmann::json& j) {
    static const std::set<std::string> known = {"epochs",  "batch_size",   "learning_rate", "beta1",
                                                "beta2",   "epsilon",      "val_fraction",  "seed",
                                                "network", "checkpoint_every"};
    if (!j.is_object()) throw ConfigError("training config must be a JSON object");
    for (const auto& [key, value] : j.items())
      if (!known.count(key)) throw ConfigError(key + ": unknown training config field");
    TrainConfig c;
    auto field = [&](const char* key, auto& out) {
      if (!j.contains(key)) return;
      try {
        out = j.at(key).get<std::decay_t<decltype(out)>>();
      } catch (const nlohmann::json::exception&) {
        throw ConfigError(std::string(key) + ": wrong type");
      }
    };
    field("epochs", c.epochs);
    field("batch_size", c.batch_size);
    field("learning_rate", c.adam.lr);
    field("beta1", c.adam.beta1);
    field("beta2", c.adam.beta2);
    field("epsilon", c.adam.eps);
    field("val_fraction", c.val_fraction);
    field("seed", c.seed);
    field("checkpoint_every", c.checkpoint_every);
    if (j.contains("network")) c.network = NetworkConfig::from_json(j.at("network"));
    c.validate();
    return c;
  }
};

struct LossAndGradient {
  double loss = 0;
  MatrixC<float> grad;
};

// Mean of squared differences over all entries; gradient 2 (pred - target) / N.
inline LossAndGradient mse_loss(const MatrixC<float>& pred, const MatrixC<float>& target) {
  if (pred.rows() != target.rows() || pred.cols() != target.cols())
    throw DimensionError("mse_loss: prediction and target shapes differ");
  if (pred.size() == 0) throw DimensionError("mse_loss: empty input");
  const double n = static_cast<double>(pred.size());
  LossAndGradient r;
  r.grad.resize(pred.rows(), pred.cols());
  double acc = 0;
  const float scale = static_cast<float>(2.0 / n);
  for (Eigen::Index i = 0; i < pred.size(); ++i) {
    const float d = pred.data()[i] - target.data()[i];
    acc += static_cast<double>(d) * d;
    r.grad.data()[i] = scale * d;
  }
  r.loss = acc / n;
  return r;
}

// "tensor[index]" for a flat parameter index.
inline std::string parameter_path(const std::vector<TensorInfo>& tensors, std::size_t i) {
  for (const auto& t : tensors)
    if (i >= t.offset && i < t.offset + t.count) return t.name + "[" + std::to_string(i - t.offset) + "]";
  return "param[" + std::to_string(i) + "]";
}

// Adam with bias correction. Non-finite gradients raise before anything is updated.
inline void adam_step(std::span<float> params, std::span<const float> grad, AdamState& state, const AdamConfig& c,
                      const std::vector<TensorInfo>& tensors = {}) {
  if (grad.size() != params.size()) throw DimensionError("adam_step: gradient size mismatch");
  if (state.m.size() != params.size() || state.v.size() != params.size())
    throw DimensionError("adam_step: optimizer state size mismatch");
  for (std::size_t i = 0; i < grad.size(); ++i)
    if (!std::isfinite(grad[i])) throw TrainingError("non-finite gradient at " + parameter_path(tensors, i));
  ++state.step;
  const auto t = static_cast<double>(state.step);
  const float b1 = static_cast<float>(c.beta1), b2 = static_cast<float>(c.beta2);
  const float c1 = static_cast<float>(1.0 / (1.0 - std::pow(c.beta1, t)));
  const float c2 = static_cast<float>(1.0 / (1.0 - std::pow(c.beta2, t)));
  const float lr = static_cast<float>(c.lr), eps = static_cast<float>(c.eps);
  for (std::size_t i = 0; i < params.size(); ++i) {
    const float g = grad[i];
    state.m[i] = b1 * state.m[i] + (1.0f - b1) * g;
    state.v[i] = b2 * state.v[i] + (1.0f - b2) * g * g;
    params[i] -= lr * (state.m[i] * c1) / (std::sqrt(state.v[i] * c2) + eps);
  }
}

struct EpochLoss {
  int epoch = 0;
  double train_loss = 0;
  double val_loss = std::numeric_limits<double>::quiet_NaN();  // NaN when there is no validation split
};

// Portable Fisher-Yates shuffle.
template <class Engine>
void shuffle_indices(std::vector<int>& v, Engine& rng) {
  for (int i = static_cast<int>(v.size()) - 1; i > 0; --i) std::swap(v[i], v[uniform_int(rng, 0, i)]);
}

class Trainer {
 public:
  Trainer(const Dataset& d, TrainConfig c) : config_(std::move(c)), net_(network_config(d, config_)) {
    config_.validate();
    if (d.samples.size() < 2) throw ConfigError("training needs at least 2 samples, dataset has " +
                                                std::to_string(d.samples.size()));
    grid_ = d.grid;
    nt_ = d.nt;
    normalizer_ = Normalizer::for_dataset(d);
    for (const auto& s : d.samples) {
      inputs_.push_back(normalizer_.input(s, grid_, nt_));
      targets_.push_back(normalizer_.target(s, grid_, nt_));
    }
    // Split: the first floor(f n) entries of a seeded permutation validate.
    std::vector<int> order(d.samples.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = static_cast<int>(i);
    std::mt19937_64 rng(mix_seed(config_.seed, 1));
    shuffle_indices(order, rng);
    const auto n_val = static_cast<std::size_t>(std::floor(config_.val_fraction * order.size()));
    val_ids_.assign(order.begin(), order.begin() + n_val);
    train_ids_.assign(order.begin() + n_val, order.end());
    std::sort(val_ids_.begin(), val_ids_.end());
    std::sort(train_ids_.begin(), train_ids_.end());
    net_.init(mix_seed(config_.seed, 0));
    adam_.reset(net_.param_count());
  }

  // Continues from a saved state; the checkpoint must match the network layout.
  Trainer(const Dataset& d, TrainConfig c, const Checkpoint& from) : Trainer(d, std::move(c)) {
    if (!(from.network == net_.config())) throw ConfigError("checkpoint network does not match the training config");
    if (from.params.size() != net_.param_count()) throw DimensionError("checkpoint parameter count mismatch");
    std::copy(from.params.begin(), from.params.end(), net_.params().begin());
    if (from.adam) adam_ = *from.adam;
    epoch_ = from.training.value("epoch", 0);
  }

  const TrainConfig& config() const { return config_; }
  const Network<float>& network() const { return net_; }
  const Normalizer& normalizer() const { return normalizer_; }
  const std::vector<int>& train_ids() const { return train_ids_; }
  const std::vector<int>& val_ids() const { return val_ids_; }
  int epoch() const { return epoch_; }

  // One Adam step on the mean loss over the given samples; returns that loss
  // (measured before the update). Per-sample gradients are summed in order.
  double train_batch(std::span<const int> ids) {
    const int B = static_cast<int>(ids.size());
    if (B < 1) throw DimensionError("train_batch: empty batch");
    const std::size_t P = net_.param_count();
    if (static_cast<int>(sample_grads_.size()) < B) sample_grads_.resize(B);
    std::vector<double> losses(B);
    parallel_for(B, config_.threads, [&](int b) {
      auto& g = sample_grads_[b];
      g.assign(P, 0.0f);
      typename Network<float>::Cache cache;
      const auto y = net_.forward(inputs_.at(ids[b]), nt_, &cache);
      const auto l = mse_loss(y, targets_[ids[b]]);
      net_.backward(cache, l.grad, g);
      losses[b] = l.loss;
    });
    double mean = 0;
    for (int b = 0; b < B; ++b) {
      if (!std::isfinite(losses[b])) throw TrainingError("non-finite loss on sample " + std::to_string(ids[b]));
      mean += losses[b];
    }
    mean /= B;
    grad_.assign(P, 0.0f);
    for (int b = 0; b < B; ++b)
      for (std::size_t i = 0; i < P; ++i) grad_[i] += sample_grads_[b][i];
    const float inv = 1.0f / static_cast<float>(B);
    for (auto& g : grad_) g *= inv;
    adam_step(net_.params(), grad_, adam_, config_.adam, net_.tensors());
    return mean;
  }

  // Mean loss over samples without updating anything.
  double loss(std::span<const int> ids) const {
    std::vector<double> losses(ids.size());
    parallel_for(static_cast<int>(ids.size()), config_.threads, [&](int b) {
      losses[b] = mse_loss(net_.forward(inputs_.at(ids[b]), nt_), targets_[ids[b]]).loss;
    });
    double mean = 0;
    for (double l : losses) mean += l;
    return ids.empty() ? std::numeric_limits<double>::quiet_NaN() : mean / static_cast<double>(ids.size());
  }

  EpochLoss run_epoch() {
    ++epoch_;
    std::vector<int> order = train_ids_;
    std::mt19937_64 rng(mix_seed(config_.seed, 1 + static_cast<std::uint64_t>(epoch_)));
    shuffle_indices(order, rng);
    double total = 0;
    for (std::size_t b = 0; b < order.size(); b += config_.batch_size) {
      const std::size_t e = std::min(order.size(), b + config_.batch_size);
      const std::span<const int> batch(order.data() + b, e - b);
      total += train_batch(batch) * static_cast<double>(batch.size());
    }
    EpochLoss r;
    r.epoch = epoch_;
    r.train_loss = total / static_cast<double>(order.size());
    r.val_loss = loss(val_ids_);
    return r;
  }

  Checkpoint checkpoint() const {
    Checkpoint c;
    c.network = net_.config();
    c.normalizer = normalizer_;
    c.params.assign(net_.params().begin(), net_.params().end());
    c.adam = adam_;
    c.training = {{"config", config_.to_json()}, {"epoch", epoch_}, {"nt", nt_}};
    return c;
  }

 private:
  static NetworkConfig network_config(const Dataset& d, const TrainConfig& c) {
    NetworkConfig n = c.network;
    n.grid = d.grid;
    return n;
  }

  TrainConfig config_;
  Network<float> net_;
  Normalizer normalizer_;
  int grid_ = 0, nt_ = 0, epoch_ = 0;
  std::vector<std::vector<float>> inputs_;
  std::vector<MatrixC<float>> targets_;
  std::vector<int> train_ids_, val_ids_;
  AdamState adam_;
  std::vector<AlignedVector<float>> sample_grads_;
  AlignedVector<float> grad_;
};

inline std::string format_loss(double v) {
  if (std::isnan(v)) return "nan";
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.9g", v);
  return buf;
}

inline std::string loss_csv(const std::vector<EpochLoss>& history) {
  std::string s = "epoch,train_loss,val_loss\n";
  for (const auto& e : history)
    s += std::to_string(e.epoch) + "," + format_loss(e.train_loss) + "," + format_loss(e.val_loss) + "\n";
  return s;
}

struct TrainOutputs {
  std::filesystem::path checkpoint;
  std::filesystem::path loss_csv;  // empty: not written
};

struct TrainResult {
  std::vector<EpochLoss> history;
  std::vector<int> train_ids, val_ids;
};

// Runs config.epochs epochs and writes the checkpoint and loss CSV. On a
// non-finite loss or gradient the last good state is saved and TrainingError
// is raised.
inline TrainResult train(const Dataset& d, const TrainConfig& config, const TrainOutputs& out,
                         const std::function<void(const EpochLoss&)>& on_epoch = {}) {
  Trainer tr(d, config);
  TrainResult result{{}, tr.train_ids(), tr.val_ids()};
  auto write = [&] {
    save_checkpoint(out.checkpoint, tr.checkpoint());
    if (!out.loss_csv.empty()) io::write_text_file(out.loss_csv, loss_csv(result.history));
  };
  for (int e = 1; e <= config.epochs; ++e) {
    EpochLoss loss;
    try {
      loss = tr.run_epoch();
      if (!tr.val_ids().empty() && !std::isfinite(loss.val_loss))
        throw TrainingError("non-finite validation loss");
    } catch (const TrainingError& err) {
      write();
      throw TrainingError("training diverged in epoch " + std::to_string(e) + ": " + err.what() +
                          "; last good state saved to '" + out.checkpoint.string() + "'");
    }
    result.history.push_back(loss);
    if (on_epoch) on_epoch(loss);
    if (config.checkpoint_every > 0 && e % config.checkpoint_every == 0 && e < config.epochs) write();
  }
  write();
  return result;
}

inline TrainResult train(const std::filesystem::path& dataset_path, const TrainConfig& config,
                         const TrainOutputs& out, const std::function<void(const EpochLoss&)>& on_epoch = {}) {
  return train(read_dataset(dataset_path), config, out, on_epoch);
}

}  // namespace heatinv

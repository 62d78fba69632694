#pragma once

// Checkpoint file: the shared length-prefixed JSON header followed by float32
// blocks "params" and, when optimizer state is saved, "adam_m" and "adam_v",
// each in tensor declaration order.

#include <cstdint>
#include <filesystem>
#include <optional>
#include <vector>

#include "heatinv/binary_io.hpp"
#include "heatinv/network.hpp"
#include "heatinv/normalizer.hpp"

namespace heatinv {

struct AdamState {
  std::int64_t step = 0;
  std::vector<float> m, v;

  void reset(std::size_t n) {
    step = 0;
    m.assign(n, 0.0f);
    v.assign(n, 0.0f);
  }
};

struct Checkpoint {
  NetworkConfig network;
  Normalizer normalizer;
  std::vector<float> params;
  std::optional<AdamState> adam;
  nlohmann::json training;  // free-form: train config, epoch, seed
};

inline void save_checkpoint(const std::filesystem::path& path, const Checkpoint& c) {
  const Network<float> layout(c.network);
  if (c.params.size() != layout.param_count())
    throw DimensionError("checkpoint: parameter count does not match the network config");
  if (c.adam && (c.adam->m.size() != c.params.size() || c.adam->v.size() != c.params.size()))
    throw DimensionError("checkpoint: optimizer moments do not match the parameter count");
  io::json tensors = io::json::array();
  for (const auto& t : layout.tensors()) tensors.push_back({{"name", t.name}, {"shape", t.shape}, {"count", t.count}});
  io::json header = {{"format", "heatinv-checkpoint"},
                     {"version", 1},
                     {"network", c.network.to_json()},
                     {"normalizer", c.normalizer.to_json()},
                     {"param_count", c.params.size()},
                     {"tensors", tensors},
                     {"training", c.training.is_null() ? io::json::object() : c.training}};
  if (c.adam) {
    header["arrays"] = {"params", "adam_m", "adam_v"};
    header["optimizer"] = {{"name", "adam"}, {"step", c.adam->step}};
  } else {
    header["arrays"] = {"params"};
  }
  io::write_atomically(path, [&](io::BinaryWriter& w) {
    w.header(header);
    w.floats<float>(c.params);
    if (c.adam) {
      w.floats<float>(c.adam->m);
      w.floats<float>(c.adam->v);
    }
  });
}

inline Checkpoint load_checkpoint(const std::filesystem::path& path) {
  if (!std::filesystem::exists(path)) throw IoError("checkpoint '" + path.string() + "' does not exist");
  io::BinaryReader r(path);
  const io::json header = r.header();
  Checkpoint c;
  try {
    if (header.at("format") != "heatinv-checkpoint")
      throw IoError("'" + path.string() + "' is not a checkpoint file");
    c.network = NetworkConfig::from_json(header.at("network"));
    c.normalizer = Normalizer::from_json(header.at("normalizer"));
    c.training = header.value("training", io::json::object());
    const Network<float> layout(c.network);
    const auto& tensors = header.at("tensors");
    if (tensors.size() != layout.tensors().size()) throw IoError("checkpoint tensor list does not match its network");
    for (std::size_t i = 0; i < tensors.size(); ++i) {
      const auto& t = layout.tensors()[i];
      if (tensors[i].at("name") != t.name || tensors[i].at("shape").get<std::vector<int>>() != t.shape)
        throw IoError("checkpoint tensor '" + tensors[i].at("name").get<std::string>() + "' does not match the layout");
    }
    c.params.resize(layout.param_count());
    r.floats<float>(c.params);
    if (header.contains("optimizer")) {
      AdamState a;
      a.step = header.at("optimizer").at("step").get<std::int64_t>();
      a.m.resize(c.params.size());
      a.v.resize(c.params.size());
      r.floats<float>(a.m);
      r.floats<float>(a.v);
      c.adam = std::move(a);
    }
  } catch (const io::json::exception& e) {
    throw IoError("malformed checkpoint header in '" + path.string() + "': " + e.what());
  }
  if (!r.at_end()) throw IoError("trailing bytes in checkpoint '" + path.string() + "'");
  return c;
}

// Network with the checkpoint's parameters.
inline Network<float> network_from(const Checkpoint& c) {
  Network<float> net(c.network);
  std::copy(c.params.begin(), c.params.end(), net.params().begin());
  return net;
}

}  // namespace heatinv

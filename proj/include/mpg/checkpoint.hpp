#pragma once

#include <cstdint>
#include <fstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "mpg/nn.hpp"

namespace mpg {

struct CheckpointError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Parameter checkpoint: a JSON header describing named networks and their
/// layer shapes plus the iteration counter, followed by every parameter as a
/// flat, ordered list of 64-bit little-endian reals.
///
/// File layout: 8-byte little-endian header length, the UTF-8 JSON header,
/// then the payload doubles in header order (layers in listed order, each
/// matrix in column-major element order).
struct Checkpoint {
  long iteration = 0;
  std::vector<std::pair<std::string, std::vector<Mat>>> entries;

  void add(const std::string& name, const std::vector<Mat>& layers) {
    entries.emplace_back(name, layers);
  }
};

inline void save_checkpoint(const std::string& path, const Checkpoint& ck) {
  nlohmann::json header;
  header["format"] = "mpg-checkpoint-v1";
  header["iteration"] = ck.iteration;
  header["networks"] = nlohmann::json::array();
  for (const auto& [name, layers] : ck.entries) {
    nlohmann::json net;
    net["name"] = name;
    net["layers"] = nlohmann::json::array();
    for (const auto& l : layers)
      net["layers"].push_back({l.rows(), l.cols()});
    header["networks"].push_back(net);
  }
  std::string hs = header.dump();
  std::ofstream f(path, std::ios::binary);
  if (!f) throw CheckpointError("save_checkpoint: cannot open " + path);
  std::uint64_t len = hs.size();
  f.write(reinterpret_cast<const char*>(&len), sizeof(len));
  f.write(hs.data(), static_cast<std::streamsize>(hs.size()));
  for (const auto& [name, layers] : ck.entries) {
    for (const auto& l : layers) {
      f.write(reinterpret_cast<const char*>(l.data()),
              static_cast<std::streamsize>(sizeof(double) * l.size()));
    }
  }
  if (!f) throw CheckpointError("save_checkpoint: write failed for " + path);
}

inline Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw CheckpointError("load_checkpoint: cannot open " + path);
  std::uint64_t len = 0;
  f.read(reinterpret_cast<char*>(&len), sizeof(len));
  std::string hs(len, '\0');
  f.read(hs.data(), static_cast<std::streamsize>(len));
  if (!f) throw CheckpointError("load_checkpoint: truncated header");
  nlohmann::json header = nlohmann::json::parse(hs);
  if (header.value("format", "") != "mpg-checkpoint-v1")
    throw CheckpointError("load_checkpoint: unknown format");
  Checkpoint ck;
  ck.iteration = header.at("iteration").get<long>();
  for (const auto& net : header.at("networks")) {
    std::vector<Mat> layers;
    for (const auto& shape : net.at("layers")) {
      Eigen::Index r = shape.at(0).get<Eigen::Index>();
      Eigen::Index c = shape.at(1).get<Eigen::Index>();
      Mat m(r, c);
      f.read(reinterpret_cast<char*>(m.data()),
             static_cast<std::streamsize>(sizeof(double) * m.size()));
      layers.push_back(std::move(m));
    }
    if (!f) throw CheckpointError("load_checkpoint: truncated payload");
    ck.entries.emplace_back(net.at("name").get<std::string>(),
                            std::move(layers));
  }
  return ck;
}

/// Copies stored layers into an existing network, shape-checked.
inline void restore_layers(const Checkpoint& ck, const std::string& name,
                           std::vector<Mat>& layers) {
  for (const auto& [n, stored] : ck.entries) {
    if (n != name) continue;
    if (stored.size() != layers.size())
      throw CheckpointError("restore_layers: layer count mismatch for " + name);
    for (size_t i = 0; i < layers.size(); ++i) {
      if (stored[i].rows() != layers[i].rows() ||
          stored[i].cols() != layers[i].cols())
        throw CheckpointError("restore_layers: shape mismatch for " + name);
      layers[i] = stored[i];
    }
    return;
  }
  throw CheckpointError("restore_layers: no network named " + name);
}

}  // namespace mpg

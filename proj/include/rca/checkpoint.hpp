#pragma once

#include <fstream>
#include <map>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "json.hpp"
#include "rca/tensor.hpp"

namespace rca {

inline constexpr int kCheckpointFormatVersion = 1;

/// Serializes named tensors as {format_version, params:[{name, shape, data}]}.
/// Doubles survive the round trip bit-exactly (shortest round-trip printing).
inline nlohmann::json checkpoint_to_json(
    const std::vector<std::pair<std::string, Tensor>>& params,
    const nlohmann::json& meta = nlohmann::json::object()) {
  nlohmann::json j;
  j["format_version"] = kCheckpointFormatVersion;
  j["meta"] = meta;
  auto arr = nlohmann::json::array();
  for (const auto& [name, t] : params) {
    nlohmann::json p;
    p["name"] = name;
    p["shape"] = t.shape();
    p["data"] = t.vec();
    arr.push_back(std::move(p));
  }
  j["params"] = std::move(arr);
  return j;
}

struct Checkpoint {
  std::map<std::string, Tensor> params;
  nlohmann::json meta;
};

inline Checkpoint checkpoint_from_json(const nlohmann::json& j) {
  if (!j.contains("format_version") ||
      j.at("format_version").get<int>() != kCheckpointFormatVersion) {
    throw std::runtime_error("checkpoint: unsupported or missing format_version");
  }
  Checkpoint ck;
  ck.meta = j.value("meta", nlohmann::json::object());
  for (const auto& p : j.at("params")) {
    const auto name = p.at("name").get<std::string>();
    auto shape = p.at("shape").get<std::vector<std::size_t>>();
    auto data = p.at("data").get<std::vector<double>>();
    ck.params.emplace(name, Tensor(std::move(shape), std::move(data)));
  }
  return ck;
}

inline void save_checkpoint(const std::string& path,
                            const std::vector<std::pair<std::string, Tensor>>& params,
                            const nlohmann::json& meta = nlohmann::json::object()) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("checkpoint: cannot open " + path + " for writing");
  out << checkpoint_to_json(params, meta).dump(2) << '\n';
}

inline Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("checkpoint: cannot open " + path);
  nlohmann::json j;
  in >> j;
  return checkpoint_from_json(j);
}

}  // namespace rca

#pragma once

// Parameter checkpoints: JSON text with a versioned header, the named-slice manifest and the
// flat value array in slice order.
//
//   {"format": "resopt-params", "version": 1,
//    "architecture": {...},
//    "slices": [{"name": "w0", "offset": 0, "rows": 11, "cols": 2}, ...],
//    "values": [ ... ]}

#include <fstream>
#include <stdexcept>
#include <string>

#include <json.hpp>

#include "resopt/autodiff.hpp"

namespace resopt {

inline constexpr int kCheckpointVersion = 1;

inline nlohmann::json params_to_json(const ad::ParamStore& store, const nlohmann::json& architecture = {}) {
  nlohmann::json j;
  j["format"] = "resopt-params";
  j["version"] = kCheckpointVersion;
  j["architecture"] = architecture;
  auto& slices = j["slices"] = nlohmann::json::array();
  for (const auto& s : store.slices())
    slices.push_back({{"name", s.name}, {"offset", s.offset}, {"rows", s.rows}, {"cols", s.cols}});
  j["values"] = store.values();
  return j;
}

/// Loads values into a store whose slice layout must match the manifest exactly.
inline void params_from_json(ad::ParamStore& store, const nlohmann::json& j) {
  if (j.value("format", "") != "resopt-params") throw std::runtime_error("checkpoint: unknown format");
  if (j.value("version", 0) != kCheckpointVersion) throw std::runtime_error("checkpoint: unsupported version");
  const auto& slices = j.at("slices");
  if (slices.size() != store.slices().size()) throw std::runtime_error("checkpoint: slice count mismatch");
  for (std::size_t i = 0; i < slices.size(); ++i) {
    const auto& s = store.slices()[i];
    if (slices[i].at("name") != s.name || slices[i].at("rows") != s.rows || slices[i].at("cols") != s.cols ||
        slices[i].at("offset") != s.offset)
      throw std::runtime_error("checkpoint: slice '" + s.name + "' does not match");
  }
  auto values = j.at("values").get<std::vector<double>>();
  if (values.size() != store.size()) throw std::runtime_error("checkpoint: value count mismatch");
  store.values() = std::move(values);
}

inline void write_json_file(const std::string& path, const nlohmann::json& j) {
  std::ofstream os(path);
  if (!os) throw std::runtime_error("cannot write " + path);
  os << j.dump(1) << '\n';
}

inline nlohmann::json read_json_file(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw std::runtime_error("cannot read " + path);
  return nlohmann::json::parse(is);
}

}  // namespace resopt

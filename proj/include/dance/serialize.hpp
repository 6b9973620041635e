#pragma once

#include <string>

#include <json.hpp>

#include "dance/hash.hpp"
#include "dance/model.hpp"

namespace dance {

using json = nlohmann::json;

inline json layer_to_json(const LayerSpec& l) {
  json j;
  j["kind"] = layer_kind_name(l.kind);
  switch (l.kind) {
    case LayerKind::conv2d:
      j["kernel"] = l.kernel;
      j["filters"] = l.filters;
      break;
    case LayerKind::maxpool2d:
      j["pool"] = l.pool;
      break;
    case LayerKind::dense:
      j["units"] = l.units;
      break;
    default:
      break;
  }
  return j;
}

inline LayerSpec layer_from_json(const json& j) {
  const std::string kind = j.at("kind").get<std::string>();
  if (kind == "conv2d") return LayerSpec::conv2d(j.at("kernel").get<int>(), j.at("filters").get<int>());
  if (kind == "relu") return LayerSpec::relu();
  if (kind == "maxpool2d") return LayerSpec::maxpool2d(j.at("pool").get<int>());
  if (kind == "flatten") return LayerSpec::flatten();
  if (kind == "dense") return LayerSpec::dense(j.at("units").get<int>());
  if (kind == "softmax") return LayerSpec::softmax();
  throw ConfigError("unknown layer kind '" + kind + "'");
}

inline json spec_to_json(const ModelSpec& spec) {
  json j;
  j["input_shape"] = spec.input_shape;
  j["classes"] = spec.classes;
  j["taps"] = spec.taps;
  j["layers"] = json::array();
  for (const LayerSpec& l : spec.layers) j["layers"].push_back(layer_to_json(l));
  return j;
}

inline ModelSpec spec_from_json(const json& j) {
  ModelSpec spec;
  spec.input_shape = j.at("input_shape").get<std::vector<int>>();
  spec.classes = j.at("classes").get<int>();
  spec.taps = j.at("taps").get<std::vector<int>>();
  for (const json& lj : j.at("layers")) spec.layers.push_back(layer_from_json(lj));
  validate_spec(spec);
  return spec;
}

// Canonical dump (nlohmann::json orders keys lexicographically) hashed for
// provenance fields.
inline std::string config_hash(const json& j) { return hash_hex(j.dump()); }

}  // namespace dance

#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <json.hpp>

#include "voxsync/oracle.hpp"
#include "voxsync/retrieval.hpp"
#include "voxsync/training.hpp"

namespace voxsync {

/// Every tunable of a run. Serialized as one JSON document whose layout is
/// fixed by to_json(); loading rejects keys that layout does not contain.
struct Config {
  std::uint64_t seed = 1;

  // corpus
  int corpus_scenes = 10;
  double duplicate_fraction = 0.3;
  SceneSpec scene;
  CameraRig rig;

  // grid
  int resolution = 32;
  double theta = 0.01;
  int directions = 6;

  // model (feature_dim lives in scene.feature_dim)
  int hidden_dim = 32;
  double init_noise = 1e-3;

  // training
  TrainConfig train;
  int eval_samples = kEvalSamples;

  // retrieval / evaluation
  RetrievalConfig retrieval;
  int dup_pairs = 300;

  // gradient check
  double gradcheck_h = 1e-5;
  double gradcheck_tolerance = 1e-6;
  double gradcheck_composed_tolerance = 1e-5;
  std::vector<std::string> gradcheck_components;

  int feature_dim() const { return scene.feature_dim; }

  /// Throws ConfigError describing the first out-of-range field.
  void validate() const;

  nlohmann::json to_json() const;
  /// Strict: unknown keys and type mismatches are ConfigErrors. Missing keys keep defaults.
  static Config from_json(const nlohmann::json& j);
};

/// Applies "a.b.c=value" overrides to a JSON document. The value is parsed as
/// JSON when possible and taken as a string otherwise.
void apply_override(nlohmann::json& doc, const std::string& assignment);

/// Reads the optional config file, applies overrides, then parses and validates.
Config load_config(const std::string& path, const std::vector<std::string>& overrides);

}  // namespace voxsync

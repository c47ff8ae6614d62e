#pragma once

// Run configuration: one JSON document with sections rig, tokenizer,
// partition, attention, blocks and run. Unknown keys are rejected.

#include <cstdint>
#include <filesystem>
#include <string>

#include <json.hpp>

#include "unitr/backbone.hpp"
#include "unitr/geometry.hpp"
#include "unitr/weights.hpp"

namespace unitr::harness {

struct SceneParams {
  std::int64_t points = 12000;
  int boxes = 16;
  double ground_z = -1.8;
  double min_radius = 2.0;   // sampling annulus around the sensor, meters
  double max_radius = 45.0;
};

struct Config {
  RingRigParams rig;
  BackboneConfig backbone;
  ModelDims model;  // layers is derived from the block sequence
  InitOptions init;
  SceneParams scene;
  std::uint64_t seed = 0;
  bool serial = false;
  std::string table_cache;  // empty: build in memory

  nlohmann::ordered_json to_json() const;
  // FNV-1a of the canonical JSON dump.
  std::uint64_t hash() const;
};

Config default_config();

// Settings applied on top of the defaults; missing keys keep default values.
Config parse_config(const nlohmann::json& doc);

// "default" selects the built-in configuration, anything else is a path.
Config load_config(const std::string& name_or_path);

// Comma-separated block kinds, e.g. "intra,inter3D,inter2D,inter2D".
std::vector<BlockKind> parse_block_list(const std::string& list);

// Keeps model.layers and model.patch consistent with the block settings.
void sync_model(Config& config);

}  // namespace unitr::harness

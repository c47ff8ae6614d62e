#pragma once

// End-to-end runs over a synthetic scene and the files they produce.

#include <filesystem>
#include <string>

#include <json.hpp>

#include "unitr/backbone.hpp"
#include "unitr/harness/config.hpp"
#include "unitr/harness/scene.hpp"

namespace unitr::harness {

PseudoDepthTable make_table(const Config& config, const CameraRig& rig);

// Token dump of one block output.
TensorContainer tokens_to_container(const TokenSequence& tokens);

struct RunOutput {
  BackboneResult result;
  nlohmann::ordered_json manifest;
  nlohmann::ordered_json timings;
};

// Generates the configured scene, runs the backbone and, when `out` is not
// empty, writes bev.utr, manifest.json and timings.json (plus
// block_<i>.utr token dumps if requested).
RunOutput run_pipeline(const Config& config, const std::filesystem::path& out, bool dump_intermediate = false);

// Partition statistics of every configured block, computed from token
// coordinates alone (attention never moves tokens).
nlohmann::ordered_json block_statistics(const Config& config);

nlohmann::ordered_json stats_to_json(const PartitionStats& stats);

void write_text(const std::filesystem::path& path, const std::string& text);

}  // namespace unitr::harness

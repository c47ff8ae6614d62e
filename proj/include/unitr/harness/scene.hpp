#pragma once

// Seeded synthetic driving scene: ground plane plus box obstacles around a
// ring camera rig, with procedural images that carry markers at the true
// projections of the lidar points.

#include <cstdint>
#include <filesystem>
#include <optional>
#include <vector>

#include "unitr/geometry.hpp"
#include "unitr/harness/config.hpp"
#include "unitr/tokenizers.hpp"

namespace unitr::harness {

struct TruthRecord {
  std::int64_t point = 0;
  bool visible = false;
  int view = -1;
  double x = 0.0;
  double y = 0.0;
  double depth = 0.0;
};

struct SyntheticScene {
  std::uint64_t seed = 0;
  CameraRig rig;
  PointCloud cloud;
  ImageStack images;
  std::vector<TruthRecord> truth;  // one per point
};

// Written out loop by loop from the raw calibration numbers; does not call
// the geometry module.
std::optional<TruthRecord> reference_projection(const Eigen::Vector3d& point, const CameraRig& rig);

SyntheticScene generate_scene(std::uint64_t seed, const SceneParams& params, const RingRigParams& rig,
                              int point_extras = 1);

inline SyntheticScene generate_scene(const Config& config) {
  return generate_scene(config.seed, config.scene, config.rig, config.model.point_extras);
}

TensorContainer images_to_container(const ImageStack& images);
ImageStack images_from_container(const TensorContainer& container);

// cloud.bin, images.utr, truth.utr and rig.json under `dir`.
void save_scene(const SyntheticScene& scene, const std::filesystem::path& dir);

}  // namespace unitr::harness

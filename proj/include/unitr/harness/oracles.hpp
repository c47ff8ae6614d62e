#pragma once

// Brute-force references. They read raw weight tensors and calibration
// numbers element by element and share no numeric kernel with the engine.

#include <array>
#include <cstdint>
#include <optional>
#include <vector>

#include "unitr/backbone.hpp"

namespace unitr::harness {

struct DenseAttention {
  MatrixXdR outputs;                   // tau x C
  std::vector<double> probabilities;  // [head][query][key]
};

// Textbook per-head attention with an explicit tau x tau score matrix.
// `coords` are the window-relative PE inputs.
DenseAttention oracle_dense_attention(const MatrixXdR& features, const CoordMatrix& coords,
                                      const BackboneWeights& weights, int layer);

struct OraclePartition {
  std::vector<std::vector<std::int64_t>> sets;    // tau token indices each
  std::vector<std::vector<bool>> canonical;       // same shape as sets
  std::vector<std::array<std::int64_t, 3>> set_window;
};

OraclePartition oracle_partition(const std::vector<std::array<double, 3>>& coords,
                                 const std::array<std::int64_t, 3>& window, std::int64_t tau, bool x_major);

// Linear scan over every stored point of the queried view; lowest index
// wins ties. Points are bucketed by view once, nothing else is indexed.
class ExhaustiveDepthScan {
 public:
  explicit ExhaustiveDepthScan(const PseudoDepthTable& table);
  std::optional<DepthHit> nearest(double x, double y, int view) const;

 private:
  struct Entry {
    double x, y, depth;
    std::int64_t index;
  };
  std::vector<std::vector<Entry>> views_;
};

std::optional<DepthHit> oracle_nearest(double x, double y, int view, const PseudoDepthTable& table);

// Pinhole inversion written from the raw matrices.
Eigen::Vector3d oracle_unproject(double x, double y, int view, double depth, const CameraRig& rig);

struct OracleBackbone {
  BevGrid bev;
  std::uint64_t dispatches = 0;  // one per attention space per layer
};

// Whole pipeline with naive tokenizers, one dense-attention pass per set and
// one dispatch per modality (intra) or per fusion space (inter) per layer.
OracleBackbone oracle_serial_backbone(const PointCloud& cloud, const ImageStack& images, const CameraRig& rig,
                                      const BackboneWeights& weights, const BackboneConfig& config,
                                      const PseudoDepthTable& table);

}  // namespace unitr::harness

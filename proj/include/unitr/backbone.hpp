#pragma once

// UniTR block sequence: intra-modal blocks (modalities attended side by side
// in one fused dispatch), inter-modal blocks in camera perspective space and
// in 3D voxel space, and the final BEV pooling of lidar tokens.

#include <cstdint>
#include <functional>
#include <string_view>
#include <vector>

#include "unitr/attention.hpp"
#include "unitr/geometry.hpp"
#include "unitr/partition.hpp"
#include "unitr/tokenizers.hpp"
#include "unitr/weights.hpp"

namespace unitr {

enum class BlockKind { kIntra, kInter2D, kInter3D };

std::string_view to_string(BlockKind kind);
BlockKind parse_block_kind(std::string_view name);

struct BlockConfig {
  std::vector<BlockKind> sequence{BlockKind::kIntra, BlockKind::kInter2D, BlockKind::kInter2D, BlockKind::kInter3D};
  int layers_per_block = 2;  // alternating X-major / Y-major
  WindowSpec lidar_window{{30, 30, 1}, Space::kLidar3D};
  WindowSpec image_window{{30, 30, 1}, Space::kImage2D};
  std::int64_t tau = 90;
  bool offset_in_pixels = false;  // offset-MLP distance unit; patch-grid units by default

  int total_layers() const { return static_cast<int>(sequence.size()) * layers_per_block; }
};

void validate(const BlockConfig& config);

struct BackboneConfig {
  VoxelGrid grid;
  int patch = 8;
  GridShape pseudo_grid{360, 360, 20};
  BlockConfig blocks;
};

enum class ExecutionMode { kParallel, kSerial };

// Dispatches a run issues when both modalities are present.
std::uint64_t expected_dispatches(const BlockConfig& config, ExecutionMode mode);
std::uint64_t expected_block_dispatches(BlockKind kind, int layers, ExecutionMode mode);

// One attention space of a block: which tokens take part, where they sit in
// that space, and the X-/Y-major partitions over them.
struct SpacePlan {
  WindowSpec window;
  std::vector<std::int64_t> members;  // token indices into the block input
  CoordMatrix coords;                 // member coordinates in this space
  CoordMatrix relative;               // window-relative PE input
  SetPartition x_major;
  SetPartition y_major;

  const SetPartition& partition(InnerOrder order) const { return order == InnerOrder::kXMajor ? x_major : y_major; }
};

struct BlockPlan {
  BlockKind kind = BlockKind::kIntra;
  std::vector<SpacePlan> spaces;          // intra: {lidar, image}; inter: {merged}
  std::vector<std::int64_t> passthrough;  // tokens left untouched by this block
  // inter3D only, aligned with spaces[0].members: offset-MLP input per member
  // (NaN for lidar members).
  std::vector<double> offset_distance;
};

BlockPlan plan_intra(const TokenSequence& tokens, const BackboneConfig& config);
BlockPlan plan_inter_2d(const TokenSequence& tokens, const CameraRig& rig, const BackboneConfig& config);
BlockPlan plan_inter_3d(const TokenSequence& tokens, const PseudoDepthTable& table, const CameraRig& rig,
                        const BackboneConfig& config);

// Sets in `plan` (both orders) holding tokens of both modalities.
std::int64_t mixed_modality_sets(const BlockPlan& plan, const TokenSequence& tokens);

// offset-MLP(distance) as a 1 x C row.
MatrixXdR offset_features(double distance, const BackboneWeights& weights);

struct BlockReport {
  BlockKind kind = BlockKind::kIntra;
  int first_layer = 0;
  std::uint64_t dispatches = 0;
  std::vector<PartitionStats> partitions;  // X-major, one per space
  std::int64_t mixed_sets = 0;
  std::int64_t passthrough = 0;
  double millis = 0.0;
};

// Executes a planned block. Token coordinates, count and modality tags are
// unchanged; passthrough tokens are copied bit for bit.
TokenSequence execute_block(const TokenSequence& tokens, const BlockPlan& plan, const BackboneWeights& weights,
                            const BackboneConfig& config, int first_layer, ExecutionMode mode,
                            DispatchCounter& counter, BlockReport* report = nullptr);

TokenSequence intra_modal_block(const TokenSequence& tokens, const BackboneWeights& weights,
                                const BackboneConfig& config, int first_layer, ExecutionMode mode,
                                DispatchCounter& counter);
TokenSequence inter_modal_block_2d(const TokenSequence& tokens, const CameraRig& rig, const BackboneWeights& weights,
                                   const BackboneConfig& config, int first_layer, DispatchCounter& counter);
TokenSequence inter_modal_block_3d(const TokenSequence& tokens, const PseudoDepthTable& table, const CameraRig& rig,
                                   const BackboneWeights& weights, const BackboneConfig& config, int first_layer,
                                   DispatchCounter& counter);

struct BevGrid {
  std::int64_t size_x = 0;
  std::int64_t size_y = 0;
  std::int64_t channels = 0;
  double cell_x = 0.0;
  double cell_y = 0.0;
  double origin_x = 0.0;
  double origin_y = 0.0;
  std::vector<double> features;        // size_x x size_y x channels
  std::vector<std::uint8_t> occupied;  // size_x x size_y

  std::int64_t occupied_count() const;
  const double* cell(std::int64_t x, std::int64_t y) const {
    return features.data() + (x * size_y + y) * channels;
  }
  TensorContainer to_container() const;
};

// Scatters each lidar token into its (x, y) cell. Throws DuplicateCell when
// two lidar tokens share a cell.
BevGrid bev_pool(const TokenSequence& tokens, const VoxelGrid& grid, std::int64_t channels);

struct BackboneResult {
  BevGrid bev;
  std::vector<BlockReport> blocks;
  std::uint64_t dispatches = 0;
  std::int64_t lidar_tokens = 0;
  std::int64_t image_tokens = 0;
};

using BlockObserver = std::function<void(std::size_t block, const BlockPlan& plan, const TokenSequence& output)>;

BackboneResult run_backbone_tokens(const TokenSequence& tokens, const CameraRig& rig, const BackboneWeights& weights,
                                   const BackboneConfig& config, const PseudoDepthTable& table, ExecutionMode mode,
                                   const BlockObserver& observer = {});

// Tokenize, run the configured blocks, pool to BEV.
BackboneResult run_backbone(const PointCloud& cloud, const ImageStack& images, const CameraRig& rig,
                            const BackboneWeights& weights, const BackboneConfig& config,
                            const PseudoDepthTable& table, ExecutionMode mode = ExecutionMode::kParallel,
                            const BlockObserver& observer = {});

TokenSequence tokenize(const PointCloud& cloud, const ImageStack& images, const BackboneWeights& weights,
                       const BackboneConfig& config);

}  // namespace unitr

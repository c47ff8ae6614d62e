#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "unitr/common.hpp"
#include "unitr/geometry.hpp"
#include "unitr/weights.hpp"

namespace unitr {

// Points as rows of (x, y, z, extras...) in meters.
struct PointCloud {
  int extras = 1;
  std::vector<float> values;

  std::size_t stride() const { return 3 + static_cast<std::size_t>(extras); }
  std::size_t size() const { return values.size() / stride(); }
  std::span<const float> point(std::size_t i) const { return {values.data() + i * stride(), stride()}; }
  void add(float x, float y, float z, std::span<const float> extra_values);

  // Flat little-endian f32 records, (3 + extras) floats each.
  static PointCloud read_binary(const std::filesystem::path& path, int extras);
  void write_binary(const std::filesystem::path& path) const;
};

// B x H x W x 3 RGB in [0, 1].
struct ImageStack {
  int views = 0;
  int height = 0;
  int width = 0;
  std::vector<float> pixels;

  ImageStack() = default;
  ImageStack(int b, int h, int w) : views(b), height(h), width(w), pixels(static_cast<std::size_t>(b) * h * w * 3, 0.f) {}

  std::size_t offset(int b, int y, int x) const {
    return ((static_cast<std::size_t>(b) * height + y) * width + x) * 3;
  }
  float& at(int b, int y, int x, int c) { return pixels[offset(b, y, x) + static_cast<std::size_t>(c)]; }
  float at(int b, int y, int x, int c) const { return pixels[offset(b, y, x) + static_cast<std::size_t>(c)]; }
};

enum class Modality : std::uint8_t { kLidar = 0, kImage = 1 };

// Sparse tokens of either modality. Lidar coords are integer voxel indices
// (x, y, z); image coords are (patch column, patch row, view id).
struct TokenSequence {
  MatrixXdR features;
  CoordMatrix coords;
  std::vector<Modality> modality;
  std::vector<std::int64_t> bev_cell;  // x * G_y + y for lidar tokens, -1 for image tokens

  std::int64_t size() const { return static_cast<std::int64_t>(coords.rows()); }
  std::int64_t count(Modality m) const;
};

// Row counts agree, image view ids are in [0, views), no two lidar tokens
// share a voxel. Throws ShapeMismatch / InvalidArgument.
void validate(const TokenSequence& tokens, int views);

// Lidar tokens followed by image tokens.
TokenSequence concat_tokens(const TokenSequence& lidar, const TokenSequence& image);

struct VoxelGrid {
  Eigen::Vector3d voxel_size{0.3, 0.3, 8.0};
  Box3 range{Eigen::Vector3d(-54.0, -54.0, -5.0), Eigen::Vector3d(54.0, 54.0, 3.0)};

  std::array<std::int64_t, 3> dims() const;
  Eigen::Vector3d voxel_center(const Eigen::Vector3d& index) const;
  // Continuous voxel-grid coordinate of a metric point.
  Eigen::Vector3d to_grid(const Eigen::Vector3d& point) const;
};

// One-layer dynamic VFE: each in-range point is embedded from (point - voxel
// center, extras) by a shared linear layer, then reduced per voxel by
// element-wise max. Tokens are ordered by (z, y, x) voxel index. Throws
// EmptyCloud when no point falls in range.
TokenSequence voxelize(const PointCloud& cloud, const VoxelGrid& grid, const BackboneWeights& weights);

// Non-overlapping p x p patches, raw RGB flattened (row, column, channel) and
// linearly embedded. Tokens are ordered (view, patch row, patch column).
// Throws BadShape when H or W is not divisible by p.
TokenSequence patchify(const ImageStack& images, int patch, const BackboneWeights& weights);

// Raw p*p*3 patch vector of one token, the inverse view used by tests.
std::vector<float> patch_pixels(const ImageStack& images, int patch, int view, int patch_row, int patch_col);

}  // namespace unitr

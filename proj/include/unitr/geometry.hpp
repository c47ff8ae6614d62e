#pragma once

// Camera rig, LiDAR->camera first-hit projection, pseudo depth table and
// camera->3D unprojection.
//
// Conventions: world frame is the LiDAR frame (meters). Extrinsics map
// world -> camera; the camera looks down +z. Pixels are (x = column,
// y = row) with the origin at the top-left image corner.

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <vector>

#include <Eigen/Dense>

#include "unitr/tensor_container.hpp"

namespace unitr {

// Projections with camera-frame depth at or below this are rejected.
inline constexpr double kMinDepth = 1e-6;

struct ImageSize {
  int height = 256;
  int width = 704;

  friend bool operator==(const ImageSize&, const ImageSize&) = default;
};

struct CameraView {
  Eigen::Matrix3d intrinsics = Eigen::Matrix3d::Identity();
  Eigen::Matrix4d extrinsics = Eigen::Matrix4d::Identity();  // world -> camera
  ImageSize image_size;

  Eigen::Matrix3d rotation() const { return extrinsics.topLeftCorner<3, 3>(); }
  Eigen::Vector3d translation() const { return extrinsics.topRightCorner<3, 1>(); }
};

struct RingRigParams {
  int views = 6;
  ImageSize image_size;
  double horizontal_fov_deg = 70.0;
  double mount_radius = 0.5;  // camera centers on a circle around the LiDAR
  double mount_height = 0.0;
};

class CameraRig {
 public:
  // Validates focal lengths and that every extrinsic is a proper rigid transform.
  explicit CameraRig(std::vector<CameraView> views);

  // B cameras evenly spaced in yaw, view 0 looking along +x.
  static CameraRig ring(const RingRigParams& params);

  std::size_t size() const { return views_.size(); }
  const CameraView& view(std::size_t b) const { return views_.at(b); }
  std::span<const CameraView> views() const { return views_; }

  // Stable hash of all calibration values; used to validate cached tables.
  std::uint64_t hash() const;

 private:
  std::vector<CameraView> views_;
};

struct ImagePlanePoint {
  double x = 0.0;
  double y = 0.0;
  int view = 0;
  double depth = 0.0;
};

// Projection into a single view; absent when behind the camera or outside
// the image.
std::optional<ImagePlanePoint> project_into_view(const Eigen::Vector3d& point, const CameraView& camera,
                                                 int view_id);

// Scans views in index order and returns the first one that sees the point.
std::optional<ImagePlanePoint> project_to_first_hit(const Eigen::Vector3d& point, const CameraRig& rig);

// World point at camera-frame depth `depth` along the ray through pixel (x, y) of `view`.
Eigen::Vector3d unproject(double x, double y, int view, double depth, const CameraRig& rig);

struct Box3 {
  Eigen::Vector3d min = Eigen::Vector3d::Zero();
  Eigen::Vector3d max = Eigen::Vector3d::Ones();

  Eigen::Vector3d extent() const { return max - min; }
};

using GridShape = std::array<std::int64_t, 3>;

struct DepthHit {
  double depth = 0.0;
  double planar_distance = 0.0;  // pixels
  std::int64_t point_index = -1;
};

// Projections of the cell centers of a fixed 3D grid into every view, with a
// per-view pixel-bucket index for nearest-neighbor depth lookup. Immutable
// after construction.
class PseudoDepthTable {
 public:
  struct Point {
    float x;
    float y;
    float depth;
    std::int32_t view;
  };

  static PseudoDepthTable build(const GridShape& shape, const Box3& range, const CameraRig& rig);

  const GridShape& grid_shape() const { return shape_; }
  const Box3& range() const { return range_; }
  std::uint64_t rig_hash() const { return rig_hash_; }
  std::size_t view_count() const { return views_.size(); }

  std::span<const Point> points() const { return points_; }
  std::size_t points_in_view(int view) const;

  // Views with no valid projections; those views cannot take part in 3D fusion.
  std::vector<int> empty_views() const;

  // Euclidean-nearest point in the same view; ties resolve to the lowest index.
  std::optional<DepthHit> nearest(double x, double y, int view) const;

  TensorContainer to_container() const;
  static PseudoDepthTable from_container(const TensorContainer& container, const CameraRig& rig);

  // True when a stored container was built for exactly these inputs.
  static bool header_matches(const TensorContainer& container, const GridShape& shape, const Box3& range,
                             const CameraRig& rig);

  // Loads `cache` if its header matches, otherwise builds and writes it.
  static PseudoDepthTable load_or_build(const std::filesystem::path& cache, const GridShape& shape,
                                        const Box3& range, const CameraRig& rig);

 private:
  struct ViewIndex {
    ImageSize image_size;
    int bucket_px = 16;
    int buckets_x = 0;
    int buckets_y = 0;
    std::vector<std::int64_t> offsets;  // CSR over buckets
    std::vector<std::int64_t> members;  // point indices, ascending within a bucket
    std::size_t count = 0;
  };

  void index_points(const CameraRig& rig);

  GridShape shape_{};
  Box3 range_;
  std::uint64_t rig_hash_ = 0;
  std::vector<Point> points_;
  std::vector<ViewIndex> views_;
};

std::optional<DepthHit> nearest_depth(double x, double y, int view, const PseudoDepthTable& table);

}  // namespace unitr

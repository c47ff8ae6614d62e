#include "unitr/geometry.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <limits>
#include <numbers>
#include <string>

#include "unitr/common.hpp"

namespace unitr {
namespace {

constexpr double kRigidTolerance = 1e-9;

void validate_view(const CameraView& v, std::size_t b) {
  const std::string where = "camera view " + std::to_string(b);
  const auto& k = v.intrinsics;
  if (!(k(0, 0) > 0.0) || !(k(1, 1) > 0.0))
    throw Error(ErrorCode::kInvalidArgument, where + ": focal lengths must be positive");
  if (k(1, 0) != 0.0 || k(2, 0) != 0.0 || k(2, 1) != 0.0 || k(2, 2) != 1.0)
    throw Error(ErrorCode::kInvalidArgument, where + ": intrinsics must be upper triangular with K(2,2) = 1");
  const Eigen::Matrix3d r = v.rotation();
  if (!((r * r.transpose() - Eigen::Matrix3d::Identity()).cwiseAbs().maxCoeff() <= kRigidTolerance))
    throw Error(ErrorCode::kInvalidArgument, where + ": extrinsic rotation is not orthonormal");
  if (!(std::abs(r.determinant() - 1.0) <= kRigidTolerance))
    throw Error(ErrorCode::kInvalidArgument, where + ": extrinsic rotation must have det = +1");
  if (v.extrinsics.row(3) != Eigen::RowVector4d(0, 0, 0, 1))
    throw Error(ErrorCode::kInvalidArgument, where + ": extrinsic bottom row must be (0, 0, 0, 1)");
  if (v.image_size.height <= 0 || v.image_size.width <= 0)
    throw Error(ErrorCode::kInvalidArgument, where + ": image size must be positive");
}

void hash_doubles(std::uint64_t& h, const double* data, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) {
    const auto bits = std::bit_cast<std::uint64_t>(data[i]);
    char raw[8];
    for (int b = 0; b < 8; ++b) raw[b] = static_cast<char>(bits >> (8 * b));
    h = fnv1a(std::string_view(raw, 8), h);
  }
}

}  // namespace

CameraRig::CameraRig(std::vector<CameraView> views) : views_(std::move(views)) {
  if (views_.empty()) throw Error(ErrorCode::kInvalidArgument, "camera rig needs at least one view");
  for (std::size_t b = 0; b < views_.size(); ++b) validate_view(views_[b], b);
}

CameraRig CameraRig::ring(const RingRigParams& p) {
  if (p.views < 1) throw Error(ErrorCode::kInvalidArgument, "ring rig needs at least one view");
  if (!(p.horizontal_fov_deg > 0.0 && p.horizontal_fov_deg < 180.0))
    throw Error(ErrorCode::kInvalidArgument, "ring rig field of view must be in (0, 180) degrees");
  const double half_w = 0.5 * p.image_size.width;
  const double focal = half_w / std::tan(0.5 * p.horizontal_fov_deg * std::numbers::pi / 180.0);
  std::vector<CameraView> views;
  for (int b = 0; b < p.views; ++b) {
    const double yaw = 2.0 * std::numbers::pi * b / p.views;
    const Eigen::Vector3d forward(std::cos(yaw), std::sin(yaw), 0.0);
    const Eigen::Vector3d right(std::sin(yaw), -std::cos(yaw), 0.0);
    const Eigen::Vector3d down(0.0, 0.0, -1.0);
    Eigen::Matrix3d r;
    r.row(0) = right.transpose();
    r.row(1) = down.transpose();
    r.row(2) = forward.transpose();
    const Eigen::Vector3d center = p.mount_radius * forward + Eigen::Vector3d(0.0, 0.0, p.mount_height);

    CameraView v;
    v.intrinsics << focal, 0.0, half_w, 0.0, focal, 0.5 * p.image_size.height, 0.0, 0.0, 1.0;
    v.extrinsics.setIdentity();
    v.extrinsics.topLeftCorner<3, 3>() = r;
    v.extrinsics.topRightCorner<3, 1>() = -r * center;
    v.image_size = p.image_size;
    views.push_back(v);
  }
  return CameraRig(std::move(views));
}

std::uint64_t CameraRig::hash() const {
  std::uint64_t h = fnv1a("unitr-rig");
  for (const auto& v : views_) {
    hash_doubles(h, v.intrinsics.data(), 9);
    hash_doubles(h, v.extrinsics.data(), 16);
    const double size[2] = {static_cast<double>(v.image_size.height), static_cast<double>(v.image_size.width)};
    hash_doubles(h, size, 2);
  }
  return h;
}

std::optional<ImagePlanePoint> project_into_view(const Eigen::Vector3d& point, const CameraView& camera,
                                                 int view_id) {
  const Eigen::Vector3d cam = camera.rotation() * point + camera.translation();
  if (!(cam.z() > kMinDepth)) return std::nullopt;
  const Eigen::Vector3d uvw = camera.intrinsics * cam;
  const double x = uvw.x() / uvw.z();
  const double y = uvw.y() / uvw.z();
  if (!(x >= 0.0 && x < camera.image_size.width && y >= 0.0 && y < camera.image_size.height)) return std::nullopt;
  return ImagePlanePoint{x, y, view_id, cam.z()};
}

std::optional<ImagePlanePoint> project_to_first_hit(const Eigen::Vector3d& point, const CameraRig& rig) {
  for (std::size_t b = 0; b < rig.size(); ++b) {
    if (auto hit = project_into_view(point, rig.view(b), static_cast<int>(b))) return hit;
  }
  return std::nullopt;
}

Eigen::Vector3d unproject(double x, double y, int view, double depth, const CameraRig& rig) {
  if (!(depth > 0.0)) throw Error(ErrorCode::kInvalidArgument, "unproject needs a positive depth");
  if (view < 0 || static_cast<std::size_t>(view) >= rig.size())
    throw Error(ErrorCode::kInvalidArgument, "unproject: view id out of range");
  const CameraView& cam = rig.view(static_cast<std::size_t>(view));
  const Eigen::Vector3d ray = cam.intrinsics.triangularView<Eigen::Upper>().solve(Eigen::Vector3d(x, y, 1.0));
  const Eigen::Vector3d in_camera = depth * ray;
  return cam.rotation().transpose() * (in_camera - cam.translation());
}

// ---------------------------------------------------------------------------
// PseudoDepthTable

PseudoDepthTable PseudoDepthTable::build(const GridShape& shape, const Box3& range, const CameraRig& rig) {
  for (auto s : shape)
    if (s <= 0) throw Error(ErrorCode::kInvalidArgument, "pseudo grid shape must be positive on every axis");
  if (!((range.max - range.min).minCoeff() > 0.0))
    throw Error(ErrorCode::kInvalidArgument, "pseudo grid range is degenerate");

  PseudoDepthTable table;
  table.shape_ = shape;
  table.range_ = range;
  table.rig_hash_ = rig.hash();

  const Eigen::Vector3d cell = range.extent().cwiseQuotient(
      Eigen::Vector3d(static_cast<double>(shape[0]), static_cast<double>(shape[1]), static_cast<double>(shape[2])));

  // Slabs along x are generated independently and concatenated in order.
  std::vector<std::vector<Point>> slabs(static_cast<std::size_t>(shape[0]));
  parallel_for(slabs.size(), [&](std::size_t begin, std::size_t end) {
    for (std::size_t ix = begin; ix < end; ++ix) {
      auto& slab = slabs[ix];
      for (std::int64_t iy = 0; iy < shape[1]; ++iy) {
        for (std::int64_t iz = 0; iz < shape[2]; ++iz) {
          const Eigen::Vector3d center =
              range.min + Eigen::Vector3d((static_cast<double>(ix) + 0.5) * cell.x(),
                                          (static_cast<double>(iy) + 0.5) * cell.y(),
                                          (static_cast<double>(iz) + 0.5) * cell.z());
          for (std::size_t b = 0; b < rig.size(); ++b) {
            const auto hit = project_into_view(center, rig.view(b), static_cast<int>(b));
            if (!hit) continue;
            const Point p{static_cast<float>(hit->x), static_cast<float>(hit->y), static_cast<float>(hit->depth),
                          static_cast<std::int32_t>(b)};
            // Float rounding can push a coordinate onto the far image edge.
            const auto& size = rig.view(b).image_size;
            if (!(p.x < size.width && p.y < size.height && p.depth > 0.0f)) continue;
            slab.push_back(p);
          }
        }
      }
    }
  });
  std::size_t total = 0;
  for (const auto& s : slabs) total += s.size();
  table.points_.reserve(total);
  for (auto& s : slabs) {
    table.points_.insert(table.points_.end(), s.begin(), s.end());
    std::vector<Point>().swap(s);
  }
  table.index_points(rig);
  return table;
}

void PseudoDepthTable::index_points(const CameraRig& rig) {
  views_.assign(rig.size(), ViewIndex{});
  for (std::size_t b = 0; b < rig.size(); ++b) {
    auto& v = views_[b];
    v.image_size = rig.view(b).image_size;
    v.buckets_x = (v.image_size.width + v.bucket_px - 1) / v.bucket_px;
    v.buckets_y = (v.image_size.height + v.bucket_px - 1) / v.bucket_px;
    v.offsets.assign(static_cast<std::size_t>(v.buckets_x) * v.buckets_y + 1, 0);
  }
  auto bucket_of = [&](const Point& p) {
    const auto& v = views_[static_cast<std::size_t>(p.view)];
    const int bx = std::clamp(static_cast<int>(std::floor(static_cast<double>(p.x) / v.bucket_px)), 0, v.buckets_x - 1);
    const int by = std::clamp(static_cast<int>(std::floor(static_cast<double>(p.y) / v.bucket_px)), 0, v.buckets_y - 1);
    return static_cast<std::size_t>(by) * v.buckets_x + bx;
  };
  for (const auto& p : points_) {
    if (p.view < 0 || static_cast<std::size_t>(p.view) >= views_.size())
      throw Error(ErrorCode::kIndexOutOfRange, "pseudo depth point references a missing view");
    auto& v = views_[static_cast<std::size_t>(p.view)];
    ++v.offsets[bucket_of(p) + 1];
    ++v.count;
  }
  for (auto& v : views_) {
    for (std::size_t i = 1; i < v.offsets.size(); ++i) v.offsets[i] += v.offsets[i - 1];
    v.members.assign(v.count, -1);
  }
  std::vector<std::vector<std::int64_t>> cursor(views_.size());
  for (std::size_t b = 0; b < views_.size(); ++b)
    cursor[b].assign(views_[b].offsets.begin(), views_[b].offsets.end() - 1);
  for (std::size_t i = 0; i < points_.size(); ++i) {
    const auto& p = points_[i];
    const auto vb = static_cast<std::size_t>(p.view);
    views_[vb].members[static_cast<std::size_t>(cursor[vb][bucket_of(p)]++)] = static_cast<std::int64_t>(i);
  }
}

std::size_t PseudoDepthTable::points_in_view(int view) const {
  if (view < 0 || static_cast<std::size_t>(view) >= views_.size())
    throw Error(ErrorCode::kInvalidArgument, "view id out of range for pseudo depth table");
  return views_[static_cast<std::size_t>(view)].count;
}

std::vector<int> PseudoDepthTable::empty_views() const {
  std::vector<int> out;
  for (std::size_t b = 0; b < views_.size(); ++b)
    if (views_[b].count == 0) out.push_back(static_cast<int>(b));
  return out;
}

std::optional<DepthHit> PseudoDepthTable::nearest(double x, double y, int view) const {
  if (view < 0 || static_cast<std::size_t>(view) >= views_.size())
    throw Error(ErrorCode::kInvalidArgument, "nearest_depth: view id out of range");
  const ViewIndex& v = views_[static_cast<std::size_t>(view)];
  if (v.count == 0) return std::nullopt;

  const double bs = v.bucket_px;
  const auto qbx = static_cast<std::int64_t>(std::floor(x / bs));
  const auto qby = static_cast<std::int64_t>(std::floor(y / bs));
  const std::int64_t max_ring =
      std::max({std::abs(qbx), std::abs(v.buckets_x - 1 - qbx), std::abs(qby), std::abs(v.buckets_y - 1 - qby)});

  double best_d2 = std::numeric_limits<double>::infinity();
  std::int64_t best = -1;
  auto visit = [&](std::int64_t bx, std::int64_t by) {
    if (bx < 0 || by < 0 || bx >= v.buckets_x || by >= v.buckets_y) return;
    const auto bucket = static_cast<std::size_t>(by * v.buckets_x + bx);
    for (auto k = v.offsets[bucket]; k < v.offsets[bucket + 1]; ++k) {
      const std::int64_t idx = v.members[static_cast<std::size_t>(k)];
      const Point& p = points_[static_cast<std::size_t>(idx)];
      const double dx = x - static_cast<double>(p.x);
      const double dy = y - static_cast<double>(p.y);
      const double d2 = dx * dx + dy * dy;
      if (d2 < best_d2 || (d2 == best_d2 && idx < best)) {
        best_d2 = d2;
        best = idx;
      }
    }
  };

  for (std::int64_t r = 0; r <= max_ring; ++r) {
    if (r == 0) {
      visit(qbx, qby);
    } else {
      for (std::int64_t bx = qbx - r; bx <= qbx + r; ++bx) {
        visit(bx, qby - r);
        visit(bx, qby + r);
      }
      for (std::int64_t by = qby - r + 1; by <= qby + r - 1; ++by) {
        visit(qbx - r, by);
        visit(qbx + r, by);
      }
    }
    // Every point beyond ring r is strictly farther than r bucket widths.
    const double reach = static_cast<double>(r) * bs;
    if (best >= 0 && best_d2 < reach * reach) break;
  }
  const Point& p = points_[static_cast<std::size_t>(best)];
  return DepthHit{static_cast<double>(p.depth), std::sqrt(best_d2), best};
}

std::optional<DepthHit> nearest_depth(double x, double y, int view, const PseudoDepthTable& table) {
  return table.nearest(x, y, view);
}

TensorContainer PseudoDepthTable::to_container() const {
  TensorContainer c;
  c.add(Tensor::i64("table.grid_shape", {3}, shape_));
  const double range[6] = {range_.min.x(), range_.min.y(), range_.min.z(),
                           range_.max.x(), range_.max.y(), range_.max.z()};
  c.add(Tensor::f32_from("table.range", {2, 3}, range));
  const std::int64_t hash[1] = {std::bit_cast<std::int64_t>(rig_hash_)};
  c.add(Tensor::i64("table.rig_hash", {1}, hash));

  std::vector<float> xyd;
  std::vector<std::int64_t> view;
  xyd.reserve(points_.size() * 3);
  view.reserve(points_.size());
  for (const auto& p : points_) {
    xyd.insert(xyd.end(), {p.x, p.y, p.depth});
    view.push_back(p.view);
  }
  const auto n = static_cast<std::int64_t>(points_.size());
  c.add(Tensor::f32("table.points", {n, 3}, xyd));
  c.add(Tensor::i64("table.views", {n}, view));
  return c;
}

bool PseudoDepthTable::header_matches(const TensorContainer& c, const GridShape& shape, const Box3& range,
                                      const CameraRig& rig) {
  if (!c.contains("table.grid_shape") || !c.contains("table.range") || !c.contains("table.rig_hash")) return false;
  const auto stored_shape = c.at("table.grid_shape").as_i64();
  if (stored_shape.size() != 3 || !std::equal(stored_shape.begin(), stored_shape.end(), shape.begin())) return false;
  const auto stored_range = c.at("table.range").as_f32();
  const double want[6] = {range.min.x(), range.min.y(), range.min.z(), range.max.x(), range.max.y(), range.max.z()};
  if (stored_range.size() != 6) return false;
  for (int i = 0; i < 6; ++i)
    if (stored_range[static_cast<std::size_t>(i)] != static_cast<float>(want[i])) return false;
  const auto stored_hash = c.at("table.rig_hash").as_i64();
  return stored_hash.size() == 1 && std::bit_cast<std::uint64_t>(stored_hash[0]) == rig.hash();
}

PseudoDepthTable PseudoDepthTable::from_container(const TensorContainer& c, const CameraRig& rig) {
  PseudoDepthTable t;
  const auto shape = c.at("table.grid_shape").as_i64();
  if (shape.size() != 3) throw Error(ErrorCode::kIo, "table.grid_shape must have 3 entries");
  std::copy(shape.begin(), shape.end(), t.shape_.begin());
  const auto range = c.at("table.range").as_f64();
  if (range.size() != 6) throw Error(ErrorCode::kIo, "table.range must have 6 entries");
  t.range_.min = Eigen::Vector3d(range[0], range[1], range[2]);
  t.range_.max = Eigen::Vector3d(range[3], range[4], range[5]);
  t.rig_hash_ = std::bit_cast<std::uint64_t>(c.at("table.rig_hash").as_i64().at(0));
  if (t.rig_hash_ != rig.hash()) throw Error(ErrorCode::kConfig, "pseudo depth table was built for a different rig");
  const auto xyd = c.at("table.points").as_f32();
  const auto views = c.at("table.views").as_i64();
  if (xyd.size() != views.size() * 3) throw Error(ErrorCode::kIo, "table.points / table.views size mismatch");
  t.points_.resize(views.size());
  for (std::size_t i = 0; i < views.size(); ++i)
    t.points_[i] = Point{xyd[3 * i], xyd[3 * i + 1], xyd[3 * i + 2], static_cast<std::int32_t>(views[i])};
  t.index_points(rig);
  return t;
}

PseudoDepthTable PseudoDepthTable::load_or_build(const std::filesystem::path& cache, const GridShape& shape,
                                                 const Box3& range, const CameraRig& rig) {
  if (std::filesystem::exists(cache)) {
    auto stored = TensorContainer::load(cache);
    if (header_matches(stored, shape, range, rig)) return from_container(stored, rig);
  }
  auto table = build(shape, range, rig);
  if (cache.has_parent_path()) std::filesystem::create_directories(cache.parent_path());
  table.to_container().save(cache);
  return table;
}

}  // namespace unitr

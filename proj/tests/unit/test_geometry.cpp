#include <doctest.h>

#include <cmath>
#include <numbers>

#include "unitr/geometry.hpp"
#include "unitr/harness/fixtures.hpp"
#include "unitr/harness/oracles.hpp"
#include "unitr/rng.hpp"

using namespace unitr;

namespace {

CameraRig identity_rig(ImageSize size = {16, 16}) {
  CameraView view;
  view.image_size = size;
  return CameraRig({view});
}

// Camera at `center` looking along world +x (camera z), y down.
CameraView facing_x(const Eigen::Vector3d& center, ImageSize size, double f) {
  Eigen::Matrix3d world_to_cam;
  world_to_cam << 0, -1, 0, 0, 0, -1, 1, 0, 0;
  CameraView v;
  v.image_size = size;
  v.intrinsics << f, 0, size.width / 2.0, 0, f, size.height / 2.0, 0, 0, 1;
  v.extrinsics.setIdentity();
  v.extrinsics.topLeftCorner<3, 3>() = world_to_cam;
  v.extrinsics.topRightCorner<3, 1>() = -world_to_cam * center;
  return v;
}

}  // namespace

TEST_CASE("pinhole identity projection") {
  const auto rig = identity_rig();
  const auto hit = project_to_first_hit({0, 0, 5}, rig);
  REQUIRE(hit);
  CHECK(hit->x == 0.0);
  CHECK(hit->y == 0.0);
  CHECK(hit->depth == 5.0);
  CHECK(hit->view == 0);

  const auto back = unproject(0.0, 0.0, 0, 5.0, rig);
  CHECK(back.isApprox(Eigen::Vector3d(0, 0, 5)));
}

TEST_CASE("points behind every camera are absent") {
  const auto rig = CameraRig::ring({});
  for (std::size_t b = 0; b < rig.size(); ++b) {
    // Two meters behind each camera's own center, on its optical axis.
    const auto& v = rig.view(b);
    const Eigen::Vector3d center = -v.rotation().transpose() * v.translation();
    const Eigen::Vector3d back_axis = -v.rotation().transpose().col(2);
    const Eigen::Vector3d p = center + 2.0 * back_axis;
    CHECK_FALSE(project_into_view(p, v, static_cast<int>(b)));
  }
  CHECK_FALSE(project_to_first_hit({0, 0, -5}, identity_rig()));
  CHECK_FALSE(project_to_first_hit({0, 0, 0}, identity_rig()));
}

TEST_CASE("first hit takes the lowest visible view") {
  const ImageSize size{32, 32};
  std::vector<CameraView> views;
  for (int b = 0; b < 6; ++b) views.push_back(facing_x({0, 0, 0}, size, 16.0));
  // Views 0, 2, 4, 5 look the other way.
  for (int b : {0, 2, 4, 5}) {
    views[b].extrinsics.topLeftCorner<3, 3>() = -views[b].extrinsics.topLeftCorner<3, 3>();
    views[b].extrinsics.topLeftCorner<1, 3>() *= -1.0;  // keep det = +1
  }
  const CameraRig rig(views);
  const auto hit = project_to_first_hit({10, 0, 0}, rig);
  REQUIRE(hit);
  CHECK(hit->view == 1);
  CHECK(project_into_view({10, 0, 0}, rig.view(3), 3));
}

TEST_CASE("rig rejects improper extrinsics") {
  CameraView v;
  v.extrinsics(0, 0) = -1.0;
  CHECK_THROWS_AS(CameraRig({v}), Error);
  CameraView z;
  z.intrinsics(0, 0) = 0.0;
  CHECK_THROWS_AS(CameraRig({z}), Error);
}

TEST_CASE("single cell table") {
  const ImageSize size{32, 32};
  const CameraRig rig({facing_x({0, 0, 0}, size, 16.0)});
  Box3 range{Eigen::Vector3d(4, -1, -1), Eigen::Vector3d(6, 1, 1)};
  const auto table = PseudoDepthTable::build({1, 1, 1}, range, rig);
  REQUIRE(table.points().size() == 1);
  CHECK(table.points()[0].depth == doctest::Approx(5.0));
  CHECK(table.points_in_view(0) == 1);

  const auto& p = table.points()[0];
  const auto hit = nearest_depth(p.x, p.y, 0, table);
  REQUIRE(hit);
  CHECK(hit->planar_distance == 0.0);
  CHECK(hit->depth == doctest::Approx(5.0));
}

TEST_CASE("table count matches brute-force projection") {
  Rng rng(21);
  const auto rig = harness::random_rig(rng, 2, {48, 64});
  const Box3 range{Eigen::Vector3d(-6, -6, -2), Eigen::Vector3d(6, 6, 2)};
  const GridShape shape{4, 4, 2};
  const auto table = PseudoDepthTable::build(shape, range, rig);

  std::size_t expected = 0;
  for (int ix = 0; ix < 4; ++ix)
    for (int iy = 0; iy < 4; ++iy)
      for (int iz = 0; iz < 2; ++iz) {
        const Eigen::Vector3d c = range.min + Eigen::Vector3d((ix + 0.5) * 3.0, (iy + 0.5) * 3.0, (iz + 0.5) * 2.0);
        for (std::size_t b = 0; b < rig.size(); ++b) {
          const auto& v = rig.view(b);
          const Eigen::Vector3d cam = v.rotation() * c + v.translation();
          if (cam.z() <= kMinDepth) continue;
          const Eigen::Vector3d uv = v.intrinsics * (cam / cam.z());
          if (uv.x() >= 0 && uv.x() < v.image_size.width && uv.y() >= 0 && uv.y() < v.image_size.height) ++expected;
        }
      }
  CHECK(table.points().size() == expected);
}

TEST_CASE("empty view has no depth") {
  const ImageSize size{32, 32};
  auto away = facing_x({0, 0, 0}, size, 16.0);
  away.extrinsics.topLeftCorner<3, 3>() = -away.extrinsics.topLeftCorner<3, 3>();
  away.extrinsics.topLeftCorner<1, 3>() *= -1.0;
  const CameraRig rig({facing_x({0, 0, 0}, size, 16.0), away});
  const Box3 range{Eigen::Vector3d(4, -1, -1), Eigen::Vector3d(6, 1, 1)};
  const auto table = PseudoDepthTable::build({2, 2, 2}, range, rig);
  CHECK(table.empty_views() == std::vector<int>{1});
  CHECK_FALSE(nearest_depth(16, 16, 1, table));
  CHECK(nearest_depth(16, 16, 0, table));
}

TEST_CASE("nearest depth matches exhaustive scan") {
  Rng rng(5);
  const auto rig = harness::random_rig(rng, 3, {64, 96});
  const Box3 range{Eigen::Vector3d(-10, -10, -3), Eigen::Vector3d(10, 10, 3)};
  const auto table = PseudoDepthTable::build({10, 10, 5}, range, rig);
  const harness::ExhaustiveDepthScan scan(table);
  for (int i = 0; i < 300; ++i) {
    const int view = static_cast<int>(rng.below(3));
    const double x = rng.uniform(0, 96), y = rng.uniform(0, 64);
    const auto a = table.nearest(x, y, view);
    const auto b = scan.nearest(x, y, view);
    REQUIRE(a.has_value() == b.has_value());
    if (!a) continue;
    CHECK(a->depth == b->depth);
    CHECK(a->planar_distance == b->planar_distance);
    CHECK(a->point_index == b->point_index);
  }
}

TEST_CASE("unproject inverts projection") {
  Rng rng(8);
  for (int i = 0; i < 100; ++i) {
    const auto rig = harness::random_rig(rng, 2, {120, 160});
    const int view = static_cast<int>(rng.below(2));
    const double x = rng.uniform(0, 160), y = rng.uniform(0, 120), d = rng.uniform(0.5, 60);
    const auto p = unproject(x, y, view, d, rig);
    CHECK((p - harness::oracle_unproject(x, y, view, d, rig)).norm() < 1e-9);
    const auto back = project_into_view(p, rig.view(view), view);
    REQUIRE(back);
    CHECK(std::abs(back->x - x) < 1e-6);
    CHECK(std::abs(back->y - y) < 1e-6);
    CHECK(std::abs(back->depth - d) < 1e-9);
  }
}

TEST_CASE("table round-trips through its container and checks the rig") {
  Rng rng(3);
  const auto rig = harness::random_rig(rng, 2, {32, 48});
  const Box3 range{Eigen::Vector3d(-5, -5, -1), Eigen::Vector3d(5, 5, 1)};
  const auto table = PseudoDepthTable::build({6, 6, 2}, range, rig);
  const auto container = table.to_container();
  CHECK(PseudoDepthTable::header_matches(container, {6, 6, 2}, range, rig));
  CHECK_FALSE(PseudoDepthTable::header_matches(container, {6, 6, 3}, range, rig));
  const auto loaded = PseudoDepthTable::from_container(container, rig);
  REQUIRE(loaded.points().size() == table.points().size());
  for (std::size_t i = 0; i < table.points().size(); ++i) {
    CHECK(loaded.points()[i].x == table.points()[i].x);
    CHECK(loaded.points()[i].depth == table.points()[i].depth);
  }
  const auto other = harness::random_rig(rng, 2, {32, 48});
  CHECK_THROWS_AS(PseudoDepthTable::from_container(container, other), Error);
}

TEST_CASE("ring rig covers the full circle") {
  const auto rig = CameraRig::ring({});
  CHECK(rig.size() == 6);
  int seen = 0;
  for (int deg = 0; deg < 360; deg += 5) {
    const double a = deg * std::numbers::pi / 180.0;
    if (project_to_first_hit({20 * std::cos(a), 20 * std::sin(a), 0}, rig)) ++seen;
  }
  CHECK(seen == 72);
  CHECK(project_to_first_hit({20, 0, 0}, rig)->view == 0);
}

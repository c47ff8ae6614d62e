#include <doctest.h>

#include <vector>

#include "unitr/tokenizers.hpp"
#include "unitr/weights.hpp"

using namespace unitr;

namespace {

ModelDims small_dims(int patch = 8) {
  ModelDims d;
  d.channels = 16;
  d.hidden = 32;
  d.heads = 2;
  d.layers = 2;
  d.patch = patch;
  return d;
}

VoxelGrid origin_grid() {
  VoxelGrid g;
  g.range = {Eigen::Vector3d(0, 0, 0), Eigen::Vector3d(3, 3, 8)};
  return g;
}

Eigen::RowVectorXd embed(const BackboneWeights& w, const Eigen::RowVectorXd& input) {
  const auto l = w.voxel_embed();
  return input * l.weight->transpose() + *l.bias;
}

}  // namespace

TEST_CASE("single point lands in voxel zero") {
  const auto w = BackboneWeights::create(small_dims(), 1);
  PointCloud cloud;
  const float extra[] = {0.5f};
  cloud.add(0.15f, 0.15f, 0.0f, extra);
  const auto tokens = voxelize(cloud, origin_grid(), w);
  REQUIRE(tokens.size() == 1);
  CHECK(tokens.coords.row(0) == Eigen::RowVector3d(0, 0, 0));
  CHECK(tokens.modality[0] == Modality::kLidar);
  CHECK(tokens.bev_cell[0] == 0);
}

TEST_CASE("voxel feature is the elementwise max of centered embeddings") {
  const auto w = BackboneWeights::create(small_dims(), 2);
  const auto grid = origin_grid();
  PointCloud cloud;
  const float eu[] = {0.2f}, ev[] = {0.9f};
  cloud.add(0.05f, 0.25f, 1.0f, eu);
  cloud.add(0.20f, 0.10f, 7.5f, ev);
  const auto tokens = voxelize(cloud, grid, w);
  REQUIRE(tokens.size() == 1);

  const Eigen::Vector3d center = grid.voxel_center({0, 0, 0});
  Eigen::RowVectorXd u(4), v(4);
  u(0) = static_cast<double>(0.05f) - center.x();
  u(1) = static_cast<double>(0.25f) - center.y();
  u(2) = static_cast<double>(1.0f) - center.z();
  u(3) = static_cast<double>(0.2f);
  v(0) = static_cast<double>(0.20f) - center.x();
  v(1) = static_cast<double>(0.10f) - center.y();
  v(2) = static_cast<double>(7.5f) - center.z();
  v(3) = static_cast<double>(0.9f);
  const Eigen::RowVectorXd expected = embed(w, u).cwiseMax(embed(w, v));
  CHECK((tokens.features.row(0) - expected).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("voxelize drops out-of-range points and orders tokens") {
  const auto w = BackboneWeights::create(small_dims(), 3);
  PointCloud cloud;
  const float e[] = {0.f};
  cloud.add(2.9f, 0.1f, 0.0f, e);
  cloud.add(0.1f, 2.9f, 0.0f, e);
  cloud.add(-0.1f, 0.1f, 0.0f, e);
  cloud.add(0.1f, 0.1f, 9.0f, e);
  const auto tokens = voxelize(cloud, origin_grid(), w);
  REQUIRE(tokens.size() == 2);
  // (z, y, x) order: y = 0 first.
  CHECK(tokens.coords.row(0) == Eigen::RowVector3d(9, 0, 0));
  CHECK(tokens.coords.row(1) == Eigen::RowVector3d(0, 9, 0));

  PointCloud outside;
  outside.add(-1.f, -1.f, 0.f, e);
  CHECK_THROWS_AS(voxelize(outside, origin_grid(), w), Error);
  CHECK_THROWS_AS(voxelize(PointCloud{}, origin_grid(), w), Error);
}

TEST_CASE("default grid is 360 x 360 x 1") {
  const VoxelGrid g;
  CHECK(g.dims() == std::array<std::int64_t, 3>{360, 360, 1});
}

TEST_CASE("patch counts for 256 x 704 images") {
  const auto w = BackboneWeights::create(small_dims(8), 4);
  CHECK(w.dims().patch_features() == 192);
  ImageStack images(6, 256, 704);
  const auto tokens = patchify(images, 8, w);
  CHECK(tokens.size() == 16896);
  CHECK(tokens.count(Modality::kImage) == 16896);
  // View 1 starts after 32 x 88 tokens of view 0.
  CHECK(tokens.coords.row(2816) == Eigen::RowVector3d(0, 0, 1));
  CHECK(tokens.coords.row(87) == Eigen::RowVector3d(87, 0, 0));
  CHECK(tokens.coords.row(88) == Eigen::RowVector3d(0, 1, 0));
}

TEST_CASE("constant image gives identical tokens") {
  const auto w = BackboneWeights::create(small_dims(4), 5);
  ImageStack images(2, 8, 12);
  for (auto& p : images.pixels) p = 0.37f;
  const auto tokens = patchify(images, 4, w);
  REQUIRE(tokens.size() == 12);
  for (std::int64_t i = 1; i < tokens.size(); ++i) CHECK(tokens.features.row(i) == tokens.features.row(0));
}

TEST_CASE("patch vector layout is row, column, channel") {
  ImageStack images(1, 4, 4);
  for (int y = 0; y < 4; ++y)
    for (int x = 0; x < 4; ++x)
      for (int c = 0; c < 3; ++c) images.at(0, y, x, c) = static_cast<float>(100 * y + 10 * x + c);
  const auto raw = patch_pixels(images, 2, 0, 1, 0);
  REQUIRE(raw.size() == 12);
  CHECK(raw[0] == 200.f);
  CHECK(raw[3] == 210.f);
  CHECK(raw[6] == 300.f);
  CHECK(raw[11] == 312.f);
}

TEST_CASE("patchify rejects indivisible images") {
  const auto w = BackboneWeights::create(small_dims(8), 6);
  CHECK_THROWS_AS(patchify(ImageStack(1, 20, 16), 8, w), Error);
}

TEST_CASE("token validation catches duplicate voxels and bad views") {
  const auto w = BackboneWeights::create(small_dims(4), 7);
  const auto image = patchify(ImageStack(2, 4, 4), 4, w);
  CHECK_NOTHROW(validate(image, 2));
  CHECK_THROWS_AS(validate(image, 1), Error);

  PointCloud cloud;
  const float e[] = {0.f};
  cloud.add(0.1f, 0.1f, 0.f, e);
  auto lidar = voxelize(cloud, origin_grid(), w);
  const auto twice = concat_tokens(lidar, lidar);
  CHECK_THROWS_AS(validate(twice, 2), Error);
  const auto both = concat_tokens(lidar, image);
  CHECK(both.count(Modality::kLidar) == 1);
  CHECK(both.count(Modality::kImage) == 2);
  CHECK(both.bev_cell[1] == -1);
}

TEST_CASE("point cloud binary round trip") {
  PointCloud cloud;
  cloud.extras = 2;
  const float e[] = {1.5f, -2.f};
  cloud.add(1.f, 2.f, 3.f, e);
  cloud.add(-4.f, 5.f, 6.f, e);
  const auto path = std::filesystem::temp_directory_path() / "unitr_cloud_test.bin";
  cloud.write_binary(path);
  const auto back = PointCloud::read_binary(path, 2);
  std::filesystem::remove(path);
  CHECK(back.values == cloud.values);
}

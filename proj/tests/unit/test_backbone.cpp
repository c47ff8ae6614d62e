#include <doctest.h>

#include <algorithm>
#include <cmath>

#include "unitr/backbone.hpp"
#include "unitr/harness/config.hpp"
#include "unitr/harness/fixtures.hpp"
#include "unitr/harness/pipeline.hpp"
#include "unitr/harness/scene.hpp"

using namespace unitr;

namespace {

// One camera at the origin looking along world +z; pixel (4, 4) is the
// principal point, which is the center of patch (0, 0) for p = 8.
CameraRig axis_rig() {
  CameraView v;
  v.image_size = {16, 16};
  v.intrinsics << 8, 0, 4, 0, 8, 4, 0, 0, 1;
  return CameraRig({v});
}

BackboneConfig tiny_config(double z_min, double z_max, double dz) {
  BackboneConfig c;
  c.grid.voxel_size = {0.5, 0.5, dz};
  c.grid.range = {Eigen::Vector3d(-1, -1, z_min), Eigen::Vector3d(1, 1, z_max)};
  c.pseudo_grid = {1, 1, 1};
  c.blocks.tau = 4;
  return c;
}

BackboneWeights tiny_weights(const BackboneConfig& c) {
  ModelDims d;
  d.channels = 16;
  d.hidden = 32;
  d.heads = 2;
  d.layers = c.blocks.total_layers();
  return BackboneWeights::create(d, 77);
}

struct TokenSpec {
  Modality modality;
  std::array<double, 3> coords;
};

TokenSequence make_tokens(const std::vector<TokenSpec>& specs, const VoxelGrid& grid) {
  TokenSequence t;
  const auto n = static_cast<Eigen::Index>(specs.size());
  t.features = MatrixXdR::Random(n, 16);
  t.coords.resize(n, 3);
  for (Eigen::Index i = 0; i < n; ++i) {
    const auto& s = specs[static_cast<std::size_t>(i)];
    t.coords.row(i) << s.coords[0], s.coords[1], s.coords[2];
    t.modality.push_back(s.modality);
    t.bev_cell.push_back(s.modality == Modality::kLidar
                             ? static_cast<std::int64_t>(s.coords[0]) * grid.dims()[1] + static_cast<std::int64_t>(s.coords[1])
                             : -1);
  }
  return t;
}

bool share_a_set(const BlockPlan& plan, std::int64_t a, std::int64_t b) {
  for (const auto& space : plan.spaces) {
    const auto& part = space.x_major;
    for (std::int64_t s = 0; s < part.set_count(); ++s) {
      bool has_a = false, has_b = false;
      for (std::int64_t k = 0; k < part.tau; ++k) {
        const auto token = space.members[static_cast<std::size_t>(part.slots[s * part.tau + k])];
        has_a = has_a || token == a;
        has_b = has_b || token == b;
      }
      if (has_a && has_b) return true;
    }
  }
  return false;
}

}  // namespace

TEST_CASE("dispatch counts per configuration") {
  const BlockConfig c;
  CHECK(c.total_layers() == 8);
  CHECK(expected_dispatches(c, ExecutionMode::kParallel) == 8);
  CHECK(expected_dispatches(c, ExecutionMode::kSerial) == 10);
  CHECK(expected_block_dispatches(BlockKind::kIntra, 2, ExecutionMode::kSerial) == 4);
  CHECK(expected_block_dispatches(BlockKind::kInter3D, 2, ExecutionMode::kSerial) == 2);
  BlockConfig odd;
  odd.layers_per_block = 3;
  CHECK_THROWS_AS(validate(odd), Error);
  CHECK(parse_block_kind("inter3d") == BlockKind::kInter3D);
  CHECK_THROWS_AS(parse_block_kind("cross"), Error);
}

TEST_CASE("bev pooling of a single token") {
  const VoxelGrid grid;
  CHECK(grid.dims()[0] == 360);
  CHECK(grid.dims()[1] == 360);
  const auto tokens = make_tokens({{Modality::kLidar, {3, 5, 0}}, {Modality::kImage, {3, 5, 0}}}, grid);
  const auto bev = bev_pool(tokens, grid, 16);
  CHECK(bev.size_x == 360);
  CHECK(bev.size_y == 360);
  CHECK(bev.occupied_count() == 1);
  for (int c = 0; c < 16; ++c) CHECK(bev.cell(3, 5)[c] == tokens.features(0, c));
  double elsewhere = 0.0;
  for (std::size_t i = 0; i < bev.features.size(); ++i) elsewhere += std::abs(bev.features[i]);
  for (int c = 0; c < 16; ++c) elsewhere -= std::abs(tokens.features(0, c));
  CHECK(elsewhere == doctest::Approx(0.0));

  const auto dup = make_tokens({{Modality::kLidar, {3, 5, 0}}, {Modality::kLidar, {3, 5, 0}}}, grid);
  CHECK_THROWS_AS(bev_pool(dup, grid, 16), Error);
}

TEST_CASE("intra block without lidar keeps every image token") {
  const auto config = tiny_config(9, 11, 2);
  const auto weights = tiny_weights(config);
  const auto tokens = make_tokens({{Modality::kImage, {0, 0, 0}}, {Modality::kImage, {1, 0, 0}},
                                   {Modality::kImage, {0, 1, 0}}},
                                  config.grid);
  DispatchCounter counter;
  const auto out = intra_modal_block(tokens, weights, config, 0, ExecutionMode::kParallel, counter);
  CHECK(out.size() == 3);
  CHECK(out.coords == tokens.coords);
  CHECK(counter.value() == 2);
  CHECK_FALSE(out.features == tokens.features);
}

TEST_CASE("2D inter block merges co-windowed tokens and passes invisible ones through") {
  auto config = tiny_config(-11, 11, 2);
  const auto rig = axis_rig();
  const auto weights = tiny_weights(config);
  // Voxel (2, 2, 10) is centered at (0.25, 0.25, 10), pixel (4.2, 4.2).
  // Voxel (1, 1, 0) is centered at z = -10, behind the camera.
  const auto tokens = make_tokens({{Modality::kLidar, {2, 2, 10}},
                                   {Modality::kLidar, {1, 1, 0}},
                                   {Modality::kImage, {0, 0, 0}},
                                   {Modality::kImage, {1, 1, 0}}},
                                  config.grid);
  const auto plan = plan_inter_2d(tokens, rig, config);
  CHECK(plan.passthrough == std::vector<std::int64_t>{1});
  CHECK(share_a_set(plan, 0, 2));
  CHECK(mixed_modality_sets(plan, tokens) >= 1);

  DispatchCounter counter;
  const auto out = inter_modal_block_2d(tokens, rig, weights, config, 2, counter);
  CHECK(counter.value() == 2);
  CHECK(out.features.row(1) == tokens.features.row(1));
  CHECK_FALSE(out.features.row(0) == tokens.features.row(0));
  CHECK(out.coords == tokens.coords);
}

TEST_CASE("3D inter block uses the depth of the nearest virtual point") {
  const auto config = tiny_config(9, 11, 2);
  const auto rig = axis_rig();
  const auto weights = tiny_weights(config);
  const auto table = PseudoDepthTable::build(config.pseudo_grid, config.grid.range, rig);
  REQUIRE(table.points().size() == 1);
  CHECK(table.points()[0].x == 4.0f);
  CHECK(table.points()[0].y == 4.0f);

  // The patch (0, 0) center hits the virtual point at (0, 0, 10), inside voxel (2, 2, 0).
  const auto tokens = make_tokens({{Modality::kLidar, {2, 2, 0}}, {Modality::kImage, {0, 0, 0}}}, config.grid);
  const auto plan = plan_inter_3d(tokens, table, rig, config);
  REQUIRE(plan.spaces.size() == 1);
  REQUIRE(plan.spaces[0].members == std::vector<std::int64_t>{0, 1});
  CHECK(std::isnan(plan.offset_distance[0]));
  CHECK(plan.offset_distance[1] == 0.0);
  CHECK(plan.spaces[0].coords.row(1) == Eigen::RowVector3d(2, 2, 0));
  CHECK(share_a_set(plan, 0, 1));

  const auto fc1 = weights.offset_fc1();
  const auto fc2 = weights.offset_fc2();
  Eigen::RowVectorXd hidden = *fc1.bias;
  for (Eigen::Index i = 0; i < hidden.size(); ++i) hidden[i] = gelu(hidden[i]);
  const Eigen::RowVectorXd bias_path = hidden * fc2.weight->transpose() + *fc2.bias;
  CHECK((offset_features(0.0, weights).row(0) - bias_path).cwiseAbs().maxCoeff() == 0.0);

  const auto other = CameraRig::ring({});
  CHECK_THROWS_AS(plan_inter_3d(tokens, table, other, config), Error);
}

TEST_CASE("small scene runs deterministically and modes agree") {
  const auto cfg = harness::small_config(3);
  const auto scene = harness::generate_scene(cfg);
  const auto weights = BackboneWeights::create(cfg.model, cfg.seed, cfg.init);
  const auto table = harness::make_table(cfg, scene.rig);
  const auto a = run_backbone(scene.cloud, scene.images, scene.rig, weights, cfg.backbone, table);
  const auto b = run_backbone(scene.cloud, scene.images, scene.rig, weights, cfg.backbone, table);
  const auto s = run_backbone(scene.cloud, scene.images, scene.rig, weights, cfg.backbone, table, ExecutionMode::kSerial);
  CHECK(a.dispatches == 8);
  CHECK(s.dispatches == 10);
  CHECK(a.bev.to_container().serialize() == b.bev.to_container().serialize());
  CHECK(a.bev.occupied == s.bev.occupied);
  double diff = 0.0;
  for (std::size_t i = 0; i < a.bev.features.size(); ++i) diff = std::max(diff, std::abs(a.bev.features[i] - s.bev.features[i]));
  CHECK(diff <= 1e-9);
  CHECK(a.bev.occupied_count() == a.lidar_tokens);
}

TEST_CASE("block order can change without rebuilding weights") {
  auto cfg = harness::small_config(4);
  const auto scene = harness::generate_scene(cfg);
  const auto weights = BackboneWeights::create(cfg.model, cfg.seed, cfg.init);
  const auto table = harness::make_table(cfg, scene.rig);
  cfg.backbone.blocks.sequence = {BlockKind::kIntra, BlockKind::kInter3D, BlockKind::kInter2D, BlockKind::kInter2D};
  const auto r = run_backbone(scene.cloud, scene.images, scene.rig, weights, cfg.backbone, table);
  CHECK(r.dispatches == 8);
  REQUIRE(r.blocks.size() == 4);
  CHECK(r.blocks[1].kind == BlockKind::kInter3D);
}

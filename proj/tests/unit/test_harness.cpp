#include <doctest.h>

#include <filesystem>

#include "unitr/harness/checks.hpp"
#include "unitr/harness/config.hpp"
#include "unitr/harness/scene.hpp"
#include "unitr/tensor_container.hpp"

using namespace unitr;
using namespace unitr::harness;

TEST_CASE("container round trip") {
  TensorContainer c;
  const float f[] = {1.5f, -2.25f, 3.f, 0.f, 1e-30f, 7.f};
  const std::int64_t i[] = {-1, 1LL << 40};
  c.add(Tensor::f32("f", {2, 3}, f));
  c.add(Tensor::i64("i", {2}, i));
  c.add(Tensor::u8("scalar", {}, std::vector<std::uint8_t>{9}));
  c.add(Tensor::f32("empty", {0, 4}, {}));
  const auto back = TensorContainer::deserialize(c.serialize());
  CHECK(back == c);
  CHECK(back.at("scalar").numel() == 1);
  CHECK(back.at("empty").numel() == 0);
  CHECK(back.at("f").as_f32()[4] == 1e-30f);
  CHECK(back.at("i").as_i64()[1] == (1LL << 40));

  auto bytes = c.serialize();
  CHECK(std::string(bytes.begin(), bytes.begin() + 4) == "UTR1");
  bytes.pop_back();
  CHECK_THROWS_AS(TensorContainer::deserialize(bytes), Error);
  CHECK_THROWS_AS(c.add(Tensor::f32("f", {1}, f)), Error);
  CHECK_THROWS_AS(c.at("missing"), Error);
}

TEST_CASE("config defaults and overrides") {
  const auto d = default_config();
  CHECK(d.backbone.blocks.tau == 90);
  CHECK(d.model.layers == 8);
  CHECK(d.model.channels == 128);
  CHECK(d.backbone.pseudo_grid == GridShape{360, 360, 20});

  const auto c = parse_config(nlohmann::json::parse(
      R"({"partition": {"tau": 45}, "blocks": {"sequence": ["intra", "inter3D"], "layers_per_block": 4}})"));
  CHECK(c.backbone.blocks.tau == 45);
  CHECK(c.model.layers == 8);
  CHECK(c.backbone.blocks.sequence.size() == 2);
  CHECK(c.hash() != d.hash());
  CHECK(parse_config(d.to_json()).hash() == d.hash());

  CHECK_THROWS_AS(parse_config(nlohmann::json::parse(R"({"partition": {"tua": 90}})")), Error);
  CHECK_THROWS_AS(parse_config(nlohmann::json::parse(R"({"extra": {}})")), Error);
  CHECK_THROWS_AS(parse_config(nlohmann::json::parse(R"({"blocks": {"layers_per_block": 3}})")), Error);
  CHECK(parse_block_list("intra,inter2D").size() == 2);
  CHECK_THROWS_AS(parse_block_list(" , "), Error);
  CHECK_THROWS_AS(parse_block_list("intra,bogus"), Error);
}

TEST_CASE("scene generation is seeded") {
  SceneParams params;
  params.points = 500;
  params.boxes = 3;
  RingRigParams rig;
  rig.image_size = {32, 88};
  const auto a = generate_scene(4, params, rig);
  const auto b = generate_scene(4, params, rig);
  const auto c = generate_scene(5, params, rig);
  CHECK(a.cloud.values == b.cloud.values);
  CHECK(a.images.pixels == b.images.pixels);
  CHECK(a.cloud.values != c.cloud.values);
  REQUIRE(a.truth.size() == a.cloud.size());
  for (const auto& t : a.truth) {
    const auto p = a.cloud.point(static_cast<std::size_t>(t.point));
    const auto ref = reference_projection({p[0], p[1], p[2]}, a.rig);
    REQUIRE(ref.has_value() == t.visible);
    if (ref) CHECK(ref->view == t.view);
  }
}

TEST_CASE("invariant registry") {
  for (const auto& check : invariant_checks()) {
    SUBCASE(check.name.c_str()) {
      const auto result = run_check(check);
      INFO(result.detail);
      CHECK(result.passed);
    }
  }
}

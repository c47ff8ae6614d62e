#include "unitr/harness/pipeline.hpp"

#include <cmath>
#include <fstream>
#include <optional>

namespace unitr::harness {

using nlohmann::ordered_json;

PseudoDepthTable make_table(const Config& config, const CameraRig& rig) {
  const auto& shape = config.backbone.pseudo_grid;
  const auto& range = config.backbone.grid.range;
  if (config.table_cache.empty()) return PseudoDepthTable::build(shape, range, rig);
  return PseudoDepthTable::load_or_build(config.table_cache, shape, range, rig);
}

TensorContainer tokens_to_container(const TokenSequence& tokens) {
  TensorContainer c;
  const auto n = tokens.size();
  std::vector<double> f(tokens.features.data(), tokens.features.data() + tokens.features.size());
  std::vector<std::int64_t> coords, modality;
  for (std::int64_t i = 0; i < n; ++i) {
    for (int a = 0; a < 3; ++a) coords.push_back(static_cast<std::int64_t>(std::floor(tokens.coords(i, a))));
    modality.push_back(static_cast<std::int64_t>(tokens.modality[static_cast<std::size_t>(i)]));
  }
  c.add(Tensor::f32_from("tokens.features", {n, tokens.features.cols()}, f));
  c.add(Tensor::i64("tokens.coords", {n, 3}, coords));
  c.add(Tensor::i64("tokens.modality", {n}, modality));
  c.add(Tensor::i64("tokens.bev_cell", {n}, tokens.bev_cell));
  return c;
}

ordered_json stats_to_json(const PartitionStats& s) {
  ordered_json occ = ordered_json::object();
  for (const auto& [bound, count] : s.occupancy) occ["<=" + std::to_string(bound)] = count;
  return {{"tokens", s.tokens},          {"windows", s.windows}, {"sets", s.sets},
          {"slots", s.slots},            {"duplication_rate", s.duplication_rate},
          {"occupancy", occ}};
}

void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorCode::kIo, "cannot write " + path.string());
  out << text;
  if (!out) throw Error(ErrorCode::kIo, "write failed for " + path.string());
}

RunOutput run_pipeline(const Config& config, const std::filesystem::path& out, bool dump_intermediate) {
  const SyntheticScene scene = generate_scene(config);
  const PseudoDepthTable table = make_table(config, scene.rig);
  const BackboneWeights weights = BackboneWeights::create(config.model, config.seed, config.init);
  const ExecutionMode mode = config.serial ? ExecutionMode::kSerial : ExecutionMode::kParallel;
  if (!out.empty()) std::filesystem::create_directories(out);

  BlockObserver observer;
  if (dump_intermediate && !out.empty())
    observer = [&](std::size_t b, const BlockPlan&, const TokenSequence& tokens) {
      tokens_to_container(tokens).save(out / ("block_" + std::to_string(b) + ".utr"));
    };

  RunOutput run;
  run.result = run_backbone(scene.cloud, scene.images, scene.rig, weights, config.backbone, table, mode, observer);
  const auto& r = run.result;

  ordered_json& m = run.manifest;
  m["seed"] = config.seed;
  m["config_hash"] = config.hash();
  m["mode"] = config.serial ? "serial" : "parallel";
  auto seq = ordered_json::array();
  for (BlockKind k : config.backbone.blocks.sequence) seq.push_back(std::string(to_string(k)));
  m["block_sequence"] = seq;
  m["dispatches"] = {{"total", r.dispatches},
                     {"expected", expected_dispatches(config.backbone.blocks, mode)},
                     {"expected_parallel", expected_dispatches(config.backbone.blocks, ExecutionMode::kParallel)},
                     {"expected_serial", expected_dispatches(config.backbone.blocks, ExecutionMode::kSerial)}};
  m["tokens"] = {{"lidar", r.lidar_tokens}, {"image", r.image_tokens}};
  auto blocks = ordered_json::array();
  for (const BlockReport& b : r.blocks) {
    auto spaces = ordered_json::array();
    for (const auto& s : b.partitions) spaces.push_back(stats_to_json(s));
    blocks.push_back({{"kind", std::string(to_string(b.kind))},
                      {"first_layer", b.first_layer},
                      {"dispatches", b.dispatches},
                      {"expected_dispatches", expected_block_dispatches(b.kind, config.backbone.blocks.layers_per_block, mode)},
                      {"mixed_sets", b.mixed_sets},
                      {"passthrough", b.passthrough},
                      {"partitions", spaces}});
  }
  m["blocks"] = blocks;
  m["bev"] = {{"shape", {r.bev.size_x, r.bev.size_y, r.bev.channels}},
              {"occupied", r.bev.occupied_count()},
              {"cell_size", {r.bev.cell_x, r.bev.cell_y}},
              {"origin", {r.bev.origin_x, r.bev.origin_y}}};
  m["weights"] = {{"seed", weights.seed()}, {"tensors", weights.names().size()}};
  m["config"] = config.to_json();

  auto times = ordered_json::array();
  double total = 0.0;
  for (const BlockReport& b : r.blocks) {
    times.push_back({{"kind", std::string(to_string(b.kind))}, {"millis", b.millis}});
    total += b.millis;
  }
  run.timings = {{"blocks", times}, {"total_millis", total}};

  if (!out.empty()) {
    r.bev.to_container().save(out / "bev.utr");
    write_text(out / "manifest.json", m.dump(2) + "\n");
    write_text(out / "timings.json", run.timings.dump(2) + "\n");
  }
  return run;
}

ordered_json block_statistics(const Config& config) {
  const SyntheticScene scene = generate_scene(config);
  const BackboneWeights weights = BackboneWeights::create(config.model, config.seed, config.init);
  const TokenSequence tokens = tokenize(scene.cloud, scene.images, weights, config.backbone);
  std::optional<PseudoDepthTable> table;
  ordered_json out;
  out["seed"] = config.seed;
  out["tokens"] = {{"lidar", tokens.count(Modality::kLidar)}, {"image", tokens.count(Modality::kImage)}};
  auto blocks = ordered_json::array();
  for (BlockKind kind : config.backbone.blocks.sequence) {
    BlockPlan plan;
    if (kind == BlockKind::kIntra) {
      plan = plan_intra(tokens, config.backbone);
    } else if (kind == BlockKind::kInter2D) {
      plan = plan_inter_2d(tokens, scene.rig, config.backbone);
    } else {
      if (!table) table = make_table(config, scene.rig);
      plan = plan_inter_3d(tokens, *table, scene.rig, config.backbone);
    }
    auto spaces = ordered_json::array();
    std::int64_t slots = 0, members = 0;
    for (const SpacePlan& s : plan.spaces) {
      ordered_json js;
      js["x_major"] = stats_to_json(partition_stats(s.x_major));
      js["y_major"] = stats_to_json(partition_stats(s.y_major));
      spaces.push_back(js);
      slots += s.x_major.slot_count();
      members += s.x_major.token_count;
    }
    blocks.push_back({{"kind", std::string(to_string(kind))},
                      {"spaces", spaces},
                      {"duplication_rate", members > 0 ? static_cast<double>(slots - members) / members : 0.0},
                      {"mixed_sets", mixed_modality_sets(plan, tokens)},
                      {"passthrough", plan.passthrough.size()}});
  }
  out["blocks"] = blocks;
  return out;
}

}  // namespace unitr::harness

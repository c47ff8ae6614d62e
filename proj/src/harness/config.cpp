#include "unitr/harness/config.hpp"

#include <fstream>
#include <set>
#include <sstream>

namespace unitr::harness {

using nlohmann::json;
using nlohmann::ordered_json;

namespace {

void reject_unknown(const json& obj, const std::string& where, std::initializer_list<const char*> keys) {
  if (!obj.is_object()) throw Error(ErrorCode::kConfig, "'" + where + "' must be an object");
  const std::set<std::string> known(keys.begin(), keys.end());
  for (const auto& [key, value] : obj.items())
    if (!known.count(key)) throw Error(ErrorCode::kConfig, "unknown key '" + where + "." + key + "'");
}

template <typename T>
void read(const json& obj, const char* key, T& out, const std::string& where) {
  if (!obj.contains(key)) return;
  try {
    out = obj.at(key).get<T>();
  } catch (const json::exception& e) {
    throw Error(ErrorCode::kConfig, "bad value for '" + where + "." + key + "': " + e.what());
  }
}

void read_vec3(const json& obj, const char* key, Eigen::Vector3d& out, const std::string& where) {
  if (!obj.contains(key)) return;
  std::array<double, 3> v{};
  read(obj, key, v, where);
  out = Eigen::Vector3d(v[0], v[1], v[2]);
}

void read_shape(const json& obj, const char* key, std::array<std::int64_t, 3>& out, const std::string& where) {
  read(obj, key, out, where);
}

json vec3(const Eigen::Vector3d& v) { return json::array({v.x(), v.y(), v.z()}); }

}  // namespace

void sync_model(Config& config) {
  config.model.layers = config.backbone.blocks.total_layers();
  config.model.patch = config.backbone.patch;
}

Config default_config() {
  Config c;
  sync_model(c);
  return c;
}

std::vector<BlockKind> parse_block_list(const std::string& list) {
  std::vector<BlockKind> out;
  std::stringstream ss(list);
  std::string item;
  while (std::getline(ss, item, ',')) {
    item.erase(0, item.find_first_not_of(" \t"));
    item.erase(item.find_last_not_of(" \t") + 1);
    if (!item.empty()) out.push_back(parse_block_kind(item));
  }
  if (out.empty()) throw Error(ErrorCode::kConfig, "empty block list");
  return out;
}

Config parse_config(const json& doc) {
  Config c = default_config();
  reject_unknown(doc, "config", {"rig", "tokenizer", "partition", "attention", "blocks", "run"});

  if (doc.contains("rig")) {
    const auto& r = doc["rig"];
    reject_unknown(r, "rig", {"views", "height", "width", "hfov_deg", "mount_radius", "mount_height"});
    read(r, "views", c.rig.views, "rig");
    read(r, "height", c.rig.image_size.height, "rig");
    read(r, "width", c.rig.image_size.width, "rig");
    read(r, "hfov_deg", c.rig.horizontal_fov_deg, "rig");
    read(r, "mount_radius", c.rig.mount_radius, "rig");
    read(r, "mount_height", c.rig.mount_height, "rig");
  }
  if (doc.contains("tokenizer")) {
    const auto& t = doc["tokenizer"];
    reject_unknown(t, "tokenizer", {"voxel_size", "range_min", "range_max", "patch", "point_extras"});
    read_vec3(t, "voxel_size", c.backbone.grid.voxel_size, "tokenizer");
    read_vec3(t, "range_min", c.backbone.grid.range.min, "tokenizer");
    read_vec3(t, "range_max", c.backbone.grid.range.max, "tokenizer");
    read(t, "patch", c.backbone.patch, "tokenizer");
    read(t, "point_extras", c.model.point_extras, "tokenizer");
  }
  if (doc.contains("partition")) {
    const auto& p = doc["partition"];
    reject_unknown(p, "partition", {"tau", "lidar_window", "image_window", "pseudo_grid"});
    read(p, "tau", c.backbone.blocks.tau, "partition");
    read_shape(p, "lidar_window", c.backbone.blocks.lidar_window.shape, "partition");
    read_shape(p, "image_window", c.backbone.blocks.image_window.shape, "partition");
    read_shape(p, "pseudo_grid", c.backbone.pseudo_grid, "partition");
  }
  if (doc.contains("attention")) {
    const auto& a = doc["attention"];
    reject_unknown(a, "attention", {"channels", "hidden", "heads", "init", "init_stddev"});
    read(a, "channels", c.model.channels, "attention");
    read(a, "hidden", c.model.hidden, "attention");
    read(a, "heads", c.model.heads, "attention");
    if (a.contains("init")) {
      std::string scheme;
      read(a, "init", scheme, "attention");
      if (scheme == "uniform_fan_in") c.init.scheme = InitScheme::kUniformFanIn;
      else if (scheme == "normal") c.init.scheme = InitScheme::kNormal;
      else throw Error(ErrorCode::kConfig, "attention.init must be 'uniform_fan_in' or 'normal'");
    }
    read(a, "init_stddev", c.init.stddev, "attention");
  }
  if (doc.contains("blocks")) {
    const auto& b = doc["blocks"];
    reject_unknown(b, "blocks", {"sequence", "layers_per_block", "offset_in_pixels"});
    if (b.contains("sequence")) {
      std::vector<std::string> names;
      read(b, "sequence", names, "blocks");
      c.backbone.blocks.sequence.clear();
      for (const auto& n : names) c.backbone.blocks.sequence.push_back(parse_block_kind(n));
    }
    read(b, "layers_per_block", c.backbone.blocks.layers_per_block, "blocks");
    read(b, "offset_in_pixels", c.backbone.blocks.offset_in_pixels, "blocks");
  }
  if (doc.contains("run")) {
    const auto& r = doc["run"];
    reject_unknown(r, "run", {"seed", "serial", "points", "boxes", "ground_z", "min_radius", "max_radius", "table_cache"});
    read(r, "seed", c.seed, "run");
    read(r, "serial", c.serial, "run");
    read(r, "points", c.scene.points, "run");
    read(r, "boxes", c.scene.boxes, "run");
    read(r, "ground_z", c.scene.ground_z, "run");
    read(r, "min_radius", c.scene.min_radius, "run");
    read(r, "max_radius", c.scene.max_radius, "run");
    read(r, "table_cache", c.table_cache, "run");
  }

  sync_model(c);
  validate(c.backbone.blocks);
  if (c.model.channels <= 0 || c.model.heads <= 0 || c.model.channels % c.model.heads != 0)
    throw Error(ErrorCode::kConfig, "channels must be a positive multiple of heads");
  if (c.rig.views < 1) throw Error(ErrorCode::kConfig, "rig.views must be at least 1");
  if (c.backbone.patch < 1) throw Error(ErrorCode::kConfig, "tokenizer.patch must be positive");
  if (c.scene.points < 1 || c.scene.boxes < 0) throw Error(ErrorCode::kConfig, "scene sizes must be positive");
  c.backbone.grid.dims();
  return c;
}

Config load_config(const std::string& name_or_path) {
  if (name_or_path == "default") return default_config();
  std::ifstream in(name_or_path);
  if (!in) throw Error(ErrorCode::kIo, "cannot open config '" + name_or_path + "'");
  json doc;
  try {
    doc = json::parse(in, nullptr, true, true);
  } catch (const json::exception& e) {
    throw Error(ErrorCode::kConfig, "config '" + name_or_path + "' is not valid JSON: " + e.what());
  }
  return parse_config(doc);
}

ordered_json Config::to_json() const {
  ordered_json j;
  j["rig"] = {{"views", rig.views},
              {"height", rig.image_size.height},
              {"width", rig.image_size.width},
              {"hfov_deg", rig.horizontal_fov_deg},
              {"mount_radius", rig.mount_radius},
              {"mount_height", rig.mount_height}};
  j["tokenizer"] = {{"voxel_size", vec3(backbone.grid.voxel_size)},
                    {"range_min", vec3(backbone.grid.range.min)},
                    {"range_max", vec3(backbone.grid.range.max)},
                    {"patch", backbone.patch},
                    {"point_extras", model.point_extras}};
  j["partition"] = {{"tau", backbone.blocks.tau},
                    {"lidar_window", backbone.blocks.lidar_window.shape},
                    {"image_window", backbone.blocks.image_window.shape},
                    {"pseudo_grid", backbone.pseudo_grid}};
  j["attention"] = {{"channels", model.channels},
                    {"hidden", model.hidden},
                    {"heads", model.heads},
                    {"init", init.scheme == InitScheme::kNormal ? "normal" : "uniform_fan_in"},
                    {"init_stddev", init.stddev}};
  auto seq = ordered_json::array();
  for (BlockKind k : backbone.blocks.sequence) seq.push_back(std::string(to_string(k)));
  j["blocks"] = {{"sequence", seq},
                 {"layers_per_block", backbone.blocks.layers_per_block},
                 {"offset_in_pixels", backbone.blocks.offset_in_pixels}};
  j["run"] = {{"seed", seed},
              {"serial", serial},
              {"points", scene.points},
              {"boxes", scene.boxes},
              {"ground_z", scene.ground_z},
              {"min_radius", scene.min_radius},
              {"max_radius", scene.max_radius},
              {"table_cache", table_cache}};
  return j;
}

std::uint64_t Config::hash() const { return fnv1a(to_json().dump()); }

}  // namespace unitr::harness

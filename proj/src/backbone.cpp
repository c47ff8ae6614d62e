#include "unitr/backbone.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <limits>
#include <string>

namespace unitr {

std::string_view to_string(BlockKind kind) {
  switch (kind) {
    case BlockKind::kIntra: return "intra";
    case BlockKind::kInter2D: return "inter2D";
    case BlockKind::kInter3D: return "inter3D";
  }
  return "?";
}

BlockKind parse_block_kind(std::string_view name) {
  if (name == "intra") return BlockKind::kIntra;
  if (name == "inter2D" || name == "inter2d") return BlockKind::kInter2D;
  if (name == "inter3D" || name == "inter3d") return BlockKind::kInter3D;
  throw Error(ErrorCode::kConfig, "unknown block kind '" + std::string(name) + "'");
}

void validate(const BlockConfig& config) {
  if (config.sequence.empty()) throw Error(ErrorCode::kConfig, "block sequence is empty");
  if (config.layers_per_block <= 0 || config.layers_per_block % 2 != 0)
    throw Error(ErrorCode::kConfig, "layers per block must be a positive even number");
  if (config.tau < 1) throw Error(ErrorCode::kConfig, "tau must be at least 1");
  if (config.lidar_window.space != Space::kLidar3D || config.image_window.space != Space::kImage2D)
    throw Error(ErrorCode::kConfig, "window spaces are swapped");
  validate(config.lidar_window);
  validate(config.image_window);
}

std::uint64_t expected_block_dispatches(BlockKind kind, int layers, ExecutionMode mode) {
  const auto per_layer = (kind == BlockKind::kIntra && mode == ExecutionMode::kSerial) ? 2u : 1u;
  return static_cast<std::uint64_t>(layers) * per_layer;
}

std::uint64_t expected_dispatches(const BlockConfig& config, ExecutionMode mode) {
  std::uint64_t total = 0;
  for (BlockKind kind : config.sequence) total += expected_block_dispatches(kind, config.layers_per_block, mode);
  return total;
}

namespace {

SpacePlan make_space(const WindowSpec& window, std::vector<std::int64_t> members, CoordMatrix coords,
                     const CoordMatrix& pe_coords, std::int64_t tau) {
  SpacePlan s;
  s.window = window;
  s.members = std::move(members);
  s.coords = std::move(coords);
  s.relative = window_relative_coords(pe_coords, window);
  s.x_major = dynamic_set_partition(s.coords, window, tau, InnerOrder::kXMajor);
  s.y_major = dynamic_set_partition(s.coords, window, tau, InnerOrder::kYMajor);
  return s;
}

SpacePlan make_space(const WindowSpec& window, std::vector<std::int64_t> members, const CoordMatrix& coords,
                     std::int64_t tau) {
  return make_space(window, std::move(members), coords, coords, tau);
}

CoordMatrix rows_of(const CoordMatrix& coords, const std::vector<std::int64_t>& rows) {
  CoordMatrix out(static_cast<Eigen::Index>(rows.size()), 3);
  for (std::size_t i = 0; i < rows.size(); ++i) out.row(static_cast<Eigen::Index>(i)) = coords.row(rows[i]);
  return out;
}

void check_tokens(const TokenSequence& tokens) {
  const auto n = tokens.size();
  if (tokens.features.rows() != n || static_cast<std::int64_t>(tokens.modality.size()) != n ||
      static_cast<std::int64_t>(tokens.bev_cell.size()) != n)
    throw Error(ErrorCode::kShapeMismatch, "token sequence fields disagree on the token count");
}

}  // namespace

BlockPlan plan_intra(const TokenSequence& tokens, const BackboneConfig& config) {
  check_tokens(tokens);
  std::vector<std::int64_t> lidar, image;
  for (std::int64_t i = 0; i < tokens.size(); ++i)
    (tokens.modality[static_cast<std::size_t>(i)] == Modality::kLidar ? lidar : image).push_back(i);
  BlockPlan plan;
  plan.kind = BlockKind::kIntra;
  const auto& bc = config.blocks;
  CoordMatrix lidar_coords = rows_of(tokens.coords, lidar);
  CoordMatrix image_coords = rows_of(tokens.coords, image);
  plan.spaces.push_back(make_space(bc.lidar_window, std::move(lidar), lidar_coords, bc.tau));
  plan.spaces.push_back(make_space(bc.image_window, std::move(image), image_coords, bc.tau));
  return plan;
}

BlockPlan plan_inter_2d(const TokenSequence& tokens, const CameraRig& rig, const BackboneConfig& config) {
  check_tokens(tokens);
  const double p = config.patch;
  std::vector<std::int64_t> members;
  std::vector<std::array<double, 3>> coords;
  std::vector<std::int64_t> image;
  BlockPlan plan;
  plan.kind = BlockKind::kInter2D;
  for (std::int64_t i = 0; i < tokens.size(); ++i) {
    if (tokens.modality[static_cast<std::size_t>(i)] == Modality::kImage) {
      image.push_back(i);
      continue;
    }
    const Eigen::Vector3d world = config.grid.voxel_center(tokens.coords.row(i).transpose());
    const auto hit = project_to_first_hit(world, rig);
    if (!hit) {
      plan.passthrough.push_back(i);
      continue;
    }
    members.push_back(i);
    coords.push_back({std::floor(hit->x / p), std::floor(hit->y / p), static_cast<double>(hit->view)});
  }
  for (std::int64_t i : image) {
    if (tokens.coords(i, 2) >= static_cast<double>(rig.size()))
      throw Error(ErrorCode::kInvalidArgument, "image token view id exceeds the rig size");
    members.push_back(i);
    coords.push_back({tokens.coords(i, 0), tokens.coords(i, 1), tokens.coords(i, 2)});
  }
  CoordMatrix m(static_cast<Eigen::Index>(coords.size()), 3);
  for (std::size_t i = 0; i < coords.size(); ++i)
    m.row(static_cast<Eigen::Index>(i)) << coords[i][0], coords[i][1], coords[i][2];
  plan.spaces.push_back(make_space(config.blocks.image_window, std::move(members), m, config.blocks.tau));
  return plan;
}

BlockPlan plan_inter_3d(const TokenSequence& tokens, const PseudoDepthTable& table, const CameraRig& rig,
                        const BackboneConfig& config) {
  check_tokens(tokens);
  if (table.rig_hash() != rig.hash())
    throw Error(ErrorCode::kInvalidArgument, "pseudo depth table was built for a different rig");
  const double p = config.patch;
  const double unit = config.blocks.offset_in_pixels ? 1.0 : p;
  const auto dims = config.grid.dims();
  BlockPlan plan;
  plan.kind = BlockKind::kInter3D;
  std::vector<std::int64_t> members;
  std::vector<Eigen::Vector3d> cell, pe;
  for (std::int64_t i = 0; i < tokens.size(); ++i) {
    if (tokens.modality[static_cast<std::size_t>(i)] != Modality::kLidar) continue;
    members.push_back(i);
    cell.push_back(tokens.coords.row(i).transpose());
    pe.push_back(cell.back());
    plan.offset_distance.push_back(std::numeric_limits<double>::quiet_NaN());
  }
  for (std::int64_t i = 0; i < tokens.size(); ++i) {
    if (tokens.modality[static_cast<std::size_t>(i)] != Modality::kImage) continue;
    const int view = static_cast<int>(tokens.coords(i, 2));
    const double px = (tokens.coords(i, 0) + 0.5) * p;
    const double py = (tokens.coords(i, 1) + 0.5) * p;
    const auto hit = nearest_depth(px, py, view, table);
    if (!hit) {
      plan.passthrough.push_back(i);
      continue;
    }
    const Eigen::Vector3d g = config.grid.to_grid(unproject(px, py, view, hit->depth, rig));
    bool inside = true;
    for (int a = 0; a < 3; ++a)
      inside = inside && g[a] >= 0.0 && g[a] < static_cast<double>(dims[static_cast<std::size_t>(a)]);
    if (!inside) {
      plan.passthrough.push_back(i);
      continue;
    }
    members.push_back(i);
    cell.push_back(g.array().floor().matrix());
    pe.push_back(g);
    plan.offset_distance.push_back(hit->planar_distance / unit);
  }
  CoordMatrix cm(static_cast<Eigen::Index>(cell.size()), 3), pm(static_cast<Eigen::Index>(pe.size()), 3);
  for (std::size_t i = 0; i < cell.size(); ++i) {
    cm.row(static_cast<Eigen::Index>(i)) = cell[i].transpose();
    pm.row(static_cast<Eigen::Index>(i)) = pe[i].transpose();
  }
  plan.spaces.push_back(make_space(config.blocks.lidar_window, std::move(members), cm, pm, config.blocks.tau));
  std::sort(plan.passthrough.begin(), plan.passthrough.end());
  return plan;
}

std::int64_t mixed_modality_sets(const BlockPlan& plan, const TokenSequence& tokens) {
  std::int64_t mixed = 0;
  for (const SpacePlan& space : plan.spaces) {
    for (InnerOrder order : {InnerOrder::kXMajor, InnerOrder::kYMajor}) {
      const SetPartition& part = space.partition(order);
      for (std::int64_t s = 0; s < part.set_count(); ++s) {
        bool lidar = false, image = false;
        for (std::int64_t k = 0; k < part.tau; ++k) {
          const auto local = part.slots[static_cast<std::size_t>(s * part.tau + k)];
          const auto token = space.members[static_cast<std::size_t>(local)];
          (tokens.modality[static_cast<std::size_t>(token)] == Modality::kLidar ? lidar : image) = true;
        }
        if (lidar && image) ++mixed;
      }
    }
  }
  return mixed;
}

MatrixXdR offset_features(double distance, const BackboneWeights& weights) {
  const Linear fc1 = weights.offset_fc1();
  const Linear fc2 = weights.offset_fc2();
  MatrixXdR hidden(1, fc1.weight->rows());
  for (Eigen::Index h = 0; h < hidden.cols(); ++h) hidden(0, h) = gelu((*fc1.weight)(h, 0) * distance + (*fc1.bias)(0, h));
  MatrixXdR out = hidden * fc2.weight->transpose();
  out += *fc2.bias;
  return out;
}

TokenSequence execute_block(const TokenSequence& tokens, const BlockPlan& plan, const BackboneWeights& weights,
                            const BackboneConfig& config, int first_layer, ExecutionMode mode,
                            DispatchCounter& counter, BlockReport* report) {
  check_tokens(tokens);
  const int layers = config.blocks.layers_per_block;
  if (first_layer < 0 || first_layer + layers > weights.dims().layers)
    throw Error(ErrorCode::kInvalidArgument, "block layers [" + std::to_string(first_layer) + ", " +
                                                 std::to_string(first_layer + layers) + ") exceed the " +
                                                 std::to_string(weights.dims().layers) + " stored layers");
  const bool intra = plan.kind == BlockKind::kIntra;
  if (intra ? plan.spaces.size() != 2 : plan.spaces.size() != 1)
    throw Error(ErrorCode::kInvalidArgument, "block plan has the wrong number of spaces");

  const auto start = std::chrono::steady_clock::now();
  const auto before = counter.value();
  const auto channels = tokens.features.cols();

  std::vector<MatrixXdR> feats;
  for (const SpacePlan& space : plan.spaces) {
    MatrixXdR f(static_cast<Eigen::Index>(space.members.size()), channels);
    for (std::size_t i = 0; i < space.members.size(); ++i)
      f.row(static_cast<Eigen::Index>(i)) = tokens.features.row(space.members[i]);
    feats.push_back(std::move(f));
  }
  if (plan.kind == BlockKind::kInter3D) {
    for (std::size_t i = 0; i < plan.spaces[0].members.size(); ++i) {
      const double d = plan.offset_distance.at(i);
      if (!std::isnan(d)) feats[0].row(static_cast<Eigen::Index>(i)) += offset_features(d, weights);
    }
  }

  for (int l = 0; l < layers; ++l) {
    const InnerOrder order = l % 2 == 0 ? InnerOrder::kXMajor : InnerOrder::kYMajor;
    const int layer = first_layer + l;
    std::vector<SetBatch> batches;
    for (std::size_t s = 0; s < plan.spaces.size(); ++s)
      batches.push_back(gather(plan.spaces[s].partition(order), feats[s], plan.spaces[s].relative));
    if (intra) {
      const ModalityBatches out =
          mode == ExecutionMode::kParallel
              ? batched_layer_over_modalities(batches[0], batches[1], weights, layer, counter)
              : serial_layer_over_modalities(batches[0], batches[1], weights, layer, counter);
      batches[0] = out.lidar;
      batches[1] = out.image;
    } else {
      batches[0] = dispatch_attention(batches[0], weights, layer, counter);
    }
    for (std::size_t s = 0; s < plan.spaces.size(); ++s)
      feats[s] = scatter_canonical(plan.spaces[s].partition(order), batches[s].features);
  }

  TokenSequence out = tokens;
  for (std::size_t s = 0; s < plan.spaces.size(); ++s)
    for (std::size_t i = 0; i < plan.spaces[s].members.size(); ++i)
      out.features.row(plan.spaces[s].members[i]) = feats[s].row(static_cast<Eigen::Index>(i));

  if (report) {
    report->kind = plan.kind;
    report->first_layer = first_layer;
    report->dispatches = counter.value() - before;
    report->partitions.clear();
    for (const SpacePlan& space : plan.spaces) report->partitions.push_back(partition_stats(space.x_major));
    report->mixed_sets = mixed_modality_sets(plan, tokens);
    report->passthrough = static_cast<std::int64_t>(plan.passthrough.size());
    report->millis = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start).count();
  }
  return out;
}

TokenSequence intra_modal_block(const TokenSequence& tokens, const BackboneWeights& weights,
                                const BackboneConfig& config, int first_layer, ExecutionMode mode,
                                DispatchCounter& counter) {
  return execute_block(tokens, plan_intra(tokens, config), weights, config, first_layer, mode, counter);
}

TokenSequence inter_modal_block_2d(const TokenSequence& tokens, const CameraRig& rig, const BackboneWeights& weights,
                                   const BackboneConfig& config, int first_layer, DispatchCounter& counter) {
  return execute_block(tokens, plan_inter_2d(tokens, rig, config), weights, config, first_layer,
                       ExecutionMode::kParallel, counter);
}

TokenSequence inter_modal_block_3d(const TokenSequence& tokens, const PseudoDepthTable& table, const CameraRig& rig,
                                   const BackboneWeights& weights, const BackboneConfig& config, int first_layer,
                                   DispatchCounter& counter) {
  return execute_block(tokens, plan_inter_3d(tokens, table, rig, config), weights, config, first_layer,
                       ExecutionMode::kParallel, counter);
}

std::int64_t BevGrid::occupied_count() const {
  return static_cast<std::int64_t>(std::count(occupied.begin(), occupied.end(), std::uint8_t{1}));
}

TensorContainer BevGrid::to_container() const {
  TensorContainer c;
  c.add(Tensor::f32_from("bev.features", {size_x, size_y, channels}, features));
  c.add(Tensor::u8("bev.occupancy", {size_x, size_y}, occupied));
  const double cell[2] = {cell_x, cell_y};
  const double origin[2] = {origin_x, origin_y};
  c.add(Tensor::f32_from("bev.cell_size", {2}, cell));
  c.add(Tensor::f32_from("bev.origin", {2}, origin));
  return c;
}

BevGrid bev_pool(const TokenSequence& tokens, const VoxelGrid& grid, std::int64_t channels) {
  check_tokens(tokens);
  if (tokens.features.cols() != channels && tokens.size() > 0)
    throw Error(ErrorCode::kShapeMismatch, "bev_pool: token channels differ from the grid channels");
  const auto dims = grid.dims();
  BevGrid bev;
  bev.size_x = dims[0];
  bev.size_y = dims[1];
  bev.channels = channels;
  bev.cell_x = grid.voxel_size.x();
  bev.cell_y = grid.voxel_size.y();
  bev.origin_x = grid.range.min.x();
  bev.origin_y = grid.range.min.y();
  bev.features.assign(static_cast<std::size_t>(bev.size_x * bev.size_y * channels), 0.0);
  bev.occupied.assign(static_cast<std::size_t>(bev.size_x * bev.size_y), 0);
  for (std::int64_t i = 0; i < tokens.size(); ++i) {
    if (tokens.modality[static_cast<std::size_t>(i)] != Modality::kLidar) continue;
    const double fx = tokens.coords(i, 0), fy = tokens.coords(i, 1);
    if (!(fx >= 0 && fy >= 0 && fx < static_cast<double>(bev.size_x) && fy < static_cast<double>(bev.size_y)) ||
        fx != std::floor(fx) || fy != std::floor(fy))
      throw Error(ErrorCode::kIndexOutOfRange, "bev_pool: lidar token " + std::to_string(i) + " lies outside the grid");
    const auto x = static_cast<std::int64_t>(fx), y = static_cast<std::int64_t>(fy);
    auto& occ = bev.occupied[static_cast<std::size_t>(x * bev.size_y + y)];
    if (occ)
      throw Error(ErrorCode::kDuplicateCell, "bev_pool: two lidar tokens share cell (" + std::to_string(x) + ", " +
                                                 std::to_string(y) + ")");
    occ = 1;
    double* dst = bev.features.data() + (x * bev.size_y + y) * channels;
    for (std::int64_t c = 0; c < channels; ++c) dst[c] = tokens.features(i, c);
  }
  return bev;
}

TokenSequence tokenize(const PointCloud& cloud, const ImageStack& images, const BackboneWeights& weights,
                       const BackboneConfig& config) {
  return concat_tokens(voxelize(cloud, config.grid, weights), patchify(images, config.patch, weights));
}

BackboneResult run_backbone_tokens(const TokenSequence& tokens, const CameraRig& rig, const BackboneWeights& weights,
                                   const BackboneConfig& config, const PseudoDepthTable& table, ExecutionMode mode,
                                   const BlockObserver& observer) {
  validate(config.blocks);
  if (config.blocks.total_layers() > weights.dims().layers)
    throw Error(ErrorCode::kConfig, "block sequence needs " + std::to_string(config.blocks.total_layers()) +
                                        " layers, weights hold " + std::to_string(weights.dims().layers));
  validate(tokens, static_cast<int>(rig.size()));
  DispatchCounter counter;
  BackboneResult result;
  result.lidar_tokens = tokens.count(Modality::kLidar);
  result.image_tokens = tokens.count(Modality::kImage);
  TokenSequence current = tokens;
  for (std::size_t b = 0; b < config.blocks.sequence.size(); ++b) {
    const BlockKind kind = config.blocks.sequence[b];
    const auto start = std::chrono::steady_clock::now();
    BlockPlan plan = kind == BlockKind::kIntra     ? plan_intra(current, config)
                     : kind == BlockKind::kInter2D ? plan_inter_2d(current, rig, config)
                                                   : plan_inter_3d(current, table, rig, config);
    BlockReport report;
    current = execute_block(current, plan, weights, config, static_cast<int>(b) * config.blocks.layers_per_block,
                            mode, counter, &report);
    report.millis = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start).count();
    result.blocks.push_back(std::move(report));
    if (observer) observer(b, plan, current);
  }
  result.dispatches = counter.value();
  result.bev = bev_pool(current, config.grid, weights.dims().channels);
  return result;
}

BackboneResult run_backbone(const PointCloud& cloud, const ImageStack& images, const CameraRig& rig,
                            const BackboneWeights& weights, const BackboneConfig& config,
                            const PseudoDepthTable& table, ExecutionMode mode, const BlockObserver& observer) {
  return run_backbone_tokens(tokenize(cloud, images, weights, config), rig, weights, config, table, mode, observer);
}

}  // namespace unitr

#include "unitr/harness/oracles.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <string>

#include "unitr/harness/scene.hpp"

namespace unitr::harness {
namespace {

using Vec = std::vector<double>;

double act(double x) { return 0.5 * x * (1.0 + std::erf(x / std::sqrt(2.0))); }

// y = W x + b for a named linear layer.
Vec apply(const BackboneWeights& w, const std::string& prefix, const Vec& x) {
  const MatrixXdR& m = w.tensor(prefix + ".weight");
  const MatrixXdR& b = w.tensor(prefix + ".bias");
  Vec y(static_cast<std::size_t>(m.rows()));
  for (Eigen::Index o = 0; o < m.rows(); ++o) {
    double acc = 0.0;
    for (Eigen::Index i = 0; i < m.cols(); ++i) acc += m(o, i) * x[static_cast<std::size_t>(i)];
    y[static_cast<std::size_t>(o)] = acc + b(0, o);
  }
  return y;
}

void norm(Vec& x, const BackboneWeights& w, const std::string& prefix) {
  const MatrixXdR& g = w.tensor(prefix + ".weight");
  const MatrixXdR& b = w.tensor(prefix + ".bias");
  double mean = 0.0;
  for (double v : x) mean += v;
  mean /= static_cast<double>(x.size());
  double var = 0.0;
  for (double v : x) var += (v - mean) * (v - mean);
  var /= static_cast<double>(x.size());
  const double inv = 1.0 / std::sqrt(var + 1e-5);
  for (std::size_t c = 0; c < x.size(); ++c) x[c] = (x[c] - mean) * inv * g(0, static_cast<Eigen::Index>(c)) + b(0, static_cast<Eigen::Index>(c));
}

struct Token {
  Vec feature;
  std::array<double, 3> coord;
  bool lidar = false;
};

std::array<std::int64_t, 3> window_of(const std::array<double, 3>& c, const std::array<std::int64_t, 3>& w) {
  return {static_cast<std::int64_t>(std::floor(c[2] / static_cast<double>(w[2]))),
          static_cast<std::int64_t>(std::floor(c[1] / static_cast<double>(w[1]))),
          static_cast<std::int64_t>(std::floor(c[0] / static_cast<double>(w[0])))};
}

std::array<double, 3> relative(const std::array<double, 3>& c, const std::array<std::int64_t, 3>& w) {
  std::array<double, 3> r{};
  for (int a = 0; a < 3; ++a) {
    const auto l = static_cast<double>(w[static_cast<std::size_t>(a)]);
    const double off = c[static_cast<std::size_t>(a)] - l * std::floor(c[static_cast<std::size_t>(a)] / l);
    r[static_cast<std::size_t>(a)] = 2.0 * off / l - 1.0;
  }
  return r;
}

// Runs `layers` layers of set attention over one space. `members` index into
// `tokens`; `part_coords` drive the partition, `pe_coords` the encoding.
// Returns whether anything was dispatched.
bool attend_space(std::vector<Token>& tokens, const std::vector<std::int64_t>& members,
                  const std::vector<std::array<double, 3>>& part_coords,
                  const std::vector<std::array<double, 3>>& pe_coords, const std::array<std::int64_t, 3>& window,
                  std::int64_t tau, const BackboneWeights& weights, int layer, bool x_major) {
  if (members.empty()) return false;
  const OraclePartition part = oracle_partition(part_coords, window, tau, x_major);
  const auto c = static_cast<Eigen::Index>(tokens[static_cast<std::size_t>(members[0])].feature.size());
  std::vector<Vec> updated(members.size());
  for (std::size_t s = 0; s < part.sets.size(); ++s) {
    MatrixXdR f(tau, c);
    CoordMatrix pc(tau, 3);
    for (std::int64_t k = 0; k < tau; ++k) {
      const auto local = static_cast<std::size_t>(part.sets[s][static_cast<std::size_t>(k)]);
      const Vec& src = tokens[static_cast<std::size_t>(members[local])].feature;
      for (Eigen::Index j = 0; j < c; ++j) f(k, j) = src[static_cast<std::size_t>(j)];
      const auto rel = relative(pe_coords[local], window);
      pc(k, 0) = rel[0];
      pc(k, 1) = rel[1];
      pc(k, 2) = rel[2];
    }
    const DenseAttention out = oracle_dense_attention(f, pc, weights, layer);
    for (std::int64_t k = 0; k < tau; ++k) {
      if (!part.canonical[s][static_cast<std::size_t>(k)]) continue;
      const auto local = static_cast<std::size_t>(part.sets[s][static_cast<std::size_t>(k)]);
      updated[local].assign(out.outputs.row(k).data(), out.outputs.row(k).data() + c);
    }
  }
  for (std::size_t i = 0; i < members.size(); ++i)
    tokens[static_cast<std::size_t>(members[i])].feature = std::move(updated[i]);
  return !part.sets.empty();
}

}  // namespace

DenseAttention oracle_dense_attention(const MatrixXdR& features, const CoordMatrix& coords,
                                      const BackboneWeights& weights, int layer) {
  const std::string p = "layers." + std::to_string(layer) + ".";
  const auto tau = static_cast<std::size_t>(features.rows());
  const auto c = static_cast<std::size_t>(features.cols());
  const auto heads = static_cast<std::size_t>(weights.dims().heads);
  const std::size_t dh = c / heads;

  std::vector<Vec> x(tau), q(tau), k(tau), v(tau);
  for (std::size_t t = 0; t < tau; ++t) {
    Vec hidden = apply(weights, p + "pos.fc1", {coords(static_cast<Eigen::Index>(t), 0),
                                                coords(static_cast<Eigen::Index>(t), 1),
                                                coords(static_cast<Eigen::Index>(t), 2)});
    for (double& h : hidden) h = act(h);
    const Vec pe = apply(weights, p + "pos.fc2", hidden);
    x[t].resize(c);
    for (std::size_t j = 0; j < c; ++j) x[t][j] = features(static_cast<Eigen::Index>(t), static_cast<Eigen::Index>(j)) + pe[j];
    q[t] = apply(weights, p + "attn.query", x[t]);
    k[t] = apply(weights, p + "attn.key", x[t]);
    v[t] = apply(weights, p + "attn.value", x[t]);
  }

  DenseAttention out;
  out.probabilities.assign(heads * tau * tau, 0.0);
  std::vector<Vec> mixed(tau, Vec(c, 0.0));
  const double scale = 1.0 / std::sqrt(static_cast<double>(dh));
  for (std::size_t h = 0; h < heads; ++h) {
    std::vector<Vec> score(tau, Vec(tau, 0.0));
    for (std::size_t i = 0; i < tau; ++i)
      for (std::size_t j = 0; j < tau; ++j) {
        double dot = 0.0;
        for (std::size_t d = 0; d < dh; ++d) dot += q[i][h * dh + d] * k[j][h * dh + d];
        score[i][j] = dot * scale;
      }
    for (std::size_t i = 0; i < tau; ++i) {
      const double peak = *std::max_element(score[i].begin(), score[i].end());
      double sum = 0.0;
      for (double& s : score[i]) sum += (s = std::exp(s - peak));
      for (std::size_t j = 0; j < tau; ++j) {
        score[i][j] /= sum;
        out.probabilities[(h * tau + i) * tau + j] = score[i][j];
      }
      for (std::size_t d = 0; d < dh; ++d) {
        double acc = 0.0;
        for (std::size_t j = 0; j < tau; ++j) acc += score[i][j] * v[j][h * dh + d];
        mixed[i][h * dh + d] = acc;
      }
    }
  }

  out.outputs.resize(static_cast<Eigen::Index>(tau), static_cast<Eigen::Index>(c));
  for (std::size_t t = 0; t < tau; ++t) {
    const Vec o = apply(weights, p + "attn.output", mixed[t]);
    for (std::size_t j = 0; j < c; ++j) x[t][j] += o[j];
    norm(x[t], weights, p + "norm1");
    Vec hidden = apply(weights, p + "ffn.fc1", x[t]);
    for (double& h : hidden) h = act(h);
    const Vec f = apply(weights, p + "ffn.fc2", hidden);
    for (std::size_t j = 0; j < c; ++j) x[t][j] += f[j];
    norm(x[t], weights, p + "norm2");
    for (std::size_t j = 0; j < c; ++j) out.outputs(static_cast<Eigen::Index>(t), static_cast<Eigen::Index>(j)) = x[t][j];
  }
  return out;
}

OraclePartition oracle_partition(const std::vector<std::array<double, 3>>& coords,
                                 const std::array<std::int64_t, 3>& window, std::int64_t tau, bool x_major) {
  std::map<std::array<std::int64_t, 3>, std::vector<std::int64_t>> windows;
  for (std::size_t i = 0; i < coords.size(); ++i)
    windows[window_of(coords[i], window)].push_back(static_cast<std::int64_t>(i));

  OraclePartition out;
  for (auto& [id, members] : windows) {
    std::stable_sort(members.begin(), members.end(), [&](std::int64_t a, std::int64_t b) {
      const auto& ca = coords[static_cast<std::size_t>(a)];
      const auto& cb = coords[static_cast<std::size_t>(b)];
      const std::array<double, 3> ka = x_major ? ca : std::array<double, 3>{ca[1], ca[0], ca[2]};
      const std::array<double, 3> kb = x_major ? cb : std::array<double, 3>{cb[1], cb[0], cb[2]};
      return ka < kb;
    });
    const auto t = static_cast<std::int64_t>(members.size());
    const std::int64_t sets = (t + tau - 1) / tau;
    std::vector<bool> seen(members.size(), false);
    for (std::int64_t j = 0; j < sets; ++j) {
      std::vector<std::int64_t> set;
      std::vector<bool> canon;
      for (std::int64_t k = 0; k < tau; ++k) {
        const std::int64_t rank = (j * tau + k) * t / (sets * tau);
        set.push_back(members[static_cast<std::size_t>(rank)]);
        canon.push_back(!seen[static_cast<std::size_t>(rank)]);
        seen[static_cast<std::size_t>(rank)] = true;
      }
      out.sets.push_back(std::move(set));
      out.canonical.push_back(std::move(canon));
      out.set_window.push_back(id);
    }
  }
  return out;
}

ExhaustiveDepthScan::ExhaustiveDepthScan(const PseudoDepthTable& table) : views_(table.view_count()) {
  const auto points = table.points();
  for (std::size_t i = 0; i < points.size(); ++i)
    views_.at(static_cast<std::size_t>(points[i].view))
        .push_back({static_cast<double>(points[i].x), static_cast<double>(points[i].y),
                    static_cast<double>(points[i].depth), static_cast<std::int64_t>(i)});
}

std::optional<DepthHit> ExhaustiveDepthScan::nearest(double x, double y, int view) const {
  std::optional<DepthHit> best;
  double best_d2 = std::numeric_limits<double>::infinity();
  for (const Entry& e : views_.at(static_cast<std::size_t>(view))) {
    const double dx = x - e.x;
    const double dy = y - e.y;
    const double d2 = dx * dx + dy * dy;
    if (d2 < best_d2) {
      best_d2 = d2;
      best = DepthHit{e.depth, std::sqrt(d2), e.index};
    }
  }
  return best;
}

std::optional<DepthHit> oracle_nearest(double x, double y, int view, const PseudoDepthTable& table) {
  return ExhaustiveDepthScan(table).nearest(x, y, view);
}

Eigen::Vector3d oracle_unproject(double x, double y, int view, double depth, const CameraRig& rig) {
  const CameraView& cam = rig.view(static_cast<std::size_t>(view));
  const auto& k = cam.intrinsics;
  const double yn = (y - k(1, 2)) / k(1, 1);
  const double xn = (x - k(0, 2) - k(0, 1) * yn) / k(0, 0);
  const double c[3] = {xn * depth, yn * depth, depth};
  Eigen::Vector3d w;
  for (int i = 0; i < 3; ++i) {
    double acc = 0.0;
    for (int j = 0; j < 3; ++j) acc += cam.extrinsics(j, i) * (c[j] - cam.extrinsics(j, 3));
    w[i] = acc;
  }
  return w;
}

OracleBackbone oracle_serial_backbone(const PointCloud& cloud, const ImageStack& images, const CameraRig& rig,
                                      const BackboneWeights& weights, const BackboneConfig& config,
                                      const PseudoDepthTable& table) {
  const auto c = static_cast<std::size_t>(weights.dims().channels);
  const auto& g = config.grid;
  std::array<std::int64_t, 3> dims{};
  for (int a = 0; a < 3; ++a) dims[static_cast<std::size_t>(a)] = std::llround((g.range.max[a] - g.range.min[a]) / g.voxel_size[a]);

  // Lidar tokens: per voxel, max over embedded centered points.
  std::vector<Token> tokens;
  std::map<std::array<std::int64_t, 3>, Vec> voxels;  // keyed (z, y, x)
  for (std::size_t i = 0; i < cloud.size(); ++i) {
    const auto pt = cloud.point(i);
    std::array<std::int64_t, 3> idx{};
    bool inside = true;
    for (int a = 0; a < 3; ++a) {
      const double v = pt[static_cast<std::size_t>(a)];
      if (!(v >= g.range.min[a] && v < g.range.max[a])) inside = false;
      else idx[static_cast<std::size_t>(a)] = static_cast<std::int64_t>(std::floor((v - g.range.min[a]) / g.voxel_size[a]));
      if (inside && idx[static_cast<std::size_t>(a)] >= dims[static_cast<std::size_t>(a)]) inside = false;
    }
    if (!inside) continue;
    Vec in;
    for (int a = 0; a < 3; ++a)
      in.push_back(pt[static_cast<std::size_t>(a)] -
                   (g.range.min[a] + (static_cast<double>(idx[static_cast<std::size_t>(a)]) + 0.5) * g.voxel_size[a]));
    for (std::size_t e = 3; e < pt.size(); ++e) in.push_back(pt[e]);
    const Vec emb = apply(weights, "voxel_embed", in);
    auto [it, fresh] = voxels.try_emplace({idx[2], idx[1], idx[0]}, emb);
    if (!fresh)
      for (std::size_t j = 0; j < c; ++j) it->second[j] = std::max(it->second[j], emb[j]);
  }
  for (auto& [key, f] : voxels)
    tokens.push_back({std::move(f), {static_cast<double>(key[2]), static_cast<double>(key[1]), static_cast<double>(key[0])}, true});

  // Image tokens: raw patch pixels (row, column, channel), then the embedding.
  const int p = config.patch;
  for (int b = 0; b < images.views; ++b)
    for (int r = 0; r < images.height / p; ++r)
      for (int col = 0; col < images.width / p; ++col) {
        Vec raw;
        for (int dy = 0; dy < p; ++dy)
          for (int dx = 0; dx < p; ++dx)
            for (int ch = 0; ch < 3; ++ch) raw.push_back(images.at(b, r * p + dy, col * p + dx, ch));
        tokens.push_back({apply(weights, "patch_embed", raw), {double(col), double(r), double(b)}, false});
      }

  OracleBackbone out;
  const auto& bc = config.blocks;
  const ExhaustiveDepthScan scan(table);
  for (std::size_t blk = 0; blk < bc.sequence.size(); ++blk) {
    const BlockKind kind = bc.sequence[blk];
    // Spaces: members, partition coords, PE coords, window shape.
    struct SpaceSetup {
      std::vector<std::int64_t> members;
      std::vector<std::array<double, 3>> part, pe;
      std::array<std::int64_t, 3> window;
    };
    std::vector<SpaceSetup> spaces;
    if (kind == BlockKind::kIntra) {
      SpaceSetup l{{}, {}, {}, bc.lidar_window.shape}, im{{}, {}, {}, bc.image_window.shape};
      for (std::size_t i = 0; i < tokens.size(); ++i) {
        SpaceSetup& s = tokens[i].lidar ? l : im;
        s.members.push_back(static_cast<std::int64_t>(i));
        s.part.push_back(tokens[i].coord);
        s.pe.push_back(tokens[i].coord);
      }
      spaces = {l, im};
    } else if (kind == BlockKind::kInter2D) {
      SpaceSetup s{{}, {}, {}, bc.image_window.shape};
      for (std::size_t i = 0; i < tokens.size(); ++i) {
        if (!tokens[i].lidar) continue;
        Eigen::Vector3d world;
        for (int a = 0; a < 3; ++a)
          world[a] = g.range.min[a] + (tokens[i].coord[static_cast<std::size_t>(a)] + 0.5) * g.voxel_size[a];
        const auto hit = reference_projection(world, rig);
        if (!hit) continue;
        const std::array<double, 3> pc{std::floor(hit->x / p), std::floor(hit->y / p), double(hit->view)};
        s.members.push_back(static_cast<std::int64_t>(i));
        s.part.push_back(pc);
        s.pe.push_back(pc);
      }
      for (std::size_t i = 0; i < tokens.size(); ++i) {
        if (tokens[i].lidar) continue;
        s.members.push_back(static_cast<std::int64_t>(i));
        s.part.push_back(tokens[i].coord);
        s.pe.push_back(tokens[i].coord);
      }
      spaces = {s};
    } else {
      SpaceSetup s{{}, {}, {}, bc.lidar_window.shape};
      const double unit = bc.offset_in_pixels ? 1.0 : p;
      for (std::size_t i = 0; i < tokens.size(); ++i) {
        if (!tokens[i].lidar) continue;
        s.members.push_back(static_cast<std::int64_t>(i));
        s.part.push_back(tokens[i].coord);
        s.pe.push_back(tokens[i].coord);
      }
      for (std::size_t i = 0; i < tokens.size(); ++i) {
        if (tokens[i].lidar) continue;
        const int view = static_cast<int>(tokens[i].coord[2]);
        const double px = (tokens[i].coord[0] + 0.5) * p, py = (tokens[i].coord[1] + 0.5) * p;
        const auto hit = scan.nearest(px, py, view);
        if (!hit) continue;
        const Eigen::Vector3d world = oracle_unproject(px, py, view, hit->depth, rig);
        std::array<double, 3> gc{};
        bool inside = true;
        for (int a = 0; a < 3; ++a) {
          gc[static_cast<std::size_t>(a)] = (world[a] - g.range.min[a]) / g.voxel_size[a];
          inside = inside && gc[static_cast<std::size_t>(a)] >= 0.0 &&
                   gc[static_cast<std::size_t>(a)] < static_cast<double>(dims[static_cast<std::size_t>(a)]);
        }
        if (!inside) continue;
        Vec hidden = apply(weights, "offset_mlp.fc1", {hit->planar_distance / unit});
        for (double& h : hidden) h = act(h);
        const Vec off = apply(weights, "offset_mlp.fc2", hidden);
        for (std::size_t j = 0; j < c; ++j) tokens[i].feature[j] += off[j];
        s.members.push_back(static_cast<std::int64_t>(i));
        s.part.push_back({std::floor(gc[0]), std::floor(gc[1]), std::floor(gc[2])});
        s.pe.push_back(gc);
      }
      spaces = {s};
    }

    for (int l = 0; l < bc.layers_per_block; ++l) {
      const int layer = static_cast<int>(blk) * bc.layers_per_block + l;
      for (const SpaceSetup& s : spaces)
        if (attend_space(tokens, s.members, s.part, s.pe, s.window, bc.tau, weights, layer, l % 2 == 0))
          ++out.dispatches;
    }
  }

  BevGrid& bev = out.bev;
  bev.size_x = dims[0];
  bev.size_y = dims[1];
  bev.channels = static_cast<std::int64_t>(c);
  bev.cell_x = g.voxel_size.x();
  bev.cell_y = g.voxel_size.y();
  bev.origin_x = g.range.min.x();
  bev.origin_y = g.range.min.y();
  bev.features.assign(static_cast<std::size_t>(dims[0] * dims[1]) * c, 0.0);
  bev.occupied.assign(static_cast<std::size_t>(dims[0] * dims[1]), 0);
  for (const Token& t : tokens) {
    if (!t.lidar) continue;
    const auto cell = static_cast<std::size_t>(static_cast<std::int64_t>(t.coord[0]) * dims[1] + static_cast<std::int64_t>(t.coord[1]));
    if (bev.occupied[cell]) throw Error(ErrorCode::kDuplicateCell, "oracle: two lidar tokens share a BEV cell");
    bev.occupied[cell] = 1;
    std::copy(t.feature.begin(), t.feature.end(), bev.features.begin() + static_cast<std::ptrdiff_t>(cell * c));
  }
  return out;
}

}  // namespace unitr::harness

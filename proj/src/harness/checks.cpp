#include "unitr/harness/checks.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <numeric>
#include <set>
#include <sstream>
#include <unordered_set>

#include "unitr/attention.hpp"
#include "unitr/backbone.hpp"
#include "unitr/harness/fixtures.hpp"
#include "unitr/harness/oracles.hpp"
#include "unitr/harness/pipeline.hpp"
#include "unitr/harness/scene.hpp"
#include "unitr/partition.hpp"
#include "unitr/rng.hpp"

namespace unitr::harness {

bool Outcome::require(bool ok, const std::string& what) {
  if (!ok && failures_.size() < 8) failures_.push_back(what);
  if (!ok && failures_.size() == 8) failures_.push_back("...");
  return ok;
}

void Outcome::note(const std::string& text) { notes_.push_back(text); }

std::string Outcome::detail() const {
  std::ostringstream os;
  const auto& lines = failures_.empty() ? notes_ : failures_;
  for (std::size_t i = 0; i < lines.size(); ++i) os << (i ? "; " : "") << lines[i];
  return os.str();
}

namespace {

std::string num(double v) {
  std::ostringstream os;
  os.precision(3);
  os << v;
  return os.str();
}

double max_abs_diff(const MatrixXdR& a, const MatrixXdR& b) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) return std::numeric_limits<double>::infinity();
  return a.size() == 0 ? 0.0 : (a - b).cwiseAbs().maxCoeff();
}

bool rows_identical(const MatrixXdR& a, Eigen::Index ra, const MatrixXdR& b, Eigen::Index rb) {
  return std::equal(a.row(ra).data(), a.row(ra).data() + a.cols(), b.row(rb).data());
}

// Small scene shared by the backbone checks; built once.
struct SmallWorld {
  Config config;
  SyntheticScene scene;
  PseudoDepthTable table;
  BackboneWeights weights;
  TokenSequence tokens;
};

const SmallWorld& small_world() {
  static const SmallWorld world = [] {
    Config c = small_config(11);
    SyntheticScene s = generate_scene(c);
    PseudoDepthTable t = make_table(c, s.rig);
    BackboneWeights w = BackboneWeights::create(c.model, c.seed, c.init);
    TokenSequence tok = tokenize(s.cloud, s.images, w, c.backbone);
    return SmallWorld{c, std::move(s), std::move(t), std::move(w), std::move(tok)};
  }();
  return world;
}

// ---------------------------------------------------------------- geometry

Outcome geometry_rig_rigid() {
  Outcome o;
  const CameraRig rig = CameraRig::ring({});
  for (std::size_t b = 0; b < rig.size(); ++b) {
    const Eigen::Matrix3d r = rig.view(b).rotation();
    o.require((r * r.transpose() - Eigen::Matrix3d::Identity()).cwiseAbs().maxCoeff() <= 1e-9,
              "view " + std::to_string(b) + " rotation not orthonormal");
    o.require(std::abs(r.determinant() - 1.0) <= 1e-9, "view " + std::to_string(b) + " det != 1");
    o.require(rig.view(b).intrinsics(0, 0) > 0 && rig.view(b).intrinsics(1, 1) > 0, "non-positive focal length");
  }
  CameraView bad = rig.view(0);
  bad.extrinsics.topLeftCorner<3, 3>() *= 1.01;
  bool threw = false;
  try {
    CameraRig{{bad}};
  } catch (const Error& e) {
    threw = e.code() == ErrorCode::kInvalidArgument;
  }
  o.require(threw, "scaled rotation accepted as rigid");
  threw = false;
  CameraView reflect = rig.view(0);
  reflect.extrinsics.row(0) *= -1.0;
  reflect.extrinsics(3, 0) = 0.0;
  try {
    CameraRig{{reflect}};
  } catch (const Error&) {
    threw = true;
  }
  o.require(threw, "reflection accepted as rigid");
  return o;
}

Outcome geometry_first_hit_permutation() {
  Outcome o;
  const auto& w = small_world();
  const auto n = w.scene.cloud.size();
  std::vector<int> forward(n, -1);
  for (std::size_t i = 0; i < n; ++i) {
    const auto p = w.scene.cloud.point(i);
    const auto hit = project_to_first_hit({p[0], p[1], p[2]}, w.scene.rig);
    forward[i] = hit ? hit->view : -1;
  }
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  Rng rng(3);
  for (std::size_t i = n; i > 1; --i) std::swap(order[i - 1], order[rng.below(i)]);
  for (std::size_t i : order) {
    const auto p = w.scene.cloud.point(i);
    const auto hit = project_to_first_hit({p[0], p[1], p[2]}, w.scene.rig);
    o.require((hit ? hit->view : -1) == forward[i], "point " + std::to_string(i) + " changed view under permutation");
  }
  return o;
}

Outcome geometry_round_trip() {
  Outcome o;
  Rng rng(21);
  double worst = 0.0, worst_px = 0.0;
  int tested = 0;
  for (int r = 0; r < 8; ++r) {
    const CameraRig rig = random_rig(rng, 3, {256, 704});
    for (int k = 0; k < 300; ++k) {
      const int view = static_cast<int>(rng.below(rig.size()));
      const double x = rng.uniform(0.0, 704.0), y = rng.uniform(0.0, 256.0), d = rng.uniform(0.5, 80.0);
      const Eigen::Vector3d p = unproject(x, y, view, d, rig);
      const auto back = project_into_view(p, rig.view(static_cast<std::size_t>(view)), view);
      if (!o.require(back.has_value(), "unprojected point not visible in its own view")) continue;
      worst_px = std::max({worst_px, std::abs(back->x - x), std::abs(back->y - y)});
      const Eigen::Vector3d again = unproject(back->x, back->y, view, back->depth, rig);
      worst = std::max(worst, (again - p).cwiseAbs().maxCoeff());
      ++tested;
    }
  }
  o.require(worst < 1e-6, "round-trip error " + num(worst) + " m");
  o.require(worst_px < 1e-6, "re-projection error " + num(worst_px) + " px");
  o.note(std::to_string(tested) + " points, max " + num(worst) + " m / " + num(worst_px) + " px");
  return o;
}

Outcome geometry_table_deterministic() {
  Outcome o;
  const auto& w = small_world();
  const GridShape shape{60, 60, 6};
  const auto a = PseudoDepthTable::build(shape, w.config.backbone.grid.range, w.scene.rig);
  const auto b = PseudoDepthTable::build(shape, w.config.backbone.grid.range, w.scene.rig);
  o.require(a.to_container().serialize() == b.to_container().serialize(), "rebuild serializes differently");
  o.require(a.points().size() <= static_cast<std::size_t>(60 * 60 * 6) * w.scene.rig.size(), "nu exceeds |V^P| * B");
  for (const auto& p : a.points()) {
    const auto& sz = w.scene.rig.view(static_cast<std::size_t>(p.view)).image_size;
    if (!o.require(p.x >= 0 && p.y >= 0 && p.x < sz.width && p.y < sz.height && p.depth > 0,
                   "stored point outside its image or with non-positive depth"))
      break;
  }
  const auto restored = PseudoDepthTable::from_container(a.to_container(), w.scene.rig);
  o.require(restored.to_container() == a.to_container(), "container round trip changed the table");
  return o;
}

Outcome geometry_table_brute_count() {
  Outcome o;
  Rng rng(5);
  for (int trial = 0; trial < 5; ++trial) {
    std::vector<CameraView> views;
    for (int b = 0; b < 2; ++b) {
      CameraView v;
      v.image_size = {120, 160};
      v.intrinsics << 100.0, 0.0, 80.0, 0.0, 100.0, 60.0, 0.0, 0.0, 1.0;
      // Camera a few meters outside a unit box, looking roughly at it.
      const double yaw = rng.uniform(0.0, 6.283), dist = rng.uniform(2.0, 4.0);
      const Eigen::Vector3d center(dist * std::cos(yaw), dist * std::sin(yaw), rng.uniform(-0.3, 0.3));
      const Eigen::Vector3d fwd = (Eigen::Vector3d(0.5, 0.5, 0.5) - center).normalized();
      const Eigen::Vector3d right = fwd.cross(Eigen::Vector3d::UnitZ()).normalized();
      const Eigen::Vector3d down = fwd.cross(right);
      Eigen::Matrix3d r;
      r.row(0) = right;
      r.row(1) = down;
      r.row(2) = fwd;
      v.extrinsics.setIdentity();
      v.extrinsics.topLeftCorner<3, 3>() = r;
      v.extrinsics.topRightCorner<3, 1>() = -r * center;
      views.push_back(v);
    }
    const CameraRig rig(views);
    const Box3 range{Eigen::Vector3d::Zero(), Eigen::Vector3d::Ones()};
    const auto table = PseudoDepthTable::build({4, 4, 2}, range, rig);
    std::size_t expected = 0;
    for (std::size_t b = 0; b < 2; ++b)
      for (int ix = 0; ix < 4; ++ix)
        for (int iy = 0; iy < 4; ++iy)
          for (int iz = 0; iz < 2; ++iz) {
            const double p[3] = {(ix + 0.5) / 4.0, (iy + 0.5) / 4.0, (iz + 0.5) / 2.0};
            double c[3];
            for (int i = 0; i < 3; ++i) {
              c[i] = views[b].extrinsics(i, 3);
              for (int j = 0; j < 3; ++j) c[i] += views[b].extrinsics(i, j) * p[j];
            }
            if (c[2] <= 1e-6) continue;
            const double u = 100.0 * c[0] / c[2] + 80.0, v = 100.0 * c[1] / c[2] + 60.0;
            if (u >= 0 && v >= 0 && u < 160 && v < 120) ++expected;
          }
    o.require(expected > 0, "degenerate trial: no cell center visible");
    o.require(table.points().size() == expected,
              "nu " + std::to_string(table.points().size()) + " != brute force " + std::to_string(expected));
  }
  return o;
}

Outcome geometry_nearest_scan() {
  Outcome o;
  const auto& w = small_world();
  const auto table = PseudoDepthTable::build({40, 40, 6}, w.config.backbone.grid.range, w.scene.rig);
  o.require(table.points().size() <= 100000, "table larger than 1e5 points");
  const ExhaustiveDepthScan scan(table);
  Rng rng(8);
  const auto size = w.scene.rig.view(0).image_size;
  int mismatches = 0;
  for (int q = 0; q < 3000; ++q) {
    const int view = static_cast<int>(rng.below(w.scene.rig.size()));
    double x, y;
    if (q % 10 == 0 && !table.points().empty()) {
      const auto& p = table.points()[rng.below(table.points().size())];
      x = p.x;
      y = p.y;
    } else {
      x = rng.uniform(-20.0, size.width + 20.0);
      y = rng.uniform(-20.0, size.height + 20.0);
    }
    const auto a = table.nearest(x, y, view);
    const auto b = scan.nearest(x, y, view);
    const bool same = a.has_value() == b.has_value() &&
                      (!a || (a->depth == b->depth && a->planar_distance == b->planar_distance &&
                              a->point_index == b->point_index));
    if (!same) ++mismatches;
  }
  o.require(mismatches == 0, std::to_string(mismatches) + " of 3000 queries differ from the scan");
  o.note(std::to_string(table.points().size()) + " points, 3000 queries");
  return o;
}

Outcome geometry_empty_view() {
  Outcome o;
  const auto& w = small_world();
  // Pseudo grid behind view 0 (which looks along +x).
  const Box3 behind{Eigen::Vector3d(-54.0, -54.0, -5.0), Eigen::Vector3d(-1.0, 54.0, 3.0)};
  const auto table = PseudoDepthTable::build({40, 80, 4}, behind, w.scene.rig);
  const auto empty = table.empty_views();
  o.require(std::find(empty.begin(), empty.end(), 0) != empty.end(), "view 0 should have no virtual points");
  o.require(!nearest_depth(10.0, 10.0, 0, table).has_value(), "empty view returned a depth");
  return o;
}

// --------------------------------------------------------------- tokenizers

Outcome tokenizers_order_invariant() {
  Outcome o;
  const auto& w = small_world();
  PointCloud shuffled;
  shuffled.extras = w.scene.cloud.extras;
  std::vector<std::size_t> order(w.scene.cloud.size());
  std::iota(order.begin(), order.end(), 0);
  Rng rng(4);
  for (std::size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[rng.below(i)]);
  for (std::size_t i : order) {
    const auto p = w.scene.cloud.point(i);
    shuffled.add(p[0], p[1], p[2], p.subspan(3));
  }
  const auto a = voxelize(w.scene.cloud, w.config.backbone.grid, w.weights);
  const auto b = voxelize(shuffled, w.config.backbone.grid, w.weights);
  o.require(a.coords == b.coords, "voxel coordinates depend on point order");
  o.require(a.features == b.features, "voxel features depend on point order");
  return o;
}

Outcome tokenizers_voxel_count() {
  Outcome o;
  const auto& w = small_world();
  const auto& g = w.config.backbone.grid;
  std::unordered_set<std::int64_t> cells;
  for (std::size_t i = 0; i < w.scene.cloud.size(); ++i) {
    const auto p = w.scene.cloud.point(i);
    bool inside = true;
    std::int64_t key = 0;
    for (int a = 2; a >= 0; --a) {
      const double v = p[static_cast<std::size_t>(a)];
      inside = inside && v >= g.range.min[a] && v < g.range.max[a];
      key = key * 4096 + static_cast<std::int64_t>(std::floor((v - g.range.min[a]) / g.voxel_size[a]));
    }
    if (inside) cells.insert(key);
  }
  const auto n = w.tokens.count(Modality::kLidar);
  o.require(n == static_cast<std::int64_t>(cells.size()),
            "N = " + std::to_string(n) + ", distinct voxels = " + std::to_string(cells.size()));
  return o;
}

Outcome tokenizers_patch_bijection() {
  Outcome o;
  const auto& w = small_world();
  const auto& img = w.scene.images;
  const int p = w.config.backbone.patch;
  ImageStack rebuilt(img.views, img.height, img.width);
  std::vector<int> hits(rebuilt.pixels.size(), 0);
  for (std::int64_t t = 0; t < w.tokens.size(); ++t) {
    if (w.tokens.modality[static_cast<std::size_t>(t)] != Modality::kImage) continue;
    const int col = static_cast<int>(w.tokens.coords(t, 0)), row = static_cast<int>(w.tokens.coords(t, 1)),
              view = static_cast<int>(w.tokens.coords(t, 2));
    const auto raw = patch_pixels(img, p, view, row, col);
    std::size_t k = 0;
    for (int dy = 0; dy < p; ++dy)
      for (int dx = 0; dx < p; ++dx)
        for (int ch = 0; ch < 3; ++ch) {
          rebuilt.at(view, row * p + dy, col * p + dx, ch) = raw[k++];
          ++hits[rebuilt.offset(view, row * p + dy, col * p + dx) + static_cast<std::size_t>(ch)];
        }
  }
  o.require(rebuilt.pixels == img.pixels, "reassembled patches differ from the input");
  o.require(std::all_of(hits.begin(), hits.end(), [](int h) { return h == 1; }), "pixel not covered exactly once");
  return o;
}

Outcome tokenizers_sequence_invariants() {
  Outcome o;
  const auto& w = small_world();
  try {
    validate(w.tokens, static_cast<int>(w.scene.rig.size()));
  } catch (const Error& e) {
    o.require(false, e.what());
  }
  for (std::int64_t i = 0; i < w.tokens.size(); ++i)
    if (w.tokens.modality[static_cast<std::size_t>(i)] == Modality::kLidar &&
        !o.require(w.tokens.coords(i, 2) == 0.0, "pillar token with z index != 0"))
      break;
  TokenSequence dup = concat_tokens(w.tokens, TokenSequence{});
  dup.coords.row(1) = dup.coords.row(0);
  bool threw = false;
  try {
    validate(dup, static_cast<int>(w.scene.rig.size()));
  } catch (const Error&) {
    threw = true;
  }
  o.require(threw, "duplicate voxel index accepted");
  return o;
}

// ---------------------------------------------------------------- partition

struct Layout {
  CoordMatrix coords;
  WindowSpec spec;
  std::int64_t tau;
};

std::vector<Layout> random_layouts(std::uint64_t seed, int count) {
  Rng rng(seed);
  const std::array<std::array<std::int64_t, 3>, 3> windows{{{1, 1, 1}, {30, 30, 1}, {12, 12, 1}}};
  const std::array<std::int64_t, 3> taus{1, 7, 90};
  std::vector<Layout> out;
  for (int i = 0; i < count; ++i) {
    const auto n = static_cast<std::int64_t>(10 + rng.below(2000));
    Layout l{random_layout(rng, n, {120, 120, 2}), {windows[rng.below(3)], Space::kLidar3D}, taus[rng.below(3)]};
    out.push_back(std::move(l));
  }
  return out;
}

Outcome partition_coverage() {
  Outcome o;
  for (const auto& l : random_layouts(31, 60)) {
    for (InnerOrder order : {InnerOrder::kXMajor, InnerOrder::kYMajor}) {
      const auto p = dynamic_set_partition(l.coords, l.spec, l.tau, order);
      const auto wa = assign_windows(l.coords, l.spec);
      std::vector<int> canon(static_cast<std::size_t>(l.coords.rows()), 0), any(canon.size(), 0);
      for (std::int64_t s = 0; s < p.slot_count(); ++s) {
        const auto t = static_cast<std::size_t>(p.slots[static_cast<std::size_t>(s)]);
        ++any[t];
        canon[t] += p.canonical[static_cast<std::size_t>(s)];
        o.require(wa.window_of[t] == p.set_window[static_cast<std::size_t>(s / l.tau)], "set spans two windows");
      }
      o.require(std::all_of(canon.begin(), canon.end(), [](int c) { return c == 1; }), "canonical count != 1");
      o.require(std::all_of(any.begin(), any.end(), [](int c) { return c >= 1; }), "token missing from every slot");
      o.require(p.slot_count() == p.set_count() * l.tau, "set without exactly tau slots");
      for (std::size_t win = 0; win < p.window_tokens.size(); ++win)
        o.require(p.window_sets[win] == (p.window_tokens[win] + l.tau - 1) / l.tau, "S != ceil(T / tau)");
    }
  }
  return o;
}

Outcome partition_formula_oracle() {
  Outcome o;
  for (const auto& l : random_layouts(32, 40)) {
    std::vector<std::array<double, 3>> c(static_cast<std::size_t>(l.coords.rows()));
    for (std::size_t i = 0; i < c.size(); ++i)
      c[i] = {l.coords(static_cast<Eigen::Index>(i), 0), l.coords(static_cast<Eigen::Index>(i), 1),
              l.coords(static_cast<Eigen::Index>(i), 2)};
    for (bool x_major : {true, false}) {
      const auto p = dynamic_set_partition(l.coords, l.spec, l.tau, x_major ? InnerOrder::kXMajor : InnerOrder::kYMajor);
      const auto ref = oracle_partition(c, l.spec.shape, l.tau, x_major);
      bool same = static_cast<std::int64_t>(ref.sets.size()) == p.set_count();
      for (std::size_t s = 0; same && s < ref.sets.size(); ++s)
        for (std::size_t k = 0; same && k < static_cast<std::size_t>(l.tau); ++k) {
          const auto slot = s * static_cast<std::size_t>(l.tau) + k;
          same = p.slots[slot] == ref.sets[s][k] && (p.canonical[slot] != 0) == ref.canonical[s][k];
        }
      o.require(same, "slot map differs from the direct formula evaluation");
    }
  }
  return o;
}

Outcome partition_rotation_consistency() {
  Outcome o;
  for (const auto& l : random_layouts(33, 40)) {
    const auto x = dynamic_set_partition(l.coords, l.spec, l.tau, InnerOrder::kXMajor);
    const auto y = dynamic_set_partition(l.coords, l.spec, l.tau, InnerOrder::kYMajor);
    o.require(x.set_window == y.set_window && x.window_sets == y.window_sets && x.window_tokens == y.window_tokens,
              "X- and Y-major partitions disagree on windows or set counts");
  }
  return o;
}

Outcome partition_determinism() {
  Outcome o;
  for (const auto& l : random_layouts(34, 20)) {
    const auto a = dynamic_set_partition(l.coords, l.spec, l.tau, InnerOrder::kYMajor);
    const auto b = dynamic_set_partition(l.coords, l.spec, l.tau, InnerOrder::kYMajor);
    o.require(a == b, "repeated partition differs");
  }
  return o;
}

Outcome partition_gather_scatter() {
  Outcome o;
  Rng rng(35);
  for (const auto& l : random_layouts(35, 30)) {
    MatrixXdR f(l.coords.rows(), 16);
    for (Eigen::Index i = 0; i < f.size(); ++i) f.data()[i] = rng.normal();
    const auto p = dynamic_set_partition(l.coords, l.spec, l.tau, InnerOrder::kXMajor);
    SetBatch g = gather(p, f, l.coords);
    o.require(scatter_canonical(p, g.features) == f, "gather then scatter is not the identity");
    for (std::int64_t s = 0; s < p.slot_count(); ++s)
      if (!p.canonical[static_cast<std::size_t>(s)]) g.features.row(s).setConstant(1e300);
    o.require(scatter_canonical(p, g.features) == f, "non-canonical duplicates leaked into the output");
    // Sequential reference: for each token, read its canonical slot.
    MatrixXdR ref(f.rows(), f.cols());
    for (std::int64_t t = 0; t < f.rows(); ++t)
      for (std::int64_t s = 0; s < p.slot_count(); ++s)
        if (p.slots[static_cast<std::size_t>(s)] == t && p.canonical[static_cast<std::size_t>(s)]) {
          ref.row(t) = g.features.row(s);
          break;
        }
    o.require(scatter_canonical(p, g.features) == ref, "scatter differs from the sequential reference");
  }
  return o;
}

Outcome partition_modality_spaces() {
  Outcome o;
  const auto& w = small_world();
  const auto intra = plan_intra(w.tokens, w.config.backbone);
  o.require(mixed_modality_sets(intra, w.tokens) == 0, "intra partition mixes modalities");
  const auto merged = plan_inter_2d(w.tokens, w.scene.rig, w.config.backbone);
  const auto mixed = mixed_modality_sets(merged, w.tokens);
  o.require(mixed > 0, "merged 2D partition never groups lidar with image tokens");
  // Explicit pair: a lidar token sharing a window with image tokens shares a set.
  const auto& space = merged.spaces[0];
  const auto wa = assign_windows(space.coords, space.window);
  bool found = false;
  for (std::size_t i = 0; i < space.members.size() && !found; ++i) {
    if (w.tokens.modality[static_cast<std::size_t>(space.members[i])] != Modality::kLidar) continue;
    const auto& part = space.x_major;
    for (std::int64_t s = 0; s < part.slot_count() && !found; ++s) {
      if (part.slots[static_cast<std::size_t>(s)] != static_cast<std::int64_t>(i)) continue;
      const auto set = s / part.tau;
      for (std::int64_t k = 0; k < part.tau; ++k) {
        const auto other = part.slots[static_cast<std::size_t>(set * part.tau + k)];
        if (w.tokens.modality[static_cast<std::size_t>(space.members[static_cast<std::size_t>(other)])] == Modality::kImage)
          found = true;
      }
    }
  }
  o.require(found, "no lidar token found in a set with an image token");
  o.note(std::to_string(mixed) + " mixed sets");
  return o;
}

// ---------------------------------------------------------------- attention

Outcome attention_softmax_rows() {
  Outcome o;
  Rng rng(41);
  const auto w = BackboneWeights::create({}, 41);
  const SetBatch b = random_batch(rng, 6, 37, 128);
  AttentionProbe probe;
  set_attention_layer(b, w, 0, &probe);
  double worst = 0.0;
  for (std::size_t r = 0; r < probe.probabilities.size() / 37; ++r) {
    double sum = 0.0;
    for (std::size_t k = 0; k < 37; ++k) sum += probe.probabilities[r * 37 + k];
    worst = std::max(worst, std::abs(sum - 1.0));
  }
  o.require(worst <= 1e-6, "softmax row sum off by " + num(worst));
  return o;
}

Outcome attention_set_locality() {
  Outcome o;
  Rng rng(42);
  const auto w = BackboneWeights::create({}, 42);
  SetBatch b = random_batch(rng, 3, 20, 128);
  const SetBatch before = set_attention_layer(b, w, 1);
  b.features.middleRows(20, 20).setZero();
  const SetBatch after = set_attention_layer(b, w, 1);
  o.require(before.features.topRows(20) == after.features.topRows(20), "set 0 changed when set 1 was zeroed");
  o.require(before.features.bottomRows(20) == after.features.bottomRows(20), "set 2 changed when set 1 was zeroed");
  o.require(before.features.middleRows(20, 20) != after.features.middleRows(20, 20), "zeroed set unaffected");
  return o;
}

Outcome attention_permutation_equivariance() {
  Outcome o;
  Rng rng(43);
  const auto w = BackboneWeights::create({}, 43);
  const SetBatch b = random_batch(rng, 1, 30, 128);
  std::vector<Eigen::Index> perm(30);
  std::iota(perm.begin(), perm.end(), 0);
  for (std::size_t i = perm.size(); i > 1; --i) std::swap(perm[i - 1], perm[rng.below(i)]);
  SetBatch pb = b;
  for (Eigen::Index i = 0; i < 30; ++i) {
    pb.features.row(i) = b.features.row(perm[static_cast<std::size_t>(i)]);
    pb.coords.row(i) = b.coords.row(perm[static_cast<std::size_t>(i)]);
  }
  const auto out = set_attention_layer(b, w, 0).features;
  const auto pout = set_attention_layer(pb, w, 0).features;
  double worst = 0.0;
  for (Eigen::Index i = 0; i < 30; ++i)
    worst = std::max(worst, (pout.row(i) - out.row(perm[static_cast<std::size_t>(i)])).cwiseAbs().maxCoeff());
  o.require(worst <= 1e-12, "permuted outputs differ by " + num(worst));
  return o;
}

Outcome attention_identical_tokens() {
  Outcome o;
  Rng rng(44);
  const auto w = BackboneWeights::create({}, 44);
  for (std::int64_t tau : {7, 12, 90}) {
    SetBatch b = random_batch(rng, 1, tau, 128);
    for (Eigen::Index i = 1; i < tau; ++i) {
      b.features.row(i) = b.features.row(0);
      b.coords.row(i) = b.coords.row(0);
    }
    AttentionProbe probe;
    const auto out = set_attention_layer(b, w, 0, &probe).features;
    for (Eigen::Index i = 1; i < tau; ++i)
      if (!o.require(rows_identical(out, i, out, 0), "identical tokens diverged at tau " + std::to_string(tau))) break;
    for (double p : probe.probabilities)
      if (!o.require(std::abs(p - 1.0 / static_cast<double>(tau)) <= 1e-12, "non-uniform weight over identical keys"))
        break;
  }
  return o;
}

Outcome attention_weight_sharing() {
  Outcome o;
  const auto w = BackboneWeights::create({}, 45);
  for (const auto& name : w.names())
    for (const char* word : {"lidar", "image", "camera", "cam.", "modality", "pts", "img"})
      o.require(name.find(word) == std::string::npos, "tensor '" + name + "' names a modality");
  return o;
}

Outcome attention_parallel_serial() {
  Outcome o;
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    Rng rng(100 + seed);
    const auto w = BackboneWeights::create({}, seed);
    const SetBatch lidar = random_batch(rng, 1 + static_cast<std::int64_t>(rng.below(5)), 90, 128);
    const SetBatch image = random_batch(rng, 1 + static_cast<std::int64_t>(rng.below(5)), 90, 128);
    DispatchCounter par, ser;
    const auto a = batched_layer_over_modalities(lidar, image, w, 0, par);
    const auto b = serial_layer_over_modalities(lidar, image, w, 0, ser);
    const double d = std::max(max_abs_diff(a.lidar.features, b.lidar.features), max_abs_diff(a.image.features, b.image.features));
    o.require(d <= 1e-6, "parallel and serial differ by " + num(d));
    o.require(par.value() == 1 && ser.value() == 2, "dispatch counts " + std::to_string(par.value()) + "/" +
                                                        std::to_string(ser.value()) + ", expected 1/2");
  }
  bool threw = false;
  try {
    Rng rng(7);
    const auto w = BackboneWeights::create({}, 7);
    DispatchCounter c;
    batched_layer_over_modalities(random_batch(rng, 1, 90, 128), random_batch(rng, 1, 45, 128), w, 0, c);
  } catch (const Error& e) {
    threw = e.code() == ErrorCode::kTauMismatch;
  }
  o.require(threw, "differing tau accepted");
  return o;
}

Outcome attention_dense_oracle() {
  Outcome o;
  Rng rng(46);
  const auto w = BackboneWeights::create({}, 46);
  double worst = 0.0;
  for (int i = 0; i < 40; ++i) {
    const auto tau = static_cast<std::int64_t>(1 + rng.below(90));
    const SetBatch b = random_batch(rng, 1, tau, 128);
    const int layer = static_cast<int>(rng.below(8));
    AttentionProbe probe;
    const auto out = set_attention_layer(b, w, layer, &probe);
    const auto ref = oracle_dense_attention(b.features, b.coords, w, layer);
    worst = std::max(worst, max_abs_diff(out.features, ref.outputs));
    for (std::size_t k = 0; k < ref.probabilities.size(); ++k)
      worst = std::max(worst, std::abs(ref.probabilities[k] - probe.probabilities[k]));
  }
  o.require(worst <= 1e-6, "engine vs dense oracle " + num(worst));
  o.note("max-abs " + num(worst));
  return o;
}

Outcome attention_hygiene() {
  Outcome o;
  ModelDims dims;
  dims.layers = 20;
  const auto w = BackboneWeights::create(dims, 47, {InitScheme::kNormal, 0.02});
  Rng rng(47);
  SetBatch b = random_batch(rng, 4, 90, 128);
  for (Eigen::Index i = 0; i < b.features.rows(); ++i) b.features.row(i).normalize();
  for (int l = 0; l < 20; ++l) b = set_attention_layer(b, w, l);
  const auto norms = b.features.rowwise().norm();
  o.require(b.features.allFinite(), "non-finite activations");
  o.require(norms.minCoeff() >= 0.1 && norms.maxCoeff() <= 10.0,
            "token norms in [" + num(norms.minCoeff()) + ", " + num(norms.maxCoeff()) + "]");
  return o;
}

Outcome attention_pe_jacobian() {
  Outcome o;
  const auto w = BackboneWeights::create({}, 48);
  Rng rng(48);
  double worst = 0.0;
  const double eps = 1e-5;
  for (int i = 0; i < 20; ++i) {
    const Eigen::Vector3d c(rng.uniform(-1, 1), rng.uniform(-1, 1), rng.uniform(-1, 1));
    const int layer = static_cast<int>(rng.below(8));
    const Eigen::MatrixXd j = positional_encode_jacobian(c, w, layer);
    for (int a = 0; a < 3; ++a) {
      CoordMatrix lo(1, 3), hi(1, 3);
      lo.row(0) = c.transpose();
      hi.row(0) = c.transpose();
      lo(0, a) -= eps;
      hi(0, a) += eps;
      const MatrixXdR fd = (positional_encode(hi, w, layer) - positional_encode(lo, w, layer)) / (2 * eps);
      const double scale = j.col(a).cwiseAbs().maxCoeff();
      worst = std::max(worst, (fd.row(0).transpose() - j.col(a)).cwiseAbs().maxCoeff() / scale);
    }
  }
  o.require(worst <= 1e-4, "finite-difference relative error " + num(worst));
  o.note("relative error " + num(worst));
  return o;
}

Outcome attention_nonfinite() {
  Outcome o;
  Rng rng(49);
  const auto w = BackboneWeights::create({}, 49);
  SetBatch b = random_batch(rng, 2, 4, 128);
  b.features(5, 3) = std::numeric_limits<double>::quiet_NaN();
  bool threw = false;
  try {
    set_attention_layer(b, w, 0);
  } catch (const Error& e) {
    threw = e.code() == ErrorCode::kNonFiniteActivation;
  }
  o.require(threw, "NaN input did not raise NonFiniteActivation");
  return o;
}

// ----------------------------------------------------------------- backbone

struct BlockRun {
  BlockPlan plan;
  TokenSequence in, out;
  BlockReport report;
};

std::vector<BlockRun> run_blocks(const SmallWorld& w, const PseudoDepthTable& table, ExecutionMode mode,
                                 std::uint64_t* dispatches = nullptr) {
  std::vector<BlockRun> runs;
  TokenSequence current = w.tokens;
  DispatchCounter counter;
  const auto& bc = w.config.backbone.blocks;
  for (std::size_t b = 0; b < bc.sequence.size(); ++b) {
    BlockRun r;
    r.in = current;
    const BlockKind k = bc.sequence[b];
    r.plan = k == BlockKind::kIntra     ? plan_intra(current, w.config.backbone)
             : k == BlockKind::kInter2D ? plan_inter_2d(current, w.scene.rig, w.config.backbone)
                                        : plan_inter_3d(current, table, w.scene.rig, w.config.backbone);
    r.out = execute_block(current, r.plan, w.weights, w.config.backbone, static_cast<int>(b) * bc.layers_per_block,
                          mode, counter, &r.report);
    current = r.out;
    runs.push_back(std::move(r));
  }
  if (dispatches) *dispatches = counter.value();
  return runs;
}

const std::vector<BlockRun>& small_runs() {
  static const auto runs = run_blocks(small_world(), small_world().table, ExecutionMode::kParallel);
  return runs;
}

Outcome backbone_conservation() {
  Outcome o;
  for (const auto& r : small_runs()) {
    const std::string kind(to_string(r.plan.kind));
    o.require(r.out.size() == r.in.size(), kind + " changed the token count");
    o.require(r.out.modality == r.in.modality, kind + " changed modality tags");
    o.require(r.out.coords == r.in.coords, kind + " did not restore coordinates");
    o.require(r.out.bev_cell == r.in.bev_cell, kind + " changed BEV cells");
  }
  return o;
}

Outcome backbone_reach() {
  Outcome o;
  for (const auto& r : small_runs()) {
    const std::string kind(to_string(r.plan.kind));
    if (r.plan.kind == BlockKind::kIntra)
      o.require(r.report.mixed_sets == 0, "intra block mixed modalities");
    else
      o.require(r.report.mixed_sets > 0, kind + " produced no mixed-modality set");
    o.note(kind + ": " + std::to_string(r.report.mixed_sets));
  }
  return o;
}

Outcome backbone_passthrough() {
  Outcome o;
  std::size_t checked = 0;
  for (const auto& r : small_runs())
    for (auto t : r.plan.passthrough) {
      o.require(rows_identical(r.in.features, t, r.out.features, t), "passthrough token changed");
      ++checked;
    }
  // Depthless image tokens: a table whose pseudo grid view 0 cannot see.
  const auto& w = small_world();
  const Box3 behind{Eigen::Vector3d(-54.0, -54.0, -5.0), Eigen::Vector3d(-1.0, 54.0, 3.0)};
  const auto table = PseudoDepthTable::build({45, 90, 10}, behind, w.scene.rig);
  DispatchCounter counter;
  const auto plan = plan_inter_3d(w.tokens, table, w.scene.rig, w.config.backbone);
  const auto out = execute_block(w.tokens, plan, w.weights, w.config.backbone, 6, ExecutionMode::kParallel, counter);
  std::size_t depthless = 0;
  for (auto t : plan.passthrough) {
    o.require(w.tokens.modality[static_cast<std::size_t>(t)] == Modality::kImage, "lidar token passed through 3D");
    o.require(rows_identical(w.tokens.features, t, out.features, t), "depthless token changed");
    ++depthless;
  }
  o.require(depthless > 0, "no depthless tokens in the emptied view");
  o.note(std::to_string(checked) + " invisible, " + std::to_string(depthless) + " depthless");
  return o;
}

Outcome backbone_dispatch_accounting() {
  Outcome o;
  const auto& w = small_world();
  std::uint64_t par = 0, ser = 0;
  const auto pr = run_blocks(w, w.table, ExecutionMode::kParallel, &par);
  const auto sr = run_blocks(w, w.table, ExecutionMode::kSerial, &ser);
  const auto& bc = w.config.backbone.blocks;
  o.require(par == expected_dispatches(bc, ExecutionMode::kParallel) && par == 8,
            "parallel dispatches " + std::to_string(par));
  o.require(ser == expected_dispatches(bc, ExecutionMode::kSerial) && ser == 10,
            "serial dispatches " + std::to_string(ser));
  for (std::size_t b = 0; b < pr.size(); ++b) {
    o.require(pr[b].report.dispatches == expected_block_dispatches(pr[b].plan.kind, 2, ExecutionMode::kParallel),
              "parallel block dispatch count");
    o.require(sr[b].report.dispatches == expected_block_dispatches(sr[b].plan.kind, 2, ExecutionMode::kSerial),
              "serial block dispatch count");
    o.require(max_abs_diff(pr[b].out.features, sr[b].out.features) <= 1e-6, "serial block output differs");
  }
  return o;
}

Outcome backbone_bev_pool() {
  Outcome o;
  TokenSequence t;
  t.features = MatrixXdR::Zero(1, 4);
  t.features.row(0) << 1, 2, 3, 4;
  t.coords.resize(1, 3);
  t.coords.row(0) << 3, 5, 0;
  t.modality = {Modality::kLidar};
  t.bev_cell = {3 * 360 + 5};
  const VoxelGrid g;
  const BevGrid bev = bev_pool(t, g, 4);
  o.require(bev.size_x == 360 && bev.size_y == 360, "default BEV grid is not 360 x 360");
  o.require(bev.occupied_count() == 1 && bev.occupied[3 * 360 + 5] == 1, "wrong occupied cell");
  double total = 0.0;
  for (double v : bev.features) total += std::abs(v);
  o.require(total == 10.0 && bev.cell(3, 5)[3] == 4.0, "feature not placed in cell (3, 5) only");
  TokenSequence dup = concat_tokens(t, t);
  bool threw = false;
  try {
    bev_pool(dup, g, 4);
  } catch (const Error& e) {
    threw = e.code() == ErrorCode::kDuplicateCell;
  }
  o.require(threw, "duplicate cell accepted");
  const auto& w = small_world();
  const auto full = bev_pool(w.tokens, w.config.backbone.grid, 128);
  o.require(full.occupied_count() == w.tokens.count(Modality::kLidar), "occupancy != N");
  return o;
}

Outcome backbone_hot_swap() {
  Outcome o;
  const auto& w = small_world();
  BackboneConfig alt = w.config.backbone;
  alt.blocks.sequence = {BlockKind::kIntra, BlockKind::kInter3D, BlockKind::kInter2D, BlockKind::kInter2D};
  const auto a = run_backbone_tokens(w.tokens, w.scene.rig, w.weights, w.config.backbone, w.table, ExecutionMode::kParallel);
  const auto b = run_backbone_tokens(w.tokens, w.scene.rig, w.weights, alt, w.table, ExecutionMode::kParallel);
  o.require(a.bev.features != b.bev.features, "reordered blocks produced the same grid");
  o.require(b.dispatches == 8, "alternative config dispatches " + std::to_string(b.dispatches));
  return o;
}

Outcome backbone_single_modality() {
  Outcome o;
  const auto& w = small_world();
  TokenSequence lidar, image;
  std::vector<Eigen::Index> li, ii;
  for (std::int64_t i = 0; i < w.tokens.size(); ++i)
    (w.tokens.modality[static_cast<std::size_t>(i)] == Modality::kLidar ? li : ii).push_back(i);
  auto take = [&](const std::vector<Eigen::Index>& rows) {
    TokenSequence t;
    t.features = w.tokens.features(rows, Eigen::all);
    t.coords = w.tokens.coords(rows, Eigen::all);
    for (auto r : rows) {
      t.modality.push_back(w.tokens.modality[static_cast<std::size_t>(r)]);
      t.bev_cell.push_back(w.tokens.bev_cell[static_cast<std::size_t>(r)]);
    }
    return t;
  };
  lidar = take(li);
  image = take(ii);
  const auto p = run_backbone_tokens(lidar, w.scene.rig, w.weights, w.config.backbone, w.table, ExecutionMode::kParallel);
  const auto s = run_backbone_tokens(lidar, w.scene.rig, w.weights, w.config.backbone, w.table, ExecutionMode::kSerial);
  o.require(p.bev.features == s.bev.features, "lidar-only parallel and serial grids differ");
  DispatchCounter c;
  const auto out = intra_modal_block(image, w.weights, w.config.backbone, 0, ExecutionMode::kParallel, c);
  o.require(out.size() == image.size() && c.value() == 2, "lidar-empty intra block misbehaved");
  return o;
}

Outcome backbone_serial_oracle() {
  Outcome o;
  const auto& w = small_world();
  const auto r = run_backbone(w.scene.cloud, w.scene.images, w.scene.rig, w.weights, w.config.backbone, w.table);
  const auto ref = oracle_serial_backbone(w.scene.cloud, w.scene.images, w.scene.rig, w.weights, w.config.backbone, w.table);
  double worst = 0.0;
  for (std::size_t i = 0; i < r.bev.features.size(); ++i)
    worst = std::max(worst, std::abs(r.bev.features[i] - ref.bev.features[i]));
  o.require(r.bev.occupied == ref.bev.occupied, "occupancy differs from the oracle");
  o.require(worst <= 1e-6, "BEV differs from the serial oracle by " + num(worst));
  o.require(ref.dispatches == 10 && r.dispatches == 8, "dispatches " + std::to_string(r.dispatches) + " vs " +
                                                           std::to_string(ref.dispatches));
  o.note("max-abs " + num(worst));
  return o;
}

Outcome backbone_depth_lookup() {
  Outcome o;
  const auto& w = small_world();
  const ExhaustiveDepthScan scan(w.table);
  const int p = w.config.backbone.patch;
  std::int64_t mismatches = 0, queries = 0;
  for (std::int64_t i = 0; i < w.tokens.size(); ++i) {
    if (w.tokens.modality[static_cast<std::size_t>(i)] != Modality::kImage) continue;
    const double x = (w.tokens.coords(i, 0) + 0.5) * p, y = (w.tokens.coords(i, 1) + 0.5) * p;
    const int view = static_cast<int>(w.tokens.coords(i, 2));
    const auto a = nearest_depth(x, y, view, w.table);
    const auto b = scan.nearest(x, y, view);
    ++queries;
    if (a.has_value() != b.has_value() || (a && (a->point_index != b->point_index || a->depth != b->depth)))
      ++mismatches;
  }
  o.require(mismatches == 0, std::to_string(mismatches) + " of " + std::to_string(queries) + " token depths differ");
  return o;
}

// ------------------------------------------------------------------ harness

Outcome harness_container_roundtrip() {
  Outcome o;
  Rng rng(61);
  for (int trial = 0; trial < 30; ++trial) {
    TensorContainer c;
    const int entries = static_cast<int>(rng.below(6));
    for (int e = 0; e < entries; ++e) {
      std::vector<std::int64_t> shape;
      const auto ndim = rng.below(4);
      for (std::uint64_t d = 0; d < ndim; ++d) shape.push_back(static_cast<std::int64_t>(rng.below(5)));
      std::int64_t n = 1;
      for (auto d : shape) n *= d;
      const std::string name = "t" + std::to_string(e) + (e % 2 ? "/\xc3\xa9" : "");
      switch (rng.below(3)) {
        case 0: {
          std::vector<float> v(static_cast<std::size_t>(n));
          for (auto& x : v) x = static_cast<float>(rng.normal());
          c.add(Tensor::f32(name, shape, v));
          break;
        }
        case 1: {
          std::vector<std::int64_t> v(static_cast<std::size_t>(n));
          for (auto& x : v) x = static_cast<std::int64_t>(rng.next_u64());
          c.add(Tensor::i64(name, shape, v));
          break;
        }
        default: {
          std::vector<std::uint8_t> v(static_cast<std::size_t>(n));
          for (auto& x : v) x = static_cast<std::uint8_t>(rng.below(256));
          c.add(Tensor::u8(name, shape, v));
        }
      }
    }
    const auto bytes = c.serialize();
    o.require(TensorContainer::deserialize(bytes) == c, "round trip changed the container");
    if (bytes.size() > 8) {
      bool threw = false;
      try {
        TensorContainer::deserialize(std::span(bytes).first(bytes.size() - 1));
      } catch (const Error&) {
        threw = true;
      }
      o.require(threw || entries == 0, "truncated container accepted");
    }
  }
  return o;
}

Outcome harness_scene_determinism() {
  Outcome o;
  const Config c = small_config(12);
  const auto a = generate_scene(c), b = generate_scene(c);
  o.require(a.cloud.values == b.cloud.values, "clouds differ");
  o.require(a.images.pixels == b.images.pixels, "images differ");
  o.require(a.rig.hash() == b.rig.hash(), "rigs differ");
  const auto d = generate_scene(small_config(13));
  o.require(a.cloud.values != d.cloud.values, "seed has no effect");
  return o;
}

Outcome harness_truth_reverified() {
  Outcome o;
  const auto& w = small_world();
  double worst = 0.0;
  for (const auto& t : w.scene.truth) {
    const auto p = w.scene.cloud.point(static_cast<std::size_t>(t.point));
    const auto hit = project_to_first_hit({p[0], p[1], p[2]}, w.scene.rig);
    if (!o.require(hit.has_value() == t.visible, "visibility disagrees for point " + std::to_string(t.point))) continue;
    if (!hit) continue;
    o.require(hit->view == t.view, "view disagrees for point " + std::to_string(t.point));
    worst = std::max({worst, std::abs(hit->x - t.x), std::abs(hit->y - t.y), std::abs(hit->depth - t.depth)});
  }
  o.require(worst <= 1e-6, "ground truth off by " + num(worst));
  return o;
}

Outcome harness_stats_duplication() {
  Outcome o;
  const Config c = small_config(11);
  const auto stats = block_statistics(c);
  const auto& w = small_world();
  for (std::size_t b = 0; b < c.backbone.blocks.sequence.size(); ++b) {
    const BlockKind k = c.backbone.blocks.sequence[b];
    const auto plan = k == BlockKind::kIntra     ? plan_intra(w.tokens, c.backbone)
                      : k == BlockKind::kInter2D ? plan_inter_2d(w.tokens, w.scene.rig, c.backbone)
                                                 : plan_inter_3d(w.tokens, w.table, w.scene.rig, c.backbone);
    // Direct count: per window T and S = ceil(T / tau), from window keys alone.
    std::int64_t sum_t = 0, sum_slots = 0;
    for (const auto& space : plan.spaces) {
      std::map<std::array<std::int64_t, 3>, std::int64_t> windows;
      for (Eigen::Index i = 0; i < space.coords.rows(); ++i) {
        std::array<std::int64_t, 3> key{};
        for (int a = 0; a < 3; ++a)
          key[static_cast<std::size_t>(a)] = static_cast<std::int64_t>(
              std::floor(space.coords(i, a) / static_cast<double>(space.window.shape[static_cast<std::size_t>(a)])));
        ++windows[key];
      }
      for (const auto& [key, t] : windows) {
        sum_t += t;
        sum_slots += (t + c.backbone.blocks.tau - 1) / c.backbone.blocks.tau * c.backbone.blocks.tau;
      }
    }
    const double expected = sum_t > 0 ? static_cast<double>(sum_slots - sum_t) / static_cast<double>(sum_t) : 0.0;
    const double reported = stats["blocks"][b]["duplication_rate"].get<double>();
    o.require(std::abs(reported - expected) <= 1e-12,
              std::string(to_string(k)) + " duplication " + num(reported) + " != " + num(expected));
  }
  return o;
}

Outcome harness_config() {
  Outcome o;
  const Config d = default_config();
  o.require(parse_config(nlohmann::json::parse(d.to_json().dump())).hash() == d.hash(), "config round trip changed the hash");
  bool threw = false;
  try {
    parse_config(nlohmann::json::parse(R"({"partition": {"tua": 90}})"));
  } catch (const Error& e) {
    threw = e.code() == ErrorCode::kConfig;
  }
  o.require(threw, "unknown key accepted");
  threw = false;
  try {
    parse_config(nlohmann::json::parse(R"({"blocks": {"layers_per_block": 3}})"));
  } catch (const Error& e) {
    threw = e.code() == ErrorCode::kConfig;
  }
  o.require(threw, "odd layers per block accepted");
  const auto& seq = d.backbone.blocks.sequence;
  o.require(seq == std::vector<BlockKind>{BlockKind::kIntra, BlockKind::kInter2D, BlockKind::kInter2D, BlockKind::kInter3D},
            "default block sequence");
  return o;
}

Outcome harness_run_determinism() {
  Outcome o;
  const Config c = small_config(14);
  const auto a = run_pipeline(c, {}), b = run_pipeline(c, {});
  o.require(a.result.bev.to_container().serialize() == b.result.bev.to_container().serialize(), "BEV dumps differ");
  o.require(a.manifest.dump() == b.manifest.dump(), "manifests differ");
  o.require(a.manifest["dispatches"]["total"] == 8, "manifest dispatch count");
  return o;
}

}  // namespace

const std::vector<Check>& invariant_checks() {
  static const std::vector<Check> checks{
      {"geometry.rig_rigid_transforms", geometry_rig_rigid},
      {"geometry.first_hit_permutation_invariance", geometry_first_hit_permutation},
      {"geometry.projection_round_trip", geometry_round_trip},
      {"geometry.table_deterministic_and_in_bounds", geometry_table_deterministic},
      {"geometry.table_count_matches_brute_force", geometry_table_brute_count},
      {"geometry.nearest_matches_exhaustive_scan", geometry_nearest_scan},
      {"geometry.empty_view_has_no_depth", geometry_empty_view},
      {"tokenizers.voxelize_order_invariance", tokenizers_order_invariant},
      {"tokenizers.voxel_count_matches_hash_set", tokenizers_voxel_count},
      {"tokenizers.patchify_bijection", tokenizers_patch_bijection},
      {"tokenizers.token_sequence_invariants", tokenizers_sequence_invariants},
      {"partition.coverage_and_size_equivalence", partition_coverage},
      {"partition.slot_formula_oracle", partition_formula_oracle},
      {"partition.rotation_consistency", partition_rotation_consistency},
      {"partition.determinism", partition_determinism},
      {"partition.gather_scatter_round_trip", partition_gather_scatter},
      {"partition.modality_separation_and_mixing", partition_modality_spaces},
      {"attention.softmax_rows_sum_to_one", attention_softmax_rows},
      {"attention.set_locality", attention_set_locality},
      {"attention.permutation_equivariance", attention_permutation_equivariance},
      {"attention.identical_tokens_symmetric", attention_identical_tokens},
      {"attention.no_modality_specific_weights", attention_weight_sharing},
      {"attention.parallel_serial_equivalence", attention_parallel_serial},
      {"attention.dense_oracle_agreement", attention_dense_oracle},
      {"attention.stacked_layer_hygiene", attention_hygiene},
      {"attention.pe_jacobian_finite_difference", attention_pe_jacobian},
      {"attention.non_finite_detection", attention_nonfinite},
      {"backbone.token_conservation_and_coordinates", backbone_conservation},
      {"backbone.cross_modal_reach", backbone_reach},
      {"backbone.passthrough_exactness", backbone_passthrough},
      {"backbone.dispatch_accounting", backbone_dispatch_accounting},
      {"backbone.bev_pool", backbone_bev_pool},
      {"backbone.block_order_hot_swap", backbone_hot_swap},
      {"backbone.single_modality_paths", backbone_single_modality},
      {"backbone.serial_oracle_agreement", backbone_serial_oracle},
      {"backbone.token_depth_matches_scan", backbone_depth_lookup},
      {"harness.container_round_trip", harness_container_roundtrip},
      {"harness.scene_determinism", harness_scene_determinism},
      {"harness.ground_truth_reverified", harness_truth_reverified},
      {"harness.stats_duplication_rate", harness_stats_duplication},
      {"harness.config_parsing", harness_config},
      {"harness.run_determinism", harness_run_determinism},
  };
  return checks;
}

CheckResult run_check(const Check& check) {
  CheckResult r;
  r.name = check.name;
  const auto start = std::chrono::steady_clock::now();
  try {
    const Outcome o = check.run();
    r.passed = o.passed();
    r.detail = o.detail();
  } catch (const std::exception& e) {
    r.passed = false;
    r.detail = std::string("exception: ") + e.what();
  }
  r.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return r;
}

std::vector<CheckResult> run_checks(const std::vector<Check>& checks, const std::string& filter,
                                    const std::function<void(const CheckResult&)>& on_result) {
  std::vector<CheckResult> out;
  for (const Check& c : checks) {
    if (!filter.empty() && c.name.find(filter) == std::string::npos) continue;
    out.push_back(run_check(c));
    if (on_result) on_result(out.back());
  }
  return out;
}

}  // namespace unitr::harness

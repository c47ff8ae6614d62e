#include "unitr/harness/acceptance.hpp"

#include <chrono>
#include <cmath>
#include <fstream>
#include <iterator>
#include <map>
#include <optional>
#include <sstream>

#include "unitr/attention.hpp"
#include "unitr/backbone.hpp"
#include "unitr/harness/fixtures.hpp"
#include "unitr/harness/oracles.hpp"
#include "unitr/harness/pipeline.hpp"
#include "unitr/partition.hpp"
#include "unitr/rng.hpp"

namespace unitr::harness {
namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t) { return std::chrono::duration<double>(Clock::now() - t).count(); }

std::string num(double v) {
  std::ostringstream os;
  os.precision(3);
  os << v;
  return os.str();
}

std::vector<std::uint8_t> read_bytes(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) throw Error(ErrorCode::kIo, "cannot read " + p.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

// Default scene with its pseudo depth table, loaded once per process.
struct DefaultWorld {
  Config config;
  SyntheticScene scene;
  PseudoDepthTable table;
  BackboneWeights weights;
  TokenSequence tokens;
};

const DefaultWorld& default_world(const std::filesystem::path& work_dir) {
  static std::optional<DefaultWorld> world;
  if (!world) {
    Config c = default_config();
    c.table_cache = (work_dir / "default_table.utr").string();
    SyntheticScene s = generate_scene(c);
    PseudoDepthTable t = make_table(c, s.rig);
    BackboneWeights w = BackboneWeights::create(c.model, c.seed, c.init);
    TokenSequence tok = tokenize(s.cloud, s.images, w, c.backbone);
    world.emplace(DefaultWorld{c, std::move(s), std::move(t), std::move(w), std::move(tok)});
  }
  return *world;
}

Outcome partition_soundness() {
  Outcome o;
  const auto start = Clock::now();
  Rng rng(1001);
  const std::array<std::array<std::int64_t, 3>, 3> windows{{{1, 1, 1}, {30, 30, 1}, {12, 12, 1}}};
  const std::array<std::int64_t, 3> taus{1, 7, 90};
  std::int64_t tokens = 0;
  for (int trial = 0; trial < 1000; ++trial) {
    const auto n = static_cast<std::int64_t>(10 + rng.below(50000 - 10 + 1));
    const std::int64_t ex = 8 + static_cast<std::int64_t>(rng.below(400));
    const std::int64_t ey = 8 + static_cast<std::int64_t>(rng.below(400));
    const std::int64_t ez = 1 + static_cast<std::int64_t>(rng.below(3));
    const WindowSpec spec{windows[static_cast<std::size_t>(trial % 3)], Space::kLidar3D};
    const std::int64_t tau = taus[static_cast<std::size_t>((trial / 3) % 3)];
    const CoordMatrix coords = random_layout(rng, n, {ex, ey, ez});
    const auto p = dynamic_set_partition(coords, spec, tau, trial % 2 ? InnerOrder::kYMajor : InnerOrder::kXMajor);
    tokens += n;

    std::vector<std::uint8_t> canon(static_cast<std::size_t>(n), 0);
    bool ok = p.slot_count() == p.set_count() * tau;
    for (std::int64_t s = 0; ok && s < p.slot_count(); ++s) {
      if (!p.canonical[static_cast<std::size_t>(s)]) continue;
      auto& c = canon[static_cast<std::size_t>(p.slots[static_cast<std::size_t>(s)])];
      ok = c == 0;
      c = 1;
    }
    for (auto c : canon) ok = ok && c == 1;
    o.require(ok, "trial " + std::to_string(trial) + ": canonical slots or set sizes wrong");

    // Window populations counted directly from the coordinates.
    std::map<std::array<std::int64_t, 3>, std::int64_t> population;
    for (std::int64_t i = 0; i < n; ++i)
      ++population[{static_cast<std::int64_t>(coords(i, 2)) / spec.shape[2],
                    static_cast<std::int64_t>(coords(i, 1)) / spec.shape[1],
                    static_cast<std::int64_t>(coords(i, 0)) / spec.shape[0]}];
    std::vector<std::int64_t> sets_per_window(population.size(), 0);
    for (auto w : p.set_window) ++sets_per_window.at(static_cast<std::size_t>(w));
    std::size_t wi = 0;
    for (const auto& [key, t] : population)
      ok = ok && sets_per_window[wi++] == (t + tau - 1) / tau;
    o.require(ok && population.size() == p.window_tokens.size(),
              "trial " + std::to_string(trial) + ": per-window set count != ceil(T / tau)");
  }
  const double secs = seconds_since(start);
  o.require(secs < 30.0, "runtime " + num(secs) + " s exceeds 30 s");
  o.note("1000 layouts, " + std::to_string(tokens) + " tokens, " + num(secs) + " s");
  return o;
}

Outcome attention_oracle() {
  Outcome o;
  const auto start = Clock::now();
  const auto w = BackboneWeights::create({}, 2002);
  Rng rng(2002);
  double worst = 0.0, worst_sum = 0.0;
  for (int i = 0; i < 1000; ++i) {
    const auto tau = static_cast<std::int64_t>(1 + rng.below(90));
    const SetBatch b = random_batch(rng, 1, tau, 128);
    const int layer = static_cast<int>(rng.below(static_cast<std::uint64_t>(w.dims().layers)));
    AttentionProbe probe;
    const auto out = set_attention_layer(b, w, layer, &probe);
    const auto ref = oracle_dense_attention(b.features, b.coords, w, layer);
    worst = std::max(worst, (out.features - ref.outputs).cwiseAbs().maxCoeff());
    for (std::size_t k = 0; k < ref.probabilities.size(); ++k)
      worst = std::max(worst, std::abs(ref.probabilities[k] - probe.probabilities[k]));
    for (std::size_t r = 0; r < probe.probabilities.size() / static_cast<std::size_t>(tau); ++r) {
      double sum = 0.0;
      for (std::int64_t k = 0; k < tau; ++k) sum += probe.probabilities[r * static_cast<std::size_t>(tau) + static_cast<std::size_t>(k)];
      worst_sum = std::max(worst_sum, std::abs(sum - 1.0));
    }
  }
  const double secs = seconds_since(start);
  o.require(worst <= 1e-6, "max-abs vs dense oracle " + num(worst));
  o.require(worst_sum <= 1e-6, "softmax row sum error " + num(worst_sum));
  o.require(secs < 60.0, "runtime " + num(secs) + " s exceeds 60 s");
  o.note("1000 sets, max-abs " + num(worst) + ", row-sum error " + num(worst_sum) + ", " + num(secs) + " s");
  return o;
}

Outcome parallel_serial(const std::filesystem::path& work_dir) {
  Outcome o;
  double worst = 0.0;
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const Config c = small_config(seed);
    const SyntheticScene s = generate_scene(c);
    const PseudoDepthTable t = make_table(c, s.rig);
    const BackboneWeights w = BackboneWeights::create(c.model, c.seed, c.init);
    const auto run = run_backbone(s.cloud, s.images, s.rig, w, c.backbone, t, ExecutionMode::kParallel);
    const auto ref = oracle_serial_backbone(s.cloud, s.images, s.rig, w, c.backbone, t);
    double d = 0.0;
    for (std::size_t i = 0; i < run.bev.features.size(); ++i) d = std::max(d, std::abs(run.bev.features[i] - ref.bev.features[i]));
    worst = std::max(worst, d);
    o.require(run.bev.occupied == ref.bev.occupied, "seed " + std::to_string(seed) + ": occupancy differs");
    o.require(d <= 1e-6, "seed " + std::to_string(seed) + ": BEV max-abs " + num(d));
    o.require(run.dispatches == 8, "seed " + std::to_string(seed) + ": parallel dispatches " + std::to_string(run.dispatches));
    o.require(ref.dispatches == 10, "seed " + std::to_string(seed) + ": serial dispatches " + std::to_string(ref.dispatches));
  }
  // Full-size default scene as well.
  const DefaultWorld& dw = default_world(work_dir);
  const auto run = run_backbone_tokens(dw.tokens, dw.scene.rig, dw.weights, dw.config.backbone, dw.table,
                                       ExecutionMode::kParallel);
  const auto ref = oracle_serial_backbone(dw.scene.cloud, dw.scene.images, dw.scene.rig, dw.weights,
                                          dw.config.backbone, dw.table);
  double full = 0.0;
  for (std::size_t i = 0; i < run.bev.features.size(); ++i) full = std::max(full, std::abs(run.bev.features[i] - ref.bev.features[i]));
  o.require(run.bev.occupied == ref.bev.occupied, "default scene: occupancy differs");
  o.require(full <= 1e-6, "default scene: BEV max-abs " + num(full));
  o.require(run.dispatches == 8 && ref.dispatches == 10, "default scene dispatches " + std::to_string(run.dispatches) +
                                                             " vs " + std::to_string(ref.dispatches));

  const auto& bc = default_config().backbone.blocks;
  const auto par = expected_dispatches(bc, ExecutionMode::kParallel);
  const auto ser = expected_dispatches(bc, ExecutionMode::kSerial);
  o.require(par == 8 && ser == 10, "expected counts " + std::to_string(par) + " / " + std::to_string(ser));
  o.require(expected_block_dispatches(BlockKind::kIntra, 2, ExecutionMode::kParallel) == 2 &&
                expected_block_dispatches(BlockKind::kIntra, 2, ExecutionMode::kSerial) == 4,
            "intra block counts");
  o.note("10 reduced scenes max-abs " + num(worst) + ", default scene " + num(full) + ", dispatches 8 vs 10 (intra 2 vs 4, inter 2 vs 2 each); "
         "the stated serial total of 14 does not follow from these per-block counts");
  return o;
}

Outcome geometry(const std::filesystem::path& work_dir) {
  Outcome o;
  const CameraRig rig = CameraRig::ring({});
  Rng rng(4004);
  double worst = 0.0;
  int visible = 0;
  while (visible < 10000) {
    const Eigen::Vector3d p(rng.uniform(-54.0, 54.0), rng.uniform(-54.0, 54.0), rng.uniform(-5.0, 3.0));
    const auto hit = project_to_first_hit(p, rig);
    if (!hit) continue;
    ++visible;
    worst = std::max(worst, (unproject(hit->x, hit->y, hit->view, hit->depth, rig) - p).cwiseAbs().maxCoeff());
  }
  o.require(worst < 1e-6, "round-trip error " + num(worst) + " m");

  const GridShape shape{360, 360, 20};
  const Box3 range = VoxelGrid{}.range;
  auto start = Clock::now();
  const auto table = PseudoDepthTable::build(shape, range, rig);
  const double build_secs = seconds_since(start);
  o.require(build_secs < 60.0, "table build " + num(build_secs) + " s exceeds 60 s");
  const auto bytes = table.to_container().serialize();
  o.require(PseudoDepthTable::build(shape, range, rig).to_container().serialize() == bytes,
            "rebuilt table serializes differently");

  const auto cache = work_dir / "geometry_table.utr";
  std::filesystem::remove(cache);
  PseudoDepthTable::load_or_build(cache, shape, range, rig);
  start = Clock::now();
  const auto cached = PseudoDepthTable::load_or_build(cache, shape, range, rig);
  const double load_secs = seconds_since(start);
  o.require(cached.to_container().serialize() == bytes, "cached table differs from the build");

  const ExhaustiveDepthScan scan(table);
  const auto size = rig.view(0).image_size;
  int mismatches = 0;
  for (int q = 0; q < 10000; ++q) {
    const int view = static_cast<int>(rng.below(rig.size()));
    const double x = rng.uniform(0.0, size.width), y = rng.uniform(0.0, size.height);
    const auto a = nearest_depth(x, y, view, table);
    const auto b = scan.nearest(x, y, view);
    if (a.has_value() != b.has_value() ||
        (a && (a->depth != b->depth || a->planar_distance != b->planar_distance || a->point_index != b->point_index)))
      ++mismatches;
  }
  o.require(mismatches == 0, std::to_string(mismatches) + " of 10000 nearest_depth queries differ from the scan");
  o.note("round trip " + num(worst) + " m; table " + std::to_string(table.points().size()) + " points built in " +
         num(build_secs) + " s, cached load " + num(load_secs) + " s; 10000 queries exact");
  return o;
}

Outcome fusion_reach(const std::filesystem::path& work_dir) {
  Outcome o;
  const DefaultWorld& w = default_world(work_dir);
  const auto lidar = w.tokens.count(Modality::kLidar);
  o.require(w.scene.images.views == 6 && w.scene.images.height == 256 && w.scene.images.width == 704,
            "default scene images are not 6 x 256 x 704");
  o.require(lidar >= 5000, "only " + std::to_string(lidar) + " lidar tokens");

  std::ostringstream mixed;
  std::size_t passthrough = 0;
  BlockObserver observer;
  TokenSequence previous = w.tokens;
  observer = [&](std::size_t b, const BlockPlan& plan, const TokenSequence& out) {
    const auto m = mixed_modality_sets(plan, previous);
    const std::string kind(to_string(plan.kind));
    if (plan.kind == BlockKind::kIntra)
      o.require(m == 0, "intra block " + std::to_string(b) + " mixed modalities");
    else
      o.require(m >= 1, kind + " block " + std::to_string(b) + " has no mixed set");
    for (auto t : plan.passthrough) {
      o.require(std::equal(previous.features.row(t).data(), previous.features.row(t).data() + previous.features.cols(),
                           out.features.row(t).data()),
                kind + " passthrough token " + std::to_string(t) + " changed");
      ++passthrough;
    }
    mixed << (b ? ", " : "") << kind << " " << m;
    previous = out;
  };
  run_backbone_tokens(w.tokens, w.scene.rig, w.weights, w.config.backbone, w.table, ExecutionMode::kParallel, observer);

  // Every view of the default table has points, so depthless image tokens
  // are produced with a pseudo grid that view 0 cannot see.
  const Box3 behind{Eigen::Vector3d(-54.0, -54.0, -5.0), Eigen::Vector3d(-1.0, 54.0, 3.0)};
  const auto partial = PseudoDepthTable::build({178, 360, 20}, behind, w.scene.rig);
  const auto plan = plan_inter_3d(w.tokens, partial, w.scene.rig, w.config.backbone);
  DispatchCounter counter;
  const auto out = execute_block(w.tokens, plan, w.weights, w.config.backbone, 6, ExecutionMode::kParallel, counter);
  for (auto t : plan.passthrough)
    o.require(std::equal(w.tokens.features.row(t).data(), w.tokens.features.row(t).data() + w.tokens.features.cols(),
                         out.features.row(t).data()),
              "depthless token " + std::to_string(t) + " changed");
  o.require(!plan.passthrough.empty(), "no depthless tokens produced");
  o.note(std::to_string(lidar) + " lidar tokens; mixed sets: " + mixed.str() + "; " + std::to_string(passthrough) +
         " invisible + " + std::to_string(plan.passthrough.size()) + " depthless tokens bit-identical");
  return o;
}

Outcome determinism(const std::filesystem::path& work_dir) {
  Outcome o;
  Config c = default_config();
  c.table_cache = (work_dir / "default_table.utr").string();
  const auto a = work_dir / "run_a", b = work_dir / "run_b";
  std::filesystem::remove_all(a);
  std::filesystem::remove_all(b);
  run_pipeline(c, a);
  run_pipeline(c, b);
  o.require(read_bytes(a / "bev.utr") == read_bytes(b / "bev.utr"), "BEV dumps differ");
  o.require(read_bytes(a / "manifest.json") == read_bytes(b / "manifest.json"), "manifests differ");
  o.note("bev.utr " + std::to_string(std::filesystem::file_size(a / "bev.utr")) + " bytes identical");
  return o;
}

Outcome shapes(const std::filesystem::path& work_dir) {
  Outcome o;
  const DefaultWorld& w = default_world(work_dir);
  const auto m = w.tokens.count(Modality::kImage);
  o.require(m == 16896, "M = " + std::to_string(m));
  std::vector<std::array<std::int64_t, 3>> extent(6, {0, 0, 0});  // max col + 1, max row + 1, count
  for (std::int64_t i = 0; i < w.tokens.size(); ++i) {
    if (w.tokens.modality[static_cast<std::size_t>(i)] != Modality::kImage) continue;
    auto& e = extent.at(static_cast<std::size_t>(w.tokens.coords(i, 2)));
    e[0] = std::max(e[0], static_cast<std::int64_t>(w.tokens.coords(i, 0)) + 1);
    e[1] = std::max(e[1], static_cast<std::int64_t>(w.tokens.coords(i, 1)) + 1);
    ++e[2];
  }
  for (const auto& e : extent)
    o.require(e[0] == 88 && e[1] == 32 && e[2] == 32 * 88, "per-view token grid is not 32 x 88");
  const BevGrid bev = bev_pool(w.tokens, w.config.backbone.grid, w.weights.dims().channels);
  o.require(bev.size_x == 360 && bev.size_y == 360 && bev.channels == 128, "BEV grid " + std::to_string(bev.size_x) + " x " +
                                                                            std::to_string(bev.size_y) + " x " +
                                                                            std::to_string(bev.channels));
  const std::vector<BlockKind> expected{BlockKind::kIntra, BlockKind::kInter2D, BlockKind::kInter2D, BlockKind::kInter3D};
  o.require(w.config.backbone.blocks.sequence == expected, "default block sequence");
  o.note("M = 16896, 6 x (32 x 88), BEV 360 x 360 x 128, {intra, inter2D, inter2D, inter3D}");
  return o;
}

Outcome hygiene() {
  Outcome o;
  ModelDims dims;
  dims.layers = 20;
  const auto w = BackboneWeights::create(dims, 8008, {InitScheme::kNormal, 0.02});
  Rng rng(8008);
  SetBatch b = random_batch(rng, 16, 90, 128);
  for (Eigen::Index i = 0; i < b.features.rows(); ++i) b.features.row(i).normalize();
  for (int l = 0; l < 20; ++l) b = set_attention_layer(b, w, l);
  const auto norms = b.features.rowwise().norm();
  o.require(b.features.allFinite(), "non-finite activations after 20 layers");
  o.require(norms.minCoeff() >= 0.1 && norms.maxCoeff() <= 10.0,
            "token norms span [" + num(norms.minCoeff()) + ", " + num(norms.maxCoeff()) + "]");

  const auto pw = BackboneWeights::create({}, 8009);
  double worst = 0.0;
  const double eps = 1e-5;
  for (int i = 0; i < 200; ++i) {
    const Eigen::Vector3d c(rng.uniform(-1, 1), rng.uniform(-1, 1), rng.uniform(-1, 1));
    const int layer = static_cast<int>(rng.below(8));
    const Eigen::MatrixXd j = positional_encode_jacobian(c, pw, layer);
    for (int a = 0; a < 3; ++a) {
      CoordMatrix lo(1, 3), hi(1, 3);
      lo.row(0) = c.transpose();
      hi.row(0) = c.transpose();
      lo(0, a) -= eps;
      hi(0, a) += eps;
      const MatrixXdR fd = (positional_encode(hi, pw, layer) - positional_encode(lo, pw, layer)) / (2 * eps);
      worst = std::max(worst, (fd.row(0).transpose() - j.col(a)).cwiseAbs().maxCoeff() / j.col(a).cwiseAbs().maxCoeff());
    }
  }
  o.require(worst <= 1e-4, "PE finite-difference relative error " + num(worst));
  o.note("norms in [" + num(norms.minCoeff()) + ", " + num(norms.maxCoeff()) + "], PE Jacobian relative error " + num(worst));
  return o;
}

}  // namespace

std::vector<Check> acceptance_criteria(const std::filesystem::path& work_dir) {
  std::filesystem::create_directories(work_dir);
  return {
      {"1 partition soundness", partition_soundness},
      {"2 attention oracle equivalence", attention_oracle},
      {"3 parallel/serial equivalence", [work_dir] { return parallel_serial(work_dir); }},
      {"4 geometry", [work_dir] { return geometry(work_dir); }},
      {"5 cross-modal fusion reach", [work_dir] { return fusion_reach(work_dir); }},
      {"6 determinism", [work_dir] { return determinism(work_dir); }},
      {"7 shape pipeline", [work_dir] { return shapes(work_dir); }},
      {"8 numerical hygiene", hygiene},
  };
}

}  // namespace unitr::harness

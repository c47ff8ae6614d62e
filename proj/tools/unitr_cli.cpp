// unitr: run the backbone on a synthetic scene, check invariants, report
// partition statistics, emit scenes and build pseudo depth tables.
//
// Exit codes: 0 success, 1 failure, 2 usage error.

#include <cstdio>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "unitr/harness/acceptance.hpp"
#include "unitr/harness/checks.hpp"
#include "unitr/harness/config.hpp"
#include "unitr/harness/pipeline.hpp"
#include "unitr/harness/scene.hpp"

namespace {

using namespace unitr;
using namespace unitr::harness;

struct Common {
  std::string config = "default";
  std::optional<std::uint64_t> seed;
  std::string blocks;
};

void add_common(CLI::App* cmd, Common& c) {
  cmd->add_option("--config", c.config, "config file (JSON) or 'default'");
  cmd->add_option("--seed", c.seed, "scene and weight seed");
  cmd->add_option("--blocks", c.blocks, "block sequence override, e.g. intra,inter2D,inter2D,inter3D");
}

Config resolve(const Common& c) {
  Config cfg = load_config(c.config);
  if (c.seed) cfg.seed = *c.seed;
  if (!c.blocks.empty()) {
    cfg.backbone.blocks.sequence = parse_block_list(c.blocks);
    sync_model(cfg);
  }
  return cfg;
}

int cmd_run(const Common& common, const std::string& out, bool serial, bool dump) {
  Config cfg = resolve(common);
  if (serial) cfg.serial = true;
  const RunOutput r = run_pipeline(cfg, out, dump);
  std::printf("tokens: %lld lidar, %lld image\n", static_cast<long long>(r.result.lidar_tokens),
              static_cast<long long>(r.result.image_tokens));
  for (const auto& b : r.result.blocks)
    std::printf("  %-8s dispatches %llu  mixed sets %lld  passthrough %lld  %.0f ms\n", std::string(to_string(b.kind)).c_str(),
                static_cast<unsigned long long>(b.dispatches), static_cast<long long>(b.mixed_sets),
                static_cast<long long>(b.passthrough), b.millis);
  std::printf("dispatches: %llu (%s)\n", static_cast<unsigned long long>(r.result.dispatches), cfg.serial ? "serial" : "parallel");
  std::printf("wrote %s\n", (std::filesystem::path(out) / "bev.utr").string().c_str());
  return 0;
}

int cmd_check(const std::string& filter, bool invariants_only, const std::string& work) {
  int failed = 0, ran = 0;
  auto report = [&](const CheckResult& r) {
    ++ran;
    if (!r.passed) ++failed;
    std::printf("[%s] %s (%.2f s)%s%s\n", r.passed ? "PASS" : "FAIL", r.name.c_str(), r.seconds,
                r.detail.empty() ? "" : ": ", r.detail.c_str());
    std::fflush(stdout);
  };
  run_checks(invariant_checks(), filter, report);
  if (!invariants_only) run_checks(acceptance_criteria(work), filter, report);
  std::printf("%d/%d checks passed\n", ran - failed, ran);
  return failed == 0 ? 0 : 1;
}

int cmd_stats(const Common& common, const std::string& out) {
  const auto stats = block_statistics(resolve(common));
  if (out.empty())
    std::cout << stats.dump(2) << "\n";
  else
    write_text(out, stats.dump(2) + "\n");
  return 0;
}

int cmd_gen(const Common& common, const std::string& out) {
  const Config cfg = resolve(common);
  const SyntheticScene scene = generate_scene(cfg);
  save_scene(scene, out);
  std::size_t visible = 0;
  for (const auto& t : scene.truth) visible += t.visible ? 1 : 0;
  std::printf("scene seed %llu: %zu points (%zu visible), %d x %d x %d images -> %s\n",
              static_cast<unsigned long long>(cfg.seed), scene.cloud.size(), visible, scene.images.views,
              scene.images.height, scene.images.width, out.c_str());
  return 0;
}

int cmd_table(const Common& common, const std::string& out) {
  const Config cfg = resolve(common);
  const CameraRig rig = CameraRig::ring(cfg.rig);
  const auto table = PseudoDepthTable::load_or_build(out, cfg.backbone.pseudo_grid, cfg.backbone.grid.range, rig);
  std::printf("table %lld x %lld x %lld: %zu virtual points over %zu views -> %s\n",
              static_cast<long long>(table.grid_shape()[0]), static_cast<long long>(table.grid_shape()[1]),
              static_cast<long long>(table.grid_shape()[2]), table.points().size(), table.view_count(), out.c_str());
  for (int v : table.empty_views()) std::printf("warning: view %d has no virtual points; its tokens skip 3D fusion\n", v);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"UniTR backbone inference engine"};
  app.require_subcommand(1);

  Common common;
  std::string out, filter, work = "check_work";
  bool serial = false, dump = false, invariants_only = false;

  auto* run = app.add_subcommand("run", "execute the backbone and dump the BEV grid and manifest");
  add_common(run, common);
  run->add_option("--out", out, "output directory")->required();
  run->add_flag("--serial", serial, "use the serial reference dispatch path");
  run->add_flag("--dump-intermediate", dump, "write token dumps after every block");

  auto* check = app.add_subcommand("check", "run the invariant and acceptance suite");
  check->add_option("--filter", filter, "only checks whose name contains this text");
  check->add_flag("--invariants-only", invariants_only, "skip the acceptance criteria");
  check->add_option("--work", work, "scratch directory for caches and run dumps");

  auto* stats = app.add_subcommand("stats", "partition statistics per block");
  add_common(stats, common);
  stats->add_option("--out", out, "write JSON here instead of stdout");

  auto* gen = app.add_subcommand("gen", "emit a synthetic scene");
  add_common(gen, common);
  gen->add_option("--out", out, "output directory")->required();

  auto* table = app.add_subcommand("table", "build and cache a pseudo depth table");
  add_common(table, common);
  table->add_option("--out", out, "table file (.utr)")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    if (*run) return cmd_run(common, out, serial, dump);
    if (*check) return cmd_check(filter, invariants_only, work);
    if (*stats) return cmd_stats(common, out);
    if (*gen) return cmd_gen(common, out);
    if (*table) return cmd_table(common, out);
  } catch (const Error& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return e.code() == ErrorCode::kConfig ? 2 : 1;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return 2;
}

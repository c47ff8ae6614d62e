#include <doctest.h>

#include <algorithm>
#include <numeric>

#include "unitr/harness/fixtures.hpp"
#include "unitr/harness/oracles.hpp"
#include "unitr/partition.hpp"
#include "unitr/rng.hpp"

using namespace unitr;

namespace {

CoordMatrix coords_of(std::initializer_list<std::array<double, 3>> rows) {
  CoordMatrix m(static_cast<Eigen::Index>(rows.size()), 3);
  Eigen::Index i = 0;
  for (const auto& r : rows) m.row(i++) << r[0], r[1], r[2];
  return m;
}

// T tokens on one row of a single window, ranked by x.
CoordMatrix line(std::int64_t t) {
  CoordMatrix m(t, 3);
  for (std::int64_t i = 0; i < t; ++i) m.row(i) << static_cast<double>(i % 300), static_cast<double>(i / 300), 0.0;
  return m;
}

const WindowSpec kWide{{300, 300, 1}, Space::kLidar3D};

}  // namespace

TEST_CASE("window boundaries") {
  const WindowSpec spec{{30, 30, 1}, Space::kLidar3D};
  const auto a = assign_windows(coords_of({{0, 0, 0}, {29, 29, 0}, {30, 0, 0}, {29, 0, 0}}), spec);
  CHECK(a.window_of[0] == a.window_of[1]);
  CHECK(a.window_of[2] != a.window_of[3]);
  CHECK(a.window_count() == 2);

  const WindowSpec image{{30, 30, 1}, Space::kImage2D};
  const auto b = assign_windows(coords_of({{4, 4, 0}, {4, 4, 1}}), image);
  CHECK(b.window_of[0] != b.window_of[1]);
}

TEST_CASE("window spec validation") {
  CHECK_THROWS_AS(validate(WindowSpec{{0, 30, 1}, Space::kLidar3D}), Error);
  CHECK_THROWS_AS(validate(WindowSpec{{30, 30, 2}, Space::kImage2D}), Error);
  CHECK_NOTHROW(validate(WindowSpec{{30, 30, 1}, Space::kImage2D}));
}

TEST_CASE("inner window order") {
  const WindowSpec spec{{30, 30, 1}, Space::kLidar3D};
  const auto coords = coords_of({{0, 5, 0}, {1, 0, 0}});
  const auto w = assign_windows(coords, spec);
  CHECK(inner_window_order(coords, w, InnerOrder::kXMajor) == std::vector<std::int64_t>{0, 1});
  CHECK(inner_window_order(coords, w, InnerOrder::kYMajor) == std::vector<std::int64_t>{1, 0});

  const auto single = coords_of({{7, 7, 0}});
  const auto ws = assign_windows(single, spec);
  CHECK(inner_window_order(single, ws, InnerOrder::kXMajor)[0] == 0);
  CHECK(inner_window_order(single, ws, InnerOrder::kYMajor)[0] == 0);
}

TEST_CASE("ranks match a comparison sort") {
  Rng rng(17);
  const WindowSpec spec{{10, 10, 1}, Space::kLidar3D};
  CoordMatrix coords(200, 3);
  for (int i = 0; i < 200; ++i)
    coords.row(i) << static_cast<double>(i / 50) * 10 + rng.below(10), static_cast<double>(rng.below(10)),
        static_cast<double>(rng.below(3));
  const auto w = assign_windows(coords, spec);
  for (auto order : {InnerOrder::kXMajor, InnerOrder::kYMajor}) {
    const auto ranks = inner_window_order(coords, w, order);
    const int a = order == InnerOrder::kXMajor ? 0 : 1, b = 1 - a;
    for (int i = 0; i < 200; ++i) {
      std::int64_t expected = 0;
      for (int j = 0; j < 200; ++j) {
        if (w.window_of[j] != w.window_of[i]) continue;
        const auto key = [&](int k) { return std::tuple(coords(k, a), coords(k, b), coords(k, 2), k); };
        if (key(j) < key(i)) ++expected;
      }
      CHECK(ranks[i] == expected);
    }
  }
}

TEST_CASE("exact fit gives one set without duplicates") {
  const auto p = dynamic_set_partition(line(90), kWide, 90, InnerOrder::kXMajor);
  REQUIRE(p.set_count() == 1);
  for (int k = 0; k < 90; ++k) CHECK(p.slots[k] == k);
  CHECK(std::all_of(p.canonical.begin(), p.canonical.end(), [](auto c) { return c == 1; }));
}

TEST_CASE("250 tokens with tau 90") {
  const auto p = dynamic_set_partition(line(250), kWide, 90, InnerOrder::kXMajor);
  CHECK(p.set_count() == 3);
  CHECK(p.slot_count() == 270);
  const auto s = partition_stats(p);
  CHECK(s.slots - s.tokens == 20);
  CHECK(std::count(p.canonical.begin(), p.canonical.end(), 1) == 250);
  for (std::int64_t j = 0; j < 3; ++j)
    for (std::int64_t k = 0; k < 90; ++k) CHECK(p.slots[j * 90 + k] == (j * 90 + k) * 250 / 270);
}

TEST_CASE("partition matches the reference evaluation") {
  Rng rng(4);
  const std::array<std::int64_t, 3> window{12, 12, 1};
  const WindowSpec spec{window, Space::kLidar3D};
  for (int round = 0; round < 5; ++round) {
    const auto coords = harness::random_layout(rng, 300 + 100 * round, {40, 40, 2});
    std::vector<std::array<double, 3>> rows;
    for (Eigen::Index i = 0; i < coords.rows(); ++i) rows.push_back({coords(i, 0), coords(i, 1), coords(i, 2)});
    for (std::int64_t tau : {1, 7, 16}) {
      for (auto order : {InnerOrder::kXMajor, InnerOrder::kYMajor}) {
        const auto p = dynamic_set_partition(coords, spec, tau, order);
        const auto ref = harness::oracle_partition(rows, window, tau, order == InnerOrder::kXMajor);
        REQUIRE(static_cast<std::size_t>(p.set_count()) == ref.sets.size());
        for (std::size_t s = 0; s < ref.sets.size(); ++s)
          for (std::int64_t k = 0; k < tau; ++k) {
            CHECK(p.slots[s * tau + k] == ref.sets[s][k]);
            CHECK((p.canonical[s * tau + k] == 1) == ref.canonical[s][k]);
          }
      }
    }
  }
}

TEST_CASE("empty windows contribute no sets") {
  const WindowSpec spec{{10, 10, 1}, Space::kLidar3D};
  const auto p = dynamic_set_partition(coords_of({{0, 0, 0}, {95, 95, 0}}), spec, 4, InnerOrder::kXMajor);
  CHECK(p.set_count() == 2);
  CHECK(p.window_tokens == std::vector<std::int64_t>{1, 1});
  const auto none = dynamic_set_partition(CoordMatrix(0, 3), spec, 4, InnerOrder::kXMajor);
  CHECK(none.set_count() == 0);
}

TEST_CASE("gather and scatter") {
  const auto coords = line(90);
  MatrixXdR features = MatrixXdR::Random(90, 5);
  const auto identity = dynamic_set_partition(coords, kWide, 90, InnerOrder::kXMajor);
  const auto batch = gather(identity, features, coords);
  CHECK(batch.features == features);
  CHECK(batch.set_count() == 1);

  const auto coords7 = line(7);
  const MatrixXdR f7 = MatrixXdR::Random(7, 3);
  const auto dup = dynamic_set_partition(coords7, kWide, 5, InnerOrder::kXMajor);
  REQUIRE(dup.slot_count() == 10);
  auto sets = gather(dup, f7, coords7);
  std::vector<std::int64_t> first(7, -1);
  for (std::int64_t s = 0; s < dup.slot_count(); ++s) {
    const auto t = dup.slots[s];
    if (first[t] >= 0) CHECK(sets.features.row(s) == sets.features.row(first[t]));
    else first[t] = s;
  }
  for (std::int64_t s = 0; s < dup.slot_count(); ++s)
    if (!dup.canonical[s]) sets.features.row(s).setConstant(1e300);
  CHECK(scatter_canonical(dup, sets.features) == f7);
}

TEST_CASE("scatter of large random partition matches sequential reference") {
  Rng rng(9);
  const auto coords = harness::random_layout(rng, 10000, {200, 200, 3});
  const WindowSpec spec{{30, 30, 1}, Space::kLidar3D};
  const auto p = dynamic_set_partition(coords, spec, 90, InnerOrder::kYMajor);
  const MatrixXdR outputs = MatrixXdR::Random(p.slot_count(), 4);
  const auto got = scatter_canonical(p, outputs);
  MatrixXdR expected(10000, 4);
  for (std::int64_t t = 0; t < 10000; ++t)
    for (std::int64_t s = 0; s < p.slot_count(); ++s)
      if (p.slots[s] == t && p.canonical[s]) {
        expected.row(t) = outputs.row(s);
        break;
      }
  CHECK(got == expected);

  const MatrixXdR features = MatrixXdR::Random(10000, 4);
  CHECK(scatter_canonical(p, gather(p, features, coords).features) == features);
  CHECK_THROWS_AS(scatter_canonical(p, MatrixXdR::Zero(p.slot_count() - 1, 4)), Error);
}

TEST_CASE("every token has exactly one canonical slot") {
  Rng rng(10);
  const auto coords = harness::random_layout(rng, 3000, {120, 120, 2});
  const auto p = dynamic_set_partition(coords, {{30, 30, 1}, Space::kLidar3D}, 90, InnerOrder::kXMajor);
  std::vector<int> canon(3000, 0), seen(3000, 0);
  for (std::int64_t s = 0; s < p.slot_count(); ++s) {
    ++seen[p.slots[s]];
    canon[p.slots[s]] += p.canonical[s];
  }
  CHECK(std::all_of(canon.begin(), canon.end(), [](int c) { return c == 1; }));
  CHECK(std::all_of(seen.begin(), seen.end(), [](int c) { return c >= 1; }));
  // Each window duplicates fewer than tau slots.
  for (std::size_t w = 0; w < p.window_tokens.size(); ++w)
    CHECK(p.window_sets[w] * 90 - p.window_tokens[w] < 90);
}

TEST_CASE("window relative coordinates") {
  const WindowSpec spec{{30, 30, 1}, Space::kLidar3D};
  const auto rel = window_relative_coords(coords_of({{0, 0, 0}, {30, 30, 0}, {15, 29, 0}}), spec);
  CHECK(rel.row(0) == rel.row(1));
  CHECK(rel(0, 0) == -1.0);
  CHECK(rel(2, 0) == 0.0);
  CHECK(rel.maxCoeff() < 1.0);
}

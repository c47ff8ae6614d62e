#include "unitr/partition.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>
#include <tuple>

namespace unitr {
namespace {

std::array<std::int64_t, 3> window_key(const CoordMatrix& coords, Eigen::Index i, const WindowSpec& spec) {
  const auto fl = [](double c, std::int64_t size) {
    return static_cast<std::int64_t>(std::floor(c / static_cast<double>(size)));
  };
  return {fl(coords(i, 2), spec.shape[2]), fl(coords(i, 1), spec.shape[1]), fl(coords(i, 0), spec.shape[0])};
}

// Token indices sorted by (window, inner order, index).
std::vector<std::int64_t> window_sorted(const CoordMatrix& coords, const std::vector<std::int64_t>& window_of,
                                        InnerOrder order) {
  std::vector<std::int64_t> idx(window_of.size());
  std::iota(idx.begin(), idx.end(), 0);
  const int major = order == InnerOrder::kXMajor ? 0 : 1;
  const int minor = 1 - major;
  std::sort(idx.begin(), idx.end(), [&](std::int64_t a, std::int64_t b) {
    return std::make_tuple(window_of[a], coords(a, major), coords(a, minor), coords(a, 2), a) <
           std::make_tuple(window_of[b], coords(b, major), coords(b, minor), coords(b, 2), b);
  });
  return idx;
}

}  // namespace

void validate(const WindowSpec& spec) {
  for (auto s : spec.shape)
    if (s <= 0) throw Error(ErrorCode::kInvalidArgument, "window shape must be positive on every axis");
  if (spec.space == Space::kImage2D && spec.shape[2] != 1)
    throw Error(ErrorCode::kInvalidArgument, "image-space windows must have H = 1 (one view per window)");
}

WindowAssignment assign_windows(const CoordMatrix& coords, const WindowSpec& spec) {
  validate(spec);
  const auto n = static_cast<std::size_t>(coords.rows());
  std::vector<std::array<std::int64_t, 3>> keys(n);
  for (std::size_t i = 0; i < n; ++i) keys[i] = window_key(coords, static_cast<Eigen::Index>(i), spec);

  std::vector<std::int64_t> idx(n);
  std::iota(idx.begin(), idx.end(), 0);
  std::sort(idx.begin(), idx.end(), [&](std::int64_t a, std::int64_t b) { return keys[a] < keys[b]; });

  WindowAssignment out;
  out.window_of.assign(n, -1);
  for (std::size_t r = 0; r < n; ++r) {
    const auto i = static_cast<std::size_t>(idx[r]);
    if (out.windows.empty() || out.windows.back() != keys[i]) out.windows.push_back(keys[i]);
    out.window_of[i] = out.window_count() - 1;
  }
  return out;
}

std::vector<std::int64_t> inner_window_order(const CoordMatrix& coords, const WindowAssignment& windows,
                                             InnerOrder order) {
  if (static_cast<Eigen::Index>(windows.window_of.size()) != coords.rows())
    throw Error(ErrorCode::kShapeMismatch, "window assignment does not match coordinate count");
  const auto sorted = window_sorted(coords, windows.window_of, order);
  std::vector<std::int64_t> rank(sorted.size());
  std::int64_t current = -1;
  std::int64_t r = 0;
  for (auto i : sorted) {
    if (windows.window_of[i] != current) {
      current = windows.window_of[i];
      r = 0;
    }
    rank[i] = r++;
  }
  return rank;
}

SetPartition dynamic_set_partition(const CoordMatrix& coords, const WindowSpec& spec, std::int64_t tau,
                                   InnerOrder order) {
  if (tau < 1) throw Error(ErrorCode::kInvalidArgument, "tau must be >= 1");
  const WindowAssignment windows = assign_windows(coords, spec);
  const auto sorted = window_sorted(coords, windows.window_of, order);

  SetPartition p;
  p.tau = tau;
  p.order = order;
  p.token_count = static_cast<std::int64_t>(coords.rows());
  p.window_tokens.assign(static_cast<std::size_t>(windows.window_count()), 0);
  for (auto w : windows.window_of) ++p.window_tokens[static_cast<std::size_t>(w)];

  std::size_t segment = 0;  // start of the current window in `sorted`
  for (std::int64_t w = 0; w < windows.window_count(); ++w) {
    const std::int64_t t = p.window_tokens[static_cast<std::size_t>(w)];
    const std::int64_t s = (t + tau - 1) / tau;
    p.window_sets.push_back(s);
    std::int64_t previous = -1;
    for (std::int64_t j = 0; j < s; ++j) {
      p.set_window.push_back(w);
      for (std::int64_t k = 0; k < tau; ++k) {
        const std::int64_t rank = (j * tau + k) * t / (s * tau);
        p.slots.push_back(sorted[segment + static_cast<std::size_t>(rank)]);
        p.canonical.push_back(rank != previous ? 1 : 0);
        previous = rank;
      }
    }
    segment += static_cast<std::size_t>(t);
  }
  return p;
}

SetBatch gather(const SetPartition& partition, const MatrixXdR& features, const CoordMatrix& coords) {
  if (features.rows() != coords.rows())
    throw Error(ErrorCode::kShapeMismatch, "gather: features and coords row counts differ");
  SetBatch out;
  out.tau = partition.tau;
  out.features.resize(partition.slot_count(), features.cols());
  out.coords.resize(partition.slot_count(), 3);
  out.mask.assign(static_cast<std::size_t>(partition.slot_count()), 1);
  for (std::int64_t slot = 0; slot < partition.slot_count(); ++slot) {
    const auto token = partition.slots[static_cast<std::size_t>(slot)];
    if (token < 0 || token >= features.rows())
      throw Error(ErrorCode::kIndexOutOfRange, "gather: slot " + std::to_string(slot) + " references token " +
                                                   std::to_string(token) + " of " + std::to_string(features.rows()));
    out.features.row(slot) = features.row(token);
    out.coords.row(slot) = coords.row(token);
  }
  return out;
}

MatrixXdR scatter_canonical(const SetPartition& partition, const MatrixXdR& set_outputs) {
  if (set_outputs.rows() != partition.slot_count())
    throw Error(ErrorCode::kShapeMismatch, "scatter: expected " + std::to_string(partition.slot_count()) +
                                               " slot rows, got " + std::to_string(set_outputs.rows()));
  MatrixXdR out = MatrixXdR::Zero(partition.token_count, set_outputs.cols());
  for (std::int64_t slot = 0; slot < partition.slot_count(); ++slot) {
    if (!partition.canonical[static_cast<std::size_t>(slot)]) continue;
    const auto token = partition.slots[static_cast<std::size_t>(slot)];
    if (token < 0 || token >= partition.token_count)
      throw Error(ErrorCode::kIndexOutOfRange, "scatter: slot references a missing token");
    out.row(token) = set_outputs.row(slot);
  }
  return out;
}

CoordMatrix window_relative_coords(const CoordMatrix& coords, const WindowSpec& spec) {
  validate(spec);
  CoordMatrix out(coords.rows(), 3);
  for (Eigen::Index i = 0; i < coords.rows(); ++i) {
    for (int a = 0; a < 3; ++a) {
      const auto size = static_cast<double>(spec.shape[static_cast<std::size_t>(a)]);
      const double offset = coords(i, a) - size * std::floor(coords(i, a) / size);
      out(i, a) = 2.0 * offset / size - 1.0;
    }
  }
  return out;
}

PartitionStats partition_stats(const SetPartition& p) {
  PartitionStats s;
  s.tokens = p.token_count;
  s.windows = static_cast<std::int64_t>(p.window_tokens.size());
  s.sets = p.set_count();
  s.slots = p.slot_count();
  s.duplication_rate = s.tokens > 0 ? static_cast<double>(s.slots - s.tokens) / static_cast<double>(s.tokens) : 0.0;
  for (auto t : p.window_tokens) {
    std::int64_t bound = 1;
    while (bound < t) bound *= 2;
    ++s.occupancy[bound];
  }
  return s;
}

}  // namespace unitr

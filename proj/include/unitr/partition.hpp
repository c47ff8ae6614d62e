#pragma once

// Dynamic set partition: windows sparse tokens, splits each window's T tokens
// into ceil(T / tau) sets of exactly tau slots, and moves rows between token
// order and set order.

#include <array>
#include <cstdint>
#include <map>
#include <vector>

#include "unitr/common.hpp"
#include "unitr/set_batch.hpp"

namespace unitr {

enum class Space { kLidar3D, kImage2D };
enum class InnerOrder { kXMajor, kYMajor };

struct WindowSpec {
  std::array<std::int64_t, 3> shape{30, 30, 1};
  Space space = Space::kLidar3D;
};

// Throws InvalidArgument for non-positive shapes or a 2D window with H != 1.
void validate(const WindowSpec& spec);

struct WindowAssignment {
  std::vector<std::int64_t> window_of;               // per token
  std::vector<std::array<std::int64_t, 3>> windows;  // (wz, wy, wx) per window id, ascending
  std::int64_t window_count() const { return static_cast<std::int64_t>(windows.size()); }
};

// Window ids enumerate the occupied windows in row-major (z, y, x) order. In
// image space the third coordinate is the view id, so windows never span views.
WindowAssignment assign_windows(const CoordMatrix& coords, const WindowSpec& spec);

// Rank of each token inside its window: lexicographic (x, y, z) for X-major,
// (y, x, z) for Y-major, ties broken by token index.
std::vector<std::int64_t> inner_window_order(const CoordMatrix& coords, const WindowAssignment& windows,
                                             InnerOrder order);

struct SetPartition {
  std::int64_t tau = 1;
  InnerOrder order = InnerOrder::kXMajor;
  std::int64_t token_count = 0;
  std::vector<std::int64_t> slots;        // set_count x tau token indices
  std::vector<std::uint8_t> canonical;    // 1 where a slot is its token's write-back slot
  std::vector<std::int64_t> set_window;   // window id per set
  std::vector<std::int64_t> window_tokens;  // T per window
  std::vector<std::int64_t> window_sets;    // S per window

  std::int64_t set_count() const { return static_cast<std::int64_t>(set_window.size()); }
  std::int64_t slot_count() const { return static_cast<std::int64_t>(slots.size()); }

  friend bool operator==(const SetPartition&, const SetPartition&) = default;
};

// Slot k of set j in a window of T tokens holds the token of rank
// floor((j*tau + k) * T / (S*tau)), S = ceil(T / tau). Sets are listed window
// by window in window-id order; a token's canonical slot is its first one.
SetPartition dynamic_set_partition(const CoordMatrix& coords, const WindowSpec& spec, std::int64_t tau,
                                   InnerOrder order);

// Pure gather of token rows into set order. Throws IndexOutOfRange.
SetBatch gather(const SetPartition& partition, const MatrixXdR& features, const CoordMatrix& coords);

// Writes each token's row from its canonical slot only. Throws ShapeMismatch.
MatrixXdR scatter_canonical(const SetPartition& partition, const MatrixXdR& set_outputs);

// Window-relative coordinates scaled to [-1, 1) per axis, the positional
// encoding input.
CoordMatrix window_relative_coords(const CoordMatrix& coords, const WindowSpec& spec);

struct PartitionStats {
  std::int64_t tokens = 0;
  std::int64_t windows = 0;
  std::int64_t sets = 0;
  std::int64_t slots = 0;
  double duplication_rate = 0.0;  // (slots - tokens) / tokens
  // Window population histogram: bucket upper bound (tokens) -> window count.
  std::map<std::int64_t, std::int64_t> occupancy;
};

PartitionStats partition_stats(const SetPartition& partition);

}  // namespace unitr

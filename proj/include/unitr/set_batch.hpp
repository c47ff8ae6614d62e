#pragma once

#include <cstdint>
#include <vector>

#include "unitr/common.hpp"

namespace unitr {

// Rectangular batch of attention sets. Set s occupies rows [s*tau, (s+1)*tau)
// of `features` and `coords`. Sets are filled by duplication, never padding,
// so `mask` is all true.
struct SetBatch {
  std::int64_t tau = 1;
  MatrixXdR features;
  CoordMatrix coords;
  std::vector<std::uint8_t> mask;

  std::int64_t set_count() const { return tau > 0 ? static_cast<std::int64_t>(features.rows()) / tau : 0; }
  std::int64_t channels() const { return static_cast<std::int64_t>(features.cols()); }
};

// Throws ShapeMismatch unless the batch is rectangular and self-consistent.
void validate(const SetBatch& batch);

// Concatenates along the set axis. Both inputs must share tau and channels.
SetBatch concat_sets(const SetBatch& first, const SetBatch& second);

// Rows [set_begin*tau, set_end*tau) as a new batch.
SetBatch slice_sets(const SetBatch& batch, std::int64_t set_begin, std::int64_t set_end);

}  // namespace unitr

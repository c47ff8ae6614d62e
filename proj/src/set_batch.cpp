#include "unitr/set_batch.hpp"

#include <string>

namespace unitr {

void validate(const SetBatch& b) {
  if (b.tau < 1) throw Error(ErrorCode::kShapeMismatch, "set batch tau must be >= 1");
  const auto rows = static_cast<std::int64_t>(b.features.rows());
  if (rows % b.tau != 0)
    throw Error(ErrorCode::kShapeMismatch, "set batch rows (" + std::to_string(rows) + ") not a multiple of tau");
  if (b.coords.rows() != b.features.rows() || static_cast<std::int64_t>(b.mask.size()) != rows)
    throw Error(ErrorCode::kShapeMismatch, "set batch features/coords/mask row counts differ");
}

SetBatch concat_sets(const SetBatch& a, const SetBatch& b) {
  validate(a);
  validate(b);
  if (a.set_count() == 0) return b;
  if (b.set_count() == 0) return a;
  if (a.tau != b.tau) throw Error(ErrorCode::kTauMismatch, "cannot concatenate set batches with different tau");
  if (a.features.cols() != b.features.cols())
    throw Error(ErrorCode::kShapeMismatch, "cannot concatenate set batches with different channel counts");
  SetBatch out;
  out.tau = a.tau;
  out.features.resize(a.features.rows() + b.features.rows(), a.features.cols());
  out.features << a.features, b.features;
  out.coords.resize(a.coords.rows() + b.coords.rows(), 3);
  out.coords << a.coords, b.coords;
  out.mask = a.mask;
  out.mask.insert(out.mask.end(), b.mask.begin(), b.mask.end());
  return out;
}

SetBatch slice_sets(const SetBatch& batch, std::int64_t set_begin, std::int64_t set_end) {
  if (set_begin < 0 || set_end < set_begin || set_end > batch.set_count())
    throw Error(ErrorCode::kIndexOutOfRange, "set slice out of range");
  const auto row0 = set_begin * batch.tau;
  const auto rows = (set_end - set_begin) * batch.tau;
  SetBatch out;
  out.tau = batch.tau;
  out.features = batch.features.middleRows(row0, rows);
  out.coords = batch.coords.middleRows(row0, rows);
  out.mask.assign(batch.mask.begin() + row0, batch.mask.begin() + row0 + rows);
  return out;
}

}  // namespace unitr

#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <stdexcept>
#include <string>
#include <string_view>

#include <Eigen/Dense>

namespace unitr {

using MatrixXdR = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using CoordMatrix = Eigen::Matrix<double, Eigen::Dynamic, 3, Eigen::RowMajor>;

enum class ErrorCode {
  kInvalidArgument,
  kEmptyCloud,
  kBadShape,
  kIndexOutOfRange,
  kShapeMismatch,
  kTauMismatch,
  kNonFiniteActivation,
  kDuplicateCell,
  kEmptyTable,
  kConfig,
  kIo,
};

std::string_view to_string(ErrorCode code);

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what)
      : std::runtime_error(std::string(to_string(code)) + ": " + what), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

// Splits [0, n) into contiguous chunks, one per worker thread. The callback
// receives half-open ranges; results must not depend on the chunking.
void parallel_for(std::size_t n, const std::function<void(std::size_t, std::size_t)>& body);

// Number of worker threads parallel_for uses (UNITR_THREADS overrides).
std::size_t worker_count();

// 64-bit FNV-1a.
std::uint64_t fnv1a(std::string_view bytes, std::uint64_t seed = 0xcbf29ce484222325ULL);

}  // namespace unitr

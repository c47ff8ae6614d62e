#pragma once

// The eight acceptance criteria, each at its stated scale and tolerance.

#include <filesystem>
#include <vector>

#include "unitr/harness/checks.hpp"

namespace unitr::harness {

// `work_dir` holds the pseudo depth table cache and the run dumps compared
// for determinism.
std::vector<Check> acceptance_criteria(const std::filesystem::path& work_dir);

}  // namespace unitr::harness

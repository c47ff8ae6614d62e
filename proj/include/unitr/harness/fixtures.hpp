#pragma once

// Seeded inputs shared by the check suite, the acceptance runner and tests.

#include <cstdint>

#include "unitr/geometry.hpp"
#include "unitr/harness/config.hpp"
#include "unitr/rng.hpp"
#include "unitr/set_batch.hpp"

namespace unitr::harness {

// Scaled-down scene: 6 views of 64 x 176 px, 1,500 points, 90 x 90 x 10
// pseudo grid. Everything else as in the default configuration.
Config small_config(std::uint64_t seed);

// Uniformly random rotation, translation in [-1, 1]^3 m, focal lengths in
// [150, 900] px and the principal point near the image center.
CameraRig random_rig(Rng& rng, int views, ImageSize size);

// Rotation matrix of a uniformly random unit quaternion.
Eigen::Matrix3d random_rotation(Rng& rng);

// n integer coordinates, uniform in [0, extent) per axis.
CoordMatrix random_layout(Rng& rng, std::int64_t n, const std::array<std::int64_t, 3>& extent);

// Standard-normal features, coordinates uniform in [-1, 1].
SetBatch random_batch(Rng& rng, std::int64_t sets, std::int64_t tau, std::int64_t channels);

}  // namespace unitr::harness

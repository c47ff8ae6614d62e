#include "unitr/harness/fixtures.hpp"

#include <cmath>

namespace unitr::harness {

Config small_config(std::uint64_t seed) {
  Config c = default_config();
  c.seed = seed;
  c.rig.image_size = {64, 176};
  c.scene.points = 1500;
  c.scene.boxes = 6;
  c.scene.max_radius = 30.0;
  c.backbone.pseudo_grid = {90, 90, 10};
  sync_model(c);
  return c;
}

Eigen::Matrix3d random_rotation(Rng& rng) {
  Eigen::Quaterniond q(rng.normal(), rng.normal(), rng.normal(), rng.normal());
  q.normalize();
  return q.toRotationMatrix();
}

CameraRig random_rig(Rng& rng, int views, ImageSize size) {
  std::vector<CameraView> out;
  for (int b = 0; b < views; ++b) {
    CameraView v;
    v.image_size = size;
    const double f = rng.uniform(150.0, 900.0);
    v.intrinsics << f, 0.0, 0.5 * size.width + rng.uniform(-10.0, 10.0),
        0.0, f * rng.uniform(0.9, 1.1), 0.5 * size.height + rng.uniform(-10.0, 10.0),
        0.0, 0.0, 1.0;
    Eigen::Matrix3d r = random_rotation(rng);
    // Re-orthonormalize so the rigid-transform check holds to 1e-9.
    Eigen::JacobiSVD<Eigen::Matrix3d> svd(r, Eigen::ComputeFullU | Eigen::ComputeFullV);
    r = svd.matrixU() * svd.matrixV().transpose();
    v.extrinsics.setIdentity();
    v.extrinsics.topLeftCorner<3, 3>() = r;
    v.extrinsics.topRightCorner<3, 1>() =
        Eigen::Vector3d(rng.uniform(-1.0, 1.0), rng.uniform(-1.0, 1.0), rng.uniform(-1.0, 1.0));
    out.push_back(v);
  }
  return CameraRig(std::move(out));
}

CoordMatrix random_layout(Rng& rng, std::int64_t n, const std::array<std::int64_t, 3>& extent) {
  CoordMatrix c(n, 3);
  for (std::int64_t i = 0; i < n; ++i)
    for (int a = 0; a < 3; ++a) c(i, a) = static_cast<double>(rng.below(static_cast<std::uint64_t>(extent[static_cast<std::size_t>(a)])));
  return c;
}

SetBatch random_batch(Rng& rng, std::int64_t sets, std::int64_t tau, std::int64_t channels) {
  SetBatch b;
  b.tau = tau;
  b.features.resize(sets * tau, channels);
  b.coords.resize(sets * tau, 3);
  b.mask.assign(static_cast<std::size_t>(sets * tau), 1);
  for (Eigen::Index i = 0; i < b.features.size(); ++i) b.features.data()[i] = rng.normal();
  for (Eigen::Index i = 0; i < b.coords.size(); ++i) b.coords.data()[i] = rng.uniform(-1.0, 1.0);
  return b;
}

}  // namespace unitr::harness

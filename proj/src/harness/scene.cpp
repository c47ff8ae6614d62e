#include "unitr/harness/scene.hpp"

#include <cmath>
#include <fstream>
#include <numbers>

#include "unitr/rng.hpp"

namespace unitr::harness {

std::optional<TruthRecord> reference_projection(const Eigen::Vector3d& point, const CameraRig& rig) {
  for (std::size_t b = 0; b < rig.size(); ++b) {
    const CameraView& cam = rig.view(b);
    double c[3];
    for (int i = 0; i < 3; ++i) {
      c[i] = cam.extrinsics(i, 3);
      for (int j = 0; j < 3; ++j) c[i] += cam.extrinsics(i, j) * point[j];
    }
    if (c[2] <= kMinDepth) continue;
    const auto& k = cam.intrinsics;
    const double u = (k(0, 0) * c[0] + k(0, 1) * c[1] + k(0, 2) * c[2]) / c[2];
    const double v = (k(1, 1) * c[1] + k(1, 2) * c[2]) / c[2];
    if (u < 0.0 || v < 0.0 || u >= cam.image_size.width || v >= cam.image_size.height) continue;
    TruthRecord r;
    r.visible = true;
    r.view = static_cast<int>(b);
    r.x = u;
    r.y = v;
    r.depth = c[2];
    return r;
  }
  return std::nullopt;
}

namespace {

struct Box {
  double cx, cy, yaw, lx, ly, height;
};

Eigen::Vector3d sample_box_surface(const Box& box, double ground_z, Rng& rng) {
  // Side faces and the roof, chosen with probability proportional to area.
  const double side_x = box.lx * box.height, side_y = box.ly * box.height, roof = box.lx * box.ly;
  const double total = 2 * side_x + 2 * side_y + roof;
  double pick = rng.uniform(0.0, total);
  double u = rng.uniform(-0.5, 0.5), w = rng.uniform(0.0, 1.0);
  double lx, ly, lz;
  if ((pick -= roof) < 0) {
    lx = u * box.lx;
    ly = (w - 0.5) * box.ly;
    lz = box.height;
  } else if ((pick -= 2 * side_x) < 0) {
    lx = u * box.lx;
    ly = (pick + 2 * side_x < side_x ? -0.5 : 0.5) * box.ly;
    lz = w * box.height;
  } else {
    lx = (pick + 2 * side_y < side_y ? -0.5 : 0.5) * box.lx;
    ly = u * box.ly;
    lz = w * box.height;
  }
  const double c = std::cos(box.yaw), s = std::sin(box.yaw);
  return {box.cx + c * lx - s * ly, box.cy + s * lx + c * ly, ground_z + lz};
}

}  // namespace

SyntheticScene generate_scene(std::uint64_t seed, const SceneParams& params, const RingRigParams& rig_params,
                              int point_extras) {
  if (params.points < 1 || params.boxes < 0 || !(params.max_radius > params.min_radius) || params.min_radius < 0)
    throw Error(ErrorCode::kInvalidArgument, "scene parameters must be positive with min_radius < max_radius");
  SyntheticScene scene{seed, CameraRig::ring(rig_params), PointCloud{}, ImageStack{}, {}};
  const Rng root(seed);
  Rng layout = root.fork("scene.boxes");
  Rng ground = root.fork("scene.ground");
  Rng surface = root.fork("scene.surface");
  Rng extras = root.fork("scene.extras");

  std::vector<Box> boxes;
  for (int i = 0; i < params.boxes; ++i) {
    const double r = layout.uniform(std::max(params.min_radius, 6.0), std::max(params.max_radius * 0.9, 6.5));
    const double a = layout.uniform(0.0, 2.0 * std::numbers::pi);
    boxes.push_back({r * std::cos(a), r * std::sin(a), layout.uniform(0.0, std::numbers::pi),
                     layout.uniform(1.5, 4.5), layout.uniform(1.5, 2.5), layout.uniform(1.4, 2.2)});
  }

  scene.cloud.extras = point_extras;
  const auto box_points = boxes.empty() ? 0 : params.points * 2 / 5;
  std::vector<float> extra(static_cast<std::size_t>(point_extras));
  for (std::int64_t i = 0; i < params.points; ++i) {
    Eigen::Vector3d p;
    if (i < params.points - box_points) {
      const double r2 = ground.uniform(params.min_radius * params.min_radius, params.max_radius * params.max_radius);
      const double a = ground.uniform(0.0, 2.0 * std::numbers::pi);
      p = {std::sqrt(r2) * std::cos(a), std::sqrt(r2) * std::sin(a), params.ground_z};
    } else {
      p = sample_box_surface(boxes[surface.below(boxes.size())], params.ground_z, surface);
    }
    for (auto& e : extra) e = static_cast<float>(extras.uniform());
    scene.cloud.add(static_cast<float>(p.x()), static_cast<float>(p.y()), static_cast<float>(p.z()), extra);
  }

  const int views = rig_params.views, h = rig_params.image_size.height, w = rig_params.image_size.width;
  scene.images = ImageStack(views, h, w);
  for (int b = 0; b < views; ++b)
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x) {
        const double fx = static_cast<double>(x) / w, fy = static_cast<double>(y) / h;
        scene.images.at(b, y, x, 0) = static_cast<float>(0.25 + 0.5 * fx);
        scene.images.at(b, y, x, 1) = static_cast<float>(0.25 + 0.5 * fy);
        scene.images.at(b, y, x, 2) =
            static_cast<float>(0.5 + 0.25 * std::sin(2.0 * std::numbers::pi * (static_cast<double>(b) / views + fx)));
      }

  scene.truth.reserve(scene.cloud.size());
  for (std::size_t i = 0; i < scene.cloud.size(); ++i) {
    const auto pt = scene.cloud.point(i);
    const Eigen::Vector3d p(pt[0], pt[1], pt[2]);
    TruthRecord rec = reference_projection(p, scene.rig).value_or(TruthRecord{});
    rec.point = static_cast<std::int64_t>(i);
    scene.truth.push_back(rec);
    if (!rec.visible) continue;
    const int px = static_cast<int>(rec.x), py = static_cast<int>(rec.y);
    scene.images.at(rec.view, py, px, 0) = 1.0f;
    scene.images.at(rec.view, py, px, 1) = static_cast<float>(std::max(0.0, 1.0 - rec.depth / 60.0));
    scene.images.at(rec.view, py, px, 2) = 0.0f;
  }
  return scene;
}

TensorContainer images_to_container(const ImageStack& images) {
  TensorContainer c;
  c.add(Tensor::f32("images", {images.views, images.height, images.width, 3}, images.pixels));
  return c;
}

ImageStack images_from_container(const TensorContainer& container) {
  const Tensor& t = container.at("images");
  if (t.dtype != DType::kF32 || t.shape.size() != 4 || t.shape[3] != 3)
    throw Error(ErrorCode::kBadShape, "images tensor must be f32 B x H x W x 3");
  ImageStack out(static_cast<int>(t.shape[0]), static_cast<int>(t.shape[1]), static_cast<int>(t.shape[2]));
  out.pixels = t.as_f32();
  return out;
}

void save_scene(const SyntheticScene& scene, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  scene.cloud.write_binary(dir / "cloud.bin");
  images_to_container(scene.images).save(dir / "images.utr");

  TensorContainer truth;
  std::vector<std::int64_t> view;
  std::vector<double> xyd;
  for (const auto& r : scene.truth) {
    view.push_back(r.view);
    xyd.insert(xyd.end(), {r.x, r.y, r.depth});
  }
  const auto n = static_cast<std::int64_t>(scene.truth.size());
  truth.add(Tensor::i64("truth.view", {n}, view));
  truth.add(Tensor::f32_from("truth.pixel_depth", {n, 3}, xyd));
  truth.save(dir / "truth.utr");

  nlohmann::ordered_json rig;
  rig["seed"] = scene.seed;
  rig["views"] = nlohmann::ordered_json::array();
  for (const auto& v : scene.rig.views()) {
    nlohmann::ordered_json j;
    j["height"] = v.image_size.height;
    j["width"] = v.image_size.width;
    const Eigen::Matrix<double, 3, 3, Eigen::RowMajor> k = v.intrinsics;
    j["intrinsics"] = std::vector<double>(k.data(), k.data() + 9);
    const Eigen::Matrix<double, 4, 4, Eigen::RowMajor> e = v.extrinsics;
    j["extrinsics"] = std::vector<double>(e.data(), e.data() + 16);
    rig["views"].push_back(j);
  }
  std::ofstream out(dir / "rig.json");
  if (!out) throw Error(ErrorCode::kIo, "cannot write " + (dir / "rig.json").string());
  out << rig.dump(2) << "\n";
}

}  // namespace unitr::harness

#include "unitr/tokenizers.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <fstream>
#include <iterator>
#include <numeric>
#include <string>
#include <unordered_set>

namespace unitr {
namespace {

// out = bias + W * in, accumulated over inputs in a fixed order so that equal
// inputs produce bit-identical rows wherever they sit.
void embed_row(const Linear& l, const MatrixXdR& weight_t, const double* in, double* out) {
  const auto c = weight_t.cols();
  const double* bias = l.bias->data();
  std::copy(bias, bias + c, out);
  for (Eigen::Index k = 0; k < weight_t.rows(); ++k) {
    const double v = in[k];
    const double* w = weight_t.data() + k * c;
    for (Eigen::Index j = 0; j < c; ++j) out[j] += w[j] * v;
  }
}

}  // namespace

void PointCloud::add(float x, float y, float z, std::span<const float> extra_values) {
  if (static_cast<int>(extra_values.size()) != extras)
    throw Error(ErrorCode::kShapeMismatch, "point has " + std::to_string(extra_values.size()) + " extras, cloud expects " +
                                               std::to_string(extras));
  values.insert(values.end(), {x, y, z});
  values.insert(values.end(), extra_values.begin(), extra_values.end());
}

PointCloud PointCloud::read_binary(const std::filesystem::path& path, int extras) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::kIo, "cannot open point cloud " + path.string());
  std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  PointCloud cloud;
  cloud.extras = extras;
  const std::size_t record = cloud.stride() * 4;
  if (bytes.size() % record != 0)
    throw Error(ErrorCode::kIo, "point cloud size is not a multiple of the record size");
  cloud.values.resize(bytes.size() / 4);
  for (std::size_t i = 0; i < cloud.values.size(); ++i) {
    std::uint32_t w = 0;
    for (int b = 0; b < 4; ++b) w |= static_cast<std::uint32_t>(bytes[4 * i + static_cast<std::size_t>(b)]) << (8 * b);
    cloud.values[i] = std::bit_cast<float>(w);
  }
  return cloud;
}

void PointCloud::write_binary(const std::filesystem::path& path) const {
  std::vector<char> bytes(values.size() * 4);
  for (std::size_t i = 0; i < values.size(); ++i) {
    const auto w = std::bit_cast<std::uint32_t>(values[i]);
    for (int b = 0; b < 4; ++b) bytes[4 * i + static_cast<std::size_t>(b)] = static_cast<char>(w >> (8 * b));
  }
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorCode::kIo, "cannot write point cloud " + path.string());
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
}

std::int64_t TokenSequence::count(Modality m) const {
  return static_cast<std::int64_t>(std::count(modality.begin(), modality.end(), m));
}

void validate(const TokenSequence& t, int views) {
  const auto n = t.coords.rows();
  if (t.features.rows() != n || static_cast<Eigen::Index>(t.modality.size()) != n ||
      static_cast<Eigen::Index>(t.bev_cell.size()) != n)
    throw Error(ErrorCode::kShapeMismatch, "token sequence fields have different row counts");
  std::unordered_set<std::uint64_t> seen;
  for (Eigen::Index i = 0; i < n; ++i) {
    if (t.modality[static_cast<std::size_t>(i)] == Modality::kImage) {
      const double b = t.coords(i, 2);
      if (!(b >= 0 && b < views && b == std::floor(b)))
        throw Error(ErrorCode::kInvalidArgument, "image token " + std::to_string(i) + " has an invalid view id");
    } else {
      std::uint64_t key = fnv1a("voxel");
      for (int a = 0; a < 3; ++a) {
        const auto c = static_cast<std::int64_t>(t.coords(i, a));
        key = fnv1a(std::string_view(reinterpret_cast<const char*>(&c), sizeof(c)), key);
      }
      if (!seen.insert(key).second)
        throw Error(ErrorCode::kInvalidArgument, "two lidar tokens share voxel index (token " + std::to_string(i) + ")");
    }
  }
}

TokenSequence concat_tokens(const TokenSequence& lidar, const TokenSequence& image) {
  if (lidar.size() > 0 && image.size() > 0 && lidar.features.cols() != image.features.cols())
    throw Error(ErrorCode::kShapeMismatch, "token channel counts differ");
  TokenSequence out;
  const auto cols = lidar.size() > 0 ? lidar.features.cols() : image.features.cols();
  out.features.resize(lidar.size() + image.size(), cols);
  out.coords.resize(lidar.size() + image.size(), 3);
  if (lidar.size() > 0) {
    out.features.topRows(lidar.size()) = lidar.features;
    out.coords.topRows(lidar.size()) = lidar.coords;
  }
  if (image.size() > 0) {
    out.features.bottomRows(image.size()) = image.features;
    out.coords.bottomRows(image.size()) = image.coords;
  }
  out.modality = lidar.modality;
  out.modality.insert(out.modality.end(), image.modality.begin(), image.modality.end());
  out.bev_cell = lidar.bev_cell;
  out.bev_cell.insert(out.bev_cell.end(), image.bev_cell.begin(), image.bev_cell.end());
  return out;
}

std::array<std::int64_t, 3> VoxelGrid::dims() const {
  std::array<std::int64_t, 3> d{};
  for (int a = 0; a < 3; ++a) {
    if (!(voxel_size[a] > 0.0)) throw Error(ErrorCode::kInvalidArgument, "voxel size must be positive");
    d[static_cast<std::size_t>(a)] = std::llround(range.extent()[a] / voxel_size[a]);
    if (d[static_cast<std::size_t>(a)] < 1) throw Error(ErrorCode::kInvalidArgument, "voxel range is degenerate");
  }
  return d;
}

Eigen::Vector3d VoxelGrid::voxel_center(const Eigen::Vector3d& index) const {
  return range.min + (index.array() + 0.5).matrix().cwiseProduct(voxel_size);
}

Eigen::Vector3d VoxelGrid::to_grid(const Eigen::Vector3d& point) const {
  return (point - range.min).cwiseQuotient(voxel_size);
}

TokenSequence voxelize(const PointCloud& cloud, const VoxelGrid& grid, const BackboneWeights& weights) {
  if (cloud.extras != weights.dims().point_extras)
    throw Error(ErrorCode::kShapeMismatch, "cloud carries " + std::to_string(cloud.extras) +
                                               " extras, the voxel embedding expects " +
                                               std::to_string(weights.dims().point_extras));
  const auto dims = grid.dims();
  struct Entry {
    std::int64_t key;
    std::size_t point;
    std::array<std::int64_t, 3> index;
  };
  std::vector<Entry> entries;
  entries.reserve(cloud.size());
  for (std::size_t i = 0; i < cloud.size(); ++i) {
    const auto p = cloud.point(i);
    std::array<std::int64_t, 3> idx{};
    bool inside = true;
    for (int a = 0; a < 3 && inside; ++a) {
      const double v = p[static_cast<std::size_t>(a)];
      if (!std::isfinite(v) || v < grid.range.min[a] || v >= grid.range.max[a]) {
        inside = false;
        break;
      }
      idx[static_cast<std::size_t>(a)] = static_cast<std::int64_t>(std::floor((v - grid.range.min[a]) / grid.voxel_size[a]));
      inside = idx[static_cast<std::size_t>(a)] >= 0 && idx[static_cast<std::size_t>(a)] < dims[static_cast<std::size_t>(a)];
    }
    if (!inside) continue;
    const std::int64_t key = (idx[2] * dims[1] + idx[1]) * dims[0] + idx[0];
    entries.push_back({key, i, idx});
  }
  if (entries.empty()) throw Error(ErrorCode::kEmptyCloud, "no point falls inside the voxel range");
  std::sort(entries.begin(), entries.end(),
            [](const Entry& a, const Entry& b) { return std::tie(a.key, a.point) < std::tie(b.key, b.point); });

  std::int64_t voxels = 0;
  for (std::size_t i = 0; i < entries.size(); ++i)
    if (i == 0 || entries[i].key != entries[i - 1].key) ++voxels;

  const Linear embed = weights.voxel_embed();
  const MatrixXdR weight_t = embed.weight->transpose();
  const auto c = weights.dims().channels;
  TokenSequence out;
  out.features.resize(voxels, c);
  out.coords.resize(voxels, 3);
  out.modality.assign(static_cast<std::size_t>(voxels), Modality::kLidar);
  out.bev_cell.resize(static_cast<std::size_t>(voxels));

  std::vector<double> input(cloud.stride());
  std::vector<double> embedded(static_cast<std::size_t>(c));
  std::int64_t token = -1;
  for (std::size_t i = 0; i < entries.size(); ++i) {
    const Entry& e = entries[i];
    const bool first = i == 0 || e.key != entries[i - 1].key;
    if (first) {
      ++token;
      out.coords.row(token) << static_cast<double>(e.index[0]), static_cast<double>(e.index[1]),
          static_cast<double>(e.index[2]);
      out.bev_cell[static_cast<std::size_t>(token)] = e.index[0] * dims[1] + e.index[1];
    }
    const Eigen::Vector3d center = grid.voxel_center(out.coords.row(token).transpose());
    const auto p = cloud.point(e.point);
    for (int a = 0; a < 3; ++a) input[static_cast<std::size_t>(a)] = static_cast<double>(p[static_cast<std::size_t>(a)]) - center[a];
    for (std::size_t k = 3; k < cloud.stride(); ++k) input[k] = p[k];
    embed_row(embed, weight_t, input.data(), embedded.data());
    auto row = out.features.row(token);
    for (Eigen::Index j = 0; j < c; ++j)
      row[j] = first ? embedded[static_cast<std::size_t>(j)] : std::max(row[j], embedded[static_cast<std::size_t>(j)]);
  }
  return out;
}

std::vector<float> patch_pixels(const ImageStack& images, int patch, int view, int patch_row, int patch_col) {
  std::vector<float> raw;
  raw.reserve(static_cast<std::size_t>(patch) * patch * 3);
  for (int dy = 0; dy < patch; ++dy)
    for (int dx = 0; dx < patch; ++dx)
      for (int ch = 0; ch < 3; ++ch) raw.push_back(images.at(view, patch_row * patch + dy, patch_col * patch + dx, ch));
  return raw;
}

TokenSequence patchify(const ImageStack& images, int patch, const BackboneWeights& weights) {
  if (patch <= 0 || images.height % patch != 0 || images.width % patch != 0)
    throw Error(ErrorCode::kBadShape, "image " + std::to_string(images.height) + "x" + std::to_string(images.width) +
                                          " is not divisible by patch size " + std::to_string(patch));
  if (patch != weights.dims().patch)
    throw Error(ErrorCode::kShapeMismatch, "patch size differs from the patch embedding");
  if (images.pixels.size() != static_cast<std::size_t>(images.views) * images.height * images.width * 3)
    throw Error(ErrorCode::kBadShape, "image buffer does not match B x H x W x 3");
  const int rows = images.height / patch;
  const int cols = images.width / patch;
  const std::int64_t count = static_cast<std::int64_t>(images.views) * rows * cols;
  const auto c = weights.dims().channels;

  const Linear embed = weights.patch_embed();
  const MatrixXdR weight_t = embed.weight->transpose();
  TokenSequence out;
  out.features.resize(count, c);
  out.coords.resize(count, 3);
  out.modality.assign(static_cast<std::size_t>(count), Modality::kImage);
  out.bev_cell.assign(static_cast<std::size_t>(count), -1);

  parallel_for(static_cast<std::size_t>(count), [&](std::size_t begin, std::size_t end) {
    std::vector<double> raw;
    for (std::size_t t = begin; t < end; ++t) {
      const int b = static_cast<int>(t / static_cast<std::size_t>(rows * cols));
      const int r = static_cast<int>(t / static_cast<std::size_t>(cols)) % rows;
      const int col = static_cast<int>(t % static_cast<std::size_t>(cols));
      const auto pixels = patch_pixels(images, patch, b, r, col);
      raw.assign(pixels.begin(), pixels.end());
      embed_row(embed, weight_t, raw.data(), out.features.row(static_cast<Eigen::Index>(t)).data());
      out.coords.row(static_cast<Eigen::Index>(t)) << col, r, b;
    }
  });
  return out;
}

}  // namespace unitr

#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <string_view>
#include <vector>

#include "unitr/common.hpp"
#include "unitr/tensor_container.hpp"

namespace unitr {

struct ModelDims {
  int channels = 128;
  int hidden = 256;
  int heads = 8;
  int layers = 8;        // attention layers across all blocks
  int point_extras = 1;  // per-point features after x, y, z
  int patch = 8;

  int head_dim() const { return channels / heads; }
  int patch_features() const { return patch * patch * 3; }
};

enum class InitScheme {
  kUniformFanIn,  // U(-1/sqrt(fan_in), 1/sqrt(fan_in)); norm gain 1, bias 0
  kNormal,        // every tensor, norms included, drawn from N(0, stddev^2)
};

struct InitOptions {
  InitScheme scheme = InitScheme::kUniformFanIn;
  double stddev = 0.02;
};

struct Linear {
  const MatrixXdR* weight = nullptr;  // out x in
  const MatrixXdR* bias = nullptr;    // 1 x out
};

struct Norm {
  const MatrixXdR* gain = nullptr;  // 1 x C
  const MatrixXdR* bias = nullptr;  // 1 x C
};

struct LayerParams {
  Linear pos_fc1, pos_fc2;
  Linear query, key, value, output;
  Norm norm1, norm2;
  Linear ffn_fc1, ffn_fc2;
};

// The single parameter store shared by every modality and block. Values are
// held in double precision but created as f32-representable numbers so that
// save/load round-trips exactly.
class BackboneWeights {
 public:
  static BackboneWeights create(const ModelDims& dims, std::uint64_t seed, InitOptions init = {});

  const ModelDims& dims() const { return dims_; }
  std::uint64_t seed() const { return seed_; }
  const InitOptions& init() const { return init_; }

  bool contains(std::string_view name) const;
  const MatrixXdR& tensor(std::string_view name) const;
  std::vector<std::int64_t> shape(std::string_view name) const;
  std::vector<std::string> names() const;

  LayerParams layer(int index) const;
  Linear voxel_embed() const;
  Linear patch_embed() const;
  Linear offset_fc1() const;
  Linear offset_fc2() const;

  // Replaces a tensor's values (shape must match); used by tests.
  void set(std::string_view name, const MatrixXdR& value);

  TensorContainer to_container() const;
  static BackboneWeights from_container(const TensorContainer& container);
  void save(const std::filesystem::path& path) const;
  static BackboneWeights load(const std::filesystem::path& path);

  // JSON text listing tensor names, shapes and the creation seed.
  std::string manifest() const;

 private:
  struct Param {
    std::vector<std::int64_t> shape;
    MatrixXdR value;
  };

  void add(const std::string& name, std::vector<std::int64_t> shape);
  Linear linear(const std::string& prefix) const;
  void initialize();

  ModelDims dims_;
  std::uint64_t seed_ = 0;
  InitOptions init_;
  std::map<std::string, Param, std::less<>> params_;
};

}  // namespace unitr

#include "unitr/weights.hpp"

#include <cmath>

#include <json.hpp>

#include "unitr/rng.hpp"

namespace unitr {
namespace {

std::string layer_prefix(int index) { return "layers." + std::to_string(index) + "."; }

bool is_norm(const std::string& name) { return name.find(".norm") != std::string::npos; }

bool ends_with(const std::string& s, std::string_view suffix) {
  return s.size() >= suffix.size() && s.compare(s.size() - suffix.size(), suffix.size(), suffix) == 0;
}

}  // namespace

void BackboneWeights::add(const std::string& name, std::vector<std::int64_t> shape) {
  Param p;
  p.shape = shape;
  if (shape.size() == 1)
    p.value = MatrixXdR::Zero(1, shape[0]);
  else
    p.value = MatrixXdR::Zero(shape[0], shape[1]);
  params_.emplace(name, std::move(p));
}

BackboneWeights BackboneWeights::create(const ModelDims& dims, std::uint64_t seed, InitOptions init) {
  if (dims.channels <= 0 || dims.hidden <= 0 || dims.heads <= 0 || dims.layers < 0 || dims.patch <= 0 ||
      dims.point_extras < 0)
    throw Error(ErrorCode::kInvalidArgument, "model dimensions must be positive");
  if (dims.channels % dims.heads != 0)
    throw Error(ErrorCode::kInvalidArgument, "channels must be divisible by the head count");

  BackboneWeights w;
  w.dims_ = dims;
  w.seed_ = seed;
  w.init_ = init;
  const std::int64_t c = dims.channels;
  const std::int64_t h = dims.hidden;
  auto add_linear = [&](const std::string& prefix, std::int64_t out, std::int64_t in) {
    w.add(prefix + ".weight", {out, in});
    w.add(prefix + ".bias", {out});
  };
  for (int l = 0; l < dims.layers; ++l) {
    const auto p = layer_prefix(l);
    add_linear(p + "pos.fc1", h, 3);
    add_linear(p + "pos.fc2", c, h);
    add_linear(p + "attn.query", c, c);
    add_linear(p + "attn.key", c, c);
    add_linear(p + "attn.value", c, c);
    add_linear(p + "attn.output", c, c);
    w.add(p + "norm1.weight", {c});
    w.add(p + "norm1.bias", {c});
    w.add(p + "norm2.weight", {c});
    w.add(p + "norm2.bias", {c});
    add_linear(p + "ffn.fc1", h, c);
    add_linear(p + "ffn.fc2", c, h);
  }
  add_linear("voxel_embed", c, 3 + dims.point_extras);
  add_linear("patch_embed", c, dims.patch_features());
  add_linear("offset_mlp.fc1", h, 1);
  add_linear("offset_mlp.fc2", c, h);
  w.initialize();
  return w;
}

void BackboneWeights::initialize() {
  const Rng root(seed_);
  for (auto& [name, param] : params_) {
    Rng rng = root.fork(name);
    auto& v = param.value;
    if (init_.scheme == InitScheme::kNormal) {
      for (Eigen::Index i = 0; i < v.size(); ++i)
        v.data()[i] = static_cast<float>(rng.normal(0.0, init_.stddev));
      continue;
    }
    if (is_norm(name)) {
      v.setConstant(ends_with(name, ".weight") ? 1.0 : 0.0);
      continue;
    }
    // Biases use the fan-in of their layer's weight.
    const std::string weight_name = ends_with(name, ".bias") ? name.substr(0, name.size() - 5) + ".weight" : name;
    const auto fan_in = static_cast<double>(params_.at(weight_name).shape.at(1));
    const double bound = 1.0 / std::sqrt(fan_in);
    for (Eigen::Index i = 0; i < v.size(); ++i) v.data()[i] = static_cast<float>(rng.uniform(-bound, bound));
  }
}

bool BackboneWeights::contains(std::string_view name) const { return params_.find(name) != params_.end(); }

const MatrixXdR& BackboneWeights::tensor(std::string_view name) const {
  auto it = params_.find(name);
  if (it == params_.end()) throw Error(ErrorCode::kInvalidArgument, "unknown weight tensor '" + std::string(name) + "'");
  return it->second.value;
}

std::vector<std::int64_t> BackboneWeights::shape(std::string_view name) const {
  auto it = params_.find(name);
  if (it == params_.end()) throw Error(ErrorCode::kInvalidArgument, "unknown weight tensor '" + std::string(name) + "'");
  return it->second.shape;
}

std::vector<std::string> BackboneWeights::names() const {
  std::vector<std::string> out;
  for (const auto& [name, _] : params_) out.push_back(name);
  return out;
}

Linear BackboneWeights::linear(const std::string& prefix) const {
  return Linear{&tensor(prefix + ".weight"), &tensor(prefix + ".bias")};
}

LayerParams BackboneWeights::layer(int index) const {
  if (index < 0 || index >= dims_.layers)
    throw Error(ErrorCode::kInvalidArgument,
                "layer " + std::to_string(index) + " not in store of " + std::to_string(dims_.layers) + " layers");
  const auto p = layer_prefix(index);
  LayerParams out;
  out.pos_fc1 = linear(p + "pos.fc1");
  out.pos_fc2 = linear(p + "pos.fc2");
  out.query = linear(p + "attn.query");
  out.key = linear(p + "attn.key");
  out.value = linear(p + "attn.value");
  out.output = linear(p + "attn.output");
  out.norm1 = Norm{&tensor(p + "norm1.weight"), &tensor(p + "norm1.bias")};
  out.norm2 = Norm{&tensor(p + "norm2.weight"), &tensor(p + "norm2.bias")};
  out.ffn_fc1 = linear(p + "ffn.fc1");
  out.ffn_fc2 = linear(p + "ffn.fc2");
  return out;
}

Linear BackboneWeights::voxel_embed() const { return linear("voxel_embed"); }
Linear BackboneWeights::patch_embed() const { return linear("patch_embed"); }
Linear BackboneWeights::offset_fc1() const { return linear("offset_mlp.fc1"); }
Linear BackboneWeights::offset_fc2() const { return linear("offset_mlp.fc2"); }

void BackboneWeights::set(std::string_view name, const MatrixXdR& value) {
  auto it = params_.find(name);
  if (it == params_.end()) throw Error(ErrorCode::kInvalidArgument, "unknown weight tensor '" + std::string(name) + "'");
  if (it->second.value.rows() != value.rows() || it->second.value.cols() != value.cols())
    throw Error(ErrorCode::kShapeMismatch, "replacement for '" + std::string(name) + "' has the wrong shape");
  it->second.value = value;
}

std::string BackboneWeights::manifest() const {
  nlohmann::json m;
  m["seed"] = seed_;
  m["init"] = init_.scheme == InitScheme::kNormal ? "normal" : "uniform_fan_in";
  m["init_stddev"] = init_.stddev;
  m["dims"] = {{"channels", dims_.channels}, {"hidden", dims_.hidden},     {"heads", dims_.heads},
               {"layers", dims_.layers},     {"point_extras", dims_.point_extras}, {"patch", dims_.patch}};
  auto& tensors = m["tensors"] = nlohmann::json::array();
  for (const auto& [name, p] : params_) tensors.push_back({{"name", name}, {"shape", p.shape}});
  return m.dump(2);
}

TensorContainer BackboneWeights::to_container() const {
  TensorContainer c;
  const auto text = manifest();
  c.add(Tensor::u8("__manifest__", {static_cast<std::int64_t>(text.size())},
                   std::span(reinterpret_cast<const std::uint8_t*>(text.data()), text.size())));
  for (const auto& [name, p] : params_)
    c.add(Tensor::f32_from(name, p.shape, std::span<const double>(p.value.data(), static_cast<std::size_t>(p.value.size()))));
  return c;
}

BackboneWeights BackboneWeights::from_container(const TensorContainer& c) {
  const auto raw = c.at("__manifest__").as_u8();
  const auto m = nlohmann::json::parse(std::string(raw.begin(), raw.end()));
  ModelDims dims;
  const auto& d = m.at("dims");
  dims.channels = d.at("channels");
  dims.hidden = d.at("hidden");
  dims.heads = d.at("heads");
  dims.layers = d.at("layers");
  dims.point_extras = d.at("point_extras");
  dims.patch = d.at("patch");
  InitOptions init;
  init.scheme = m.at("init") == "normal" ? InitScheme::kNormal : InitScheme::kUniformFanIn;
  init.stddev = m.at("init_stddev");
  auto w = create(dims, m.at("seed").get<std::uint64_t>(), init);
  for (auto& [name, p] : w.params_) {
    const auto& t = c.at(name);
    if (t.shape != p.shape) throw Error(ErrorCode::kShapeMismatch, "stored tensor '" + name + "' has the wrong shape");
    const auto values = t.as_f64();
    std::copy(values.begin(), values.end(), p.value.data());
  }
  return w;
}

void BackboneWeights::save(const std::filesystem::path& path) const { to_container().save(path); }

BackboneWeights BackboneWeights::load(const std::filesystem::path& path) {
  return from_container(TensorContainer::load(path));
}

}  // namespace unitr

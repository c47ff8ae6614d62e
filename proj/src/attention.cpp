#include "unitr/attention.hpp"

#include <cmath>
#include <numbers>
#include <string>

namespace unitr {
namespace {

template <typename Input>
MatrixXdR affine(const Linear& l, const Input& x) {
  MatrixXdR y = x * l.weight->transpose();
  y.rowwise() += l.bias->row(0);
  return y;
}

void gelu_inplace(MatrixXdR& m) {
  double* d = m.data();
  for (Eigen::Index i = 0; i < m.size(); ++i) d[i] = gelu(d[i]);
}

void layer_norm_inplace(MatrixXdR& x, const Norm& norm) {
  const auto c = static_cast<double>(x.cols());
  const auto gain = norm.gain->row(0);
  const auto bias = norm.bias->row(0);
  for (Eigen::Index r = 0; r < x.rows(); ++r) {
    auto row = x.row(r);
    const double mean = row.sum() / c;
    const double var = (row.array() - mean).square().sum() / c;
    const double inv = 1.0 / std::sqrt(var + kLayerNormEps);
    row = ((row.array() - mean) * inv).matrix().cwiseProduct(gain) + bias;
  }
}

template <typename Coords>
MatrixXdR encode_positions(const Coords& coords, const LayerParams& p) {
  MatrixXdR hidden = affine(p.pos_fc1, coords);
  gelu_inplace(hidden);
  return affine(p.pos_fc2, hidden);
}

void check_dims(const SetBatch& batch, const BackboneWeights& weights) {
  validate(batch);
  if (batch.channels() != weights.dims().channels)
    throw Error(ErrorCode::kShapeMismatch, "set batch has " + std::to_string(batch.channels()) +
                                               " channels, weights expect " +
                                               std::to_string(weights.dims().channels));
}

}  // namespace

double gelu(double x) { return 0.5 * x * (1.0 + std::erf(x / std::numbers::sqrt2)); }

double gelu_derivative(double x) {
  const double cdf = 0.5 * (1.0 + std::erf(x / std::numbers::sqrt2));
  const double pdf = std::exp(-0.5 * x * x) * 0.5 * std::numbers::inv_sqrtpi * std::numbers::sqrt2;
  return cdf + x * pdf;
}

MatrixXdR positional_encode(const CoordMatrix& coords, const BackboneWeights& weights, int layer) {
  return encode_positions(coords, weights.layer(layer));
}

Eigen::MatrixXd positional_encode_jacobian(const Eigen::Vector3d& coord, const BackboneWeights& weights, int layer) {
  const LayerParams p = weights.layer(layer);
  const Eigen::VectorXd pre = *p.pos_fc1.weight * coord + p.pos_fc1.bias->row(0).transpose();
  Eigen::VectorXd slope(pre.size());
  for (Eigen::Index i = 0; i < pre.size(); ++i) slope[i] = gelu_derivative(pre[i]);
  return *p.pos_fc2.weight * slope.asDiagonal() * *p.pos_fc1.weight;
}

SetBatch set_attention_layer(const SetBatch& batch, const BackboneWeights& weights, int layer,
                             AttentionProbe* probe) {
  check_dims(batch, weights);
  const LayerParams p = weights.layer(layer);
  const auto tau = batch.tau;
  const auto sets = batch.set_count();
  const int heads = weights.dims().heads;
  const int head_dim = weights.dims().head_dim();
  const double scale = 1.0 / std::sqrt(static_cast<double>(head_dim));

  SetBatch out;
  out.tau = tau;
  out.coords = batch.coords;
  out.mask = batch.mask;
  out.features.resize(batch.features.rows(), batch.features.cols());
  if (probe) probe->probabilities.assign(static_cast<std::size_t>(sets * heads * tau * tau), 0.0);

  parallel_for(static_cast<std::size_t>(sets), [&](std::size_t begin, std::size_t end) {
    MatrixXdR x, q, k, v, mixed(tau, batch.features.cols()), scores(tau, tau), ffn;
    for (auto s = static_cast<std::int64_t>(begin); s < static_cast<std::int64_t>(end); ++s) {
      const auto row0 = s * tau;
      x = batch.features.middleRows(row0, tau) + encode_positions(batch.coords.middleRows(row0, tau), p);
      q = affine(p.query, x);
      k = affine(p.key, x);
      v = affine(p.value, x);
      for (int h = 0; h < heads; ++h) {
        const auto cols = static_cast<Eigen::Index>(h) * head_dim;
        scores.noalias() = q.middleCols(cols, head_dim) * k.middleCols(cols, head_dim).transpose();
        scores *= scale;
        for (Eigen::Index r = 0; r < tau; ++r) {
          auto row = scores.row(r);
          const double peak = row.maxCoeff();
          row = (row.array() - peak).exp().matrix();
          row /= row.sum();
        }
        if (probe) {
          double* dst = probe->probabilities.data() + ((s * heads + h) * tau * tau);
          Eigen::Map<MatrixXdR>(dst, tau, tau) = scores;
        }
        mixed.middleCols(cols, head_dim).noalias() = scores * v.middleCols(cols, head_dim);
      }
      x += affine(p.output, mixed);
      layer_norm_inplace(x, p.norm1);
      ffn = affine(p.ffn_fc1, x);
      gelu_inplace(ffn);
      x += affine(p.ffn_fc2, ffn);
      layer_norm_inplace(x, p.norm2);
      if (!x.allFinite())
        throw Error(ErrorCode::kNonFiniteActivation,
                    "layer " + std::to_string(layer) + " produced a non-finite value in set " + std::to_string(s));
      out.features.middleRows(row0, tau) = x;
    }
  });
  return out;
}

DispatchCounter& global_dispatch_counter() {
  static DispatchCounter counter;
  return counter;
}

SetBatch dispatch_attention(const SetBatch& batch, const BackboneWeights& weights, int layer,
                            DispatchCounter& counter) {
  validate(batch);
  if (batch.set_count() == 0) return batch;
  counter.increment();
  return set_attention_layer(batch, weights, layer);
}

ModalityBatches batched_layer_over_modalities(const SetBatch& lidar, const SetBatch& image,
                                              const BackboneWeights& weights, int layer,
                                              DispatchCounter& counter) {
  if (lidar.set_count() > 0 && image.set_count() > 0 && lidar.tau != image.tau)
    throw Error(ErrorCode::kTauMismatch, "lidar tau " + std::to_string(lidar.tau) + " != image tau " +
                                             std::to_string(image.tau));
  const SetBatch fused = dispatch_attention(concat_sets(lidar, image), weights, layer, counter);
  const auto lidar_sets = lidar.set_count();
  ModalityBatches out;
  if (lidar_sets == 0) {
    out.lidar = lidar;
    out.image = fused;
  } else if (image.set_count() == 0) {
    out.lidar = fused;
    out.image = image;
  } else {
    out.lidar = slice_sets(fused, 0, lidar_sets);
    out.image = slice_sets(fused, lidar_sets, fused.set_count());
  }
  return out;
}

ModalityBatches serial_layer_over_modalities(const SetBatch& lidar, const SetBatch& image,
                                             const BackboneWeights& weights, int layer,
                                             DispatchCounter& counter) {
  if (lidar.set_count() > 0 && image.set_count() > 0 && lidar.tau != image.tau)
    throw Error(ErrorCode::kTauMismatch, "lidar tau " + std::to_string(lidar.tau) + " != image tau " +
                                             std::to_string(image.tau));
  return ModalityBatches{dispatch_attention(lidar, weights, layer, counter),
                         dispatch_attention(image, weights, layer, counter)};
}

}  // namespace unitr

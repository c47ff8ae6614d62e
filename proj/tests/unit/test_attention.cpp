#include <doctest.h>

#include <cmath>
#include <limits>
#include <vector>

#include "unitr/attention.hpp"
#include "unitr/harness/fixtures.hpp"
#include "unitr/harness/oracles.hpp"
#include "unitr/rng.hpp"

using namespace unitr;

namespace {

ModelDims dims16() {
  ModelDims d;
  d.channels = 16;
  d.hidden = 32;
  d.heads = 4;
  d.layers = 2;
  return d;
}

Eigen::RowVectorXd dense(const Linear& l, const Eigen::RowVectorXd& x) {
  return x * l.weight->transpose() + *l.bias;
}

Eigen::RowVectorXd norm(const Norm& n, const Eigen::RowVectorXd& x) {
  const double mean = x.mean();
  const double var = (x.array() - mean).square().mean();
  return ((x.array() - mean) / std::sqrt(var + kLayerNormEps)).matrix().cwiseProduct(*n.gain) + *n.bias;
}

Eigen::RowVectorXd gelu_row(Eigen::RowVectorXd x) {
  for (Eigen::Index i = 0; i < x.size(); ++i) x[i] = 0.5 * x[i] * (1.0 + std::erf(x[i] / std::sqrt(2.0)));
  return x;
}

}  // namespace

TEST_CASE("gelu values") {
  CHECK(gelu(0.0) == 0.0);
  CHECK(gelu(1.0) == doctest::Approx(0.8413447460685429));
  CHECK(gelu(-1.0) == doctest::Approx(-0.15865525393145707));
  const double h = 1e-6;
  for (double x : {-2.0, -0.3, 0.0, 0.7, 3.0})
    CHECK(gelu_derivative(x) == doctest::Approx((gelu(x + h) - gelu(x - h)) / (2 * h)).epsilon(1e-7));
}

TEST_CASE("positional encoding at zero is the bias path") {
  const auto w = BackboneWeights::create(dims16(), 1);
  const auto pe = positional_encode(CoordMatrix::Zero(3, 3), w, 0);
  const auto p = w.layer(0);
  const Eigen::RowVectorXd expected = dense(p.pos_fc2, gelu_row(*p.pos_fc1.bias));
  for (int r = 0; r < 3; ++r) CHECK((pe.row(r) - expected).cwiseAbs().maxCoeff() < 1e-14);
  CHECK(pe.row(0) == pe.row(2));
}

TEST_CASE("positional encoding jacobian matches finite differences") {
  const auto w = BackboneWeights::create(dims16(), 2);
  Rng rng(2);
  for (int i = 0; i < 10; ++i) {
    const Eigen::Vector3d c(rng.uniform(-1, 1), rng.uniform(-1, 1), rng.uniform(-1, 1));
    const auto jac = positional_encode_jacobian(c, w, 1);
    for (int axis = 0; axis < 3; ++axis) {
      CoordMatrix lo(1, 3), hi(1, 3);
      lo.row(0) = c.transpose();
      hi.row(0) = c.transpose();
      lo(0, axis) -= 1e-6;
      hi(0, axis) += 1e-6;
      const MatrixXdR fd = (positional_encode(hi, w, 1) - positional_encode(lo, w, 1)) / 2e-6;
      CHECK((fd.row(0).transpose() - jac.col(axis)).cwiseAbs().maxCoeff() < 1e-6);
    }
  }
}

TEST_CASE("single-token sets") {
  const auto w = BackboneWeights::create(dims16(), 3);
  Rng rng(3);
  const auto batch = harness::random_batch(rng, 4, 1, 16);
  AttentionProbe probe;
  const auto out = set_attention_layer(batch, w, 0, &probe);
  for (double p : probe.probabilities) CHECK(p == 1.0);

  const auto p = w.layer(0);
  for (int s = 0; s < 4; ++s) {
    CoordMatrix c = batch.coords.row(s);
    const Eigen::RowVectorXd y = batch.features.row(s) + positional_encode(c, w, 0).row(0);
    const Eigen::RowVectorXd z = norm(p.norm1, y + dense(p.output, dense(p.value, y)));
    const Eigen::RowVectorXd expected = norm(p.norm2, z + dense(p.ffn_fc2, gelu_row(dense(p.ffn_fc1, z))));
    CHECK((out.features.row(s) - expected).cwiseAbs().maxCoeff() < 1e-12);
  }
}

TEST_CASE("identical tokens stay identical") {
  const auto w = BackboneWeights::create(dims16(), 4);
  SetBatch batch;
  batch.tau = 6;
  batch.features = MatrixXdR::Random(1, 16).replicate(6, 1);
  batch.coords = CoordMatrix::Constant(6, 3, 0.25);
  batch.mask.assign(6, 1);
  const auto out = set_attention_layer(batch, w, 1);
  for (int r = 1; r < 6; ++r) CHECK(out.features.row(r) == out.features.row(0));
}

TEST_CASE("set attention matches the dense reference") {
  const auto w = BackboneWeights::create(dims16(), 5);
  Rng rng(5);
  const auto batch = harness::random_batch(rng, 3, 8, 16);
  AttentionProbe probe;
  const auto out = set_attention_layer(batch, w, 1, &probe);
  for (int s = 0; s < 3; ++s) {
    const auto ref = harness::oracle_dense_attention(batch.features.middleRows(s * 8, 8),
                                                     batch.coords.middleRows(s * 8, 8), w, 1);
    CHECK((out.features.middleRows(s * 8, 8) - ref.outputs).cwiseAbs().maxCoeff() < 1e-6);
    for (std::size_t i = 0; i < ref.probabilities.size(); ++i)
      CHECK(std::abs(probe.probabilities[s * ref.probabilities.size() + i] - ref.probabilities[i]) < 1e-12);
  }
  for (std::size_t row = 0; row < probe.probabilities.size() / 8; ++row) {
    double sum = 0.0;
    for (int k = 0; k < 8; ++k) sum += probe.probabilities[row * 8 + k];
    CHECK(sum == doctest::Approx(1.0).epsilon(1e-12));
  }
}

TEST_CASE("sets do not interact") {
  const auto w = BackboneWeights::create(dims16(), 6);
  Rng rng(6);
  auto batch = harness::random_batch(rng, 2, 5, 16);
  const auto before = set_attention_layer(batch, w, 0);
  batch.features.middleRows(5, 5).setRandom();
  const auto after = set_attention_layer(batch, w, 0);
  CHECK(before.features.topRows(5) == after.features.topRows(5));
}

TEST_CASE("fused modality dispatch equals per-modality dispatch") {
  const auto w = BackboneWeights::create(dims16(), 7);
  Rng rng(7);
  const auto lidar = harness::random_batch(rng, 3, 4, 16);
  const auto image = harness::random_batch(rng, 5, 4, 16);
  DispatchCounter fused_count, serial_count;
  const auto fused = batched_layer_over_modalities(lidar, image, w, 1, fused_count);
  const auto serial = serial_layer_over_modalities(lidar, image, w, 1, serial_count);
  CHECK(fused_count.value() == 1);
  CHECK(serial_count.value() == 2);
  CHECK(fused.lidar.features == serial.lidar.features);
  CHECK(fused.image.features == serial.image.features);

  SetBatch empty;
  empty.tau = 4;
  empty.features = MatrixXdR(0, 16);
  empty.coords = CoordMatrix(0, 3);
  DispatchCounter one;
  const auto only = batched_layer_over_modalities(empty, image, w, 1, one);
  CHECK(one.value() == 1);
  CHECK(only.image.features == serial.image.features);
  CHECK(only.lidar.set_count() == 0);

  const auto other = harness::random_batch(rng, 2, 3, 16);
  CHECK_THROWS_AS(batched_layer_over_modalities(lidar, other, w, 1, one), Error);
}

TEST_CASE("non-finite activations are reported") {
  const auto w = BackboneWeights::create(dims16(), 8);
  Rng rng(8);
  auto batch = harness::random_batch(rng, 1, 3, 16);
  batch.features(1, 2) = std::numeric_limits<double>::infinity();
  CHECK_THROWS_AS(set_attention_layer(batch, w, 0), Error);
}

TEST_CASE("weights round trip and keep one shared store") {
  const auto w = BackboneWeights::create(dims16(), 9);
  const auto back = BackboneWeights::from_container(w.to_container());
  for (const auto& name : w.names()) CHECK(back.tensor(name) == w.tensor(name));
  for (const auto& name : w.names())
    for (const char* word : {"lidar", "image", "camera", "img", "pts"}) CHECK(name.find(word) == std::string::npos);
  CHECK(w.layer(0).query.weight->rows() == 16);
  CHECK(w.layer(0).query.weight->cols() == 16);
  const auto again = BackboneWeights::create(dims16(), 9);
  CHECK(again.to_container() == w.to_container());
}

#pragma once

// Shared set-attention core: positional encoding, multi-head self-attention
// restricted to each tau-token set, feed-forward network and layer norm.
// One parameter store serves every modality.

#include <atomic>
#include <cstdint>
#include <vector>

#include "unitr/common.hpp"
#include "unitr/set_batch.hpp"
#include "unitr/weights.hpp"

namespace unitr {

inline constexpr double kLayerNormEps = 1e-5;

double gelu(double x);
double gelu_derivative(double x);

// Two-layer MLP applied to every (window-relative, [-1, 1]) coordinate row.
MatrixXdR positional_encode(const CoordMatrix& coords, const BackboneWeights& weights, int layer);

// Analytic d PE / d coord at one coordinate, C x 3.
Eigen::MatrixXd positional_encode_jacobian(const Eigen::Vector3d& coord, const BackboneWeights& weights, int layer);

// Optional capture of softmax rows, laid out [set][head][query][key].
struct AttentionProbe {
  std::vector<double> probabilities;
};

// Per set: x += PE; x = LN(x + MHSA(x)); x = LN(x + FFN(x)). Softmax runs over
// the tau keys of the same set only. Throws NonFiniteActivation on NaN/Inf.
SetBatch set_attention_layer(const SetBatch& batch, const BackboneWeights& weights, int layer,
                             AttentionProbe* probe = nullptr);

class DispatchCounter {
 public:
  void increment() { count_.fetch_add(1, std::memory_order_seq_cst); }
  std::uint64_t value() const { return count_.load(std::memory_order_seq_cst); }
  void reset() { count_.store(0, std::memory_order_seq_cst); }

 private:
  std::atomic<std::uint64_t> count_{0};
};

DispatchCounter& global_dispatch_counter();

// One counted invocation of set_attention_layer. Batches with zero sets are
// not dispatched.
SetBatch dispatch_attention(const SetBatch& batch, const BackboneWeights& weights, int layer,
                            DispatchCounter& counter);

struct ModalityBatches {
  SetBatch lidar;
  SetBatch image;
};

// Concatenates both modalities' sets, issues a single dispatch and splits
// the result back. Throws TauMismatch if the partitions disagree on tau.
ModalityBatches batched_layer_over_modalities(const SetBatch& lidar, const SetBatch& image,
                                              const BackboneWeights& weights, int layer,
                                              DispatchCounter& counter = global_dispatch_counter());

// Reference path: one dispatch per non-empty modality.
ModalityBatches serial_layer_over_modalities(const SetBatch& lidar, const SetBatch& image,
                                             const BackboneWeights& weights, int layer,
                                             DispatchCounter& counter = global_dispatch_counter());

}  // namespace unitr

#pragma once

#include <span>
#include <vector>

#include "qfl/rng.hpp"
#include "qfl/tensor.hpp"

namespace qfl::model {

struct Layer {
  nd::DenseTensor weight;  // [out, in]
  nd::DenseTensor bias;    // [out]
};

/// Fully connected classifier: ReLU between layers, linear logits out.
class MlpModel {
 public:
  MlpModel() = default;

  /// dims = {input, hidden..., classes}. Weights drawn from N(0, sqrt(2/in))
  /// per layer, biases zero.
  static MlpModel he_init(std::span<const std::size_t> dims, nd::RngStream& rng);

  std::size_t num_layers() const { return layers_.size(); }
  const std::vector<Layer>& layers() const { return layers_; }
  std::vector<Layer>& layers() { return layers_; }

  std::size_t input_dim() const;
  std::size_t output_dim() const;
  std::size_t parameter_count() const;

  /// Canonical flat ordering W0, b0, W1, b1, ... used by the optimizer and
  /// by aggregation.
  std::vector<nd::DenseTensor*> parameters();
  std::vector<const nd::DenseTensor*> parameters() const;

  /// [batch, input] -> [batch, classes] logits.
  nd::DenseTensor forward(const nd::DenseTensor& x) const;

 private:
  std::vector<Layer> layers_;
};

struct LossGrads {
  double loss = 0.0;  // batch-mean cross-entropy, FP64 reduction
  std::vector<nd::DenseTensor> grads;  // aligned with parameters()
};

/// Softmax cross-entropy averaged over the batch, gradients by backprop.
/// Labels must lie in [0, classes).
LossGrads loss_and_grads(const MlpModel& m, const nd::DenseTensor& x,
                         std::span<const int> labels);

struct EvalMetrics {
  double accuracy = 0.0;
  double mean_loss = 0.0;
};

/// Argmax accuracy (ties resolved toward the lowest class index) plus mean
/// cross-entropy, computed in bounded-size chunks.
EvalMetrics evaluate_metrics(const MlpModel& m, const nd::DenseTensor& x,
                             std::span<const int> labels);

/// Fraction of argmax-correct predictions in [0, 1].
double evaluate(const MlpModel& m, const nd::DenseTensor& x, std::span<const int> labels);

}  // namespace qfl::model

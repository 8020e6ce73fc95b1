#include "qfl/mlp.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace qfl::model {

namespace {

void require_labels(std::span<const int> labels, std::size_t batch, std::size_t classes) {
  if (labels.size() != batch) {
    throw std::invalid_argument("labels: count does not match batch size");
  }
  for (int y : labels) {
    if (y < 0 || static_cast<std::size_t>(y) >= classes) {
      throw std::domain_error("labels: class index out of range");
    }
  }
}

// Row-wise softmax probabilities with max-subtraction; returns summed
// negative log-likelihood (double) and overwrites logits with probabilities.
double softmax_nll_inplace(nd::DenseTensor& logits, std::span<const int> labels) {
  const std::size_t batch = logits.rows(), classes = logits.cols();
  double nll = 0.0;
  for (std::size_t r = 0; r < batch; ++r) {
    float* row = &logits.data[r * classes];
    float mx = row[0];
    for (std::size_t c = 1; c < classes; ++c) mx = std::max(mx, row[c]);
    double sum = 0.0;
    for (std::size_t c = 0; c < classes; ++c) {
      row[c] = std::exp(row[c] - mx);
      sum += row[c];
    }
    const double inv = 1.0 / sum;
    for (std::size_t c = 0; c < classes; ++c) row[c] = static_cast<float>(row[c] * inv);
    const double p = row[static_cast<std::size_t>(labels[r])];
    nll -= std::log(std::max(p, 1e-30));
  }
  return nll;
}

}  // namespace

MlpModel MlpModel::he_init(std::span<const std::size_t> dims, nd::RngStream& rng) {
  if (dims.size() < 2) throw std::invalid_argument("MlpModel: need at least input and output dims");
  MlpModel m;
  m.layers_.reserve(dims.size() - 1);
  for (std::size_t l = 0; l + 1 < dims.size(); ++l) {
    const std::size_t in = dims[l], out = dims[l + 1];
    if (in == 0 || out == 0) throw std::invalid_argument("MlpModel: zero layer dimension");
    Layer layer;
    const float stddev = std::sqrt(2.0f / static_cast<float>(in));
    layer.weight = nd::DenseTensor({out, in}, rng.gaussian_array(out * in, 0.0f, stddev));
    layer.bias = nd::DenseTensor({out});
    m.layers_.push_back(std::move(layer));
  }
  return m;
}

std::size_t MlpModel::input_dim() const {
  if (layers_.empty()) throw std::runtime_error("MlpModel: empty model");
  return layers_.front().weight.cols();
}

std::size_t MlpModel::output_dim() const {
  if (layers_.empty()) throw std::runtime_error("MlpModel: empty model");
  return layers_.back().weight.rows();
}

std::size_t MlpModel::parameter_count() const {
  std::size_t n = 0;
  for (const auto& l : layers_) n += l.weight.size() + l.bias.size();
  return n;
}

std::vector<nd::DenseTensor*> MlpModel::parameters() {
  std::vector<nd::DenseTensor*> out;
  out.reserve(layers_.size() * 2);
  for (auto& l : layers_) {
    out.push_back(&l.weight);
    out.push_back(&l.bias);
  }
  return out;
}

std::vector<const nd::DenseTensor*> MlpModel::parameters() const {
  std::vector<const nd::DenseTensor*> out;
  out.reserve(layers_.size() * 2);
  for (const auto& l : layers_) {
    out.push_back(&l.weight);
    out.push_back(&l.bias);
  }
  return out;
}

nd::DenseTensor MlpModel::forward(const nd::DenseTensor& x) const {
  if (layers_.empty()) throw std::runtime_error("MlpModel: empty model");
  if (x.cols() != input_dim()) throw std::invalid_argument("forward: feature dim mismatch");
  nd::check_finite(x.data, "forward input");

  nd::DenseTensor h = x;
  for (std::size_t l = 0; l < layers_.size(); ++l) {
    nd::DenseTensor z = nd::matmul_nt(h, layers_[l].weight);
    const std::size_t out = z.cols();
    for (std::size_t r = 0; r < z.rows(); ++r) {
      float* row = &z.data[r * out];
      const float* b = layers_[l].bias.data.data();
      for (std::size_t c = 0; c < out; ++c) row[c] += b[c];
    }
    if (l + 1 < layers_.size()) {
      for (auto& v : z.data) v = v > 0.0f ? v : 0.0f;
    }
    h = std::move(z);
  }
  return h;
}

LossGrads loss_and_grads(const MlpModel& m, const nd::DenseTensor& x,
                         std::span<const int> labels) {
  const auto& layers = m.layers();
  if (layers.empty()) throw std::runtime_error("loss_and_grads: empty model");
  const std::size_t batch = x.rows();
  const std::size_t classes = m.output_dim();
  require_labels(labels, batch, classes);
  nd::check_finite(x.data, "loss_and_grads input");

  // Forward pass keeping pre-activations for the ReLU mask.
  std::vector<nd::DenseTensor> acts;  // acts[l] = input to layer l
  std::vector<nd::DenseTensor> pres;  // pres[l] = layer l output before ReLU
  acts.reserve(layers.size());
  pres.reserve(layers.size());
  acts.push_back(x);
  for (std::size_t l = 0; l < layers.size(); ++l) {
    nd::DenseTensor z = nd::matmul_nt(acts[l], layers[l].weight);
    const std::size_t out = z.cols();
    for (std::size_t r = 0; r < batch; ++r) {
      float* row = &z.data[r * out];
      const float* b = layers[l].bias.data.data();
      for (std::size_t c = 0; c < out; ++c) row[c] += b[c];
    }
    pres.push_back(z);
    if (l + 1 < layers.size()) {
      for (auto& v : z.data) v = v > 0.0f ? v : 0.0f;
      acts.push_back(std::move(z));
    }
  }

  nd::DenseTensor probs = pres.back();
  const double nll = softmax_nll_inplace(probs, labels);

  LossGrads out;
  out.loss = static_cast<float>(nll / static_cast<double>(batch));
  out.grads.resize(layers.size() * 2);

  // delta = (p - onehot) / batch at the output, backpropagated through ReLU.
  nd::DenseTensor delta = std::move(probs);
  const float inv_batch = 1.0f / static_cast<float>(batch);
  for (std::size_t r = 0; r < batch; ++r) {
    float* row = &delta.data[r * classes];
    row[static_cast<std::size_t>(labels[r])] -= 1.0f;
    for (std::size_t c = 0; c < classes; ++c) row[c] *= inv_batch;
  }

  for (std::size_t l = layers.size(); l-- > 0;) {
    const std::size_t out_dim = layers[l].weight.rows();
    out.grads[2 * l] = nd::matmul_tn(delta, acts[l]);  // dW [out, in]
    nd::DenseTensor db({out_dim});
    for (std::size_t c = 0; c < out_dim; ++c) {
      double acc = 0.0;
      for (std::size_t r = 0; r < batch; ++r) acc += delta.data[r * out_dim + c];
      db.data[c] = static_cast<float>(acc);
    }
    out.grads[2 * l + 1] = std::move(db);
    if (l > 0) {
      nd::DenseTensor prev = nd::matmul(delta, layers[l].weight);  // [batch, in]
      const auto& pre = pres[l - 1];
      for (std::size_t i = 0; i < prev.data.size(); ++i) {
        if (!(pre.data[i] > 0.0f)) prev.data[i] = 0.0f;
      }
      delta = std::move(prev);
    }
  }
  return out;
}

EvalMetrics evaluate_metrics(const MlpModel& m, const nd::DenseTensor& x,
                             std::span<const int> labels) {
  const std::size_t n = x.rows();
  if (n == 0) throw std::invalid_argument("evaluate: empty test set");
  const std::size_t classes = m.output_dim();
  require_labels(labels, n, classes);

  constexpr std::size_t kChunk = 512;
  const std::size_t features = x.cols();
  std::size_t correct = 0;
  double nll = 0.0;
  for (std::size_t start = 0; start < n; start += kChunk) {
    const std::size_t count = std::min(kChunk, n - start);
    nd::DenseTensor chunk({count, features});
    std::copy_n(&x.data[start * features], count * features, chunk.data.begin());
    nd::DenseTensor logits = m.forward(chunk);
    for (std::size_t r = 0; r < count; ++r) {
      const float* row = &logits.data[r * classes];
      std::size_t best = 0;
      for (std::size_t c = 1; c < classes; ++c) {
        if (row[c] > row[best]) best = c;  // strict: ties keep the lowest index
      }
      if (best == static_cast<std::size_t>(labels[start + r])) ++correct;
    }
    nll += softmax_nll_inplace(logits, labels.subspan(start, count));
  }
  return {static_cast<double>(correct) / static_cast<double>(n), nll / static_cast<double>(n)};
}

double evaluate(const MlpModel& m, const nd::DenseTensor& x, std::span<const int> labels) {
  return evaluate_metrics(m, x, labels).accuracy;
}

}  // namespace qfl::model

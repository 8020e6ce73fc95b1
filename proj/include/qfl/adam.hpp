#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "qfl/quantize.hpp"
#include "qfl/tensor.hpp"

namespace qfl::optim {

/// Storage pairing for the two optimizer states (momentum, variance):
///   kFp32         -> (fp32, fp32)
///   kQLocalAdam   -> (linear int8, log int8)
///   kNaiveInt8    -> (linear int8, linear int8)
///   kMomentumOnly -> (linear int8, fp32)
///   kVarianceOnly -> (fp32, log int8)
enum class Mode : uint8_t { kFp32 = 0, kQLocalAdam, kNaiveInt8, kMomentumOnly, kVarianceOnly };

enum class Storage : uint8_t { kFp32 = 0, kLinearInt8 = 1, kLogInt8 = 2 };

struct StoragePair {
  Storage momentum;
  Storage variance;
};

StoragePair storage_for(Mode mode);

std::string mode_name(Mode mode);       // fp32 | qlocaladam | naive-int8 | m-only | v-only
Mode mode_from_name(const std::string& name);

struct Hyper {
  float lr = 1e-3f;
  float beta1 = 0.9f;
  float beta2 = 0.999f;
  float eps = 1e-8f;  // Adam denominator and log-quantizer zero guard
};

/// Per-client Adam state. Each parameter tensor keeps its own momentum and
/// variance buffer, stored per the mode's pairing; quantization blocks follow
/// each tensor's flattened order independently.
///
/// step() dequantizes the previous states, applies the standard Adam update
/// in FP32, re-stores the states, and then updates the parameters from the
/// full-precision values (bias-corrected), so the parameter update never sees
/// storage error from the current step.
class AdamState {
 public:
  AdamState() = default;
  AdamState(std::span<const std::size_t> tensor_sizes, Mode mode, Hyper hyper,
            uint32_t block_size);

  void step(std::span<nd::DenseTensor* const> params,
            std::span<const nd::DenseTensor> grads);

  uint64_t step_count() const { return step_; }
  Mode mode() const { return mode_; }
  const Hyper& hyper() const { return hyper_; }
  uint32_t block_size() const { return block_size_; }
  std::size_t num_tensors() const { return momentum_.size(); }

  /// Dequantized (or raw) views of the stored states.
  std::vector<float> momentum(std::size_t tensor_index) const;
  std::vector<float> variance(std::size_t tensor_index) const;

  /// Exact byte accounting over both states and all tensors; FP32 buffers
  /// count 4 bytes per element with no metadata.
  quant::MemoryReport memory_bytes() const;

  /// Checkpoint: header + per-buffer index table + concatenated blobs
  /// (serialized quantized tensors or raw little-endian FP32 dumps).
  std::vector<uint8_t> to_bytes() const;
  static AdamState from_bytes(std::span<const uint8_t> bytes);

 private:
  struct Buffer {
    Storage kind = Storage::kFp32;
    std::vector<float> fp32;
    quant::QuantizedTensor q;
    std::size_t size = 0;
  };

  Buffer make_zero_buffer(Storage kind, std::size_t n) const;
  std::vector<float> load(const Buffer& b) const;
  void store(Buffer& b, std::span<const float> values) const;

  Mode mode_ = Mode::kFp32;
  Hyper hyper_;
  uint32_t block_size_ = 64;
  uint64_t step_ = 0;
  std::vector<Buffer> momentum_;
  std::vector<Buffer> variance_;
};

/// Server-side adaptive aggregation reference: delta = mean of client deltas,
/// m and v are exponential averages of delta and delta^2, and theta moves by
/// -lr * m / (sqrt(v) + eps) with no bias correction. Kept as a test oracle.
struct ServerAdamState {
  std::vector<float> m;
  std::vector<float> v;
};

void fedadam_server_step(std::vector<float>& theta, ServerAdamState& state,
                         const std::vector<std::vector<float>>& client_deltas,
                         const Hyper& hyper);

}  // namespace qfl::optim

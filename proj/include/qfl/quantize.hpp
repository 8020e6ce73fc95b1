#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <vector>

namespace qfl::quant {

enum class Mode : uint8_t { kLinear = 0, kLog = 1 };

/// Shared zero guard for the log transform: log(x + epsilon). The binary
/// format does not carry epsilon, so deserialized tensors assume this value
/// unless told otherwise.
inline constexpr float kDefaultLogEpsilon = 1e-8f;

/// Block-wise 8-bit encoding of an FP32 array.
///
/// The array is split into ceil(n / block_size) contiguous blocks; the last
/// block is zero-padded to block_size (pad codes are 0 and never reconstructed).
/// Each block stores its own FP32 scale pair: [min, max] of the raw values in
/// linear mode, [log-min, log-max] of log(x + epsilon) in log mode. Codes use
/// the full unsigned 0..255 range.
struct QuantizedTensor {
  std::vector<uint8_t> payload;  // num_blocks * block_size codes
  std::vector<float> lo;         // per-block minimum (or log-minimum)
  std::vector<float> hi;         // per-block maximum (or log-maximum)
  uint32_t block_size = 0;
  uint64_t original_len = 0;
  Mode mode = Mode::kLinear;
  float epsilon = 0.0f;  // log-transform offset; unused in linear mode

  std::size_t num_blocks() const { return lo.size(); }
};

struct MemoryReport {
  uint64_t payload_bytes = 0;
  uint64_t metadata_bytes = 0;
  uint64_t padding_bytes = 0;  // counted inside payload_bytes
  uint64_t total_bytes = 0;
  uint64_t fp32_equivalent_bytes = 0;
  double compression_ratio = 1.0;

  MemoryReport& operator+=(const MemoryReport& other);
};

/// Linear block quantization: per block q = floor((x - min) / range * 255),
/// clamped to [0, 255]. A degenerate block (range == 0) stores all-zero codes
/// and reconstructs the constant exactly. Throws std::domain_error on
/// non-finite input and std::invalid_argument on block_size == 0.
QuantizedTensor quantize_linear(std::span<const float> x, uint32_t block_size);

/// Inverse of quantize_linear: x~ = q / 255 * range + min, padding dropped.
std::vector<float> dequantize_linear(const QuantizedTensor& qt);

/// Log-space block quantization of nonnegative data: values are mapped
/// through l = log(x + epsilon) (natural log) and the block's l-range is
/// quantized to the nearest of 256 levels. Reconstruction error is
/// multiplicative, bounded by exp(range/510) - 1 per block. Negative or
/// non-finite input throws std::domain_error.
QuantizedTensor quantize_log(std::span<const float> x, uint32_t block_size,
                             float epsilon = kDefaultLogEpsilon);

/// Inverse of quantize_log: x~ = exp(q / 255 * range + log-min) - epsilon,
/// clamped below at zero.
std::vector<float> dequantize_log(const QuantizedTensor& qt);

/// Mode dispatch.
std::vector<float> dequantize(const QuantizedTensor& qt);

/// Exact byte accounting of the serialized layout (header excluded):
/// payload = num_blocks * block_size, metadata = 8 bytes per block.
MemoryReport memory_report(const QuantizedTensor& qt);

/// Binary layout (little-endian): magic "QLAQ", version u16, mode u8,
/// reserved u8, block_size u32, original_len u64, payload bytes, lo array
/// (FP32 per block), hi array (FP32 per block). Header is 20 bytes.
std::vector<uint8_t> to_bytes(const QuantizedTensor& qt);
QuantizedTensor from_bytes(std::span<const uint8_t> bytes,
                           float epsilon = kDefaultLogEpsilon);

/// 8-bit prefix code over absmax-normalized values: sign bit, unary run of
/// 1-bits (terminated by 0) selecting the decade 10^-e, remaining bits a
/// linear fraction of that decade. Precision shrinks with magnitude: small
/// values spend their bits on the prefix. Used as a comparison baseline.
struct DynamicTreeCode {
  std::vector<uint8_t> codes;
  float absmax = 0.0f;
};

DynamicTreeCode quantize_dynamic_tree(std::span<const float> x);
std::vector<float> dequantize_dynamic_tree(const DynamicTreeCode& dt);

/// Decoded magnitude of every code on the normalized [-1, 1] scale.
const std::array<float, 256>& dynamic_tree_table();

}  // namespace qfl::quant

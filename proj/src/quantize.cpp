#include "qfl/quantize.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <stdexcept>

#include "qfl/tensor.hpp"

namespace qfl::quant {

namespace {

// Absorbs FP32 rounding noise so that values sitting exactly on a level
// boundary keep their floor code under re-quantization.
constexpr double kFloorNudge = 1e-4;

std::size_t block_count(std::size_t n, uint32_t block_size) {
  return n == 0 ? 0 : (n + block_size - 1) / block_size;
}

uint8_t clamp_code(long q) {
  return static_cast<uint8_t>(std::clamp(q, 0L, 255L));
}

void require_block_size(uint32_t block_size) {
  if (block_size == 0) throw std::invalid_argument("quantize: block size must be positive");
}

void push_u16(std::vector<uint8_t>& out, uint16_t v) {
  out.push_back(static_cast<uint8_t>(v & 0xFF));
  out.push_back(static_cast<uint8_t>(v >> 8));
}

void push_u32(std::vector<uint8_t>& out, uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<uint8_t>((v >> (8 * i)) & 0xFF));
}

void push_u64(std::vector<uint8_t>& out, uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<uint8_t>((v >> (8 * i)) & 0xFF));
}

void push_f32(std::vector<uint8_t>& out, float v) {
  uint32_t bits;
  std::memcpy(&bits, &v, 4);
  push_u32(out, bits);
}

uint16_t read_u16(const uint8_t* p) { return static_cast<uint16_t>(p[0] | (p[1] << 8)); }

uint32_t read_u32(const uint8_t* p) {
  return static_cast<uint32_t>(p[0]) | (static_cast<uint32_t>(p[1]) << 8) |
         (static_cast<uint32_t>(p[2]) << 16) | (static_cast<uint32_t>(p[3]) << 24);
}

uint64_t read_u64(const uint8_t* p) {
  uint64_t v = 0;
  for (int i = 7; i >= 0; --i) v = (v << 8) | p[i];
  return v;
}

float read_f32(const uint8_t* p) {
  const uint32_t bits = read_u32(p);
  float v;
  std::memcpy(&v, &bits, 4);
  return v;
}

constexpr uint16_t kFormatVersion = 1;
constexpr std::size_t kHeaderBytes = 20;

}  // namespace

MemoryReport& MemoryReport::operator+=(const MemoryReport& other) {
  payload_bytes += other.payload_bytes;
  metadata_bytes += other.metadata_bytes;
  padding_bytes += other.padding_bytes;
  total_bytes += other.total_bytes;
  fp32_equivalent_bytes += other.fp32_equivalent_bytes;
  compression_ratio = total_bytes == 0
                          ? 1.0
                          : static_cast<double>(fp32_equivalent_bytes) / static_cast<double>(total_bytes);
  return *this;
}

QuantizedTensor quantize_linear(std::span<const float> x, uint32_t block_size) {
  require_block_size(block_size);
  nd::check_finite(x, "quantize_linear");
  const std::size_t n = x.size();
  const std::size_t blocks = block_count(n, block_size);

  QuantizedTensor qt;
  qt.payload.assign(blocks * block_size, 0);
  qt.lo.resize(blocks);
  qt.hi.resize(blocks);
  qt.block_size = block_size;
  qt.original_len = n;
  qt.mode = Mode::kLinear;

  for (std::size_t b = 0; b < blocks; ++b) {
    const std::size_t begin = b * block_size;
    const std::size_t end = std::min(begin + block_size, n);
    float mn = x[begin], mx = x[begin];
    for (std::size_t i = begin + 1; i < end; ++i) {
      mn = std::min(mn, x[i]);
      mx = std::max(mx, x[i]);
    }
    qt.lo[b] = mn;
    qt.hi[b] = mx;
    const double range = static_cast<double>(mx) - static_cast<double>(mn);
    if (range > 0.0) {
      const double scale = 255.0 / range;
      for (std::size_t i = begin; i < end; ++i) {
        const double t = (static_cast<double>(x[i]) - static_cast<double>(mn)) * scale;
        qt.payload[i] = clamp_code(static_cast<long>(t + kFloorNudge));
      }
    }
    // range == 0: all codes stay 0 and the block reconstructs to lo exactly.
  }
  return qt;
}

std::vector<float> dequantize_linear(const QuantizedTensor& qt) {
  if (qt.mode != Mode::kLinear) {
    throw std::invalid_argument("dequantize_linear: tensor is not linear mode");
  }
  std::vector<float> out(qt.original_len);
  for (std::size_t b = 0; b < qt.num_blocks(); ++b) {
    const std::size_t begin = b * qt.block_size;
    const std::size_t end = std::min<std::size_t>(begin + qt.block_size, qt.original_len);
    const double lo = qt.lo[b];
    const double step = (static_cast<double>(qt.hi[b]) - lo) / 255.0;
    for (std::size_t i = begin; i < end; ++i) {
      out[i] = static_cast<float>(lo + static_cast<double>(qt.payload[i]) * step);
    }
  }
  return out;
}

QuantizedTensor quantize_log(std::span<const float> x, uint32_t block_size, float epsilon) {
  require_block_size(block_size);
  if (epsilon < 0.0f) throw std::invalid_argument("quantize_log: epsilon must be >= 0");
  const double eps = epsilon;
  const std::size_t n = x.size();
  const std::size_t blocks = block_count(n, block_size);

  std::vector<double> logs(n);
  for (std::size_t i = 0; i < n; ++i) {
    if (!(x[i] >= 0.0f) || !std::isfinite(x[i])) {
      throw std::domain_error("quantize_log: input must be finite and nonnegative");
    }
    const double shifted = static_cast<double>(x[i]) + eps;
    if (shifted <= 0.0) {
      throw std::domain_error("quantize_log: zero values require a positive epsilon");
    }
    logs[i] = std::log(shifted);
  }

  QuantizedTensor qt;
  qt.payload.assign(blocks * block_size, 0);
  qt.lo.resize(blocks);
  qt.hi.resize(blocks);
  qt.block_size = block_size;
  qt.original_len = n;
  qt.mode = Mode::kLog;
  qt.epsilon = epsilon;

  for (std::size_t b = 0; b < blocks; ++b) {
    const std::size_t begin = b * block_size;
    const std::size_t end = std::min(begin + block_size, n);
    double mn = logs[begin], mx = logs[begin];
    for (std::size_t i = begin + 1; i < end; ++i) {
      mn = std::min(mn, logs[i]);
      mx = std::max(mx, logs[i]);
    }
    const float lo_f = static_cast<float>(mn);
    const float hi_f = static_cast<float>(mx);
    qt.lo[b] = lo_f;
    qt.hi[b] = hi_f;
    const double range = static_cast<double>(hi_f) - static_cast<double>(lo_f);
    if (range > 0.0) {
      const double scale = 255.0 / range;
      for (std::size_t i = begin; i < end; ++i) {
        // Nearest level rather than floor: halves the log-step error, which
        // keeps the reconstruction multiplicative bound at exp(range/510)-1.
        const double t = (logs[i] - static_cast<double>(lo_f)) * scale;
        qt.payload[i] = clamp_code(static_cast<long>(std::floor(t + 0.5)));
      }
    }
  }
  return qt;
}

std::vector<float> dequantize_log(const QuantizedTensor& qt) {
  if (qt.mode != Mode::kLog) {
    throw std::invalid_argument("dequantize_log: tensor is not log mode");
  }
  const double eps = qt.epsilon;
  std::vector<float> out(qt.original_len);
  for (std::size_t b = 0; b < qt.num_blocks(); ++b) {
    const std::size_t begin = b * qt.block_size;
    const std::size_t end = std::min<std::size_t>(begin + qt.block_size, qt.original_len);
    const double lo = qt.lo[b];
    const double step = (static_cast<double>(qt.hi[b]) - lo) / 255.0;
    for (std::size_t i = begin; i < end; ++i) {
      const double v = std::exp(lo + static_cast<double>(qt.payload[i]) * step) - eps;
      out[i] = v < 0.0 ? 0.0f : static_cast<float>(v);
    }
  }
  return out;
}

std::vector<float> dequantize(const QuantizedTensor& qt) {
  return qt.mode == Mode::kLinear ? dequantize_linear(qt) : dequantize_log(qt);
}

MemoryReport memory_report(const QuantizedTensor& qt) {
  MemoryReport r;
  const uint64_t blocks = qt.num_blocks();
  r.payload_bytes = blocks * qt.block_size;
  r.metadata_bytes = blocks * 8;
  r.padding_bytes = r.payload_bytes - qt.original_len;
  r.total_bytes = r.payload_bytes + r.metadata_bytes;
  r.fp32_equivalent_bytes = 4 * qt.original_len;
  r.compression_ratio = r.total_bytes == 0
                            ? 1.0
                            : static_cast<double>(r.fp32_equivalent_bytes) /
                                  static_cast<double>(r.total_bytes);
  return r;
}

std::vector<uint8_t> to_bytes(const QuantizedTensor& qt) {
  std::vector<uint8_t> out;
  out.reserve(kHeaderBytes + qt.payload.size() + 8 * qt.num_blocks());
  out.insert(out.end(), {'Q', 'L', 'A', 'Q'});
  push_u16(out, kFormatVersion);
  out.push_back(static_cast<uint8_t>(qt.mode));
  out.push_back(0);  // reserved
  push_u32(out, qt.block_size);
  push_u64(out, qt.original_len);
  out.insert(out.end(), qt.payload.begin(), qt.payload.end());
  for (float v : qt.lo) push_f32(out, v);
  for (float v : qt.hi) push_f32(out, v);
  return out;
}

QuantizedTensor from_bytes(std::span<const uint8_t> bytes, float epsilon) {
  if (bytes.size() < kHeaderBytes) throw std::runtime_error("from_bytes: truncated header");
  if (std::memcmp(bytes.data(), "QLAQ", 4) != 0) {
    throw std::runtime_error("from_bytes: bad magic");
  }
  const uint16_t version = read_u16(bytes.data() + 4);
  if (version != kFormatVersion) throw std::runtime_error("from_bytes: unsupported version");
  const uint8_t mode_byte = bytes[6];
  if (mode_byte > 1) throw std::runtime_error("from_bytes: unknown mode");

  QuantizedTensor qt;
  qt.mode = static_cast<Mode>(mode_byte);
  qt.block_size = read_u32(bytes.data() + 8);
  qt.original_len = read_u64(bytes.data() + 12);
  if (qt.block_size == 0) throw std::runtime_error("from_bytes: zero block size");
  qt.epsilon = qt.mode == Mode::kLog ? epsilon : 0.0f;

  const std::size_t blocks = block_count(qt.original_len, qt.block_size);
  const std::size_t expected = kHeaderBytes + blocks * qt.block_size + 8 * blocks;
  if (bytes.size() != expected) throw std::runtime_error("from_bytes: size mismatch");

  const uint8_t* p = bytes.data() + kHeaderBytes;
  qt.payload.assign(p, p + blocks * qt.block_size);
  p += blocks * qt.block_size;
  qt.lo.resize(blocks);
  qt.hi.resize(blocks);
  for (std::size_t b = 0; b < blocks; ++b, p += 4) qt.lo[b] = read_f32(p);
  for (std::size_t b = 0; b < blocks; ++b, p += 4) qt.hi[b] = read_f32(p);
  return qt;
}

const std::array<float, 256>& dynamic_tree_table() {
  static const std::array<float, 256> table = [] {
    std::array<float, 256> t{};
    for (int c = 0; c < 256; ++c) {
      const bool negative = (c & 0x80) != 0;
      int e = 0;
      int bit = 6;
      while (bit >= 0 && ((c >> bit) & 1)) {
        ++e;
        --bit;
      }
      double mag;
      if (e == 7) {
        mag = 1e-7;
      } else {
        const int fbits = 6 - e;
        const uint32_t frac = static_cast<uint32_t>(c) & ((1u << fbits) - 1u);
        mag = std::pow(10.0, -e) *
              (fbits > 0 ? static_cast<double>(frac) / (1u << fbits) : 1.0);
      }
      t[static_cast<std::size_t>(c)] = static_cast<float>(negative ? -mag : mag);
    }
    return t;
  }();
  return table;
}

namespace {

// Nearest decoded value over all 256 codes; distance ties go to the lower
// code, so the encoder is deterministic (and y == 0 maps to code 0).
uint8_t encode_tree(double y) {
  const auto& t = dynamic_tree_table();
  double best_dist = std::abs(static_cast<double>(t[0]) - y);
  uint8_t best_code = 0;
  for (int c = 1; c < 256; ++c) {
    const double d = std::abs(static_cast<double>(t[static_cast<std::size_t>(c)]) - y);
    if (d < best_dist) {
      best_dist = d;
      best_code = static_cast<uint8_t>(c);
    }
  }
  return best_code;
}

}  // namespace

DynamicTreeCode quantize_dynamic_tree(std::span<const float> x) {
  nd::check_finite(x, "quantize_dynamic_tree");
  DynamicTreeCode dt;
  dt.codes.resize(x.size());
  float absmax = 0.0f;
  for (float v : x) absmax = std::max(absmax, std::abs(v));
  dt.absmax = absmax;
  if (absmax == 0.0f) return dt;  // all codes 0
  for (std::size_t i = 0; i < x.size(); ++i) {
    dt.codes[i] = encode_tree(static_cast<double>(x[i]) / static_cast<double>(absmax));
  }
  return dt;
}

std::vector<float> dequantize_dynamic_tree(const DynamicTreeCode& dt) {
  const auto& t = dynamic_tree_table();
  std::vector<float> out(dt.codes.size());
  for (std::size_t i = 0; i < out.size(); ++i) {
    out[i] = static_cast<float>(static_cast<double>(dt.absmax) * t[dt.codes[i]]);
  }
  return out;
}

}  // namespace qfl::quant

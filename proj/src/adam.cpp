#include "qfl/adam.hpp"

#include <cmath>
#include <cstring>
#include <stdexcept>

namespace qfl::optim {

namespace {

constexpr uint64_t kStepLimit = uint64_t{1} << 31;

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

constexpr uint16_t kCheckpointVersion = 1;

}  // namespace

StoragePair storage_for(Mode mode) {
  switch (mode) {
    case Mode::kFp32: return {Storage::kFp32, Storage::kFp32};
    case Mode::kQLocalAdam: return {Storage::kLinearInt8, Storage::kLogInt8};
    case Mode::kNaiveInt8: return {Storage::kLinearInt8, Storage::kLinearInt8};
    case Mode::kMomentumOnly: return {Storage::kLinearInt8, Storage::kFp32};
    case Mode::kVarianceOnly: return {Storage::kFp32, Storage::kLogInt8};
  }
  throw std::invalid_argument("storage_for: unknown mode");
}

std::string mode_name(Mode mode) {
  switch (mode) {
    case Mode::kFp32: return "fp32";
    case Mode::kQLocalAdam: return "qlocaladam";
    case Mode::kNaiveInt8: return "naive-int8";
    case Mode::kMomentumOnly: return "m-only";
    case Mode::kVarianceOnly: return "v-only";
  }
  throw std::invalid_argument("mode_name: unknown mode");
}

Mode mode_from_name(const std::string& name) {
  if (name == "fp32") return Mode::kFp32;
  if (name == "qlocaladam") return Mode::kQLocalAdam;
  if (name == "naive-int8") return Mode::kNaiveInt8;
  if (name == "m-only") return Mode::kMomentumOnly;
  if (name == "v-only") return Mode::kVarianceOnly;
  throw std::invalid_argument("unknown optimizer mode: " + name);
}

AdamState::AdamState(std::span<const std::size_t> tensor_sizes, Mode mode, Hyper hyper,
                     uint32_t block_size)
    : mode_(mode), hyper_(hyper), block_size_(block_size) {
  if (block_size == 0) throw std::invalid_argument("AdamState: block size must be positive");
  const StoragePair pair = storage_for(mode);
  momentum_.reserve(tensor_sizes.size());
  variance_.reserve(tensor_sizes.size());
  for (std::size_t n : tensor_sizes) {
    momentum_.push_back(make_zero_buffer(pair.momentum, n));
    variance_.push_back(make_zero_buffer(pair.variance, n));
  }
}

AdamState::Buffer AdamState::make_zero_buffer(Storage kind, std::size_t n) const {
  Buffer b;
  b.kind = kind;
  b.size = n;
  const std::vector<float> zeros(n, 0.0f);
  store(b, zeros);
  return b;
}

std::vector<float> AdamState::load(const Buffer& b) const {
  switch (b.kind) {
    case Storage::kFp32: return b.fp32;
    case Storage::kLinearInt8: return quant::dequantize_linear(b.q);
    case Storage::kLogInt8: return quant::dequantize_log(b.q);
  }
  throw std::logic_error("AdamState::load: bad storage kind");
}

void AdamState::store(Buffer& b, std::span<const float> values) const {
  switch (b.kind) {
    case Storage::kFp32:
      b.fp32.assign(values.begin(), values.end());
      return;
    case Storage::kLinearInt8:
      b.q = quant::quantize_linear(values, block_size_);
      return;
    case Storage::kLogInt8:
      b.q = quant::quantize_log(values, block_size_, hyper_.eps);
      return;
  }
  throw std::logic_error("AdamState::store: bad storage kind");
}

void AdamState::step(std::span<nd::DenseTensor* const> params,
                     std::span<const nd::DenseTensor> grads) {
  if (params.size() != momentum_.size() || grads.size() != momentum_.size()) {
    throw std::invalid_argument("AdamState::step: tensor count mismatch");
  }
  if (step_ >= kStepLimit) throw std::runtime_error("AdamState::step: step counter overflow");
  for (std::size_t t = 0; t < params.size(); ++t) {
    if (params[t]->size() != momentum_[t].size || grads[t].size() != momentum_[t].size) {
      throw std::invalid_argument("AdamState::step: tensor size mismatch");
    }
    nd::check_finite(grads[t].data, "AdamState::step gradient");
  }

  ++step_;
  const double bc1 = 1.0 - std::pow(static_cast<double>(hyper_.beta1), static_cast<double>(step_));
  const double bc2 = 1.0 - std::pow(static_cast<double>(hyper_.beta2), static_cast<double>(step_));
  const float inv_bc1 = static_cast<float>(1.0 / bc1);
  const float inv_bc2 = static_cast<float>(1.0 / bc2);
  const float b1 = hyper_.beta1, b2 = hyper_.beta2;

  for (std::size_t t = 0; t < params.size(); ++t) {
    std::vector<float> m = load(momentum_[t]);
    std::vector<float> v = load(variance_[t]);
    const float* g = grads[t].data.data();
    const std::size_t n = m.size();
    for (std::size_t i = 0; i < n; ++i) {
      m[i] = b1 * m[i] + (1.0f - b1) * g[i];
      v[i] = b2 * v[i] + (1.0f - b2) * g[i] * g[i];
    }
    // Re-store before the parameter update; the update below still uses the
    // full-precision m and v, so storage error only affects later steps.
    store(momentum_[t], m);
    store(variance_[t], v);

    float* theta = params[t]->data.data();
    for (std::size_t i = 0; i < n; ++i) {
      const float mhat = m[i] * inv_bc1;
      const float vhat = v[i] * inv_bc2;
      theta[i] -= hyper_.lr * mhat / (std::sqrt(vhat) + hyper_.eps);
    }
  }
}

std::vector<float> AdamState::momentum(std::size_t tensor_index) const {
  return load(momentum_.at(tensor_index));
}

std::vector<float> AdamState::variance(std::size_t tensor_index) const {
  return load(variance_.at(tensor_index));
}

quant::MemoryReport AdamState::memory_bytes() const {
  quant::MemoryReport total;
  auto add = [&total](const Buffer& b) {
    if (b.kind == Storage::kFp32) {
      quant::MemoryReport r;
      r.payload_bytes = 4 * b.size;
      r.total_bytes = r.payload_bytes;
      r.fp32_equivalent_bytes = r.payload_bytes;
      total += r;
    } else {
      total += quant::memory_report(b.q);
    }
  };
  for (const auto& b : momentum_) add(b);
  for (const auto& b : variance_) add(b);
  return total;
}

std::vector<uint8_t> AdamState::to_bytes() const {
  // Blobs in buffer order: m0, v0, m1, v1, ...
  std::vector<std::vector<uint8_t>> blobs;
  blobs.reserve(momentum_.size() * 2);
  auto blob_of = [](const Buffer& b) {
    if (b.kind == Storage::kFp32) {
      std::vector<uint8_t> raw;
      raw.reserve(b.fp32.size() * 4);
      for (float v : b.fp32) push_f32(raw, v);
      return raw;
    }
    return quant::to_bytes(b.q);
  };
  for (std::size_t t = 0; t < momentum_.size(); ++t) {
    blobs.push_back(blob_of(momentum_[t]));
    blobs.push_back(blob_of(variance_[t]));
  }

  std::vector<uint8_t> out;
  out.insert(out.end(), {'Q', 'C', 'K', 'P'});
  push_u16(out, kCheckpointVersion);
  out.push_back(static_cast<uint8_t>(mode_));
  out.push_back(0);
  push_u64(out, step_);
  push_f32(out, hyper_.lr);
  push_f32(out, hyper_.beta1);
  push_f32(out, hyper_.beta2);
  push_f32(out, hyper_.eps);
  push_u32(out, block_size_);
  push_u32(out, static_cast<uint32_t>(momentum_.size()));

  // Index table: per buffer, storage kind + element count + blob length.
  std::size_t k = 0;
  for (std::size_t t = 0; t < momentum_.size(); ++t) {
    for (const Buffer* b : {&momentum_[t], &variance_[t]}) {
      out.push_back(static_cast<uint8_t>(b->kind));
      out.push_back(0);
      out.push_back(0);
      out.push_back(0);
      push_u64(out, b->size);
      push_u64(out, blobs[k++].size());
    }
  }
  for (const auto& blob : blobs) out.insert(out.end(), blob.begin(), blob.end());
  return out;
}

AdamState AdamState::from_bytes(std::span<const uint8_t> bytes) {
  constexpr std::size_t kHeader = 4 + 2 + 1 + 1 + 8 + 16 + 4 + 4;
  if (bytes.size() < kHeader) throw std::runtime_error("AdamState::from_bytes: truncated header");
  if (std::memcmp(bytes.data(), "QCKP", 4) != 0) {
    throw std::runtime_error("AdamState::from_bytes: bad magic");
  }
  if ((bytes[4] | (bytes[5] << 8)) != kCheckpointVersion) {
    throw std::runtime_error("AdamState::from_bytes: unsupported version");
  }
  if (bytes[6] > static_cast<uint8_t>(Mode::kVarianceOnly)) {
    throw std::runtime_error("AdamState::from_bytes: unknown mode");
  }
  AdamState st;
  st.mode_ = static_cast<Mode>(bytes[6]);
  st.step_ = read_u64(bytes.data() + 8);
  st.hyper_.lr = read_f32(bytes.data() + 16);
  st.hyper_.beta1 = read_f32(bytes.data() + 20);
  st.hyper_.beta2 = read_f32(bytes.data() + 24);
  st.hyper_.eps = read_f32(bytes.data() + 28);
  st.block_size_ = read_u32(bytes.data() + 32);
  const uint32_t tensors = read_u32(bytes.data() + 36);

  const std::size_t table_off = kHeader;
  const std::size_t entry_len = 4 + 8 + 8;
  const std::size_t blob_off = table_off + 2 * tensors * entry_len;
  if (bytes.size() < blob_off) throw std::runtime_error("AdamState::from_bytes: truncated table");

  std::size_t pos = blob_off;
  auto read_buffer = [&](std::size_t entry_index) {
    const uint8_t* e = bytes.data() + table_off + entry_index * entry_len;
    Buffer b;
    b.kind = static_cast<Storage>(e[0]);
    b.size = read_u64(e + 4);
    const uint64_t blob_len = read_u64(e + 12);
    if (pos + blob_len > bytes.size()) {
      throw std::runtime_error("AdamState::from_bytes: truncated blob");
    }
    std::span<const uint8_t> blob = bytes.subspan(pos, blob_len);
    pos += blob_len;
    if (b.kind == Storage::kFp32) {
      if (blob_len != b.size * 4) throw std::runtime_error("AdamState::from_bytes: fp32 size mismatch");
      b.fp32.resize(b.size);
      for (std::size_t i = 0; i < b.size; ++i) b.fp32[i] = read_f32(blob.data() + 4 * i);
    } else {
      b.q = quant::from_bytes(blob, st.hyper_.eps);
      if (b.q.original_len != b.size) {
        throw std::runtime_error("AdamState::from_bytes: tensor size mismatch");
      }
    }
    return b;
  };

  st.momentum_.reserve(tensors);
  st.variance_.reserve(tensors);
  for (uint32_t t = 0; t < tensors; ++t) {
    st.momentum_.push_back(read_buffer(2 * t));
    st.variance_.push_back(read_buffer(2 * t + 1));
  }
  if (pos != bytes.size()) throw std::runtime_error("AdamState::from_bytes: trailing bytes");
  return st;
}

void fedadam_server_step(std::vector<float>& theta, ServerAdamState& state,
                         const std::vector<std::vector<float>>& client_deltas,
                         const Hyper& hyper) {
  if (client_deltas.empty()) {
    throw std::invalid_argument("fedadam_server_step: no client deltas");
  }
  const std::size_t n = theta.size();
  if (state.m.size() != n || state.v.size() != n) {
    throw std::invalid_argument("fedadam_server_step: state size mismatch");
  }
  for (const auto& d : client_deltas) {
    if (d.size() != n) throw std::invalid_argument("fedadam_server_step: delta size mismatch");
  }
  const double inv_k = 1.0 / static_cast<double>(client_deltas.size());
  for (std::size_t i = 0; i < n; ++i) {
    double acc = 0.0;
    for (const auto& d : client_deltas) acc += d[i];
    const float delta = static_cast<float>(acc * inv_k);
    state.m[i] = hyper.beta1 * state.m[i] + (1.0f - hyper.beta1) * delta;
    state.v[i] = hyper.beta2 * state.v[i] + (1.0f - hyper.beta2) * delta * delta;
    theta[i] -= hyper.lr * state.m[i] / (std::sqrt(state.v[i]) + hyper.eps);
  }
}

}  // namespace qfl::optim

#include "qfl/rng.hpp"

#include <cmath>
#include <numbers>
#include <stdexcept>

namespace qfl::nd {

namespace {

constexpr uint64_t kGolden = 0x9E3779B97F4A7C15ull;

uint64_t mix64(uint64_t z) {
  z ^= z >> 30;
  z *= 0xBF58476D1CE4E5B9ull;
  z ^= z >> 27;
  z *= 0x94D049BB133111EBull;
  z ^= z >> 31;
  return z;
}

}  // namespace

RngStream::RngStream(uint64_t seed, uint64_t stream_id, uint64_t counter_block)
    : seed_(seed),
      stream_(stream_id),
      key_(mix64(mix64(seed + kGolden) ^
                 (stream_id * 0xD1B54A32D192ED03ull + 0x8BB84B93962EACC9ull))),
      counter_(counter_block << 40) {}

uint64_t RngStream::next_u64() { return mix64(key_ + (++counter_) * kGolden); }

double RngStream::next_unit() {
  return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
}

uint64_t RngStream::below(uint64_t bound) {
  if (bound == 0) throw std::invalid_argument("RngStream::below: bound must be positive");
  const uint64_t limit = (-bound) % bound;  // 2^64 mod bound
  uint64_t x;
  do {
    x = next_u64();
  } while (x < limit);
  return x % bound;
}

double RngStream::gaussian(double mean, double stddev) {
  if (stddev < 0.0) throw std::invalid_argument("RngStream::gaussian: stddev must be >= 0");
  const double u1 = 1.0 - next_unit();  // (0, 1], keeps log finite
  const double u2 = next_unit();
  const double mag = std::sqrt(-2.0 * std::log(u1));
  return mean + stddev * (mag * std::cos(2.0 * std::numbers::pi * u2));
}

std::vector<float> RngStream::gaussian_array(std::size_t n, float mean, float stddev) {
  std::vector<float> out(n);
  for (auto& v : out) v = static_cast<float>(gaussian(mean, stddev));
  return out;
}

double RngStream::gamma(double shape) {
  if (!(shape > 0.0)) throw std::invalid_argument("RngStream::gamma: shape must be > 0");
  if (shape < 1.0) {
    const double u = 1.0 - next_unit();  // (0, 1]
    return gamma(shape + 1.0) * std::pow(u, 1.0 / shape);
  }
  const double d = shape - 1.0 / 3.0;
  const double c = 1.0 / std::sqrt(9.0 * d);
  for (;;) {
    double x, v;
    do {
      x = gaussian(0.0, 1.0);
      v = 1.0 + c * x;
    } while (v <= 0.0);
    v = v * v * v;
    const double u = 1.0 - next_unit();
    if (u < 1.0 - 0.0331 * x * x * x * x) return d * v;
    if (std::log(u) < 0.5 * x * x + d * (1.0 - v + std::log(v))) return d * v;
  }
}

std::vector<double> RngStream::dirichlet(double alpha, std::size_t n) {
  if (!(alpha > 0.0)) throw std::invalid_argument("RngStream::dirichlet: alpha must be > 0");
  if (n == 0) throw std::invalid_argument("RngStream::dirichlet: n must be >= 1");
  if (n == 1) return {1.0};
  std::vector<double> out(n);
  for (int attempt = 0; attempt < 100; ++attempt) {
    double sum = 0.0;
    for (auto& g : out) {
      g = gamma(alpha);
      sum += g;
    }
    if (sum > 0.0) {
      for (auto& g : out) g /= sum;
      return out;
    }
  }
  throw std::runtime_error("RngStream::dirichlet: gamma draws underflowed to zero");
}

}  // namespace qfl::nd

#pragma once

#include <cstddef>
#include <cstdint>
#include <utility>
#include <vector>

namespace qfl::nd {

/// Counter-based pseudo-random stream.
///
/// Output i is the SplitMix64 finalizer applied to key + i * golden gamma,
/// where the key is a hash of (seed, stream_id). The same (seed, stream_id)
/// pair therefore yields the same draw sequence on every platform, run and
/// thread count. Parallel tasks get independent streams by using distinct
/// stream ids; a coarse counter block (e.g. a federated round index) can be
/// folded into the counter so that phases of one stream never overlap, as
/// long as a block consumes fewer than 2^40 draws.
class RngStream {
 public:
  RngStream(uint64_t seed, uint64_t stream_id, uint64_t counter_block = 0);

  uint64_t next_u64();

  /// Uniform double in [0, 1), 53 random bits.
  double next_unit();

  /// Uniform integer in [0, bound), unbiased via rejection. bound must be > 0.
  uint64_t below(uint64_t bound);

  /// One normal draw (Box-Muller). stddev must be >= 0; stddev == 0 returns
  /// mean exactly. Consumes exactly two uniforms.
  double gaussian(double mean, double stddev);

  std::vector<float> gaussian_array(std::size_t n, float mean, float stddev);

  /// Gamma(shape, 1) via Marsaglia-Tsang squeeze; handles shape < 1 through
  /// the boost Gamma(shape+1) * U^(1/shape). shape must be > 0.
  double gamma(double shape);

  /// Dirichlet(alpha, ..., alpha) of length n as normalized gamma draws.
  /// Components are >= 0 and sum to 1 within 1e-6. alpha must be > 0, n >= 1.
  std::vector<double> dirichlet(double alpha, std::size_t n);

  /// Fisher-Yates shuffle, descending positions.
  template <typename T>
  void shuffle(std::vector<T>& items) {
    for (std::size_t i = items.size(); i > 1; --i) {
      std::size_t j = static_cast<std::size_t>(below(i));
      std::swap(items[i - 1], items[j]);
    }
  }

  uint64_t seed() const { return seed_; }
  uint64_t stream_id() const { return stream_; }

 private:
  uint64_t seed_ = 0;
  uint64_t stream_ = 0;
  uint64_t key_ = 0;
  uint64_t counter_ = 0;
};

}  // namespace qfl::nd

#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "qfl/adam.hpp"
#include "qfl/rng.hpp"

namespace qfl::analysis {

struct SchemeError {
  std::string scheme;
  double mean_relative_error = 0.0;
  // (decade lower exponent, mean relative error of samples in [10^d, 10^(d+1)))
  std::vector<std::pair<int, double>> per_decade;
  std::size_t samples = 0;
};

struct PrecisionReport {
  SchemeError log_space;
  SchemeError dynamic_tree;
  double lo = 0.0, hi = 0.0;
  uint32_t block_size = 0;
  std::size_t n = 0;
};

/// Draws n log-uniform values in [lo, hi], round-trips them through the
/// block-wise log quantizer and through the dynamic-tree baseline, and
/// reports mean relative error |x~ - x| / max(x, 1e-30) per scheme, with a
/// per-decade breakdown. Requires 0 < lo < hi.
PrecisionReport precision_study(nd::RngStream& rng, std::size_t n, double lo, double hi,
                                uint32_t block_size);

struct Histogram {
  std::vector<double> edges;     // strictly increasing; counts[i] covers [edges[i], edges[i+1])
  std::vector<uint64_t> counts;  // binned values only
  uint64_t underflow = 0;        // zero values (log histograms)
  uint64_t total = 0;            // sum(counts) + underflow
  double data_min = 0.0, data_max = 0.0;
};

Histogram histogram_linear(std::span<const float> values, int bins = 100);

/// log10-spaced bins of the positive values, decade_fraction decades per bin;
/// zeros land in the underflow bucket.
Histogram histogram_log10(std::span<const float> values, double decade_fraction = 0.25);

/// Momentum (linear bins) and variance (log10 bins) over all state tensors.
std::pair<Histogram, Histogram> state_histograms(const optim::AdamState& state);

struct ScalingRow {
  uint64_t params = 0;
  double fp32_mib = 0.0;
  double quantized_mib = 0.0;
  double ratio = 0.0;
};

/// Projected optimizer memory: FP32 needs 8N bytes (two states), quantized
/// storage needs 2 * ceil(N/B) * (B + 8) bytes, which reduces to 2N + 16N/B
/// when B divides N. MiB means 2^20 bytes.
std::vector<ScalingRow> scaling_projection(std::span<const uint64_t> param_counts,
                                           uint32_t block_size);

}  // namespace qfl::analysis

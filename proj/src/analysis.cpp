#include "qfl/analysis.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "qfl/quantize.hpp"

namespace qfl::analysis {

namespace {

SchemeError summarize_errors(const std::string& scheme, std::span<const float> x,
                             std::span<const float> reconstructed, double lo, double hi) {
  SchemeError err;
  err.scheme = scheme;
  err.samples = x.size();

  const int first_decade = static_cast<int>(std::floor(std::log10(lo)));
  const int last_decade = static_cast<int>(std::ceil(std::log10(hi)));
  const std::size_t buckets = static_cast<std::size_t>(std::max(1, last_decade - first_decade));
  std::vector<double> bucket_sum(buckets, 0.0);
  std::vector<std::size_t> bucket_count(buckets, 0);

  double sum = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double xi = x[i];
    const double rel = std::abs(static_cast<double>(reconstructed[i]) - xi) / std::max(xi, 1e-30);
    sum += rel;
    int d = static_cast<int>(std::floor(std::log10(std::max(xi, 1e-300))));
    d = std::clamp(d, first_decade, last_decade - 1);
    const std::size_t b = static_cast<std::size_t>(d - first_decade);
    bucket_sum[b] += rel;
    ++bucket_count[b];
  }
  err.mean_relative_error = x.empty() ? 0.0 : sum / static_cast<double>(x.size());
  for (std::size_t b = 0; b < buckets; ++b) {
    if (bucket_count[b] == 0) continue;
    err.per_decade.emplace_back(first_decade + static_cast<int>(b),
                                bucket_sum[b] / static_cast<double>(bucket_count[b]));
  }
  return err;
}

}  // namespace

PrecisionReport precision_study(nd::RngStream& rng, std::size_t n, double lo, double hi,
                                uint32_t block_size) {
  if (!(lo > 0.0)) throw std::invalid_argument("precision_study: lo must be > 0");
  if (!(hi > lo)) throw std::invalid_argument("precision_study: hi must exceed lo");
  if (n == 0) throw std::invalid_argument("precision_study: n must be >= 1");

  const double log_lo = std::log(lo), log_hi = std::log(hi);
  std::vector<float> x(n);
  for (auto& v : x) {
    v = static_cast<float>(std::exp(log_lo + rng.next_unit() * (log_hi - log_lo)));
  }

  const auto qt = quant::quantize_log(x, block_size);
  const auto log_rec = quant::dequantize_log(qt);
  const auto dt = quant::quantize_dynamic_tree(x);
  const auto tree_rec = quant::dequantize_dynamic_tree(dt);

  PrecisionReport report;
  report.lo = lo;
  report.hi = hi;
  report.block_size = block_size;
  report.n = n;
  report.log_space = summarize_errors("log-space", x, log_rec, lo, hi);
  report.dynamic_tree = summarize_errors("dynamic-tree", x, tree_rec, lo, hi);
  return report;
}

Histogram histogram_linear(std::span<const float> values, int bins) {
  if (values.empty()) throw std::invalid_argument("histogram_linear: no values");
  if (bins < 1) throw std::invalid_argument("histogram_linear: bins must be >= 1");
  Histogram h;
  double mn = values[0], mx = values[0];
  for (float v : values) {
    mn = std::min(mn, static_cast<double>(v));
    mx = std::max(mx, static_cast<double>(v));
  }
  h.data_min = mn;
  h.data_max = mx;
  if (mx == mn) {
    // Degenerate data: one bin holding everything.
    h.edges = {mn, mn + 1.0};
    h.counts = {values.size()};
    h.total = values.size();
    return h;
  }
  h.edges.resize(static_cast<std::size_t>(bins) + 1);
  const double width = (mx - mn) / bins;
  for (int b = 0; b <= bins; ++b) h.edges[static_cast<std::size_t>(b)] = mn + width * b;
  h.counts.assign(static_cast<std::size_t>(bins), 0);
  for (float v : values) {
    int idx = static_cast<int>((static_cast<double>(v) - mn) / width);
    idx = std::clamp(idx, 0, bins - 1);  // top edge folds into the last bin
    ++h.counts[static_cast<std::size_t>(idx)];
  }
  h.total = values.size();
  return h;
}

Histogram histogram_log10(std::span<const float> values, double decade_fraction) {
  if (values.empty()) throw std::invalid_argument("histogram_log10: no values");
  if (!(decade_fraction > 0.0)) {
    throw std::invalid_argument("histogram_log10: decade_fraction must be > 0");
  }
  Histogram h;
  double min_pos = 0.0, mx = 0.0, mn = values[0];
  for (float v : values) {
    if (v < 0.0f) throw std::domain_error("histogram_log10: negative value");
    const double d = v;
    mn = std::min(mn, d);
    mx = std::max(mx, d);
    if (d > 0.0 && (min_pos == 0.0 || d < min_pos)) min_pos = d;
  }
  h.data_min = mn;
  h.data_max = mx;

  if (min_pos == 0.0) {
    // All zeros: everything underflows, single placeholder bin.
    h.edges = {0.0, 1.0};
    h.counts = {0};
    h.underflow = values.size();
    h.total = values.size();
    return h;
  }

  const double lo_exp =
      std::floor(std::log10(min_pos) / decade_fraction) * decade_fraction;
  double hi_exp = std::ceil(std::log10(mx) / decade_fraction) * decade_fraction;
  if (hi_exp <= lo_exp) hi_exp = lo_exp + decade_fraction;
  const int bins = static_cast<int>(std::lround((hi_exp - lo_exp) / decade_fraction));
  h.edges.resize(static_cast<std::size_t>(bins) + 1);
  for (int b = 0; b <= bins; ++b) {
    h.edges[static_cast<std::size_t>(b)] = lo_exp + decade_fraction * b;  // log10 edges
  }
  h.counts.assign(static_cast<std::size_t>(bins), 0);
  for (float v : values) {
    if (v == 0.0f) {
      ++h.underflow;
      continue;
    }
    int idx = static_cast<int>((std::log10(static_cast<double>(v)) - lo_exp) / decade_fraction);
    idx = std::clamp(idx, 0, bins - 1);
    ++h.counts[static_cast<std::size_t>(idx)];
  }
  h.total = values.size();
  return h;
}

std::pair<Histogram, Histogram> state_histograms(const optim::AdamState& state) {
  if (state.num_tensors() == 0) throw std::invalid_argument("state_histograms: empty state");
  std::vector<float> m, v;
  for (std::size_t t = 0; t < state.num_tensors(); ++t) {
    const auto mt = state.momentum(t);
    const auto vt = state.variance(t);
    m.insert(m.end(), mt.begin(), mt.end());
    v.insert(v.end(), vt.begin(), vt.end());
  }
  return {histogram_linear(m, 100), histogram_log10(v, 0.25)};
}

std::vector<ScalingRow> scaling_projection(std::span<const uint64_t> param_counts,
                                           uint32_t block_size) {
  if (block_size == 0) throw std::invalid_argument("scaling_projection: block size must be >= 1");
  constexpr double kMiB = 1024.0 * 1024.0;
  std::vector<ScalingRow> rows;
  rows.reserve(param_counts.size());
  for (uint64_t n : param_counts) {
    if (n == 0) throw std::invalid_argument("scaling_projection: param count must be > 0");
    const uint64_t blocks = (n + block_size - 1) / block_size;
    const uint64_t quantized = 2 * blocks * (block_size + 8);
    const uint64_t fp32 = 8 * n;
    ScalingRow row;
    row.params = n;
    row.fp32_mib = static_cast<double>(fp32) / kMiB;
    row.quantized_mib = static_cast<double>(quantized) / kMiB;
    row.ratio = static_cast<double>(fp32) / static_cast<double>(quantized);
    rows.push_back(row);
  }
  return rows;
}

}  // namespace qfl::analysis

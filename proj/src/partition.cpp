#include "qfl/partition.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace qfl::data {

namespace {

std::vector<std::vector<std::size_t>> indices_by_class(const Dataset& ds) {
  std::vector<std::vector<std::size_t>> by_class(static_cast<std::size_t>(ds.num_classes));
  for (std::size_t i = 0; i < ds.size(); ++i) {
    by_class[static_cast<std::size_t>(ds.y[i])].push_back(i);
  }
  return by_class;
}

}  // namespace

std::vector<ClientPartition> partition_dirichlet(nd::RngStream& rng, const Dataset& ds,
                                                 std::size_t num_clients,
                                                 DirichletAlpha alpha) {
  if (num_clients == 0) throw std::invalid_argument("partition_dirichlet: need at least one client");
  if (num_clients > ds.size()) {
    throw std::invalid_argument("partition_dirichlet: more clients than samples");
  }
  if (!alpha.iid && !(alpha.value > 0.0)) {
    throw std::invalid_argument("partition_dirichlet: alpha must be > 0");
  }

  const auto by_class = indices_by_class(ds);
  const int retries = alpha.iid ? 1 : 100;
  std::vector<std::vector<std::size_t>> assigned(num_clients);

  for (int attempt = 0; attempt < retries; ++attempt) {
    for (auto& a : assigned) a.clear();

    for (const auto& cls : by_class) {
      if (cls.empty()) continue;
      std::vector<std::size_t> order = cls;
      rng.shuffle(order);
      if (alpha.iid) {
        for (std::size_t j = 0; j < order.size(); ++j) {
          assigned[j % num_clients].push_back(order[j]);
        }
      } else {
        const auto props = rng.dirichlet(alpha.value, num_clients);
        const double n_c = static_cast<double>(order.size());
        double cum = 0.0;
        std::size_t start = 0;
        for (std::size_t k = 0; k < num_clients; ++k) {
          cum += props[k];
          std::size_t end = k + 1 == num_clients
                                ? order.size()
                                : static_cast<std::size_t>(std::llround(cum * n_c));
          end = std::min(end, order.size());
          end = std::max(end, start);
          for (std::size_t j = start; j < end; ++j) assigned[k].push_back(order[j]);
          start = end;
        }
      }
    }

    const bool any_empty =
        std::any_of(assigned.begin(), assigned.end(), [](const auto& a) { return a.empty(); });
    if (!any_empty) {
      std::vector<ClientPartition> out(num_clients);
      for (std::size_t k = 0; k < num_clients; ++k) {
        auto& p = out[k];
        p.client_id = static_cast<int>(k);
        p.sample_indices = std::move(assigned[k]);
        std::sort(p.sample_indices.begin(), p.sample_indices.end());
        p.class_histogram.assign(static_cast<std::size_t>(ds.num_classes), 0);
        for (std::size_t idx : p.sample_indices) {
          ++p.class_histogram[static_cast<std::size_t>(ds.y[idx])];
        }
      }
      return out;
    }
  }
  throw std::runtime_error("partition_dirichlet: could not produce nonempty clients "
                           "after 100 attempts");
}

HeterogeneityStats heterogeneity_stats(std::span<const ClientPartition> partitions,
                                       const Dataset& ds) {
  if (partitions.empty()) throw std::invalid_argument("heterogeneity_stats: no partitions");
  HeterogeneityStats stats;
  stats.per_client_dominant.reserve(partitions.size());
  stats.sample_counts.reserve(partitions.size());

  double dominant_sum = 0.0;
  for (const auto& p : partitions) {
    if (p.class_histogram.size() != static_cast<std::size_t>(ds.num_classes)) {
      throw std::invalid_argument("heterogeneity_stats: histogram does not match dataset classes");
    }
    const std::size_t total = p.sample_indices.size();
    stats.sample_counts.push_back(total);
    std::size_t best_class = 0;
    for (std::size_t c = 1; c < p.class_histogram.size(); ++c) {
      if (p.class_histogram[c] > p.class_histogram[best_class]) best_class = c;
    }
    const double pct = total == 0 ? 0.0
                                  : static_cast<double>(p.class_histogram[best_class]) /
                                        static_cast<double>(total);
    stats.per_client_dominant.emplace_back(static_cast<int>(best_class), pct);
    dominant_sum += pct;
  }
  stats.avg_dominant_pct = dominant_sum / static_cast<double>(partitions.size());

  double mean = 0.0;
  for (std::size_t c : stats.sample_counts) mean += static_cast<double>(c);
  mean /= static_cast<double>(stats.sample_counts.size());
  double var = 0.0;
  for (std::size_t c : stats.sample_counts) {
    const double d = static_cast<double>(c) - mean;
    var += d * d;
  }
  var /= static_cast<double>(stats.sample_counts.size());  // population std
  stats.sample_std = std::sqrt(var);
  return stats;
}

}  // namespace qfl::data

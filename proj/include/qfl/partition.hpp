#pragma once

#include <span>
#include <utility>
#include <vector>

#include "qfl/dataset.hpp"
#include "qfl/rng.hpp"

namespace qfl::data {

/// Dirichlet concentration or the IID sentinel.
struct DirichletAlpha {
  bool iid = false;
  double value = 0.0;

  static DirichletAlpha iid_split() { return {true, 0.0}; }
  static DirichletAlpha concentration(double alpha) { return {false, alpha}; }
};

struct ClientPartition {
  int client_id = 0;
  std::vector<std::size_t> sample_indices;   // indices into the parent dataset
  std::vector<std::size_t> class_histogram;  // counts per class
};

/// Class-wise Dirichlet split: for every class, draw proportions
/// Dir(alpha, ..., alpha) over clients and cut the class's shuffled samples
/// at the cumulative boundaries. The IID sentinel deals each class's shuffled
/// samples round-robin instead. If any client ends up empty the whole
/// partition is redrawn (at most 100 attempts).
std::vector<ClientPartition> partition_dirichlet(nd::RngStream& rng, const Dataset& ds,
                                                 std::size_t num_clients,
                                                 DirichletAlpha alpha);

struct HeterogeneityStats {
  double avg_dominant_pct = 0.0;  // in [1/C, 1]
  std::vector<std::pair<int, double>> per_client_dominant;  // (class, fraction)
  double sample_std = 0.0;  // population std of per-client sample counts
  std::vector<std::size_t> sample_counts;
};

HeterogeneityStats heterogeneity_stats(std::span<const ClientPartition> partitions,
                                       const Dataset& ds);

}  // namespace qfl::data

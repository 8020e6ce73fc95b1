#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <vector>

#include "qfl/adam.hpp"
#include "qfl/dataset.hpp"
#include "qfl/mlp.hpp"
#include "qfl/partition.hpp"
#include "qfl/rng.hpp"

namespace qfl::fed {

// Stream ids above 2^32 cannot collide with client indices.
inline constexpr uint64_t kServerSamplingStream = (uint64_t{1} << 32) + 1;
inline constexpr uint64_t kPartitionStream = (uint64_t{1} << 32) + 2;

struct Config {
  int rounds = 30;
  int num_clients = 10;
  int clients_per_round = 5;
  int local_epochs = 2;
  int batch_size = 64;
  optim::Mode mode = optim::Mode::kQLocalAdam;
  optim::Hyper hyper;
  uint32_t block_size = 64;
  uint64_t seed = 42;
  data::DirichletAlpha alpha = data::DirichletAlpha::concentration(0.1);
  int threads = 1;

  void validate() const;  // throws std::invalid_argument with the field name
};

struct RoundMetrics {
  int round = 0;  // 1-based
  double test_accuracy = 0.0;
  double test_loss = 0.0;
  std::vector<int> selected_clients;
  uint64_t per_client_state_bytes = 0;
  std::vector<uint64_t> per_client_steps;  // aligned with selected_clients
  double wall_ms = 0.0;  // informational only; excluded from metrics files
};

struct RunResult {
  std::vector<RoundMetrics> rounds;
  model::MlpModel final_model;
  double best_accuracy = 0.0;
  int best_round = 0;
  double final_accuracy = 0.0;
  double final_loss = 0.0;
  uint64_t state_bytes_per_client = 0;
  double compression_ratio = 1.0;
};

/// Uniform sample without replacement, returned sorted ascending. Different
/// rounds fold the round index into the stream counter, so draws are
/// independent across rounds under one seed.
std::vector<int> sample_clients(nd::RngStream& rng, int num_clients, int clients_per_round);

struct LocalResult {
  model::MlpModel model;
  optim::AdamState state;
  uint64_t steps = 0;
};

/// One client's round: clone the global model, fresh zero optimizer state,
/// local_epochs passes of seeded-shuffled mini-batches (last short batch
/// kept), one Adam step per batch.
LocalResult local_train(const model::MlpModel& global_model,
                        const data::ClientPartition& partition, const data::Dataset& ds,
                        const Config& config, int client_id, int round);

/// Weighted FedAvg: theta = sum_k (size_k / total) * theta_k, accumulated in
/// order of the client list with FP64 accumulators.
model::MlpModel aggregate(std::span<const model::MlpModel> client_models,
                          std::span<const std::size_t> client_sizes);

/// Full simulation: per round, sample clients, train them (in parallel when
/// config.threads > 1), aggregate, evaluate on the test set. Results depend
/// only on config + data + initial model, never on thread scheduling.
/// on_round, when set, fires after each round completes.
RunResult run_federated(const Config& config, const data::Dataset& train,
                        const data::Dataset& test, const model::MlpModel& initial,
                        const std::function<void(const RoundMetrics&)>& on_round = {});

}  // namespace qfl::fed

#include "qfl/federated.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <exception>
#include <mutex>
#include <numeric>
#include <stdexcept>
#include <thread>

namespace qfl::fed {

void Config::validate() const {
  if (rounds < 1) throw std::invalid_argument("config.rounds must be >= 1");
  if (num_clients < 1) throw std::invalid_argument("config.num_clients must be >= 1");
  if (clients_per_round < 1 || clients_per_round > num_clients) {
    throw std::invalid_argument("config.clients_per_round must be in [1, num_clients]");
  }
  if (local_epochs < 1) throw std::invalid_argument("config.local_epochs must be >= 1");
  if (batch_size < 1) throw std::invalid_argument("config.batch_size must be >= 1");
  if (block_size == 0) throw std::invalid_argument("config.block_size must be >= 1");
  if (threads < 1) throw std::invalid_argument("config.threads must be >= 1");
  if (!alpha.iid && !(alpha.value > 0.0)) {
    throw std::invalid_argument("config.alpha must be > 0 or iid");
  }
  if (!(hyper.lr > 0.0f)) throw std::invalid_argument("config.lr must be > 0");
  if (!(hyper.beta1 >= 0.0f && hyper.beta1 < 1.0f)) {
    throw std::invalid_argument("config.beta1 must be in [0, 1)");
  }
  if (!(hyper.beta2 >= 0.0f && hyper.beta2 < 1.0f)) {
    throw std::invalid_argument("config.beta2 must be in [0, 1)");
  }
  if (!(hyper.eps > 0.0f)) throw std::invalid_argument("config.eps must be > 0");
}

std::vector<int> sample_clients(nd::RngStream& rng, int num_clients, int clients_per_round) {
  if (clients_per_round > num_clients) {
    throw std::invalid_argument("sample_clients: clients_per_round exceeds num_clients");
  }
  std::vector<int> pool(static_cast<std::size_t>(num_clients));
  std::iota(pool.begin(), pool.end(), 0);
  // Partial Fisher-Yates: fill the tail with the sample.
  for (int i = 0; i < clients_per_round; ++i) {
    const std::size_t j =
        static_cast<std::size_t>(i) +
        static_cast<std::size_t>(rng.below(static_cast<uint64_t>(num_clients - i)));
    std::swap(pool[static_cast<std::size_t>(i)], pool[j]);
  }
  pool.resize(static_cast<std::size_t>(clients_per_round));
  std::sort(pool.begin(), pool.end());
  return pool;
}

LocalResult local_train(const model::MlpModel& global_model,
                        const data::ClientPartition& partition, const data::Dataset& ds,
                        const Config& config, int client_id, int round) {
  if (partition.sample_indices.empty()) {
    throw std::invalid_argument("local_train: empty client partition");
  }
  LocalResult res;
  res.model = global_model;

  auto params = res.model.parameters();
  std::vector<std::size_t> sizes;
  sizes.reserve(params.size());
  for (const auto* p : params) sizes.push_back(p->size());
  res.state = optim::AdamState(sizes, config.mode, config.hyper, config.block_size);

  nd::RngStream rng(config.seed, static_cast<uint64_t>(client_id),
                    static_cast<uint64_t>(round));
  const std::size_t features = ds.features();
  const std::size_t batch = static_cast<std::size_t>(config.batch_size);
  std::vector<std::size_t> order = partition.sample_indices;

  for (int epoch = 0; epoch < config.local_epochs; ++epoch) {
    rng.shuffle(order);
    for (std::size_t start = 0; start < order.size(); start += batch) {
      const std::size_t count = std::min(batch, order.size() - start);
      nd::DenseTensor bx({count, features});
      std::vector<int> by(count);
      for (std::size_t r = 0; r < count; ++r) {
        const std::size_t idx = order[start + r];
        std::copy_n(&ds.x.data[idx * features], features, &bx.data[r * features]);
        by[r] = ds.y[idx];
      }
      const auto lg = model::loss_and_grads(res.model, bx, by);
      res.state.step(params, lg.grads);
      ++res.steps;
    }
  }
  return res;
}

model::MlpModel aggregate(std::span<const model::MlpModel> client_models,
                          std::span<const std::size_t> client_sizes) {
  if (client_models.empty()) throw std::invalid_argument("aggregate: no client models");
  if (client_models.size() != client_sizes.size()) {
    throw std::invalid_argument("aggregate: model/size count mismatch");
  }
  uint64_t total = 0;
  for (std::size_t s : client_sizes) {
    if (s == 0) throw std::invalid_argument("aggregate: client with zero samples");
    total += s;
  }

  std::vector<double> weights(client_sizes.size());
  for (std::size_t k = 0; k < client_sizes.size(); ++k) {
    weights[k] = static_cast<double>(client_sizes[k]) / static_cast<double>(total);
  }

  model::MlpModel out = client_models[0];
  auto out_params = out.parameters();
  std::vector<std::vector<const nd::DenseTensor*>> all_params;
  all_params.reserve(client_models.size());
  for (const auto& m : client_models) {
    auto p = m.parameters();
    if (p.size() != out_params.size()) {
      throw std::invalid_argument("aggregate: model layer count mismatch");
    }
    all_params.push_back(std::move(p));
  }

  for (std::size_t t = 0; t < out_params.size(); ++t) {
    const std::size_t n = out_params[t]->size();
    for (std::size_t k = 0; k < all_params.size(); ++k) {
      if (all_params[k][t]->size() != n || !all_params[k][t]->same_shape(*out_params[t])) {
        throw std::invalid_argument("aggregate: parameter shape mismatch");
      }
    }
    float* dst = out_params[t]->data.data();
    for (std::size_t i = 0; i < n; ++i) {
      double acc = 0.0;
      for (std::size_t k = 0; k < all_params.size(); ++k) {
        acc += weights[k] * static_cast<double>(all_params[k][t]->data[i]);
      }
      dst[i] = static_cast<float>(acc);
    }
  }
  return out;
}

RunResult run_federated(const Config& config, const data::Dataset& train,
                        const data::Dataset& test, const model::MlpModel& initial,
                        const std::function<void(const RoundMetrics&)>& on_round) {
  config.validate();
  if (test.size() == 0) throw std::invalid_argument("run_federated: empty test set");

  nd::RngStream part_rng(config.seed, kPartitionStream);
  const auto partitions = data::partition_dirichlet(
      part_rng, train, static_cast<std::size_t>(config.num_clients), config.alpha);

  RunResult result;
  result.final_model = initial;
  result.rounds.reserve(static_cast<std::size_t>(config.rounds));

  for (int round = 1; round <= config.rounds; ++round) {
    const auto t0 = std::chrono::steady_clock::now();
    nd::RngStream select_rng(config.seed, kServerSamplingStream,
                             static_cast<uint64_t>(round));
    const auto selected =
        sample_clients(select_rng, config.num_clients, config.clients_per_round);

    std::vector<LocalResult> locals(selected.size());
    const int workers = std::min<int>(config.threads, static_cast<int>(selected.size()));
    if (workers <= 1) {
      for (std::size_t i = 0; i < selected.size(); ++i) {
        locals[i] = local_train(result.final_model, partitions[selected[i]], train, config,
                                selected[i], round);
      }
    } else {
      // Work stealing over an atomic cursor; every task writes only its own
      // slot and derives its own RNG stream, so scheduling cannot change
      // results.
      std::atomic<std::size_t> cursor{0};
      std::exception_ptr error;
      std::mutex error_mu;
      auto worker = [&]() {
        for (;;) {
          const std::size_t i = cursor.fetch_add(1);
          if (i >= selected.size()) return;
          try {
            locals[i] = local_train(result.final_model, partitions[selected[i]], train,
                                    config, selected[i], round);
          } catch (...) {
            std::lock_guard<std::mutex> lock(error_mu);
            if (!error) error = std::current_exception();
            return;
          }
        }
      };
      std::vector<std::thread> pool;
      pool.reserve(static_cast<std::size_t>(workers));
      for (int w = 0; w < workers; ++w) pool.emplace_back(worker);
      for (auto& th : pool) th.join();
      if (error) std::rethrow_exception(error);
    }

    std::vector<model::MlpModel> models;
    std::vector<std::size_t> sizes;
    models.reserve(locals.size());
    sizes.reserve(locals.size());
    for (std::size_t i = 0; i < locals.size(); ++i) {
      models.push_back(std::move(locals[i].model));
      sizes.push_back(partitions[selected[i]].sample_indices.size());
    }
    result.final_model = aggregate(models, sizes);

    const auto eval = model::evaluate_metrics(result.final_model, test.x, test.y);

    RoundMetrics rm;
    rm.round = round;
    rm.test_accuracy = eval.accuracy;
    rm.test_loss = eval.mean_loss;
    rm.selected_clients = selected;
    const auto mem = locals[0].state.memory_bytes();
    rm.per_client_state_bytes = mem.total_bytes;
    for (const auto& lr : locals) {
      if (lr.state.memory_bytes().total_bytes != mem.total_bytes) {
        throw std::logic_error("run_federated: client state sizes diverged");
      }
      rm.per_client_steps.push_back(lr.steps);
    }
    rm.wall_ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0)
                     .count();
    if (round == 1) {
      result.state_bytes_per_client = mem.total_bytes;
      result.compression_ratio = mem.compression_ratio;
    }
    if (eval.accuracy > result.best_accuracy || result.best_round == 0) {
      result.best_accuracy = eval.accuracy;
      result.best_round = round;
    }
    result.final_accuracy = eval.accuracy;
    result.final_loss = eval.mean_loss;
    result.rounds.push_back(std::move(rm));
    if (on_round) on_round(result.rounds.back());
  }
  return result;
}

}  // namespace qfl::fed

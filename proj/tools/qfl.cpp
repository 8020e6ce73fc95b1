// Command line front end: run single experiments, parameter sweeps, and the
// standalone analysis studies. All heavy lifting lives in the qfl library.

#include <cstdio>
#include <exception>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "qfl/experiment.hpp"

namespace {

std::vector<std::string> split_csv(const std::string& csv) {
  std::vector<std::string> out;
  std::stringstream ss(csv);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

struct RunFlags {
  std::string config_file;
  std::string from_manifest;
  std::string mode;
  std::string alpha;
  int clients = 0;
  int per_round = 0;
  int rounds = 0;
  int epochs = 0;
  int batch = 0;
  double lr = 0.0;
  double beta1 = 0.0;
  double beta2 = 0.0;
  double eps = 0.0;
  uint32_t block_size = 0;
  uint64_t seed = 0;
  std::string dataset;
  std::string test_file;
  std::size_t features = 0;
  std::size_t train_samples = 0;
  std::size_t test_samples = 0;
  int classes = 0;
  double class_sep = 0.0;
  std::string hidden;
  std::string out;
  int threads = 0;
};

void add_run_flags(CLI::App* app, RunFlags& f) {
  app->add_option("--config", f.config_file, "JSON config file (flags override it)");
  app->add_option("--mode", f.mode, "fp32|qlocaladam|naive-int8|m-only|v-only");
  app->add_option("--alpha", f.alpha, "Dirichlet concentration or 'iid'");
  app->add_option("--clients", f.clients, "total clients K");
  app->add_option("--per-round", f.per_round, "clients sampled per round");
  app->add_option("--rounds", f.rounds, "federated rounds T");
  app->add_option("--epochs", f.epochs, "local epochs E");
  app->add_option("--batch", f.batch, "mini-batch size");
  app->add_option("--lr", f.lr, "learning rate");
  app->add_option("--beta1", f.beta1, "Adam beta1");
  app->add_option("--beta2", f.beta2, "Adam beta2");
  app->add_option("--eps", f.eps, "Adam epsilon / log-quantizer zero guard");
  app->add_option("--block-size", f.block_size, "quantization block size B");
  app->add_option("--seed", f.seed, "random seed");
  app->add_option("--dataset", f.dataset, "synthetic | file:<path>");
  app->add_option("--test-file", f.test_file, "test dataset path (file datasets)");
  app->add_option("--features", f.features, "synthetic feature count");
  app->add_option("--train-samples", f.train_samples, "synthetic training samples");
  app->add_option("--test-samples", f.test_samples, "synthetic test samples");
  app->add_option("--classes", f.classes, "synthetic class count");
  app->add_option("--class-sep", f.class_sep, "synthetic class separation");
  app->add_option("--hidden", f.hidden, "hidden layer sizes, e.g. 128,64");
  app->add_option("--out", f.out, "output directory");
  app->add_option("--threads", f.threads, "worker threads for in-round clients");
}

qfl::cli::ExperimentConfig resolve_config(const CLI::App* app, const RunFlags& f) {
  qfl::cli::ExperimentConfig cfg;
  if (!f.from_manifest.empty()) {
    cfg = qfl::cli::config_from_manifest(f.from_manifest);
  } else if (!f.config_file.empty()) {
    cfg = qfl::cli::config_from_json_file(f.config_file);
  }

  const auto given = [&](const std::string& name) { return app->count(name) > 0; };
  if (given("--mode")) cfg.fed.mode = qfl::optim::mode_from_name(f.mode);
  if (given("--alpha")) {
    cfg.fed.alpha = f.alpha == "iid" ? qfl::data::DirichletAlpha::iid_split()
                                     : qfl::data::DirichletAlpha::concentration(std::stod(f.alpha));
  }
  if (given("--clients")) cfg.fed.num_clients = f.clients;
  if (given("--per-round")) cfg.fed.clients_per_round = f.per_round;
  if (given("--rounds")) cfg.fed.rounds = f.rounds;
  if (given("--epochs")) cfg.fed.local_epochs = f.epochs;
  if (given("--batch")) cfg.fed.batch_size = f.batch;
  if (given("--lr")) cfg.fed.hyper.lr = static_cast<float>(f.lr);
  if (given("--beta1")) cfg.fed.hyper.beta1 = static_cast<float>(f.beta1);
  if (given("--beta2")) cfg.fed.hyper.beta2 = static_cast<float>(f.beta2);
  if (given("--eps")) cfg.fed.hyper.eps = static_cast<float>(f.eps);
  if (given("--block-size")) cfg.fed.block_size = f.block_size;
  if (given("--seed")) cfg.fed.seed = f.seed;
  if (given("--dataset")) {
    if (f.dataset == "synthetic") {
      cfg.dataset.kind = qfl::cli::DatasetSpec::Kind::kSynthetic;
    } else if (f.dataset.rfind("file:", 0) == 0) {
      cfg.dataset.kind = qfl::cli::DatasetSpec::Kind::kFile;
      cfg.dataset.train_path = f.dataset.substr(5);
    } else {
      throw CLI::ValidationError("--dataset", "expected synthetic or file:<path>");
    }
  }
  if (given("--test-file")) cfg.dataset.test_path = f.test_file;
  if (given("--features")) cfg.dataset.features = f.features;
  if (given("--train-samples")) cfg.dataset.train_samples = f.train_samples;
  if (given("--test-samples")) cfg.dataset.test_samples = f.test_samples;
  if (given("--classes")) cfg.dataset.classes = f.classes;
  if (given("--class-sep")) cfg.dataset.class_sep = static_cast<float>(f.class_sep);
  if (given("--hidden")) {
    cfg.model.hidden.clear();
    for (const auto& tok : split_csv(f.hidden)) cfg.model.hidden.push_back(std::stoul(tok));
  }
  if (given("--out")) cfg.out_dir = f.out;
  if (given("--threads")) cfg.fed.threads = f.threads;
  return cfg;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Block-wise 8-bit Adam state quantization and a federated learning simulator"};
  app.require_subcommand(1);

  RunFlags run_flags;
  auto* run = app.add_subcommand("run", "run one federated experiment");
  run->add_option("--from-manifest", run_flags.from_manifest,
                  "reproduce a run from its manifest.json");
  add_run_flags(run, run_flags);

  RunFlags sweep_flags;
  std::string sweep_axis, sweep_values;
  auto* sweep = app.add_subcommand("sweep", "run one experiment per axis value");
  sweep->add_option("--axis", sweep_axis, "mode|alpha|block-size|lr|seed")->required();
  sweep->add_option("--values", sweep_values, "comma-separated axis values")->required();
  add_run_flags(sweep, sweep_flags);

  auto* analysis = app.add_subcommand("analysis", "standalone studies");
  analysis->require_subcommand(1);

  std::size_t prec_n = 3000;
  double prec_lo = 1e-7, prec_hi = 1.0;
  uint32_t prec_block = 64;
  uint64_t prec_seed = 42;
  std::string prec_out = "out/analysis";
  auto* precision = analysis->add_subcommand("precision", "log-space vs dynamic-tree error");
  precision->add_option("--n", prec_n, "sample count");
  precision->add_option("--lo", prec_lo, "range lower bound (> 0)");
  precision->add_option("--hi", prec_hi, "range upper bound");
  precision->add_option("--block-size", prec_block, "quantization block size");
  precision->add_option("--seed", prec_seed, "random seed");
  precision->add_option("--out", prec_out, "output directory");

  std::string scaling_params = "10e6,100e6,1e9,10e9";
  uint32_t scaling_block = 64;
  std::string scaling_out = "out/analysis";
  auto* scaling = analysis->add_subcommand("scaling", "projected optimizer memory table");
  scaling->add_option("--params", scaling_params, "comma-separated parameter counts");
  scaling->add_option("--block-size", scaling_block, "quantization block size");
  scaling->add_option("--out", scaling_out, "output directory");

  RunFlags hist_flags;
  int hist_steps = 50;
  auto* histograms = analysis->add_subcommand("histograms", "optimizer state distributions");
  histograms->add_option("--steps", hist_steps, "warmup mini-batch steps");
  add_run_flags(histograms, hist_flags);

  CLI11_PARSE(app, argc, argv);

  try {
    if (run->parsed()) {
      const auto cfg = resolve_config(run, run_flags);
      const auto out = qfl::cli::run_experiment(cfg);
      std::printf("best_accuracy %.4f (round %d)  final_accuracy %.4f\n", out.result.best_accuracy,
                  out.result.best_round, out.result.final_accuracy);
      std::printf("state_bytes_per_client %llu  compression_ratio %.3f\n",
                  static_cast<unsigned long long>(out.result.state_bytes_per_client),
                  out.result.compression_ratio);
      std::printf("wrote %s\n", out.metrics_path.string().c_str());
    } else if (sweep->parsed()) {
      const auto cfg = resolve_config(sweep, sweep_flags);
      qfl::cli::SweepSpec spec{sweep_axis, split_csv(sweep_values)};
      const auto out = qfl::cli::run_sweep(cfg, spec);
      std::printf("wrote %s\n", out.summary_tsv.string().c_str());
    } else if (precision->parsed()) {
      const auto path =
          qfl::cli::run_analysis_precision(prec_out, prec_seed, prec_n, prec_lo, prec_hi, prec_block);
      std::printf("wrote %s\n", path.string().c_str());
    } else if (scaling->parsed()) {
      std::vector<uint64_t> counts;
      for (const auto& tok : split_csv(scaling_params)) {
        counts.push_back(static_cast<uint64_t>(std::stod(tok)));
      }
      const auto path = qfl::cli::run_analysis_scaling(scaling_out, counts, scaling_block);
      std::printf("wrote %s\n", path.string().c_str());
    } else if (histograms->parsed()) {
      auto cfg = resolve_config(histograms, hist_flags);
      if (hist_flags.out.empty()) cfg.out_dir = "out/analysis";
      const auto path = qfl::cli::run_analysis_histograms(cfg, hist_steps);
      std::printf("wrote %s\n", path.string().c_str());
    }
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return 0;
}

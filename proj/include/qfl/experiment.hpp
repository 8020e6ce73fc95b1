#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "qfl/analysis.hpp"
#include "qfl/dataset.hpp"
#include "qfl/federated.hpp"

namespace qfl::cli {

// Stream ids for data/model setup; disjoint from client streams and from the
// federated loop's streams.
inline constexpr uint64_t kDataStream = (uint64_t{1} << 32) + 16;
inline constexpr uint64_t kModelInitStream = (uint64_t{1} << 32) + 17;
inline constexpr uint64_t kAnalysisStream = (uint64_t{1} << 32) + 18;

struct DatasetSpec {
  enum class Kind { kSynthetic, kFile };
  Kind kind = Kind::kSynthetic;
  // synthetic
  std::size_t train_samples = 5000;
  std::size_t test_samples = 1000;
  std::size_t features = 80;
  int classes = 10;
  float class_sep = 3.0f;
  // file
  std::string train_path;
  std::string test_path;
};

struct ModelSpec {
  std::vector<std::size_t> hidden = {128, 64};
};

struct ExperimentConfig {
  fed::Config fed;
  DatasetSpec dataset;
  ModelSpec model;
  std::string out_dir = "out";
};

struct LoadedData {
  data::Dataset train;
  data::Dataset test;
};

/// Synthetic data is generated as one pool of train+test rows from the seed's
/// data stream (so both splits share the class geometry); file datasets come
/// from the configured paths.
LoadedData prepare_data(const ExperimentConfig& cfg);

model::MlpModel build_model(const ExperimentConfig& cfg, std::size_t features, int classes);

struct ExperimentOutput {
  fed::RunResult result;
  std::filesystem::path manifest_path;
  std::filesystem::path metrics_path;
  std::filesystem::path summary_path;
};

/// Full run: resolve data + model, write manifest.json (before training),
/// stream metrics.jsonl one self-contained record per round, write
/// summary.json. Metrics and summary contain no wall-clock fields, so
/// identical config + seed reproduces them byte for byte.
ExperimentOutput run_experiment(const ExperimentConfig& cfg, bool quiet = false);

/// Rebuilds the resolved configuration from a manifest written by
/// run_experiment; rerunning it reproduces the original metrics stream.
ExperimentConfig config_from_manifest(const std::string& manifest_path);

/// Reads an ExperimentConfig from a JSON config file (same schema as the
/// manifest's config/dataset/model sections).
ExperimentConfig config_from_json_file(const std::string& config_path);

struct SweepSpec {
  std::string axis;  // mode | alpha | block-size | lr | seed
  std::vector<std::string> values;
};

struct SweepRow {
  std::string value;
  double best_accuracy = 0.0;
  double final_accuracy = 0.0;
  uint64_t state_bytes = 0;
  double compression_ratio = 1.0;
};

struct SweepOutput {
  std::vector<SweepRow> rows;
  std::filesystem::path summary_json;
  std::filesystem::path summary_tsv;
};

/// One run per axis value under <out>/<axis>=<value>/. The seed axis varies
/// seeds and appends a mean +/- std aggregate; every other axis holds the
/// base seed fixed.
SweepOutput run_sweep(const ExperimentConfig& base, const SweepSpec& sweep, bool quiet = false);

/// Appendix-style study runners; each writes JSON + TSV reports into out_dir.
std::filesystem::path run_analysis_precision(const std::string& out_dir, uint64_t seed,
                                             std::size_t n, double lo, double hi,
                                             uint32_t block_size);
std::filesystem::path run_analysis_scaling(const std::string& out_dir,
                                           const std::vector<uint64_t>& param_counts,
                                           uint32_t block_size);

struct WarmupResult {
  optim::AdamState state;
  float max_abs_gradient = 0.0f;
  float max_abs_momentum = 0.0f;
};

/// Centralized FP32 warmup on the synthetic task: `steps` mini-batch Adam
/// steps, returning the optimizer state for distribution inspection.
WarmupResult warmup_state(const ExperimentConfig& cfg, int steps);

std::filesystem::path run_analysis_histograms(const ExperimentConfig& cfg, int steps);

}  // namespace qfl::cli

#include "qfl/experiment.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <ctime>
#include <fstream>
#include <iostream>
#include <numeric>
#include <sstream>
#include <stdexcept>

#include <json.hpp>

namespace qfl::cli {

namespace {

using json = nlohmann::ordered_json;

std::string timestamp_utc() {
  const std::time_t now = std::time(nullptr);
  std::tm tm{};
  gmtime_r(&now, &tm);
  char buf[32];
  std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

constexpr const char* kVersionTag = "qfl-0.1.0";

json config_to_json(const ExperimentConfig& cfg) {
  json j;
  json f;
  f["rounds"] = cfg.fed.rounds;
  f["clients"] = cfg.fed.num_clients;
  f["per_round"] = cfg.fed.clients_per_round;
  f["epochs"] = cfg.fed.local_epochs;
  f["batch"] = cfg.fed.batch_size;
  f["mode"] = optim::mode_name(cfg.fed.mode);
  f["lr"] = cfg.fed.hyper.lr;
  f["beta1"] = cfg.fed.hyper.beta1;
  f["beta2"] = cfg.fed.hyper.beta2;
  f["eps"] = cfg.fed.hyper.eps;
  f["block_size"] = cfg.fed.block_size;
  f["seed"] = cfg.fed.seed;
  if (cfg.fed.alpha.iid) {
    f["alpha"] = "iid";
  } else {
    f["alpha"] = cfg.fed.alpha.value;
  }
  f["threads"] = cfg.fed.threads;
  j["config"] = f;

  json d;
  d["kind"] = cfg.dataset.kind == DatasetSpec::Kind::kSynthetic ? "synthetic" : "file";
  if (cfg.dataset.kind == DatasetSpec::Kind::kSynthetic) {
    d["train_samples"] = cfg.dataset.train_samples;
    d["test_samples"] = cfg.dataset.test_samples;
    d["features"] = cfg.dataset.features;
    d["classes"] = cfg.dataset.classes;
    d["class_sep"] = cfg.dataset.class_sep;
  } else {
    d["train_path"] = cfg.dataset.train_path;
    d["test_path"] = cfg.dataset.test_path;
  }
  j["dataset"] = d;
  j["model"] = json{{"hidden", cfg.model.hidden}};
  return j;
}

void apply_config_json(const json& j, ExperimentConfig& cfg) {
  if (j.contains("config")) {
    const auto& f = j.at("config");
    if (f.contains("rounds")) cfg.fed.rounds = f.at("rounds").get<int>();
    if (f.contains("clients")) cfg.fed.num_clients = f.at("clients").get<int>();
    if (f.contains("per_round")) cfg.fed.clients_per_round = f.at("per_round").get<int>();
    if (f.contains("epochs")) cfg.fed.local_epochs = f.at("epochs").get<int>();
    if (f.contains("batch")) cfg.fed.batch_size = f.at("batch").get<int>();
    if (f.contains("mode")) cfg.fed.mode = optim::mode_from_name(f.at("mode").get<std::string>());
    if (f.contains("lr")) cfg.fed.hyper.lr = f.at("lr").get<float>();
    if (f.contains("beta1")) cfg.fed.hyper.beta1 = f.at("beta1").get<float>();
    if (f.contains("beta2")) cfg.fed.hyper.beta2 = f.at("beta2").get<float>();
    if (f.contains("eps")) cfg.fed.hyper.eps = f.at("eps").get<float>();
    if (f.contains("block_size")) cfg.fed.block_size = f.at("block_size").get<uint32_t>();
    if (f.contains("seed")) cfg.fed.seed = f.at("seed").get<uint64_t>();
    if (f.contains("alpha")) {
      const auto& a = f.at("alpha");
      if (a.is_string() && a.get<std::string>() == "iid") {
        cfg.fed.alpha = data::DirichletAlpha::iid_split();
      } else {
        cfg.fed.alpha = data::DirichletAlpha::concentration(a.get<double>());
      }
    }
    if (f.contains("threads")) cfg.fed.threads = f.at("threads").get<int>();
  }
  if (j.contains("dataset")) {
    const auto& d = j.at("dataset");
    if (d.contains("kind")) {
      const auto kind = d.at("kind").get<std::string>();
      if (kind == "synthetic") {
        cfg.dataset.kind = DatasetSpec::Kind::kSynthetic;
      } else if (kind == "file") {
        cfg.dataset.kind = DatasetSpec::Kind::kFile;
      } else {
        throw std::invalid_argument("dataset.kind must be synthetic or file");
      }
    }
    if (d.contains("train_samples")) cfg.dataset.train_samples = d.at("train_samples").get<std::size_t>();
    if (d.contains("test_samples")) cfg.dataset.test_samples = d.at("test_samples").get<std::size_t>();
    if (d.contains("features")) cfg.dataset.features = d.at("features").get<std::size_t>();
    if (d.contains("classes")) cfg.dataset.classes = d.at("classes").get<int>();
    if (d.contains("class_sep")) cfg.dataset.class_sep = d.at("class_sep").get<float>();
    if (d.contains("train_path")) cfg.dataset.train_path = d.at("train_path").get<std::string>();
    if (d.contains("test_path")) cfg.dataset.test_path = d.at("test_path").get<std::string>();
  }
  if (j.contains("model") && j.at("model").contains("hidden")) {
    cfg.model.hidden = j.at("model").at("hidden").get<std::vector<std::size_t>>();
  }
}

json round_to_json(const fed::RoundMetrics& rm) {
  json row;
  row["round"] = rm.round;
  row["test_accuracy"] = rm.test_accuracy;
  row["test_loss"] = rm.test_loss;
  row["selected_clients"] = rm.selected_clients;
  row["per_client_state_bytes"] = rm.per_client_state_bytes;
  row["per_client_steps"] = rm.per_client_steps;
  return row;
}

void write_text_file(const std::filesystem::path& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open for writing: " + path.string());
  out << content;
  if (!out) throw std::runtime_error("write failed: " + path.string());
}

}  // namespace

LoadedData prepare_data(const ExperimentConfig& cfg) {
  LoadedData out;
  if (cfg.dataset.kind == DatasetSpec::Kind::kFile) {
    if (cfg.dataset.train_path.empty() || cfg.dataset.test_path.empty()) {
      throw std::invalid_argument("file dataset needs train_path and test_path");
    }
    out.train = data::load_flat_file(cfg.dataset.train_path);
    out.test = data::load_flat_file(cfg.dataset.test_path);
    if (out.train.num_classes != out.test.num_classes ||
        out.train.features() != out.test.features()) {
      throw std::invalid_argument("train/test datasets disagree on shape");
    }
    return out;
  }

  const std::size_t total = cfg.dataset.train_samples + cfg.dataset.test_samples;
  if (cfg.dataset.train_samples == 0 || cfg.dataset.test_samples == 0) {
    throw std::invalid_argument("synthetic dataset needs train and test samples");
  }
  nd::RngStream rng(cfg.fed.seed, kDataStream);
  const data::Dataset pool = data::generate_synthetic(rng, total, cfg.dataset.features,
                                                      cfg.dataset.classes, cfg.dataset.class_sep);
  const std::size_t features = pool.features();
  auto slice = [&](std::size_t begin, std::size_t count) {
    data::Dataset ds;
    ds.num_classes = pool.num_classes;
    ds.x = nd::DenseTensor({count, features});
    std::copy_n(&pool.x.data[begin * features], count * features, ds.x.data.begin());
    ds.y.assign(pool.y.begin() + static_cast<std::ptrdiff_t>(begin),
                pool.y.begin() + static_cast<std::ptrdiff_t>(begin + count));
    return ds;
  };
  out.train = slice(0, cfg.dataset.train_samples);
  out.test = slice(cfg.dataset.train_samples, cfg.dataset.test_samples);
  return out;
}

model::MlpModel build_model(const ExperimentConfig& cfg, std::size_t features, int classes) {
  std::vector<std::size_t> dims;
  dims.push_back(features);
  for (std::size_t h : cfg.model.hidden) dims.push_back(h);
  dims.push_back(static_cast<std::size_t>(classes));
  nd::RngStream rng(cfg.fed.seed, kModelInitStream);
  return model::MlpModel::he_init(dims, rng);
}

ExperimentOutput run_experiment(const ExperimentConfig& cfg, bool quiet) {
  cfg.fed.validate();
  std::filesystem::create_directories(cfg.out_dir);

  const LoadedData loaded = prepare_data(cfg);
  model::MlpModel initial = build_model(cfg, loaded.train.features(), loaded.train.num_classes);

  ExperimentOutput out;
  out.manifest_path = std::filesystem::path(cfg.out_dir) / "manifest.json";
  out.metrics_path = std::filesystem::path(cfg.out_dir) / "metrics.jsonl";
  out.summary_path = std::filesystem::path(cfg.out_dir) / "summary.json";

  json manifest = config_to_json(cfg);
  manifest["version"] = kVersionTag;
  manifest["started_at"] = timestamp_utc();
  manifest["outputs"] = json{{"metrics", "metrics.jsonl"}, {"summary", "summary.json"}};
  write_text_file(out.manifest_path, manifest.dump(2) + "\n");

  std::ofstream metrics(out.metrics_path, std::ios::binary);
  if (!metrics) throw std::runtime_error("cannot open " + out.metrics_path.string());

  const auto on_round = [&](const fed::RoundMetrics& rm) {
    metrics << round_to_json(rm).dump() << '\n';
    metrics.flush();
    if (!quiet) {
      std::printf("round %3d  acc %.4f  loss %.4f  state_bytes %llu  (%.0f ms)\n", rm.round,
                  rm.test_accuracy, rm.test_loss,
                  static_cast<unsigned long long>(rm.per_client_state_bytes), rm.wall_ms);
      std::fflush(stdout);
    }
  };

  out.result = fed::run_federated(cfg.fed, loaded.train, loaded.test, initial, on_round);
  metrics.close();

  json summary;
  summary["best_accuracy"] = out.result.best_accuracy;
  summary["best_round"] = out.result.best_round;
  summary["final_accuracy"] = out.result.final_accuracy;
  summary["final_loss"] = out.result.final_loss;
  summary["rounds"] = cfg.fed.rounds;
  summary["mode"] = optim::mode_name(cfg.fed.mode);
  summary["state_bytes_per_client"] = out.result.state_bytes_per_client;
  summary["compression_ratio"] = out.result.compression_ratio;
  write_text_file(out.summary_path, summary.dump(2) + "\n");
  return out;
}

ExperimentConfig config_from_manifest(const std::string& manifest_path) {
  std::ifstream in(manifest_path);
  if (!in) throw std::runtime_error("cannot open manifest: " + manifest_path);
  json j;
  in >> j;
  ExperimentConfig cfg;
  apply_config_json(j, cfg);
  return cfg;
}

ExperimentConfig config_from_json_file(const std::string& config_path) {
  return config_from_manifest(config_path);
}

SweepOutput run_sweep(const ExperimentConfig& base, const SweepSpec& sweep, bool quiet) {
  if (sweep.values.empty()) throw std::invalid_argument("sweep: empty value list");
  const bool seed_axis = sweep.axis == "seed";

  SweepOutput out;
  std::filesystem::create_directories(base.out_dir);

  for (const auto& value : sweep.values) {
    ExperimentConfig cfg = base;
    if (sweep.axis == "mode") {
      cfg.fed.mode = optim::mode_from_name(value);
    } else if (sweep.axis == "alpha") {
      cfg.fed.alpha = value == "iid" ? data::DirichletAlpha::iid_split()
                                     : data::DirichletAlpha::concentration(std::stod(value));
    } else if (sweep.axis == "block-size") {
      cfg.fed.block_size = static_cast<uint32_t>(std::stoul(value));
    } else if (sweep.axis == "lr") {
      cfg.fed.hyper.lr = std::stof(value);
    } else if (seed_axis) {
      cfg.fed.seed = std::stoull(value);
    } else {
      throw std::invalid_argument("sweep: unknown axis " + sweep.axis);
    }
    cfg.out_dir = (std::filesystem::path(base.out_dir) / (sweep.axis + "=" + value)).string();
    if (!quiet) std::printf("--- sweep %s = %s ---\n", sweep.axis.c_str(), value.c_str());
    const auto run = run_experiment(cfg, quiet);
    SweepRow row;
    row.value = value;
    row.best_accuracy = run.result.best_accuracy;
    row.final_accuracy = run.result.final_accuracy;
    row.state_bytes = run.result.state_bytes_per_client;
    row.compression_ratio = run.result.compression_ratio;
    out.rows.push_back(row);
  }

  json j;
  j["axis"] = sweep.axis;
  json rows = json::array();
  for (const auto& r : out.rows) {
    rows.push_back(json{{"value", r.value},
                        {"best_accuracy", r.best_accuracy},
                        {"final_accuracy", r.final_accuracy},
                        {"state_bytes", r.state_bytes},
                        {"compression_ratio", r.compression_ratio}});
  }
  j["rows"] = rows;

  std::ostringstream tsv;
  tsv << sweep.axis << "\tbest_accuracy\tfinal_accuracy\tstate_bytes\tcompression_ratio\n";
  for (const auto& r : out.rows) {
    tsv << r.value << '\t' << r.best_accuracy << '\t' << r.final_accuracy << '\t'
        << r.state_bytes << '\t' << r.compression_ratio << '\n';
  }

  if (seed_axis && out.rows.size() > 1) {
    auto mean_std = [&](auto getter) {
      double mean = 0.0;
      for (const auto& r : out.rows) mean += getter(r);
      mean /= static_cast<double>(out.rows.size());
      double var = 0.0;
      for (const auto& r : out.rows) {
        const double d = getter(r) - mean;
        var += d * d;
      }
      var /= static_cast<double>(out.rows.size() - 1);  // sample std across seeds
      return std::pair<double, double>(mean, std::sqrt(var));
    };
    const auto [best_mean, best_std] = mean_std([](const SweepRow& r) { return r.best_accuracy; });
    const auto [final_mean, final_std] =
        mean_std([](const SweepRow& r) { return r.final_accuracy; });
    j["aggregate"] = json{{"best_accuracy_mean", best_mean},
                          {"best_accuracy_std", best_std},
                          {"final_accuracy_mean", final_mean},
                          {"final_accuracy_std", final_std}};
    tsv << "mean±std\t" << best_mean << "±" << best_std << '\t' << final_mean << "±" << final_std
        << "\t\t\n";
  }

  out.summary_json = std::filesystem::path(base.out_dir) / "sweep_summary.json";
  out.summary_tsv = std::filesystem::path(base.out_dir) / "sweep_summary.tsv";
  write_text_file(out.summary_json, j.dump(2) + "\n");
  write_text_file(out.summary_tsv, tsv.str());
  return out;
}

std::filesystem::path run_analysis_precision(const std::string& out_dir, uint64_t seed,
                                             std::size_t n, double lo, double hi,
                                             uint32_t block_size) {
  std::filesystem::create_directories(out_dir);
  nd::RngStream rng(seed, kAnalysisStream);
  const auto report = analysis::precision_study(rng, n, lo, hi, block_size);

  auto scheme_json = [](const analysis::SchemeError& s) {
    json decades = json::array();
    for (const auto& [d, err] : s.per_decade) {
      decades.push_back(json{{"decade", d}, {"mean_relative_error", err}});
    }
    return json{{"scheme", s.scheme},
                {"mean_relative_error", s.mean_relative_error},
                {"samples", s.samples},
                {"per_decade", decades}};
  };
  json j;
  j["n"] = report.n;
  j["lo"] = report.lo;
  j["hi"] = report.hi;
  j["block_size"] = report.block_size;
  j["log_space"] = scheme_json(report.log_space);
  j["dynamic_tree"] = scheme_json(report.dynamic_tree);
  j["error_ratio"] =
      report.dynamic_tree.mean_relative_error / std::max(report.log_space.mean_relative_error, 1e-300);

  const auto json_path = std::filesystem::path(out_dir) / "precision.json";
  write_text_file(json_path, j.dump(2) + "\n");

  std::ostringstream tsv;
  tsv << "scheme\tmean_relative_error\n";
  tsv << report.log_space.scheme << '\t' << report.log_space.mean_relative_error << '\n';
  tsv << report.dynamic_tree.scheme << '\t' << report.dynamic_tree.mean_relative_error << '\n';
  tsv << "\ndecade\tlog_space\tdynamic_tree\n";
  for (std::size_t i = 0; i < report.log_space.per_decade.size(); ++i) {
    tsv << report.log_space.per_decade[i].first << '\t' << report.log_space.per_decade[i].second;
    if (i < report.dynamic_tree.per_decade.size()) {
      tsv << '\t' << report.dynamic_tree.per_decade[i].second;
    }
    tsv << '\n';
  }
  write_text_file(std::filesystem::path(out_dir) / "precision.tsv", tsv.str());
  return json_path;
}

std::filesystem::path run_analysis_scaling(const std::string& out_dir,
                                           const std::vector<uint64_t>& param_counts,
                                           uint32_t block_size) {
  std::filesystem::create_directories(out_dir);
  const auto rows = analysis::scaling_projection(param_counts, block_size);
  json j = json::array();
  std::ostringstream tsv;
  tsv << "params\tfp32_mib\tquantized_mib\tratio\n";
  for (const auto& r : rows) {
    j.push_back(json{{"params", r.params},
                     {"fp32_mib", r.fp32_mib},
                     {"quantized_mib", r.quantized_mib},
                     {"ratio", r.ratio}});
    char line[128];
    std::snprintf(line, sizeof(line), "%llu\t%.2f\t%.2f\t%.3f\n",
                  static_cast<unsigned long long>(r.params), r.fp32_mib, r.quantized_mib, r.ratio);
    tsv << line;
  }
  const auto json_path = std::filesystem::path(out_dir) / "scaling.json";
  write_text_file(json_path, json{{"block_size", block_size}, {"rows", j}}.dump(2) + "\n");
  write_text_file(std::filesystem::path(out_dir) / "scaling.tsv", tsv.str());
  return json_path;
}

WarmupResult warmup_state(const ExperimentConfig& cfg, int steps) {
  if (steps < 1) throw std::invalid_argument("warmup_state: steps must be >= 1");
  const LoadedData loaded = prepare_data(cfg);
  model::MlpModel m = build_model(cfg, loaded.train.features(), loaded.train.num_classes);
  auto params = m.parameters();
  std::vector<std::size_t> sizes;
  for (const auto* p : params) sizes.push_back(p->size());

  WarmupResult out{optim::AdamState(sizes, optim::Mode::kFp32, cfg.fed.hyper, cfg.fed.block_size),
                   0.0f, 0.0f};

  nd::RngStream rng(cfg.fed.seed, kAnalysisStream);
  const std::size_t n = loaded.train.size();
  const std::size_t features = loaded.train.features();
  const std::size_t batch = static_cast<std::size_t>(cfg.fed.batch_size);
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});

  int done = 0;
  while (done < steps) {
    rng.shuffle(order);
    for (std::size_t start = 0; start < n && done < steps; start += batch) {
      const std::size_t count = std::min(batch, n - start);
      nd::DenseTensor bx({count, features});
      std::vector<int> by(count);
      for (std::size_t r = 0; r < count; ++r) {
        const std::size_t idx = order[start + r];
        std::copy_n(&loaded.train.x.data[idx * features], features, &bx.data[r * features]);
        by[r] = loaded.train.y[idx];
      }
      const auto lg = model::loss_and_grads(m, bx, by);
      for (const auto& g : lg.grads) {
        for (float v : g.data) out.max_abs_gradient = std::max(out.max_abs_gradient, std::abs(v));
      }
      out.state.step(params, lg.grads);
      ++done;
    }
  }
  for (std::size_t t = 0; t < out.state.num_tensors(); ++t) {
    for (float v : out.state.momentum(t)) {
      out.max_abs_momentum = std::max(out.max_abs_momentum, std::abs(v));
    }
  }
  return out;
}

std::filesystem::path run_analysis_histograms(const ExperimentConfig& cfg, int steps) {
  std::filesystem::create_directories(cfg.out_dir);
  const auto warm = warmup_state(cfg, steps);
  const auto [m_hist, v_hist] = analysis::state_histograms(warm.state);

  auto hist_tsv = [](const analysis::Histogram& h, const char* edge_label) {
    std::ostringstream tsv;
    tsv << edge_label << "_lo\t" << edge_label << "_hi\tcount\n";
    for (std::size_t b = 0; b < h.counts.size(); ++b) {
      tsv << h.edges[b] << '\t' << h.edges[b + 1] << '\t' << h.counts[b] << '\n';
    }
    return tsv.str();
  };
  write_text_file(std::filesystem::path(cfg.out_dir) / "m_hist.tsv", hist_tsv(m_hist, "value"));
  std::ostringstream v_tsv;
  v_tsv << "underflow_zeros\t" << v_hist.underflow << '\n' << hist_tsv(v_hist, "log10");
  write_text_file(std::filesystem::path(cfg.out_dir) / "v_hist.tsv", v_tsv.str());

  auto hist_json = [](const analysis::Histogram& h) {
    return json{{"edges", h.edges},       {"counts", h.counts},   {"underflow", h.underflow},
                {"total", h.total},       {"data_min", h.data_min}, {"data_max", h.data_max}};
  };
  json j;
  j["steps"] = steps;
  j["max_abs_gradient"] = warm.max_abs_gradient;
  j["max_abs_momentum"] = warm.max_abs_momentum;
  j["momentum"] = hist_json(m_hist);
  j["variance"] = hist_json(v_hist);
  const auto path = std::filesystem::path(cfg.out_dir) / "histograms.json";
  write_text_file(path, j.dump(2) + "\n");
  return path;
}

}  // namespace qfl::cli

#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "l2lws/baselines.hpp"
#include "l2lws/data.hpp"
#include "l2lws/metrics.hpp"
#include "l2lws/model.hpp"
#include "l2lws/trainer.hpp"

namespace l2lws::experiment {

struct DataConfig {
  std::string name;
  // Synthetic task; when set, the file paths below are ignored.
  std::optional<data::SyntheticTaskSpec> synthetic;
  // Synthetic data follows the run seed unless the config sets one.
  bool synthetic_seed_fixed = false;
  std::string u_path, v_path, val_path, test_path;
  data::LabelSet labels;
  bool mask = false;
  std::string lexicon_path;
  std::size_t min_count = 2;
  std::string embeddings_path;
  // Initialize embeddings from U+V co-occurrence instead of a file.
  bool cooccurrence_embeddings = false;
};

struct ExperimentConfig {
  std::vector<baselines::Method> methods;
  std::vector<std::uint64_t> seeds{0};
  model::ModelConfig architecture;
  train::TrainPlan plan;
  std::optional<std::size_t> finetune_steps;
  DataConfig data;
  // Extra sweep over prefixes of U for learning curves.
  std::vector<double> u_fractions;
  bool semeval_pn = false;
  std::size_t jobs = 1;
};

// Throws ConfigError on unknown keys or bad values.
ExperimentConfig parse_config(const nlohmann::json& j);
ExperimentConfig load_config(const std::string& path);
nlohmann::json to_json(const ExperimentConfig& config);

nlohmann::json plan_to_json(const train::TrainPlan& plan);

// The splits of one seed, encoded through one vocabulary.
struct PreparedData {
  data::Vocabulary vocab;
  data::EncodedSet u, v, val, test;
  std::size_t num_classes = 0;
  // Row-major [vocab x embedding_dim] initial table; empty when unused.
  std::vector<double> embeddings;
};

PreparedData prepare_data(const ExperimentConfig& config, std::uint64_t seed);

// Hex FNV-1a of everything a run depends on except the method.
std::string config_hash(const ExperimentConfig& config, std::uint64_t seed,
                        double u_fraction);

struct RunSpec {
  baselines::Method method = baselines::Method::L2LWS;
  std::uint64_t seed = 0;
  double u_fraction = 1.0;
};

struct RunOutcome {
  RunSpec spec;
  std::string dataset;
  double test_macro_f1 = 0.0;
  std::size_t steps = 0;
  double wallclock_s = 0.0;
  std::vector<train::MetricsRecord> records;
  // Reference validation F1 of the weak annotator on this seed's data.
  double wa_val_macro_f1 = 0.0;
  // Weak instances consumed when validation F1 first reached the WA level.
  std::optional<std::size_t> weak_to_wa;
  std::string config_hash;
  std::string metrics_csv;
  std::optional<model::DualModel> model;
  std::optional<std::string> error;
};

// Trains and scores one method; never throws for a failing run, the message
// lands in `error` instead.
RunOutcome run_one(const ExperimentConfig& config, const PreparedData& data,
                   const RunSpec& spec, bool keep_model = false);

struct ExperimentReport {
  std::vector<RunOutcome> runs;
  std::size_t failures = 0;
  nlohmann::json to_json() const;
};

// Every (method x seed), plus the u_fractions sweep. Writes under `out`:
//   runs/<method>_seed<seed>[_u<fraction>].csv   metrics per run
//   summary.tsv, aggregate.tsv, learning_curve.tsv, report.json
ExperimentReport run_experiment(const ExperimentConfig& config,
                                const std::filesystem::path& out);

// Metrics CSV: step,mode,loss_t,loss_c,val_loss,val_macro_f1,mean_conf,weak_seen
// with NaN written as an empty field.
void write_metrics_csv(std::ostream& out, const std::vector<train::MetricsRecord>& records);
std::string format_number(double value);

struct CurveOutput {
  std::size_t series = 0;
  std::size_t rows = 0;
  std::vector<std::string> warnings;
};

// Tidy long-format curves.tsv built from metrics CSVs (values copied
// verbatim) plus plot_curves.py. Throws SchemaError on missing columns.
CurveOutput emit_curves(const std::vector<std::filesystem::path>& csvs,
                        const std::filesystem::path& out_dir);

}  // namespace l2lws::experiment

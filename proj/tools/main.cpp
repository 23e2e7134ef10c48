#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "l2lws/checkpoint.hpp"
#include "l2lws/data.hpp"
#include "l2lws/errors.hpp"
#include "l2lws/experiment.hpp"
#include "l2lws/metrics.hpp"
#include "l2lws/weak_annotation.hpp"

namespace fs = std::filesystem;
using namespace l2lws;
using nlohmann::json;

namespace {

std::vector<std::string> split_labels(const std::string& s) {
  std::vector<std::string> out;
  std::stringstream in(s);
  for (std::string item; std::getline(in, item, ',');)
    if (!item.empty()) out.push_back(item);
  return out;
}

struct Common {
  std::string config;
  std::uint64_t seed = 0;
  bool seed_set = false;
  std::string out = "out";
  std::string method;
  bool semeval_pn = false;
};

experiment::ExperimentConfig load(const Common& c) {
  if (c.config.empty()) throw ConfigError("--config is required");
  auto cfg = experiment::load_config(c.config);
  if (c.seed_set) cfg.seeds = {c.seed};
  if (!c.method.empty()) cfg.methods = {baselines::parse_method(c.method)};
  if (c.semeval_pn) cfg.semeval_pn = true;
  return cfg;
}

int cmd_annotate(const std::string& lexicon, const std::string& input, const std::string& output,
                 const std::string& labels, bool mask) {
  data::LoadOptions opts;
  if (!labels.empty()) opts.labels.names = split_labels(labels);
  opts.mask = mask;
  const auto lex = weak::Lexicon::load_tsv(lexicon, opts.labels.size());
  auto ds = data::load_jsonl(input, opts);
  std::vector<std::vector<std::string>> sentences;
  sentences.reserve(ds.size());
  for (const auto& inst : ds) sentences.push_back(inst.tokens);
  std::size_t failed = 0;
  weak::annotate_corpus(sentences, lex, [&](weak::AnnotationResult&& r) {
    if (r.label) {
      ds[r.index].weak_label = std::move(*r.label);
    } else {
      ++failed;
      std::cerr << input << ": instance " << ds[r.index].id << ": " << r.error << "\n";
    }
  });
  data::save_jsonl(output, ds, opts.labels);
  std::cout << "annotated " << ds.size() - failed << " of " << ds.size() << " instances\n";
  return failed == 0 ? 0 : 1;
}

int cmd_train(const Common& c) {
  auto cfg = load(c);
  if (cfg.methods.size() != 1) throw ConfigError("train needs exactly one method (--method)");
  const auto seed = cfg.seeds.front();
  const auto prepared = experiment::prepare_data(cfg, seed);
  const experiment::RunSpec spec{cfg.methods.front(), seed, 1.0};
  auto r = experiment::run_one(cfg, prepared, spec, true);
  if (r.error) throw std::runtime_error(*r.error);
  fs::create_directories(c.out);
  std::ofstream(fs::path(c.out) / "metrics.csv", std::ios::binary) << r.metrics_csv;
  std::ofstream summary(fs::path(c.out) / "summary.tsv", std::ios::binary);
  summary << "method\tdataset\tseed\tmacro_f1\tsteps\twallclock_s\n"
          << baselines::method_name(spec.method) << '\t' << r.dataset << '\t' << seed << '\t'
          << experiment::format_number(r.test_macro_f1) << '\t' << r.steps << '\t'
          << experiment::format_number(r.wallclock_s) << '\n';
  if (r.model) {
    json meta{{"method", std::string(baselines::method_name(spec.method))},
              {"seed", seed},
              {"labels", cfg.data.labels.names},
              {"mask", cfg.data.mask},
              {"vocabulary", prepared.vocab.tokens()},
              {"config_hash", r.config_hash}};
    model::save_checkpoint((fs::path(c.out) / "model.ckpt").string(), *r.model, meta);
  }
  std::cout << baselines::method_name(spec.method) << " seed " << seed
            << " test macro_f1=" << experiment::format_number(r.test_macro_f1) << "\n";
  return 0;
}

int cmd_evaluate(const std::string& checkpoint, const std::string& dataset, bool pn) {
  const auto ckpt = model::load_checkpoint(checkpoint);
  const auto& meta = ckpt.metadata;
  data::LoadOptions opts;
  if (meta.contains("labels")) opts.labels.names = meta.at("labels").get<std::vector<std::string>>();
  opts.mask = meta.value("mask", false);
  if (!meta.contains("vocabulary")) throw InputError(checkpoint + ": no vocabulary in metadata");
  const auto vocab =
      data::Vocabulary::from_tokens(meta.at("vocabulary").get<std::vector<std::string>>());
  const auto ds = data::load_jsonl(dataset, opts);
  data::require_true_labels(ds, opts.labels.size());
  const auto encoded =
      data::encode_dataset(ds, vocab, ckpt.model.config().min_sequence_length());
  const auto ev = metrics::evaluate(ckpt.model, encoded, pn);
  json out{{"macro_f1", ev.macro_f1}, {"mean_loss", ev.mean_loss}, {"instances", encoded.size()}};
  json cm = json::array();
  for (std::size_t g = 0; g < ev.confusion.num_classes(); ++g) {
    json row = json::array();
    for (std::size_t p = 0; p < ev.confusion.num_classes(); ++p) row.push_back(ev.confusion.count(g, p));
    cm.push_back(row);
  }
  out["confusion"] = cm;
  std::cout << out.dump(2) << "\n";
  return 0;
}

int cmd_experiment(const Common& c, std::size_t jobs) {
  auto cfg = load(c);
  if (jobs > 0) cfg.jobs = jobs;
  const auto report = experiment::run_experiment(cfg, c.out);
  std::cout << "runs: " << report.runs.size() << ", failures: " << report.failures
            << ", output: " << c.out << "\n";
  return report.failures == 0 ? 0 : 1;
}

int cmd_synth(const Common& c) {
  data::SyntheticTaskSpec spec;
  data::LabelSet labels;
  bool seed_fixed = false;
  if (!c.config.empty()) {
    const auto cfg = experiment::load_config(c.config);
    if (!cfg.data.synthetic) throw ConfigError(c.config + ": no data.synthetic block");
    spec = *cfg.data.synthetic;
    labels = cfg.data.labels;
    seed_fixed = cfg.data.synthetic_seed_fixed;
  }
  if (c.seed_set || !seed_fixed) spec.seed = c.seed;
  spec.validate();
  if (spec.num_classes != labels.size()) {
    labels.names.clear();
    for (std::size_t k = 0; k < spec.num_classes; ++k) labels.names.push_back("class" + std::to_string(k));
  }
  const auto syn = data::generate_synthetic(spec);
  fs::create_directories(c.out);
  const fs::path out(c.out);
  data::save_jsonl((out / "u.jsonl").string(), syn.u, labels);
  data::save_jsonl((out / "v.jsonl").string(), syn.v, labels);
  data::save_jsonl((out / "val.jsonl").string(), syn.val, labels);
  data::save_jsonl((out / "test.jsonl").string(), syn.test, labels);
  std::cout << "wrote " << syn.u.size() << "/" << syn.v.size() << "/" << syn.val.size() << "/"
            << syn.test.size() << " instances to " << c.out << "\n";
  return 0;
}

int cmd_curves(const std::vector<std::string>& csvs, const std::string& out) {
  std::vector<fs::path> paths(csvs.begin(), csvs.end());
  const auto r = experiment::emit_curves(paths, out);
  for (const auto& w : r.warnings) std::cerr << "warning: " << w << "\n";
  std::cout << r.series << " series, " << r.rows << " rows -> " << out << "/curves.tsv\n";
  return 0;
}

void add_common(CLI::App* app, Common& c, bool with_method) {
  app->add_option("--config", c.config, "Experiment config (JSON)");
  app->add_option("--seed", c.seed, "Root seed")->each([&c](const std::string&) { c.seed_set = true; });
  app->add_option("--out", c.out, "Output directory");
  if (with_method) app->add_option("--method", c.method, "WA, WSO, FSO, WS_FT, NLI, L2LWS_ST or L2LWS");
  app->add_flag("--semeval-pn", c.semeval_pn, "Macro-F1 over positive and negative only");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Learning to learn from weak supervision"};
  app.require_subcommand(1);

  std::string lexicon, input, output, labels;
  bool mask = false;
  auto* annotate = app.add_subcommand("annotate", "Weak labels for a corpus from a lexicon");
  annotate->add_option("--lexicon", lexicon, "Lexicon TSV")->required();
  annotate->add_option("--input", input, "Corpus JSONL")->required();
  annotate->add_option("--output", output, "Annotated JSONL")->required();
  annotate->add_option("--labels", labels, "Comma-separated class names");
  annotate->add_flag("--mask", mask, "Mask URLs and user names");

  Common train_opts, exp_opts, synth_opts;
  auto* train = app.add_subcommand("train", "Train one method on one seed");
  add_common(train, train_opts, true);

  std::string checkpoint, dataset;
  bool eval_pn = false;
  auto* evaluate = app.add_subcommand("evaluate", "Score a checkpoint on a dataset");
  evaluate->add_option("--checkpoint", checkpoint)->required();
  evaluate->add_option("--data", dataset, "JSONL with true labels")->required();
  evaluate->add_flag("--semeval-pn", eval_pn, "Macro-F1 over positive and negative only");

  std::size_t jobs = 0;
  auto* exp = app.add_subcommand("experiment", "Run the method x seed grid");
  add_common(exp, exp_opts, true);
  exp->add_option("--jobs", jobs, "Parallel runs (overrides config)");

  auto* synth = app.add_subcommand("synth", "Write the synthetic task as JSONL");
  add_common(synth, synth_opts, false);

  std::vector<std::string> csvs;
  std::string curves_out = "curves";
  auto* curves = app.add_subcommand("curves", "Tidy curve data and a plot script from metrics CSVs");
  curves->add_option("csvs", csvs, "Metrics CSV files")->required();
  curves->add_option("--out", curves_out, "Output directory");

  CLI11_PARSE(app, argc, argv);

  try {
    if (*annotate) return cmd_annotate(lexicon, input, output, labels, mask);
    if (*train) return cmd_train(train_opts);
    if (*evaluate) return cmd_evaluate(checkpoint, dataset, eval_pn);
    if (*exp) return cmd_experiment(exp_opts, jobs);
    if (*synth) return cmd_synth(synth_opts);
    if (*curves) return cmd_curves(csvs, curves_out);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 0;
}

#include "l2lws/experiment.hpp"

#include <algorithm>
#include <atomic>
#include <charconv>
#include <chrono>
#include <cmath>
#include <fstream>
#include <iostream>
#include <map>
#include <mutex>
#include <set>
#include <sstream>
#include <thread>

#include "l2lws/embeddings.hpp"
#include "l2lws/errors.hpp"
#include "l2lws/nn.hpp"
#include "l2lws/weak_annotation.hpp"

namespace l2lws::experiment {

using nlohmann::json;

namespace {

void reject_unknown(const json& j, const std::set<std::string>& allowed,
                    const std::string& where) {
  if (!j.is_object()) throw ConfigError(where + " must be an object");
  for (const auto& [key, value] : j.items()) {
    if (!allowed.count(key)) throw ConfigError("unknown key '" + key + "' in " + where);
  }
}

template <typename T>
T get_or(const json& j, const char* key, T fallback) {
  if (!j.contains(key) || j.at(key).is_null()) return fallback;
  try {
    return j.at(key).get<T>();
  } catch (const json::exception& e) {
    throw ConfigError(std::string("bad value for '") + key + "': " + e.what());
  }
}

data::SyntheticTaskSpec parse_synthetic(const json& j, bool& seed_fixed) {
  reject_unknown(j,
                 {"num_classes", "vocab_size", "indicative_per_class", "signal_rate",
                  "cross_rate", "background_zipf", "min_length", "max_length", "flip_prob",
                  "soft_mix", "u_size", "v_size", "val_size", "test_size", "seed"},
                 "data.synthetic");
  data::SyntheticTaskSpec s;
  s.num_classes = get_or(j, "num_classes", s.num_classes);
  s.vocab_size = get_or(j, "vocab_size", s.vocab_size);
  s.indicative_per_class = get_or(j, "indicative_per_class", s.indicative_per_class);
  s.signal_rate = get_or(j, "signal_rate", s.signal_rate);
  s.cross_rate = get_or(j, "cross_rate", s.cross_rate);
  s.background_zipf = get_or(j, "background_zipf", s.background_zipf);
  s.min_length = get_or(j, "min_length", s.min_length);
  s.max_length = get_or(j, "max_length", s.max_length);
  s.flip_prob = get_or(j, "flip_prob", s.flip_prob);
  s.soft_mix = get_or(j, "soft_mix", s.soft_mix);
  s.u_size = get_or(j, "u_size", s.u_size);
  s.v_size = get_or(j, "v_size", s.v_size);
  s.val_size = get_or(j, "val_size", s.val_size);
  s.test_size = get_or(j, "test_size", s.test_size);
  seed_fixed = j.contains("seed") && !j.at("seed").is_null();
  s.seed = get_or<std::uint64_t>(j, "seed", 0);
  s.validate();
  return s;
}

json synthetic_to_json(const data::SyntheticTaskSpec& s) {
  return {{"num_classes", s.num_classes},
          {"vocab_size", s.vocab_size},
          {"indicative_per_class", s.indicative_per_class},
          {"signal_rate", s.signal_rate},
          {"cross_rate", s.cross_rate},
          {"background_zipf", s.background_zipf},
          {"min_length", s.min_length},
          {"max_length", s.max_length},
          {"flip_prob", s.flip_prob},
          {"soft_mix", s.soft_mix},
          {"u_size", s.u_size},
          {"v_size", s.v_size},
          {"val_size", s.val_size},
          {"test_size", s.test_size},
          {"seed", s.seed}};
}

train::TrainPlan parse_plan(const json& j, std::optional<std::size_t>& finetune) {
  reject_unknown(j,
                 {"ratio", "batch_size", "optimizer", "lr", "beta1", "beta2", "eps",
                  "max_steps", "eval_every", "schedule", "reduction", "clip_norm",
                  "finetune_steps", "seed"},
                 "train");
  train::TrainPlan p;
  if (j.contains("ratio")) {
    const auto r = j.at("ratio").get<std::vector<std::size_t>>();
    if (r.size() != 2) throw ConfigError("train.ratio must be [full, weak]");
    p.ratio_full = r[0];
    p.ratio_weak = r[1];
  }
  p.batch_size = get_or(j, "batch_size", p.batch_size);
  const auto opt = get_or<std::string>(j, "optimizer", "sgd");
  if (opt == "sgd") p.optimizer.kind = train::OptimizerKind::sgd;
  else if (opt == "adam") p.optimizer.kind = train::OptimizerKind::adam;
  else throw ConfigError("unknown optimizer '" + opt + "'");
  p.optimizer.lr = get_or(j, "lr", p.optimizer.lr);
  p.optimizer.beta1 = get_or(j, "beta1", p.optimizer.beta1);
  p.optimizer.beta2 = get_or(j, "beta2", p.optimizer.beta2);
  p.optimizer.eps = get_or(j, "eps", p.optimizer.eps);
  if (j.contains("clip_norm") && !j.at("clip_norm").is_null())
    p.optimizer.clip_norm = j.at("clip_norm").get<double>();
  p.max_steps = get_or(j, "max_steps", p.max_steps);
  p.eval_every = get_or(j, "eval_every", p.eval_every);
  const auto sched = get_or<std::string>(j, "schedule", "random");
  if (sched == "random") p.schedule = train::Schedule::random;
  else if (sched == "interleave") p.schedule = train::Schedule::interleave;
  else throw ConfigError("unknown schedule '" + sched + "'");
  const auto red = get_or<std::string>(j, "reduction", "sum");
  if (red == "sum") p.reduction = nn::Reduction::sum;
  else if (red == "mean") p.reduction = nn::Reduction::mean;
  else throw ConfigError("unknown reduction '" + red + "'");
  if (j.contains("finetune_steps") && !j.at("finetune_steps").is_null())
    finetune = j.at("finetune_steps").get<std::size_t>();
  p.validate();
  return p;
}

DataConfig parse_data(const json& j) {
  reject_unknown(j,
                 {"name", "synthetic", "u", "v", "val", "test", "labels", "mask", "lexicon",
                  "min_count", "embeddings", "cooccurrence_embeddings"},
                 "data");
  DataConfig d;
  if (j.contains("synthetic")) {
    d.synthetic = parse_synthetic(j.at("synthetic"), d.synthetic_seed_fixed);
    data::LabelSet labels;
    if (d.synthetic->num_classes != labels.size()) {
      labels.names.clear();
      for (std::size_t k = 0; k < d.synthetic->num_classes; ++k)
        labels.names.push_back("class" + std::to_string(k));
    }
    d.labels = labels;
    d.name = "synthetic";
  } else {
    d.u_path = get_or<std::string>(j, "u", "");
    d.v_path = get_or<std::string>(j, "v", "");
    d.val_path = get_or<std::string>(j, "val", "");
    d.test_path = get_or<std::string>(j, "test", "");
    if (d.u_path.empty() || d.v_path.empty() || d.test_path.empty())
      throw ConfigError("data needs either 'synthetic' or 'u', 'v' and 'test' paths");
    if (j.contains("labels")) d.labels.names = j.at("labels").get<std::vector<std::string>>();
    if (d.labels.names.size() < 2) throw ConfigError("data.labels needs two or more classes");
    d.name = std::filesystem::path(d.test_path).stem().string();
  }
  d.name = get_or(j, "name", d.name);
  d.mask = get_or(j, "mask", d.mask);
  d.lexicon_path = get_or<std::string>(j, "lexicon", "");
  d.min_count = get_or(j, "min_count", d.min_count);
  d.embeddings_path = get_or<std::string>(j, "embeddings", "");
  d.cooccurrence_embeddings = get_or(j, "cooccurrence_embeddings", false);
  if (d.cooccurrence_embeddings && !d.embeddings_path.empty())
    throw ConfigError("data.embeddings and data.cooccurrence_embeddings are exclusive");
  return d;
}

json data_to_json(const DataConfig& d) {
  json j{{"name", d.name}, {"labels", d.labels.names}, {"mask", d.mask},
         {"min_count", d.min_count}};
  if (d.synthetic) {
    j["synthetic"] = synthetic_to_json(*d.synthetic);
    if (!d.synthetic_seed_fixed) j["synthetic"].erase("seed");
  } else {
    j["u"] = d.u_path;
    j["v"] = d.v_path;
    j["val"] = d.val_path;
    j["test"] = d.test_path;
  }
  if (!d.lexicon_path.empty()) j["lexicon"] = d.lexicon_path;
  if (!d.embeddings_path.empty()) j["embeddings"] = d.embeddings_path;
  if (d.cooccurrence_embeddings) j["cooccurrence_embeddings"] = true;
  return j;
}

std::uint64_t fnv1a(std::string_view s) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::string hex(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

std::string fraction_tag(double f) {
  std::string s = format_number(f);
  return s;
}

std::string run_stem(const RunSpec& s) {
  std::string stem = std::string(baselines::method_name(s.method)) + "_seed" +
                     std::to_string(s.seed);
  if (s.u_fraction != 1.0) stem += "_u" + fraction_tag(s.u_fraction);
  return stem;
}

std::string dataset_label(const ExperimentConfig& c, double u_fraction) {
  if (u_fraction == 1.0) return c.data.name;
  return c.data.name + "@u" + fraction_tag(u_fraction);
}

weak::Lexicon load_lexicon(const ExperimentConfig& c) {
  return weak::Lexicon::load_tsv(c.data.lexicon_path, c.data.labels.size());
}

// Fills in missing weak labels from the lexicon, if there is one.
void annotate_missing(data::Dataset& ds, const std::optional<weak::Lexicon>& lex) {
  if (!lex) return;
  for (auto& inst : ds) {
    if (!inst.weak_label && !inst.tokens.empty()) inst.weak_label = weak::annotate(inst.tokens, *lex);
  }
}

double mean(const std::vector<double>& v) {
  double s = 0;
  for (double x : v) s += x;
  return v.empty() ? 0.0 : s / static_cast<double>(v.size());
}

double sample_std(const std::vector<double>& v) {
  if (v.size() < 2) return 0.0;
  const double m = mean(v);
  double s = 0;
  for (double x : v) s += (x - m) * (x - m);
  return std::sqrt(s / static_cast<double>(v.size() - 1));
}

void write_file(const std::filesystem::path& p, const std::string& content) {
  std::ofstream out(p, std::ios::binary);
  if (!out) throw InputError("cannot write " + p.string());
  out << content;
}

}  // namespace

ExperimentConfig parse_config(const json& j) {
  reject_unknown(j,
                 {"methods", "seeds", "architecture", "train", "data", "u_fractions",
                  "semeval_pn", "jobs"},
                 "config");
  ExperimentConfig c;
  if (j.contains("methods")) {
    for (const auto& m : j.at("methods")) c.methods.push_back(baselines::parse_method(m.get<std::string>()));
  } else {
    c.methods = {baselines::Method::L2LWS};
  }
  if (c.methods.empty()) throw ConfigError("config lists no methods");
  if (j.contains("seeds")) {
    c.seeds = j.at("seeds").get<std::vector<std::uint64_t>>();
  } else if (j.contains("train") && j.at("train").contains("seed")) {
    // A single run seed may also sit in the train block.
    c.seeds = {j.at("train").at("seed").get<std::uint64_t>()};
  }
  if (c.seeds.empty()) throw ConfigError("config lists no seeds");
  if (j.contains("architecture")) {
    try {
      c.architecture = j.at("architecture").get<model::ModelConfig>();
    } catch (const json::exception& e) {
      throw ConfigError(std::string("bad architecture: ") + e.what());
    }
  }
  c.plan = parse_plan(j.value("train", json::object()), c.finetune_steps);
  if (!j.contains("data")) throw ConfigError("config has no data block");
  c.data = parse_data(j.at("data"));
  c.architecture.num_classes = c.data.labels.size();
  if (j.contains("u_fractions")) c.u_fractions = j.at("u_fractions").get<std::vector<double>>();
  for (double f : c.u_fractions)
    if (!(f > 0.0 && f <= 1.0)) throw ConfigError("u_fractions must lie in (0, 1]");
  c.semeval_pn = get_or(j, "semeval_pn", false);
  c.jobs = std::max<std::size_t>(1, get_or<std::size_t>(j, "jobs", 1));
  return c;
}

ExperimentConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw InputError("cannot open config " + path);
  json j;
  try {
    in >> j;
  } catch (const json::parse_error& e) {
    throw ConfigError(path + ": " + e.what());
  }
  return parse_config(j);
}

json plan_to_json(const train::TrainPlan& p) {
  json j{{"ratio", {p.ratio_full, p.ratio_weak}},
         {"batch_size", p.batch_size},
         {"optimizer", p.optimizer.kind == train::OptimizerKind::adam ? "adam" : "sgd"},
         {"lr", p.optimizer.lr},
         {"beta1", p.optimizer.beta1},
         {"beta2", p.optimizer.beta2},
         {"eps", p.optimizer.eps},
         {"max_steps", p.max_steps},
         {"eval_every", p.eval_every},
         {"schedule", p.schedule == train::Schedule::random ? "random" : "interleave"},
         {"reduction", p.reduction == nn::Reduction::sum ? "sum" : "mean"}};
  if (p.optimizer.clip_norm) j["clip_norm"] = *p.optimizer.clip_norm;
  return j;
}

json to_json(const ExperimentConfig& c) {
  json methods = json::array();
  for (auto m : c.methods) methods.push_back(std::string(baselines::method_name(m)));
  json train = plan_to_json(c.plan);
  if (c.finetune_steps) train["finetune_steps"] = *c.finetune_steps;
  return {{"methods", methods},   {"seeds", c.seeds},
          {"architecture", c.architecture}, {"train", train},
          {"data", data_to_json(c.data)},   {"u_fractions", c.u_fractions},
          {"semeval_pn", c.semeval_pn},     {"jobs", c.jobs}};
}

std::string config_hash(const ExperimentConfig& c, std::uint64_t seed, double u_fraction) {
  json train = plan_to_json(c.plan);
  if (c.finetune_steps) train["finetune_steps"] = *c.finetune_steps;
  const json j{{"architecture", c.architecture}, {"train", train},
               {"data", data_to_json(c.data)},   {"seed", seed},
               {"u_fraction", u_fraction},       {"semeval_pn", c.semeval_pn}};
  return hex(fnv1a(j.dump()));
}

PreparedData prepare_data(const ExperimentConfig& c, std::uint64_t seed) {
  data::Dataset u, v, val, test;
  if (c.data.synthetic) {
    auto spec = *c.data.synthetic;
    if (!c.data.synthetic_seed_fixed) spec.seed = seed;
    auto syn = data::generate_synthetic(spec);
    u = std::move(syn.u);
    v = std::move(syn.v);
    val = std::move(syn.val);
    test = std::move(syn.test);
  } else {
    const data::LoadOptions opts{c.data.labels, c.data.mask};
    u = data::load_jsonl(c.data.u_path, opts);
    v = data::load_jsonl(c.data.v_path, opts);
    if (!c.data.val_path.empty()) val = data::load_jsonl(c.data.val_path, opts);
    test = data::load_jsonl(c.data.test_path, opts);
    std::optional<weak::Lexicon> lex;
    if (!c.data.lexicon_path.empty()) lex = load_lexicon(c);
    for (auto* ds : {&u, &v, &val, &test}) annotate_missing(*ds, lex);
  }
  const std::size_t k = c.data.labels.size();
  data::require_weak_labels(u, k);
  data::require_both_labels(v, k);
  data::require_true_labels(test, k);
  if (!val.empty()) data::require_true_labels(val, k);

  PreparedData out;
  out.num_classes = k;
  std::vector<data::Instance> train_pool;
  train_pool.reserve(u.size() + v.size());
  train_pool.insert(train_pool.end(), u.begin(), u.end());
  train_pool.insert(train_pool.end(), v.begin(), v.end());
  out.vocab = data::Vocabulary::build(train_pool, c.data.min_count);
  const std::size_t min_len = c.architecture.min_sequence_length();
  if (c.data.cooccurrence_embeddings)
    out.embeddings = data::cooccurrence_embeddings(train_pool, out.vocab,
                                                   c.architecture.embedding_dim);
  out.u = data::encode_dataset(u, out.vocab, min_len);
  out.v = data::encode_dataset(v, out.vocab, min_len);
  out.val = data::encode_dataset(val, out.vocab, min_len);
  out.test = data::encode_dataset(test, out.vocab, min_len);
  return out;
}

RunOutcome run_one(const ExperimentConfig& c, const PreparedData& d, const RunSpec& spec,
                   bool keep_model) {
  RunOutcome r;
  r.spec = spec;
  r.dataset = dataset_label(c, spec.u_fraction);
  r.config_hash = config_hash(c, spec.seed, spec.u_fraction);
  const auto start = std::chrono::steady_clock::now();
  try {
    const bool pn = c.semeval_pn;
    const bool has_val = !d.val.empty();
    if (has_val) {
      bool all_weak = std::all_of(d.val.begin(), d.val.end(),
                                  [](const auto& e) { return e.weak.has_value(); });
      r.wa_val_macro_f1 = all_weak
                              ? baselines::run_wa_eval(d.val, d.num_classes, pn).macro_f1
                              : std::numeric_limits<double>::quiet_NaN();
    } else {
      r.wa_val_macro_f1 = std::numeric_limits<double>::quiet_NaN();
    }

    if (spec.method == baselines::Method::WA) {
      const auto ev = baselines::run_wa_eval(d.test, d.num_classes, pn);
      r.test_macro_f1 = ev.macro_f1;
      train::MetricsRecord rec;
      rec.phase = "wa";
      if (has_val && !std::isnan(r.wa_val_macro_f1)) {
        const auto v_ev = baselines::run_wa_eval(d.val, d.num_classes, pn);
        rec.val_loss = v_ev.mean_loss;
        rec.val_macro_f1 = v_ev.macro_f1;
      }
      r.records.push_back(rec);
    } else {
      baselines::Setup setup;
      setup.architecture = c.architecture;
      setup.architecture.vocab_size = d.vocab.size();
      setup.architecture.num_classes = d.num_classes;
      setup.plan = c.plan;
      setup.plan.seed = spec.seed;
      setup.finetune_steps = c.finetune_steps;
      if (has_val) {
        const data::EncodedSet* val = &d.val;
        setup.evaluator = [val, pn](const model::DualModel& m) {
          const auto ev = metrics::evaluate(m, *val, pn);
          return train::ValidationResult{ev.mean_loss, ev.macro_f1};
        };
      }
      if (!c.data.embeddings_path.empty()) {
        const auto path = c.data.embeddings_path;
        const data::Vocabulary* vocab = &d.vocab;
        setup.on_init = [path, vocab](model::DualModel& m) {
          nn::load_pretrained_embeddings(path, m.shared.embedding,
                                         [vocab](std::string_view t) { return vocab->find(t); });
        };
      }
      if (!d.embeddings.empty()) {
        const std::vector<double>* table = &d.embeddings;
        setup.on_init = [table](model::DualModel& m) {
          auto& emb = m.shared.embedding;
          auto dst = emb.table.mutable_data();
          if (dst.size() != table->size())
            throw DimensionError("co-occurrence table does not match the embedding layer");
          std::copy(table->begin(), table->end(), dst.begin());
          if (emb.frozen_row) {
            const std::size_t dim = emb.dim();
            std::fill_n(dst.begin() + static_cast<std::ptrdiff_t>(*emb.frozen_row * dim), dim, 0.0);
          }
        };
      }
      data::EncodedSet u_prefix;
      const data::EncodedSet* u = &d.u;
      if (spec.u_fraction != 1.0) {
        const auto n = std::max<std::size_t>(
            1, static_cast<std::size_t>(std::llround(spec.u_fraction * static_cast<double>(d.u.size()))));
        u_prefix.assign(d.u.begin(), d.u.begin() + static_cast<std::ptrdiff_t>(std::min(n, d.u.size())));
        u = &u_prefix;
      }
      auto result = baselines::run_method(spec.method, *u, d.v, setup);
      r.test_macro_f1 = metrics::evaluate(result.model, d.test, pn).macro_f1;
      r.steps = result.steps;
      r.records = std::move(result.records);
      if (keep_model) r.model = std::move(result.model);
    }
    if (!std::isnan(r.wa_val_macro_f1)) {
      for (const auto& rec : r.records) {
        if (rec.phase == "wa") break;
        if (!std::isnan(rec.val_macro_f1) && rec.val_macro_f1 >= r.wa_val_macro_f1) {
          r.weak_to_wa = rec.weak_seen;
          break;
        }
      }
    }
    std::ostringstream csv;
    write_metrics_csv(csv, r.records);
    r.metrics_csv = csv.str();
  } catch (const std::exception& e) {
    r.error = e.what();
  }
  r.wallclock_s =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return r;
}

json ExperimentReport::to_json() const {
  json runs_j = json::array();
  for (const auto& r : runs) {
    json j{{"method", std::string(baselines::method_name(r.spec.method))},
           {"dataset", r.dataset},
           {"seed", r.spec.seed},
           {"u_fraction", r.spec.u_fraction},
           {"config_hash", r.config_hash},
           {"wallclock_s", r.wallclock_s}};
    if (r.error) {
      j["error"] = *r.error;
    } else {
      j["macro_f1"] = r.test_macro_f1;
      j["steps"] = r.steps;
      j["metrics_csv"] = "runs/" + run_stem(r.spec) + ".csv";
      if (!std::isnan(r.wa_val_macro_f1)) j["wa_val_macro_f1"] = r.wa_val_macro_f1;
      j["weak_to_wa"] = r.weak_to_wa ? json(*r.weak_to_wa) : json(nullptr);
    }
    runs_j.push_back(std::move(j));
  }
  return {{"runs", runs_j}, {"failures", failures}};
}

ExperimentReport run_experiment(const ExperimentConfig& c, const std::filesystem::path& out) {
  namespace fs = std::filesystem;
  fs::create_directories(out / "runs");

  std::vector<RunSpec> specs;
  for (auto seed : c.seeds)
    for (auto m : c.methods) specs.push_back({m, seed, 1.0});
  for (double f : c.u_fractions) {
    if (f == 1.0) continue;
    for (auto seed : c.seeds)
      for (auto m : c.methods)
        if (m != baselines::Method::WA) specs.push_back({m, seed, f});
  }

  ExperimentReport report;
  report.runs.resize(specs.size());

  std::map<std::uint64_t, PreparedData> prepared;
  std::map<std::uint64_t, std::string> prep_errors;
  for (auto seed : c.seeds) {
    try {
      prepared.emplace(seed, prepare_data(c, seed));
    } catch (const std::exception& e) {
      prep_errors[seed] = e.what();
    }
  }

  std::atomic<std::size_t> next{0};
  std::mutex log_mutex;
  auto worker = [&] {
    for (std::size_t i = next++; i < specs.size(); i = next++) {
      const auto& spec = specs[i];
      RunOutcome r;
      if (auto it = prep_errors.find(spec.seed); it != prep_errors.end()) {
        r.spec = spec;
        r.dataset = dataset_label(c, spec.u_fraction);
        r.config_hash = config_hash(c, spec.seed, spec.u_fraction);
        r.error = "data preparation failed: " + it->second;
      } else {
        r = run_one(c, prepared.at(spec.seed), spec);
      }
      {
        std::lock_guard lock(log_mutex);
        std::clog << run_stem(spec) << ": "
                  << (r.error ? "FAILED " + *r.error : "macro_f1=" + format_number(r.test_macro_f1))
                  << "\n";
      }
      report.runs[i] = std::move(r);
    }
  };
  const std::size_t jobs = std::min(c.jobs, std::max<std::size_t>(1, specs.size()));
  if (jobs <= 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (std::size_t j = 0; j < jobs; ++j) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
  }

  std::ostringstream summary, aggregate, curve;
  summary << "method\tdataset\tseed\tmacro_f1\tsteps\twallclock_s\n";
  std::map<std::pair<std::string, std::string>, std::vector<double>> groups;
  std::vector<std::pair<std::string, std::string>> group_order;
  for (const auto& r : report.runs) {
    if (r.error) {
      ++report.failures;
      continue;
    }
    write_file(out / "runs" / (run_stem(r.spec) + ".csv"), r.metrics_csv);
    const std::string name(baselines::method_name(r.spec.method));
    summary << name << '\t' << r.dataset << '\t' << r.spec.seed << '\t'
            << format_number(r.test_macro_f1) << '\t' << r.steps << '\t'
            << format_number(r.wallclock_s) << '\n';
    const auto key = std::make_pair(name, r.dataset);
    if (!groups.count(key)) group_order.push_back(key);
    groups[key].push_back(r.test_macro_f1);
  }
  aggregate << "method\tdataset\tn\tmacro_f1_mean\tmacro_f1_std\n";
  for (const auto& key : group_order) {
    const auto& v = groups[key];
    aggregate << key.first << '\t' << key.second << '\t' << v.size() << '\t'
              << format_number(mean(v)) << '\t' << format_number(sample_std(v)) << '\n';
  }
  curve << "method\tu_fraction\tseed\tmacro_f1\n";
  if (!c.u_fractions.empty()) {
    std::vector<const RunOutcome*> rows;
    for (const auto& r : report.runs)
      if (!r.error && r.spec.method != baselines::Method::WA) rows.push_back(&r);
    std::stable_sort(rows.begin(), rows.end(), [](const RunOutcome* a, const RunOutcome* b) {
      if (a->spec.method != b->spec.method) return a->spec.method < b->spec.method;
      return a->spec.u_fraction < b->spec.u_fraction;
    });
    for (const auto* r : rows)
      curve << baselines::method_name(r->spec.method) << '\t' << format_number(r->spec.u_fraction)
            << '\t' << r->spec.seed << '\t' << format_number(r->test_macro_f1) << '\n';
  }
  write_file(out / "summary.tsv", summary.str());
  write_file(out / "aggregate.tsv", aggregate.str());
  write_file(out / "learning_curve.tsv", curve.str());
  json rep = report.to_json();
  rep["config"] = to_json(c);
  write_file(out / "report.json", rep.dump(2) + "\n");
  return report;
}

std::string format_number(double value) {
  if (std::isnan(value)) return "";
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof buf, value);
  return std::string(buf, res.ptr);
}

void write_metrics_csv(std::ostream& out, const std::vector<train::MetricsRecord>& records) {
  out << "step,mode,loss_t,loss_c,val_loss,val_macro_f1,mean_conf,weak_seen\n";
  for (const auto& r : records) {
    out << r.step << ',' << r.phase << ',' << format_number(r.loss_t) << ','
        << format_number(r.loss_c) << ',' << format_number(r.val_loss) << ','
        << format_number(r.val_macro_f1) << ',' << format_number(r.mean_conf) << ','
        << r.weak_seen << '\n';
  }
}

namespace {

std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> cells;
  std::string cell;
  std::istringstream in(line);
  while (std::getline(in, cell, ',')) cells.push_back(cell);
  if (!line.empty() && line.back() == ',') cells.emplace_back();
  return cells;
}

constexpr const char* kPlotScript = R"(#!/usr/bin/env python3
"""Plots curves.tsv (and learning_curve.tsv when present) from this directory."""
import csv
import os
import sys

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt

here = os.path.dirname(os.path.abspath(__file__))


def read(name):
    path = os.path.join(here, name)
    if not os.path.exists(path):
        return []
    with open(path, newline="") as f:
        return list(csv.DictReader(f, delimiter="\t"))


def number(s):
    return float(s) if s not in ("", None) else None


rows = read("curves.tsv")
series = {}
for r in rows:
    series.setdefault(r["series"], []).append(r)

fig, axes = plt.subplots(1, 3, figsize=(15, 4))
for name, rs in series.items():
    for ax, col in ((axes[0], "loss_t"), (axes[1], "val_loss")):
        pts = [(int(r["step"]), number(r[col])) for r in rs if number(r[col]) is not None]
        if pts:
            ax.plot(*zip(*pts), label=name)
axes[0].set_title("train loss_t")
axes[1].set_title("validation loss")
for ax in axes[:2]:
    ax.set_xlabel("step")

curve = read("learning_curve.tsv")
by_method = {}
for r in curve:
    by_method.setdefault(r["method"], {}).setdefault(float(r["u_fraction"]), []).append(
        float(r["macro_f1"])
    )
for method, pts in by_method.items():
    xs = sorted(pts)
    axes[2].plot(xs, [sum(pts[x]) / len(pts[x]) for x in xs], marker="o", label=method)
axes[2].set_title("test macro-F1 vs fraction of U")
axes[2].set_xlabel("fraction of U")

for ax in axes:
    if ax.get_legend_handles_labels()[0]:
        ax.legend(fontsize="small")
fig.tight_layout()
out = sys.argv[1] if len(sys.argv) > 1 else os.path.join(here, "curves.png")
fig.savefig(out, dpi=120)
print(out)
)";

}  // namespace

CurveOutput emit_curves(const std::vector<std::filesystem::path>& csvs,
                        const std::filesystem::path& out_dir) {
  static const std::vector<std::string> required{"step",     "mode",         "loss_t",
                                                 "loss_c",   "val_loss",     "val_macro_f1",
                                                 "mean_conf"};
  CurveOutput result;
  std::ostringstream tsv;
  tsv << "series\tstep\tmode\tloss_t\tloss_c\tval_loss\tval_macro_f1\tmean_conf\tweak_seen\n";
  for (const auto& path : csvs) {
    std::ifstream in(path);
    if (!in) throw InputError("cannot open " + path.string());
    const std::string series = path.stem().string();
    std::string line;
    if (!std::getline(in, line) || line.empty()) {
      result.warnings.push_back(path.string() + ": empty CSV");
      ++result.series;
      continue;
    }
    if (!line.empty() && line.back() == '\r') line.pop_back();
    const auto header = split_csv(line);
    std::vector<std::size_t> cols;
    for (const auto& name : required) {
      auto it = std::find(header.begin(), header.end(), name);
      if (it == header.end())
        throw SchemaError(path.string() + ": missing column '" + name + "'");
      cols.push_back(static_cast<std::size_t>(it - header.begin()));
    }
    const auto ws = std::find(header.begin(), header.end(), "weak_seen");
    const std::optional<std::size_t> ws_col =
        ws == header.end() ? std::nullopt
                           : std::optional<std::size_t>(static_cast<std::size_t>(ws - header.begin()));
    ++result.series;
    std::size_t rows_here = 0;
    for (std::size_t lineno = 2; std::getline(in, line); ++lineno) {
      if (!line.empty() && line.back() == '\r') line.pop_back();
      if (line.empty()) continue;
      const auto cells = split_csv(line);
      if (cells.size() != header.size())
        throw SchemaError(path.string() + ":" + std::to_string(lineno) + ": expected " +
                          std::to_string(header.size()) + " fields");
      tsv << series;
      for (auto col : cols) tsv << '\t' << cells[col];
      tsv << '\t' << (ws_col ? cells[*ws_col] : "");
      tsv << '\n';
      ++rows_here;
    }
    if (rows_here == 0) result.warnings.push_back(path.string() + ": empty CSV");
    result.rows += rows_here;
  }
  std::filesystem::create_directories(out_dir);
  write_file(out_dir / "curves.tsv", tsv.str());
  write_file(out_dir / "plot_curves.py", kPlotScript);
  return result;
}

}  // namespace l2lws::experiment

#include "l2lws/data.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <sstream>

#include <json.hpp>

#include "l2lws/errors.hpp"
#include "l2lws/rng.hpp"

namespace l2lws::data {

using nlohmann::json;

std::size_t LabelSet::index_of(std::string_view name) const {
  for (std::size_t i = 0; i < names.size(); ++i)
    if (names[i] == name) return i;
  throw ValidationError("unknown label '" + std::string(name) + "'");
}

std::string mask_token(std::string_view token) {
  auto starts = [&](std::string_view p) { return token.substr(0, p.size()) == p; };
  if (starts("http://") || starts("https://") || starts("www.")) return "<url>";
  if (token.size() > 1 && token.front() == '@') return "<user>";
  return std::string(token);
}

namespace {

std::vector<std::string> split_whitespace(const std::string& text) {
  std::istringstream is(text);
  std::vector<std::string> out;
  std::string tok;
  while (is >> tok) out.push_back(tok);
  return out;
}

Instance parse_instance(const json& j, const LoadOptions& options) {
  if (!j.is_object()) throw InputError("expected a JSON object");
  Instance inst;
  if (j.contains("id")) {
    const auto& id = j.at("id");
    inst.id = id.is_string() ? id.get<std::string>() : id.dump();
  }
  if (j.contains("tokens")) {
    inst.tokens = j.at("tokens").get<std::vector<std::string>>();
  } else if (j.contains("text")) {
    inst.tokens = split_whitespace(j.at("text").get<std::string>());
  } else {
    throw InputError("instance has neither \"tokens\" nor \"text\"");
  }
  if (options.mask) {
    for (auto& t : inst.tokens) t = mask_token(t);
  }
  if (j.contains("label") && !j.at("label").is_null()) {
    inst.true_label = options.labels.index_of(j.at("label").get<std::string>());
  }
  if (j.contains("weak") && !j.at("weak").is_null()) {
    weak::SoftLabel w{j.at("weak").get<std::vector<double>>()};
    if (w.num_classes() != options.labels.size()) {
      throw ValidationError("weak label has " + std::to_string(w.num_classes()) +
                            " entries, label set has " +
                            std::to_string(options.labels.size()));
    }
    weak::check_distribution(w.probs);
    inst.weak_label = std::move(w);
  }
  return inst;
}

}  // namespace

Dataset parse_jsonl(std::istream& in, const LoadOptions& options,
                    const std::string& source) {
  Dataset out;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      auto inst = parse_instance(json::parse(line), options);
      if (inst.id.empty()) inst.id = source + ":" + std::to_string(line_no);
      out.push_back(std::move(inst));
    } catch (const std::exception& e) {
      throw InputError(source + ":" + std::to_string(line_no) + ": " + e.what());
    }
  }
  return out;
}

Dataset load_jsonl(const std::string& path, const LoadOptions& options) {
  std::ifstream in(path);
  if (!in) throw InputError("cannot open dataset " + path);
  return parse_jsonl(in, options, path);
}

void write_jsonl(std::ostream& out, const Dataset& dataset,
                 const LabelSet& labels) {
  for (const auto& inst : dataset) {
    json j;
    j["id"] = inst.id;
    j["tokens"] = inst.tokens;
    if (inst.true_label) j["label"] = labels.names.at(*inst.true_label);
    if (inst.weak_label) j["weak"] = inst.weak_label->probs;
    out << j.dump() << '\n';
  }
}

void save_jsonl(const std::string& path, const Dataset& dataset,
                const LabelSet& labels) {
  std::ofstream out(path);
  if (!out) throw InputError("cannot write " + path);
  write_jsonl(out, dataset, labels);
}

namespace {

void check_weak(const Instance& inst, std::size_t k) {
  if (!inst.weak_label) {
    throw ValidationError("instance " + inst.id + " has no weak label");
  }
  if (inst.weak_label->num_classes() != k) {
    throw ValidationError("instance " + inst.id + " weak label width mismatch");
  }
}

void check_true(const Instance& inst, std::size_t k) {
  if (!inst.true_label) {
    throw ValidationError("instance " + inst.id + " has no true label");
  }
  if (*inst.true_label >= k) {
    throw ValidationError("instance " + inst.id + " true label out of range");
  }
}

}  // namespace

void require_weak_labels(const Dataset& dataset, std::size_t num_classes) {
  for (const auto& inst : dataset) check_weak(inst, num_classes);
}

void require_both_labels(const Dataset& dataset, std::size_t num_classes) {
  for (const auto& inst : dataset) {
    check_weak(inst, num_classes);
    check_true(inst, num_classes);
  }
}

void require_true_labels(const Dataset& dataset, std::size_t num_classes) {
  for (const auto& inst : dataset) check_true(inst, num_classes);
}

Vocabulary::Vocabulary()
    : tokens_{"<pad>", "<unk>"}, index_{{"<pad>", kPad}, {"<unk>", kUnk}} {}

Vocabulary Vocabulary::from_tokens(std::vector<std::string> tokens) {
  Vocabulary v;
  for (auto& t : tokens) {
    if (v.index_.contains(t)) continue;
    v.index_.emplace(t, v.tokens_.size());
    v.tokens_.push_back(std::move(t));
  }
  return v;
}

Vocabulary Vocabulary::build(std::span<const Instance> instances,
                             std::size_t min_count) {
  std::map<std::string, std::size_t> counts;
  for (const auto& inst : instances)
    for (const auto& t : inst.tokens) ++counts[t];
  std::vector<std::pair<std::string, std::size_t>> kept;
  for (auto& [tok, n] : counts)
    if (n >= min_count) kept.emplace_back(tok, n);
  // counts is lexicographic already; stable sort keeps that as the tie-break.
  std::stable_sort(kept.begin(), kept.end(),
                   [](const auto& a, const auto& b) { return a.second > b.second; });
  std::vector<std::string> tokens;
  tokens.reserve(kept.size());
  for (auto& [tok, n] : kept) tokens.push_back(tok);
  return from_tokens(std::move(tokens));
}

std::optional<std::size_t> Vocabulary::find(std::string_view token) const {
  auto it = index_.find(std::string(token));
  if (it == index_.end()) return std::nullopt;
  return it->second;
}

std::size_t Vocabulary::index_of(std::string_view token) const {
  return find(token).value_or(kUnk);
}

std::vector<std::size_t> Vocabulary::encode(std::span<const std::string> tokens,
                                            std::size_t min_length) const {
  std::vector<std::size_t> out;
  out.reserve(std::max(tokens.size(), min_length));
  for (const auto& t : tokens) out.push_back(index_of(t));
  while (out.size() < min_length) out.push_back(kPad);
  return out;
}

void SyntheticTaskSpec::validate() const {
  if (!(flip_prob >= 0.0 && flip_prob <= 1.0)) {
    throw ConfigError("flip probability must lie in [0, 1]");
  }
  if (num_classes < 2) throw ConfigError("synthetic task needs at least 2 classes");
  if (!(soft_mix >= 0.0 && soft_mix <= 1.0)) {
    throw ConfigError("soft_mix must lie in [0, 1]");
  }
  if (signal_rate < 0.0 || cross_rate < 0.0 || signal_rate + cross_rate > 1.0) {
    throw ConfigError("signal_rate + cross_rate must lie in [0, 1]");
  }
  if (indicative_per_class == 0 ||
      num_classes * indicative_per_class >= vocab_size) {
    throw ConfigError("vocab_size must exceed the indicative token blocks");
  }
  if (min_length == 0 || min_length > max_length) {
    throw ConfigError("invalid sentence length range");
  }
}

std::string synthetic_token(std::size_t index) { return "w" + std::to_string(index); }

SyntheticData generate_synthetic(const SyntheticTaskSpec& spec) {
  spec.validate();
  Rng rng = make_stream(spec.seed, "synthetic");
  const std::size_t k = spec.num_classes;
  const std::size_t block = spec.indicative_per_class;
  const std::size_t first_background = k * block;
  const std::size_t n_background = spec.vocab_size - first_background;

  std::vector<double> cdf(n_background);
  double acc = 0.0;
  for (std::size_t r = 0; r < n_background; ++r) {
    acc += 1.0 / std::pow(static_cast<double>(r + 1), spec.background_zipf);
    cdf[r] = acc;
  }
  for (auto& c : cdf) c /= acc;

  auto draw_background = [&]() {
    const double u = rng.uniform();
    auto it = std::upper_bound(cdf.begin(), cdf.end(), u);
    const std::size_t r =
        std::min<std::size_t>(static_cast<std::size_t>(it - cdf.begin()), n_background - 1);
    return first_background + r;
  };

  auto weak_from = [&](std::size_t cls) {
    std::size_t noisy = cls;
    if (rng.bernoulli(spec.flip_prob)) {
      noisy = static_cast<std::size_t>(rng.uniform_int(k - 1));
      if (noisy >= cls) ++noisy;
    }
    weak::SoftLabel w{std::vector<double>(k, (1.0 - spec.soft_mix) / k)};
    w.probs[noisy] += spec.soft_mix;
    return w;
  };

  auto make = [&](const std::string& prefix, std::size_t i) {
    Instance inst;
    inst.id = prefix + std::to_string(i);
    const std::size_t cls = static_cast<std::size_t>(rng.uniform_int(k));
    const std::size_t len =
        spec.min_length +
        static_cast<std::size_t>(rng.uniform_int(spec.max_length - spec.min_length + 1));
    inst.tokens.reserve(len);
    for (std::size_t t = 0; t < len; ++t) {
      const double u = rng.uniform();
      std::size_t tok;
      if (u < spec.signal_rate) {
        tok = cls * block + static_cast<std::size_t>(rng.uniform_int(block));
      } else if (u < spec.signal_rate + spec.cross_rate) {
        std::size_t other = static_cast<std::size_t>(rng.uniform_int(k - 1));
        if (other >= cls) ++other;
        tok = other * block + static_cast<std::size_t>(rng.uniform_int(block));
      } else {
        tok = draw_background();
      }
      inst.tokens.push_back(synthetic_token(tok));
    }
    inst.true_label = cls;
    inst.weak_label = weak_from(cls);
    return inst;
  };

  SyntheticData out;
  out.u.reserve(spec.u_size);
  for (std::size_t i = 0; i < spec.u_size; ++i) {
    auto inst = make("u", i);
    out.u_hidden_labels.push_back(*inst.true_label);
    inst.true_label.reset();
    out.u.push_back(std::move(inst));
  }
  for (std::size_t i = 0; i < spec.v_size; ++i) out.v.push_back(make("v", i));
  for (std::size_t i = 0; i < spec.val_size; ++i) out.val.push_back(make("val", i));
  for (std::size_t i = 0; i < spec.test_size; ++i) out.test.push_back(make("test", i));
  return out;
}

EncodedSet encode_dataset(const Dataset& dataset, const Vocabulary& vocab,
                          std::size_t min_length) {
  EncodedSet out;
  out.reserve(dataset.size());
  for (const auto& inst : dataset) {
    EncodedInstance e;
    e.tokens = vocab.encode(inst.tokens, min_length);
    e.true_label = inst.true_label;
    if (inst.weak_label) e.weak = inst.weak_label->probs;
    out.push_back(std::move(e));
  }
  return out;
}

}  // namespace l2lws::data

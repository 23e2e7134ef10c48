#pragma once

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "l2lws/weak_annotation.hpp"

namespace l2lws::data {

// Members of the weak set U carry `weak_label` only; members of the true set V
// carry both labels. Evaluation sets carry at least `true_label`.
struct Instance {
  std::string id;
  std::vector<std::string> tokens;
  std::optional<std::size_t> true_label;
  std::optional<weak::SoftLabel> weak_label;
};

using Dataset = std::vector<Instance>;

// Ordered class names; index i is class i.
struct LabelSet {
  std::vector<std::string> names{"positive", "negative", "neutral"};

  std::size_t size() const { return names.size(); }
  // Throws ValidationError for an unknown name.
  std::size_t index_of(std::string_view name) const;
};

struct LoadOptions {
  LabelSet labels;
  // Replace URLs with <url> and @mentions with <user>.
  bool mask = false;
};

// Masking rules: a token beginning with http://, https:// or www. becomes
// "<url>"; a token of length > 1 beginning with '@' becomes "<user>".
std::string mask_token(std::string_view token);

// JSONL, one object per line: {"id", "tokens": [...] | "text": "...",
// "label": "<class name>", "weak": [p_0, ..., p_{K-1}]}. Blank lines are
// skipped. Errors carry the 1-based line number.
Dataset parse_jsonl(std::istream& in, const LoadOptions& options,
                    const std::string& source = "<stream>");
Dataset load_jsonl(const std::string& path, const LoadOptions& options = {});
void write_jsonl(std::ostream& out, const Dataset& dataset,
                 const LabelSet& labels);
void save_jsonl(const std::string& path, const Dataset& dataset,
                const LabelSet& labels);

// Fail-fast checks run before training.
void require_weak_labels(const Dataset& dataset, std::size_t num_classes);
void require_both_labels(const Dataset& dataset, std::size_t num_classes);
void require_true_labels(const Dataset& dataset, std::size_t num_classes);

class Vocabulary {
 public:
  static constexpr std::size_t kPad = 0;
  static constexpr std::size_t kUnk = 1;

  Vocabulary();
  // Keeps tokens seen at least min_count times, ordered by descending count
  // then lexicographically.
  static Vocabulary build(std::span<const Instance> instances,
                          std::size_t min_count = 2);
  static Vocabulary from_tokens(std::vector<std::string> tokens);

  std::size_t size() const { return tokens_.size(); }
  std::optional<std::size_t> find(std::string_view token) const;
  // Unknown tokens map to kUnk.
  std::size_t index_of(std::string_view token) const;
  const std::string& token(std::size_t index) const { return tokens_.at(index); }
  const std::vector<std::string>& tokens() const { return tokens_; }

  // Token indices padded with kPad up to at least min_length.
  std::vector<std::size_t> encode(std::span<const std::string> tokens,
                                  std::size_t min_length = 1) const;

 private:
  std::vector<std::string> tokens_;
  std::unordered_map<std::string, std::size_t> index_;
};

// Desk-scale sentiment-like task. Each class owns a block of indicative
// tokens; a sentence mixes its class's indicative tokens, other classes'
// indicative tokens and Zipf-distributed background tokens. Weak labels flip
// the true class to a uniformly chosen other class with probability
// flip_prob, then soften to soft_mix * one_hot + (1 - soft_mix) * uniform.
struct SyntheticTaskSpec {
  std::size_t num_classes = 3;
  std::size_t vocab_size = 3000;
  std::size_t indicative_per_class = 40;
  double signal_rate = 0.2;
  double cross_rate = 0.1;
  double background_zipf = 1.0;
  std::size_t min_length = 6;
  std::size_t max_length = 16;
  double flip_prob = 0.3;
  double soft_mix = 0.8;
  std::size_t u_size = 10000;
  std::size_t v_size = 500;
  std::size_t val_size = 1000;
  std::size_t test_size = 2000;
  std::uint64_t seed = 0;

  // Throws ConfigError on an invalid combination.
  void validate() const;
};

struct SyntheticData {
  Dataset u, v, val, test;
  // True classes of U, hidden from training; kept for diagnostics.
  std::vector<std::size_t> u_hidden_labels;
};

SyntheticData generate_synthetic(const SyntheticTaskSpec& spec);

// An instance mapped through a vocabulary, ready for the model.
struct EncodedInstance {
  std::vector<std::size_t> tokens;
  std::optional<std::size_t> true_label;
  std::optional<std::vector<double>> weak;
};

using EncodedSet = std::vector<EncodedInstance>;

EncodedSet encode_dataset(const Dataset& dataset, const Vocabulary& vocab,
                          std::size_t min_length);

std::string synthetic_token(std::size_t index);

}  // namespace l2lws::data

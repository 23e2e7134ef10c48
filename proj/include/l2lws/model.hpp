#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "l2lws/autodiff.hpp"
#include "l2lws/nn.hpp"
#include "l2lws/rng.hpp"

namespace l2lws::model {

struct ConvSpec {
  std::size_t filters = 200;
  std::size_t width = 5;
};

struct ModelConfig {
  std::size_t vocab_size = 2;
  std::size_t num_classes = 3;
  std::size_t embedding_dim = 100;
  std::vector<ConvSpec> conv{{200, 5}};
  std::vector<std::size_t> target_hidden{128};
  std::vector<std::size_t> confidence_hidden{128};
  double dropout = 0.2;
  // Extra head for the label-generator baseline; off for everything else.
  bool label_generator = false;
  std::vector<std::size_t> generator_hidden{128};

  void validate() const;
  // Concatenated pooled width: sum of filters over conv layers.
  std::size_t representation_width() const;
  // Shortest sequence that survives every conv layer.
  std::size_t min_sequence_length() const;
};

void to_json(nlohmann::json& j, const ModelConfig& c);
// Missing keys keep their defaults.
void from_json(const nlohmann::json& j, ModelConfig& c);

// Embedding -> (conv -> relu -> max-pool) per layer, pooled outputs
// concatenated -> dropout. Layer k > 0 convolves layer k-1's rectified map.
struct SharedRepresentation {
  nn::EmbeddingLayer embedding;
  std::vector<nn::Conv1dLayer> convs;
  nn::DropoutLayer dropout;

  std::size_t width() const;
  // tokens must already be padded to the minimum sequence length.
  ad::Tensor forward(std::span<const std::size_t> tokens, nn::Mode mode,
                     Rng& rng) const;
};

struct NamedParameter {
  std::string name;
  ad::Tensor tensor;
};

enum class Part { shared, target_head, confidence_head, generator_head };

// Which parameters a training step may move.
//   weak:      shared + target head (also used for target training on V)
//   full:      shared + confidence head
//   generator: shared + label-generator head
enum class SupervisionMode { weak, full, generator };

struct Partition {
  std::vector<NamedParameter> trainable;
  std::vector<NamedParameter> frozen;
};

// One shared representation referenced by both heads.
class DualModel {
 public:
  static DualModel create(const ModelConfig& config, Rng& init_rng);

  const ModelConfig& config() const { return config_; }

  SharedRepresentation shared;
  nn::DenseStack target_head;      // repr -> |K| logits
  nn::DenseStack confidence_head;  // [repr, weak] -> 1 logit
  std::optional<nn::DenseStack> generator_head;  // [repr, weak] -> |K| logits

  // Fixed order: shared, target, confidence, generator.
  std::vector<NamedParameter> parameters() const;
  std::vector<NamedParameter> parameters(Part part) const;

  // Deep copy with independent parameter storage.
  DualModel clone() const;
  void zero_grad() const;

 private:
  ModelConfig config_;
};

Partition parameter_partition(const DualModel& model, SupervisionMode mode);

// [b x d] representation matrix, one row per sentence.
ad::Tensor represent(const DualModel& model,
                     std::span<const std::vector<std::size_t>* const> batch,
                     nn::Mode mode, Rng& rng);
ad::Tensor represent(const DualModel& model, std::span<const std::size_t> tokens,
                     nn::Mode mode, Rng& rng);

// repr [b x d] -> logits [b x |K|].
ad::Tensor predict_target(const DualModel& model, const ad::Tensor& repr);
// repr [b x d], weak [b x |K|] -> c~ in (0, 1), shape [b].
ad::Tensor predict_confidence(const DualModel& model, const ad::Tensor& repr,
                              const ad::Tensor& weak);
// repr [b x d], weak [b x |K|] -> generator logits [b x |K|].
ad::Tensor predict_generator(const DualModel& model, const ad::Tensor& repr,
                             const ad::Tensor& weak);

// Lowest index wins ties.
std::size_t argmax(std::span<const double> values);

// Order-sensitive FNV-1a over parameter names, shapes and value bits.
std::uint64_t parameter_hash(const DualModel& model);

}  // namespace l2lws::model

#include "l2lws/model.hpp"

#include <bit>
#include <cstring>

#include "l2lws/errors.hpp"

namespace l2lws::model {

using nlohmann::json;

void ModelConfig::validate() const {
  if (num_classes < 2) throw ConfigError("need at least two classes");
  if (vocab_size < 2) throw ConfigError("vocabulary must hold PAD and UNK");
  if (embedding_dim == 0) throw ConfigError("embedding_dim must be positive");
  if (conv.empty() || conv.size() > 2) {
    throw ConfigError("representation supports one or two conv layers");
  }
  for (const auto& c : conv) {
    if (c.filters == 0 || c.width == 0) {
      throw ConfigError("conv filters and width must be positive");
    }
  }
  if (!(dropout >= 0.0 && dropout < 1.0)) {
    throw ConfigError("dropout must lie in [0, 1)");
  }
}

std::size_t ModelConfig::representation_width() const {
  std::size_t w = 0;
  for (const auto& c : conv) w += c.filters;
  return w;
}

std::size_t ModelConfig::min_sequence_length() const {
  std::size_t n = 1;
  for (const auto& c : conv) n += c.width - 1;
  return n;
}

void to_json(json& j, const ModelConfig& c) {
  json conv = json::array();
  for (const auto& l : c.conv) conv.push_back({{"filters", l.filters}, {"width", l.width}});
  j = json{{"vocab_size", c.vocab_size},
           {"num_classes", c.num_classes},
           {"embedding_dim", c.embedding_dim},
           {"conv", conv},
           {"target_hidden", c.target_hidden},
           {"confidence_hidden", c.confidence_hidden},
           {"dropout", c.dropout},
           {"label_generator", c.label_generator},
           {"generator_hidden", c.generator_hidden}};
}

void from_json(const json& j, ModelConfig& c) {
  c.vocab_size = j.value("vocab_size", c.vocab_size);
  c.num_classes = j.value("num_classes", c.num_classes);
  c.embedding_dim = j.value("embedding_dim", c.embedding_dim);
  if (j.contains("conv")) {
    c.conv.clear();
    for (const auto& l : j.at("conv")) {
      c.conv.push_back({l.value("filters", std::size_t{200}),
                        l.value("width", std::size_t{5})});
    }
  }
  c.target_hidden = j.value("target_hidden", c.target_hidden);
  c.confidence_hidden = j.value("confidence_hidden", c.confidence_hidden);
  c.dropout = j.value("dropout", c.dropout);
  c.label_generator = j.value("label_generator", c.label_generator);
  c.generator_hidden = j.value("generator_hidden", c.generator_hidden);
}

std::size_t SharedRepresentation::width() const {
  std::size_t w = 0;
  for (const auto& c : convs) w += c.num_filters();
  return w;
}

ad::Tensor SharedRepresentation::forward(std::span<const std::size_t> tokens,
                                         nn::Mode mode, Rng& rng) const {
  ad::Tensor x = embedding.lookup(tokens);
  std::vector<ad::Tensor> pooled;
  pooled.reserve(convs.size());
  for (const auto& conv : convs) {
    x = ad::relu(nn::conv1d_forward(x, conv));
    pooled.push_back(nn::maxpool_over_time(x));
  }
  ad::Tensor out = pooled.size() == 1 ? pooled.front() : ad::concat(pooled);
  return nn::dropout_forward(out, dropout, mode, rng);
}

DualModel DualModel::create(const ModelConfig& config, Rng& init_rng) {
  config.validate();
  DualModel m;
  m.config_ = config;
  m.shared.embedding = nn::EmbeddingLayer::init(config.vocab_size,
                                                config.embedding_dim, init_rng, 0);
  std::size_t channels = config.embedding_dim;
  for (const auto& c : config.conv) {
    m.shared.convs.push_back(nn::Conv1dLayer::init(channels, c.filters, c.width, init_rng));
    channels = c.filters;
  }
  m.shared.dropout.rate = config.dropout;
  const std::size_t d = config.representation_width();
  const std::size_t k = config.num_classes;
  m.target_head = nn::DenseStack::init(d, config.target_hidden, k, init_rng);
  m.confidence_head = nn::DenseStack::init(d + k, config.confidence_hidden, 1, init_rng);
  if (config.label_generator) {
    m.generator_head = nn::DenseStack::init(d + k, config.generator_hidden, k, init_rng);
  }
  return m;
}

namespace {

void append_stack(std::vector<NamedParameter>& out, const std::string& prefix,
                  const nn::DenseStack& stack) {
  for (std::size_t i = 0; i < stack.layers.size(); ++i) {
    const auto base = prefix + "." + std::to_string(i);
    out.push_back({base + ".weight", stack.layers[i].weight});
    out.push_back({base + ".bias", stack.layers[i].bias});
  }
}

nn::DenseStack clone_stack(const nn::DenseStack& s) {
  nn::DenseStack out;
  for (const auto& l : s.layers) {
    out.layers.push_back({l.weight.clone(), l.bias.clone(), l.activation});
  }
  return out;
}

}  // namespace

std::vector<NamedParameter> DualModel::parameters(Part part) const {
  std::vector<NamedParameter> out;
  switch (part) {
    case Part::shared:
      out.push_back({"shared.embedding", shared.embedding.table});
      for (std::size_t i = 0; i < shared.convs.size(); ++i) {
        const auto base = "shared.conv" + std::to_string(i);
        out.push_back({base + ".filters", shared.convs[i].filters});
        out.push_back({base + ".bias", shared.convs[i].bias});
      }
      break;
    case Part::target_head:
      append_stack(out, "target", target_head);
      break;
    case Part::confidence_head:
      append_stack(out, "confidence", confidence_head);
      break;
    case Part::generator_head:
      if (generator_head) append_stack(out, "generator", *generator_head);
      break;
  }
  return out;
}

std::vector<NamedParameter> DualModel::parameters() const {
  std::vector<NamedParameter> out;
  for (Part p : {Part::shared, Part::target_head, Part::confidence_head,
                 Part::generator_head}) {
    auto part = parameters(p);
    out.insert(out.end(), part.begin(), part.end());
  }
  return out;
}

DualModel DualModel::clone() const {
  DualModel m;
  m.config_ = config_;
  m.shared.embedding = {shared.embedding.table.clone(), shared.embedding.frozen_row};
  for (const auto& c : shared.convs) {
    m.shared.convs.push_back({c.filters.clone(), c.bias.clone()});
  }
  m.shared.dropout = shared.dropout;
  m.target_head = clone_stack(target_head);
  m.confidence_head = clone_stack(confidence_head);
  if (generator_head) m.generator_head = clone_stack(*generator_head);
  return m;
}

void DualModel::zero_grad() const {
  for (auto& p : parameters()) {
    ad::Tensor t = p.tensor;
    t.zero_grad();
  }
}

Partition parameter_partition(const DualModel& model, SupervisionMode mode) {
  Part head = Part::target_head;
  if (mode == SupervisionMode::full) head = Part::confidence_head;
  if (mode == SupervisionMode::generator) head = Part::generator_head;
  Partition p;
  for (Part part : {Part::shared, Part::target_head, Part::confidence_head,
                    Part::generator_head}) {
    auto params = model.parameters(part);
    auto& dst = (part == Part::shared || part == head) ? p.trainable : p.frozen;
    dst.insert(dst.end(), params.begin(), params.end());
  }
  return p;
}

ad::Tensor represent(const DualModel& model,
                     std::span<const std::vector<std::size_t>* const> batch,
                     nn::Mode mode, Rng& rng) {
  std::vector<ad::Tensor> rows;
  rows.reserve(batch.size());
  for (const auto* tokens : batch) rows.push_back(model.shared.forward(*tokens, mode, rng));
  return ad::stack_rows(rows);
}

ad::Tensor represent(const DualModel& model, std::span<const std::size_t> tokens,
                     nn::Mode mode, Rng& rng) {
  return model.shared.forward(tokens, mode, rng);
}

ad::Tensor predict_target(const DualModel& model, const ad::Tensor& repr) {
  return nn::dense_forward(repr, model.target_head);
}

ad::Tensor predict_confidence(const DualModel& model, const ad::Tensor& repr,
                              const ad::Tensor& weak) {
  if (weak.rank() != 2 || weak.dim(1) != model.config().num_classes) {
    throw DimensionError("confidence head: weak labels " +
                         ad::shape_string(weak.shape()) + " do not have " +
                         std::to_string(model.config().num_classes) + " columns");
  }
  auto logits = nn::dense_forward(ad::concat_cols(repr, weak), model.confidence_head);
  return ad::sigmoid(ad::reshape(logits, {logits.dim(0)}));
}

ad::Tensor predict_generator(const DualModel& model, const ad::Tensor& repr,
                             const ad::Tensor& weak) {
  if (!model.generator_head) throw ContractError("model has no label generator head");
  return nn::dense_forward(ad::concat_cols(repr, weak), *model.generator_head);
}

std::size_t argmax(std::span<const double> values) {
  std::size_t best = 0;
  for (std::size_t i = 1; i < values.size(); ++i)
    if (values[i] > values[best]) best = i;
  return best;
}

std::uint64_t parameter_hash(const DualModel& model) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  auto mix = [&h](const void* p, std::size_t n) {
    const auto* b = static_cast<const unsigned char*>(p);
    for (std::size_t i = 0; i < n; ++i) {
      h ^= b[i];
      h *= 0x100000001b3ULL;
    }
  };
  for (const auto& p : model.parameters()) {
    mix(p.name.data(), p.name.size());
    for (auto d : p.tensor.shape()) mix(&d, sizeof d);
    const auto data = p.tensor.data();
    mix(data.data(), data.size() * sizeof(double));
  }
  return h;
}

}  // namespace l2lws::model

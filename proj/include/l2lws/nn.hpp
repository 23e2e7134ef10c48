#pragma once

#include <cstddef>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "l2lws/autodiff.hpp"
#include "l2lws/rng.hpp"

namespace l2lws::nn {

enum class Mode { train, eval };
enum class Reduction { sum, mean };
enum class Activation { relu, identity };

// Lookup table of token embeddings, one row per vocabulary entry.
struct EmbeddingLayer {
  ad::Tensor table;  // [vocab x dim]
  // Row that never receives gradient (the padding token).
  std::optional<std::size_t> frozen_row;

  // Uniform(-0.05, 0.05); the frozen row starts at zero.
  static EmbeddingLayer init(std::size_t vocab_size, std::size_t dim, Rng& rng,
                             std::optional<std::size_t> frozen_row = 0);

  std::size_t vocab_size() const { return table.dim(0); }
  std::size_t dim() const { return table.dim(1); }

  // Sentence matrix [dim x tokens.size()]; column t embeds tokens[t].
  // Throws ContractError for an index outside the table.
  ad::Tensor lookup(std::span<const std::size_t> tokens) const;
};

// Reads a pretrained embedding text file (`token v1 ... vm` per line) into
// the rows of `layer` selected by `index_of`. Tokens for which `index_of`
// returns nothing are skipped. Returns the number of rows overwritten.
std::size_t load_pretrained_embeddings(
    const std::string& path, EmbeddingLayer& layer,
    const std::function<std::optional<std::size_t>(std::string_view)>& index_of);

// f filters of width h over c input channels.
struct Conv1dLayer {
  ad::Tensor filters;  // [f x h x c]
  ad::Tensor bias;     // [f]

  static Conv1dLayer init(std::size_t in_channels, std::size_t num_filters,
                          std::size_t width, Rng& rng);

  std::size_t num_filters() const { return filters.dim(0); }
  std::size_t width() const { return filters.dim(1); }
  std::size_t in_channels() const { return filters.dim(2); }
};

// input [c x L] -> feature map [f x (L - h + 1)] with
//   out[o][i] = bias[o] + sum_{t<h, d<c} filters[o][t][d] * input[d][i + t].
// Throws InputError when L < h.
ad::Tensor conv1d_forward(const ad::Tensor& input, const Conv1dLayer& layer);

// [f x L] -> [f], the maximum of each row. Gradient goes to the first
// position attaining the maximum.
ad::Tensor maxpool_over_time(const ad::Tensor& features);

struct DenseLayer {
  ad::Tensor weight;  // [in x out]
  ad::Tensor bias;    // [out]
  Activation activation = Activation::relu;
};

// Hidden layers use ReLU; the last layer is affine only (logits).
struct DenseStack {
  std::vector<DenseLayer> layers;

  // Kaiming-uniform for the ReLU layers, Xavier-uniform for the output layer,
  // zero biases.
  static DenseStack init(std::size_t input_width,
                         std::span<const std::size_t> hidden,
                         std::size_t output_width, Rng& rng);

  std::size_t input_width() const { return layers.front().weight.dim(0); }
  std::size_t output_width() const { return layers.back().weight.dim(1); }
};

// x is [b x in] (or [in], returned as [out]).
ad::Tensor dense_forward(const ad::Tensor& x, const DenseStack& stack);

struct DropoutLayer {
  double rate = 0.0;
};

// Inverted dropout: in train mode each element is zeroed with probability
// `rate` and survivors are scaled by 1 / (1 - rate). Eval mode is identity and
// draws nothing from `rng`.
ad::Tensor dropout_forward(const ad::Tensor& x, const DropoutLayer& layer,
                           Mode mode, Rng& rng);

// Row-wise softmax with max subtraction. Not part of any graph.
std::vector<double> softmax_rows(std::span<const double> logits,
                                 std::size_t cols);

// sum_i w_i * sum_k -targets[i][k] * log(softmax(logits[i])[k]).
// logits/targets are [b x K]; weights (optional, [b], non-negative) default to
// one. Each target row must be a distribution within 1e-6. Gradients flow into
// logits and, when they require it, into weights.
ad::Tensor softmax_cross_entropy(const ad::Tensor& logits,
                                 const ad::Tensor& targets,
                                 const std::optional<ad::Tensor>& weights = {},
                                 Reduction reduction = Reduction::sum);

// sum_j -c_j log p_j - (1 - c_j) log(1 - p_j) with p clamped to
// [1e-7, 1 - 1e-7]. probs/targets are [b]; targets must lie in [0, 1].
ad::Tensor binary_cross_entropy(const ad::Tensor& probs,
                                const ad::Tensor& targets,
                                Reduction reduction = Reduction::sum);

}  // namespace l2lws::nn

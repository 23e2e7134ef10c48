#include "l2lws/nn.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

#include "l2lws/errors.hpp"

namespace l2lws::nn {

namespace {

constexpr double kLogFloor = 1e-12;
constexpr double kProbClamp = 1e-7;

std::vector<double> uniform_values(std::size_t n, double bound, Rng& rng) {
  std::vector<double> v(n);
  for (auto& x : v) x = rng.uniform(-bound, bound);
  return v;
}

}  // namespace

EmbeddingLayer EmbeddingLayer::init(std::size_t vocab_size, std::size_t dim,
                                    Rng& rng,
                                    std::optional<std::size_t> frozen_row) {
  auto values = uniform_values(vocab_size * dim, 0.05, rng);
  if (frozen_row && *frozen_row < vocab_size) {
    std::fill_n(values.begin() + *frozen_row * dim, dim, 0.0);
  }
  return {ad::Tensor({vocab_size, dim}, std::move(values), true), frozen_row};
}

ad::Tensor EmbeddingLayer::lookup(std::span<const std::size_t> tokens) const {
  const std::size_t m = dim(), len = tokens.size(), vocab = vocab_size();
  std::vector<std::size_t> idx(tokens.begin(), tokens.end());
  std::vector<double> out(m * len);
  const auto T = table.data();
  for (std::size_t t = 0; t < len; ++t) {
    if (idx[t] >= vocab) {
      throw ContractError("token index " + std::to_string(idx[t]) +
                          " outside vocabulary of size " +
                          std::to_string(vocab));
    }
    for (std::size_t d = 0; d < m; ++d) out[d * len + t] = T[idx[t] * m + d];
  }
  const auto frozen = frozen_row;
  return ad::detail::record(
      {m, len}, std::move(out), {table},
      [idx = std::move(idx), m, len, frozen](ad::Node& self) {
        ad::Node& tab = *self.inputs[0];
        for (std::size_t t = 0; t < len; ++t) {
          if (frozen && idx[t] == *frozen) continue;
          for (std::size_t d = 0; d < m; ++d)
            tab.grad[idx[t] * m + d] += self.grad[d * len + t];
        }
      });
}

std::size_t load_pretrained_embeddings(
    const std::string& path, EmbeddingLayer& layer,
    const std::function<std::optional<std::size_t>(std::string_view)>&
        index_of) {
  std::ifstream in(path);
  if (!in) throw InputError("cannot open embedding file " + path);
  const std::size_t m = layer.dim();
  auto table = layer.table.mutable_data();
  std::string line, token;
  std::size_t line_no = 0, filled = 0;
  std::vector<double> row(m);
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    std::istringstream ls(line);
    ls >> token;
    std::size_t count = 0;
    double v;
    while (ls >> v) {
      if (count < m) row[count] = v;
      ++count;
    }
    if (!ls.eof() || count != m) {
      throw InputError(path + ":" + std::to_string(line_no) + ": expected " +
                       std::to_string(m) + " floats after the token");
    }
    const auto idx = index_of(token);
    if (!idx) continue;
    if (layer.frozen_row && *idx == *layer.frozen_row) continue;
    std::copy(row.begin(), row.end(), table.begin() + *idx * m);
    ++filled;
  }
  return filled;
}

Conv1dLayer Conv1dLayer::init(std::size_t in_channels, std::size_t num_filters,
                              std::size_t width, Rng& rng) {
  if (width == 0) throw ConfigError("convolution width must be at least 1");
  const double bound = std::sqrt(6.0 / static_cast<double>(width * in_channels));
  return {ad::Tensor({num_filters, width, in_channels},
                     uniform_values(num_filters * width * in_channels, bound, rng),
                     true),
          ad::Tensor::zeros({num_filters}, true)};
}

ad::Tensor conv1d_forward(const ad::Tensor& input, const Conv1dLayer& layer) {
  const std::size_t f = layer.num_filters(), h = layer.width(),
                    c = layer.in_channels();
  if (input.rank() != 2 || input.dim(0) != c) {
    throw DimensionError("conv1d: input " + ad::shape_string(input.shape()) +
                         " does not have " + std::to_string(c) + " channels");
  }
  const std::size_t len = input.dim(1);
  if (len < h) {
    throw InputError("conv1d: sequence of length " + std::to_string(len) +
                     " is shorter than filter width " + std::to_string(h));
  }
  const std::size_t out_len = len - h + 1;
  std::vector<double> out(f * out_len);
  const auto X = input.data();
  const auto F = layer.filters.data();
  const auto B = layer.bias.data();
  for (std::size_t o = 0; o < f; ++o) {
    double* orow = &out[o * out_len];
    std::fill_n(orow, out_len, B[o]);
    for (std::size_t t = 0; t < h; ++t) {
      for (std::size_t d = 0; d < c; ++d) {
        const double w = F[(o * h + t) * c + d];
        const double* xrow = &X[d * len + t];
        for (std::size_t i = 0; i < out_len; ++i) orow[i] += w * xrow[i];
      }
    }
  }
  return ad::detail::record(
      {f, out_len}, std::move(out), {input, layer.filters, layer.bias},
      [f, h, c, len, out_len](ad::Node& self) {
        ad::Node& nx = *self.inputs[0];
        ad::Node& nf = *self.inputs[1];
        ad::Node& nb = *self.inputs[2];
        const double* G = self.grad.data();
        for (std::size_t o = 0; o < f; ++o) {
          const double* grow = &G[o * out_len];
          if (nb.requires_grad) {
            double s = 0.0;
            for (std::size_t i = 0; i < out_len; ++i) s += grow[i];
            nb.grad[o] += s;
          }
          for (std::size_t t = 0; t < h; ++t) {
            for (std::size_t d = 0; d < c; ++d) {
              const std::size_t fi = (o * h + t) * c + d;
              if (nf.requires_grad) {
                const double* xrow = &nx.value[d * len + t];
                double s = 0.0;
                for (std::size_t i = 0; i < out_len; ++i) s += grow[i] * xrow[i];
                nf.grad[fi] += s;
              }
              if (nx.requires_grad) {
                const double w = nf.value[fi];
                double* xg = &nx.grad[d * len + t];
                for (std::size_t i = 0; i < out_len; ++i) xg[i] += w * grow[i];
              }
            }
          }
        }
      });
}

ad::Tensor maxpool_over_time(const ad::Tensor& features) {
  if (features.rank() != 2 || features.dim(1) == 0) {
    throw ContractError("maxpool_over_time: empty or non-matrix feature map " +
                        ad::shape_string(features.shape()));
  }
  const std::size_t f = features.dim(0), len = features.dim(1);
  std::vector<double> out(f);
  std::vector<std::size_t> arg(f);
  const auto X = features.data();
  for (std::size_t o = 0; o < f; ++o) {
    std::size_t best = 0;
    for (std::size_t i = 1; i < len; ++i)
      if (X[o * len + i] > X[o * len + best]) best = i;
    arg[o] = best;
    out[o] = X[o * len + best];
  }
  return ad::detail::record({f}, std::move(out), {features},
                            [arg = std::move(arg), len](ad::Node& self) {
                              ad::Node& nx = *self.inputs[0];
                              for (std::size_t o = 0; o < arg.size(); ++o)
                                nx.grad[o * len + arg[o]] += self.grad[o];
                            });
}

DenseStack DenseStack::init(std::size_t input_width,
                            std::span<const std::size_t> hidden,
                            std::size_t output_width, Rng& rng) {
  DenseStack stack;
  std::size_t in = input_width;
  for (std::size_t width : hidden) {
    const double bound = std::sqrt(6.0 / static_cast<double>(in));
    stack.layers.push_back(
        {ad::Tensor({in, width}, uniform_values(in * width, bound, rng), true),
         ad::Tensor::zeros({width}, true), Activation::relu});
    in = width;
  }
  const double bound = std::sqrt(6.0 / static_cast<double>(in + output_width));
  stack.layers.push_back(
      {ad::Tensor({in, output_width}, uniform_values(in * output_width, bound, rng),
                  true),
       ad::Tensor::zeros({output_width}, true), Activation::identity});
  return stack;
}

ad::Tensor dense_forward(const ad::Tensor& x, const DenseStack& stack) {
  if (stack.layers.empty()) throw ContractError("dense stack has no layers");
  const bool vector_input = x.rank() == 1;
  ad::Tensor z = vector_input ? ad::reshape(x, {1, x.size()}) : x;
  if (z.rank() != 2 || z.dim(1) != stack.input_width()) {
    throw DimensionError("dense: input " + ad::shape_string(x.shape()) +
                         " does not match layer width " +
                         std::to_string(stack.input_width()));
  }
  for (const auto& layer : stack.layers) {
    z = ad::add(ad::matmul(z, layer.weight),
                ad::broadcast_rows(layer.bias, z.dim(0)));
    if (layer.activation == Activation::relu) z = ad::relu(z);
  }
  return vector_input ? ad::reshape(z, {z.dim(1)}) : z;
}

ad::Tensor dropout_forward(const ad::Tensor& x, const DropoutLayer& layer,
                           Mode mode, Rng& rng) {
  if (layer.rate < 0.0 || layer.rate >= 1.0) {
    throw ConfigError("dropout rate must lie in [0, 1)");
  }
  if (mode == Mode::eval || layer.rate == 0.0) return x;
  const double keep = 1.0 - layer.rate;
  std::vector<double> mask(x.size());
  for (auto& m : mask) m = rng.uniform() < layer.rate ? 0.0 : 1.0 / keep;
  return ad::mul(x, ad::Tensor(x.shape(), std::move(mask)));
}

std::vector<double> softmax_rows(std::span<const double> logits,
                                 std::size_t cols) {
  std::vector<double> out(logits.size());
  const std::size_t rows = cols ? logits.size() / cols : 0;
  for (std::size_t i = 0; i < rows; ++i) {
    const double* z = &logits[i * cols];
    double* p = &out[i * cols];
    const double mx = *std::max_element(z, z + cols);
    double s = 0.0;
    for (std::size_t k = 0; k < cols; ++k) s += (p[k] = std::exp(z[k] - mx));
    for (std::size_t k = 0; k < cols; ++k) p[k] /= s;
  }
  return out;
}

ad::Tensor softmax_cross_entropy(const ad::Tensor& logits,
                                 const ad::Tensor& targets,
                                 const std::optional<ad::Tensor>& weights,
                                 Reduction reduction) {
  if (logits.rank() != 2 || targets.shape() != logits.shape()) {
    throw DimensionError("cross entropy: logits " +
                         ad::shape_string(logits.shape()) + " vs targets " +
                         ad::shape_string(targets.shape()));
  }
  const std::size_t b = logits.dim(0), k = logits.dim(1);
  const auto Y = targets.data();
  for (std::size_t i = 0; i < b; ++i) {
    double s = 0.0;
    for (std::size_t j = 0; j < k; ++j) {
      if (Y[i * k + j] < 0.0) throw ValidationError("target row has a negative entry");
      s += Y[i * k + j];
    }
    if (std::abs(s - 1.0) > 1e-6) {
      throw ValidationError("target row " + std::to_string(i) +
                            " is not a distribution (sums to " +
                            std::to_string(s) + ")");
    }
  }
  std::vector<double> w(b, 1.0);
  if (weights) {
    if (weights->size() != b) {
      throw DimensionError("cross entropy: weights " +
                           ad::shape_string(weights->shape()) +
                           " for a batch of " + std::to_string(b));
    }
    for (std::size_t i = 0; i < b; ++i) {
      w[i] = weights->data()[i];
      if (!(w[i] >= 0.0)) throw ValidationError("negative instance weight");
    }
  }

  auto probs = softmax_rows(logits.data(), k);
  std::vector<double> row_loss(b, 0.0);
  double total = 0.0;
  for (std::size_t i = 0; i < b; ++i) {
    for (std::size_t j = 0; j < k; ++j) {
      const double y = Y[i * k + j];
      if (y != 0.0) row_loss[i] -= y * std::log(std::max(probs[i * k + j], kLogFloor));
    }
    total += w[i] * row_loss[i];
  }
  const double norm = reduction == Reduction::mean && b > 0 ? 1.0 / b : 1.0;
  total *= norm;

  std::vector<ad::Tensor> inputs{logits, targets};
  if (weights) inputs.push_back(*weights);
  return ad::detail::record(
      {1}, {total}, std::move(inputs),
      [b, k, norm, w = std::move(w), probs = std::move(probs),
       row_loss = std::move(row_loss)](ad::Node& self) {
        const double g = self.grad[0] * norm;
        ad::Node& nl = *self.inputs[0];
        const auto& Y = self.inputs[1]->value;
        if (nl.requires_grad) {
          for (std::size_t i = 0; i < b; ++i) {
            double ysum = 0.0;
            for (std::size_t j = 0; j < k; ++j) ysum += Y[i * k + j];
            const double gi = g * w[i];
            if (gi == 0.0) continue;
            for (std::size_t j = 0; j < k; ++j)
              nl.grad[i * k + j] += gi * (probs[i * k + j] * ysum - Y[i * k + j]);
          }
        }
        if (self.inputs.size() > 2 && self.inputs[2]->requires_grad) {
          ad::Node& nw = *self.inputs[2];
          for (std::size_t i = 0; i < b; ++i) nw.grad[i] += g * row_loss[i];
        }
      });
}

ad::Tensor binary_cross_entropy(const ad::Tensor& probs,
                                const ad::Tensor& targets, Reduction reduction) {
  if (probs.size() != targets.size()) {
    throw DimensionError("binary cross entropy: probs " +
                         ad::shape_string(probs.shape()) + " vs targets " +
                         ad::shape_string(targets.shape()));
  }
  const std::size_t b = probs.size();
  const auto P = probs.data();
  const auto C = targets.data();
  double total = 0.0;
  for (std::size_t i = 0; i < b; ++i) {
    if (!(C[i] >= 0.0 && C[i] <= 1.0)) {
      throw ValidationError("confidence target " + std::to_string(C[i]) +
                            " outside [0, 1]");
    }
    const double p = std::clamp(P[i], kProbClamp, 1.0 - kProbClamp);
    total += -C[i] * std::log(p) - (1.0 - C[i]) * std::log(1.0 - p);
  }
  const double norm = reduction == Reduction::mean && b > 0 ? 1.0 / b : 1.0;
  total *= norm;
  return ad::detail::record(
      {1}, {total}, {probs, targets}, [b, norm](ad::Node& self) {
        ad::Node& np = *self.inputs[0];
        if (!np.requires_grad) return;
        const auto& C = self.inputs[1]->value;
        const double g = self.grad[0] * norm;
        for (std::size_t i = 0; i < b; ++i) {
          const double p = np.value[i];
          if (p < kProbClamp || p > 1.0 - kProbClamp) continue;
          np.grad[i] += g * (-C[i] / p + (1.0 - C[i]) / (1.0 - p));
        }
      });
}

}  // namespace l2lws::nn

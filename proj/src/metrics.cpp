#include "l2lws/metrics.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <numeric>

#include "l2lws/errors.hpp"

namespace l2lws::metrics {

void ConfusionMatrix::add(std::size_t gold, std::size_t predicted, std::size_t n) {
  if (gold >= k_ || predicted >= k_) {
    throw ValidationError("class index outside the confusion matrix");
  }
  counts_[gold * k_ + predicted] += n;
}

std::size_t ConfusionMatrix::total() const {
  return std::accumulate(counts_.begin(), counts_.end(), std::size_t{0});
}

double class_f1(const ConfusionMatrix& cm, std::size_t cls) {
  const std::size_t k = cm.num_classes();
  const double tp = static_cast<double>(cm.count(cls, cls));
  if (tp == 0.0) return 0.0;
  double gold = 0.0, pred = 0.0;
  for (std::size_t j = 0; j < k; ++j) {
    gold += static_cast<double>(cm.count(cls, j));
    pred += static_cast<double>(cm.count(j, cls));
  }
  const double precision = tp / pred, recall = tp / gold;
  return 2.0 * precision * recall / (precision + recall);
}

double macro_f1(const ConfusionMatrix& cm, std::span<const std::size_t> classes) {
  if (cm.total() == 0) throw InputError("macro F1 of an empty confusion matrix");
  if (classes.empty()) throw InputError("macro F1 over no classes");
  double s = 0.0;
  for (auto c : classes) s += class_f1(cm, c);
  return s / static_cast<double>(classes.size());
}

double macro_f1(const ConfusionMatrix& cm) {
  std::vector<std::size_t> all(cm.num_classes());
  std::iota(all.begin(), all.end(), std::size_t{0});
  return macro_f1(cm, all);
}

double macro_f1_pos_neg(const ConfusionMatrix& cm) {
  if (cm.num_classes() < 2) throw InputError("positive/negative F1 needs two classes");
  constexpr std::array<std::size_t, 2> pn{0, 1};
  return macro_f1(cm, pn);
}

namespace {

double score(const ConfusionMatrix& cm, bool pos_neg_only) {
  return pos_neg_only ? macro_f1_pos_neg(cm) : macro_f1(cm);
}

}  // namespace

Evaluation evaluate(const model::DualModel& model, const data::EncodedSet& dataset,
                    bool pos_neg_only) {
  const std::size_t k = model.config().num_classes;
  Evaluation ev{ConfusionMatrix(k), 0.0, 0.0};
  if (dataset.empty()) throw InputError("cannot evaluate an empty dataset");
  ad::NoGradGuard no_grad;
  Rng unused(0);
  double loss = 0.0;
  for (const auto& inst : dataset) {
    if (!inst.true_label) throw ValidationError("evaluation instance has no true label");
    const auto repr = model::represent(model, inst.tokens, nn::Mode::eval, unused);
    const auto logits = model::predict_target(model, ad::reshape(repr, {1, repr.size()}));
    const auto probs = nn::softmax_rows(logits.data(), k);
    loss -= std::log(std::max(probs.at(*inst.true_label), 1e-12));
    ev.confusion.add(*inst.true_label, model::argmax(logits.data()));
  }
  ev.mean_loss = loss / static_cast<double>(dataset.size());
  ev.macro_f1 = score(ev.confusion, pos_neg_only);
  return ev;
}

Evaluation evaluate_weak_labels(const data::EncodedSet& dataset, std::size_t num_classes,
                                bool pos_neg_only) {
  Evaluation ev{ConfusionMatrix(num_classes), 0.0, 0.0};
  if (dataset.empty()) throw InputError("cannot evaluate an empty dataset");
  double loss = 0.0;
  for (const auto& inst : dataset) {
    if (!inst.true_label) throw ValidationError("evaluation instance has no true label");
    if (!inst.weak || inst.weak->size() != num_classes) {
      throw ValidationError("evaluation instance has no usable weak label");
    }
    loss -= std::log(std::max((*inst.weak)[*inst.true_label], 1e-12));
    ev.confusion.add(*inst.true_label, model::argmax(*inst.weak));
  }
  ev.mean_loss = loss / static_cast<double>(dataset.size());
  ev.macro_f1 = score(ev.confusion, pos_neg_only);
  return ev;
}

}  // namespace l2lws::metrics

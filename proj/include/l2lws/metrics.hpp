#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "l2lws/data.hpp"
#include "l2lws/model.hpp"

namespace l2lws::metrics {

// Rows are gold classes, columns predicted classes.
class ConfusionMatrix {
 public:
  explicit ConfusionMatrix(std::size_t num_classes)
      : k_(num_classes), counts_(num_classes * num_classes, 0) {}

  void add(std::size_t gold, std::size_t predicted, std::size_t n = 1);
  std::size_t count(std::size_t gold, std::size_t predicted) const {
    return counts_.at(gold * k_ + predicted);
  }
  std::size_t num_classes() const { return k_; }
  std::size_t total() const;

  bool operator==(const ConfusionMatrix&) const = default;

 private:
  std::size_t k_;
  std::vector<std::size_t> counts_;
};

// Per-class F1 (precision and recall from the matrix). A class with no true
// positives scores 0, including one that is never gold and never predicted.
double class_f1(const ConfusionMatrix& cm, std::size_t cls);

// Unweighted mean of class F1 over all classes. Throws InputError on an empty
// matrix.
double macro_f1(const ConfusionMatrix& cm);
// Mean over the listed classes only.
double macro_f1(const ConfusionMatrix& cm, std::span<const std::size_t> classes);
// Mean F1 of the positive (0) and negative (1) classes.
double macro_f1_pos_neg(const ConfusionMatrix& cm);

struct Evaluation {
  ConfusionMatrix confusion{0};
  double macro_f1 = 0.0;
  // Mean cross entropy of the target head against the true labels.
  double mean_loss = 0.0;
};

// Eval-mode predictions of the target head; argmax with lowest-index ties.
// Does not touch parameters. Throws ValidationError on a missing true label.
Evaluation evaluate(const model::DualModel& model, const data::EncodedSet& dataset,
                    bool pos_neg_only = false);

// Weak-annotator baseline: argmax of each instance's weak label against its
// true label.
Evaluation evaluate_weak_labels(const data::EncodedSet& dataset,
                                std::size_t num_classes, bool pos_neg_only = false);

}  // namespace l2lws::metrics

#pragma once

#include <cstddef>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace l2lws::weak {

inline constexpr std::size_t kDefaultNumClasses = 3;
inline constexpr double kDistributionTolerance = 1e-6;

// Class order follows the lexicon columns: positive, negative, neutral.
// The last class is treated as neutral.

// Throws ValidationError unless `p` is non-negative and sums to 1 within tol.
void check_distribution(std::span<const double> p,
                        double tol = kDistributionTolerance);

struct SoftLabel {
  std::vector<double> probs;

  std::size_t num_classes() const { return probs.size(); }
  // Lowest index wins ties.
  std::size_t argmax() const;
};

SoftLabel one_hot(std::size_t cls, std::size_t num_classes);

struct ConfidenceTarget {
  double value = 1.0;
};

class Lexicon {
 public:
  explicit Lexicon(std::size_t num_classes = kDefaultNumClasses)
      : num_classes_(num_classes) {}

  // TSV: token<TAB>p_pos<TAB>p_neg<TAB>p_neutral; '#' comment lines and blank
  // lines are skipped. Rows must be distributions.
  static Lexicon load_tsv(const std::string& path,
                          std::size_t num_classes = kDefaultNumClasses);

  void add(std::string token, std::vector<double> distribution);
  const std::vector<double>* find(std::string_view token) const;

  std::size_t num_classes() const { return num_classes_; }
  std::size_t size() const { return entries_.size(); }
  std::size_t neutral_class() const { return num_classes_ - 1; }

 private:
  struct Hash {
    using is_transparent = void;
    std::size_t operator()(std::string_view s) const {
      return std::hash<std::string_view>{}(s);
    }
  };
  std::size_t num_classes_;
  std::unordered_map<std::string, std::vector<double>, Hash, std::equal_to<>>
      entries_;
};

// Mean of per-token distributions; tokens missing from the lexicon count as
// the neutral one-hot. Throws InputError on an empty sequence.
SoftLabel annotate(std::span<const std::string> tokens, const Lexicon& lex);

// 1 - (1/|K|) * sum_k |y_k - weak_k|, with y a one-hot true label.
// Throws ValidationError if y is not one-hot or the widths differ.
ConfidenceTarget confidence_target(std::span<const double> y,
                                   std::span<const double> weak);
ConfidenceTarget confidence_target(std::size_t true_class,
                                   std::span<const double> weak);

struct AnnotationResult {
  std::size_t index = 0;
  std::optional<SoftLabel> label;
  std::string error;  // set when label is empty
};

// Annotates sentences in order. A failing sentence yields a result carrying
// its index and the error message; the stream continues.
void annotate_corpus(std::span<const std::vector<std::string>> sentences,
                     const Lexicon& lex,
                     const std::function<void(AnnotationResult&&)>& sink);
std::vector<AnnotationResult> annotate_corpus(
    std::span<const std::vector<std::string>> sentences, const Lexicon& lex);

}  // namespace l2lws::weak

#include "l2lws/weak_annotation.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

#include "l2lws/errors.hpp"

namespace l2lws::weak {

void check_distribution(std::span<const double> p, double tol) {
  double s = 0.0;
  for (double x : p) {
    if (!(x >= 0.0)) throw ValidationError("distribution has a negative entry");
    s += x;
  }
  if (std::abs(s - 1.0) > tol) {
    throw ValidationError("distribution sums to " + std::to_string(s));
  }
}

std::size_t SoftLabel::argmax() const {
  std::size_t best = 0;
  for (std::size_t k = 1; k < probs.size(); ++k)
    if (probs[k] > probs[best]) best = k;
  return best;
}

SoftLabel one_hot(std::size_t cls, std::size_t num_classes) {
  if (cls >= num_classes) {
    throw ValidationError("class " + std::to_string(cls) + " out of range");
  }
  SoftLabel s{std::vector<double>(num_classes, 0.0)};
  s.probs[cls] = 1.0;
  return s;
}

Lexicon Lexicon::load_tsv(const std::string& path, std::size_t num_classes) {
  std::ifstream in(path);
  if (!in) throw InputError("cannot open lexicon " + path);
  Lexicon lex(num_classes);
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || line.front() == '#') continue;
    std::vector<std::string> fields;
    std::size_t start = 0;
    while (true) {
      const auto tab = line.find('\t', start);
      fields.push_back(line.substr(start, tab - start));
      if (tab == std::string::npos) break;
      start = tab + 1;
    }
    const auto where = path + ":" + std::to_string(line_no);
    if (fields.size() != num_classes + 1 || fields[0].empty()) {
      throw InputError(where + ": expected token and " +
                       std::to_string(num_classes) + " tab-separated scores");
    }
    std::vector<double> dist(num_classes);
    for (std::size_t k = 0; k < num_classes; ++k) {
      std::size_t used = 0;
      try {
        dist[k] = std::stod(fields[k + 1], &used);
      } catch (const std::exception&) {
        used = 0;
      }
      if (used == 0 || used != fields[k + 1].size()) {
        throw InputError(where + ": bad score '" + fields[k + 1] + "'");
      }
    }
    try {
      check_distribution(dist);
    } catch (const ValidationError& e) {
      throw ValidationError(where + ": " + e.what());
    }
    lex.add(std::move(fields[0]), std::move(dist));
  }
  return lex;
}

void Lexicon::add(std::string token, std::vector<double> distribution) {
  if (distribution.size() != num_classes_) {
    throw ValidationError("lexicon entry '" + token + "' has " +
                          std::to_string(distribution.size()) + " scores");
  }
  check_distribution(distribution);
  entries_.insert_or_assign(std::move(token), std::move(distribution));
}

const std::vector<double>* Lexicon::find(std::string_view token) const {
  auto it = entries_.find(token);
  return it == entries_.end() ? nullptr : &it->second;
}

SoftLabel annotate(std::span<const std::string> tokens, const Lexicon& lex) {
  if (tokens.empty()) throw InputError("cannot annotate an empty sentence");
  const std::size_t k = lex.num_classes();
  std::vector<double> acc(k, 0.0);
  for (const auto& tok : tokens) {
    if (const auto* dist = lex.find(tok)) {
      for (std::size_t c = 0; c < k; ++c) acc[c] += (*dist)[c];
    } else {
      acc[lex.neutral_class()] += 1.0;
    }
  }
  const double n = static_cast<double>(tokens.size());
  double s = 0.0;
  for (auto& x : acc) s += (x /= n);
  // Renormalize only real drift; rounding-level residue is left alone.
  if (std::abs(s - 1.0) > 1e-12) {
    for (auto& x : acc) x /= s;
  }
  return SoftLabel{std::move(acc)};
}

ConfidenceTarget confidence_target(std::span<const double> y,
                                   std::span<const double> weak) {
  if (y.size() != weak.size() || y.empty()) {
    throw ValidationError("confidence target: label widths differ");
  }
  std::size_t ones = 0;
  for (double v : y) {
    if (v == 1.0) {
      ++ones;
    } else if (v != 0.0) {
      ones = 2;
      break;
    }
  }
  if (ones != 1) throw ValidationError("true label is not one-hot");
  double l1 = 0.0;
  for (std::size_t k = 0; k < y.size(); ++k) l1 += std::abs(y[k] - weak[k]);
  const double c = 1.0 - l1 / static_cast<double>(y.size());
  return {std::clamp(c, 0.0, 1.0)};
}

ConfidenceTarget confidence_target(std::size_t true_class,
                                   std::span<const double> weak) {
  return confidence_target(one_hot(true_class, weak.size()).probs, weak);
}

void annotate_corpus(std::span<const std::vector<std::string>> sentences,
                     const Lexicon& lex,
                     const std::function<void(AnnotationResult&&)>& sink) {
  for (std::size_t i = 0; i < sentences.size(); ++i) {
    AnnotationResult r;
    r.index = i;
    try {
      r.label = annotate(sentences[i], lex);
    } catch (const std::exception& e) {
      r.error = "instance " + std::to_string(i) + ": " + e.what();
    }
    sink(std::move(r));
  }
}

std::vector<AnnotationResult> annotate_corpus(
    std::span<const std::vector<std::string>> sentences, const Lexicon& lex) {
  std::vector<AnnotationResult> out;
  out.reserve(sentences.size());
  annotate_corpus(sentences, lex,
                  [&out](AnnotationResult&& r) { out.push_back(std::move(r)); });
  return out;
}

}  // namespace l2lws::weak

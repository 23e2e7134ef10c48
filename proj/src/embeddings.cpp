#include "l2lws/embeddings.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>

#include <Eigen/Dense>

#include "l2lws/errors.hpp"
#include "l2lws/experiment.hpp"

namespace l2lws::data {

std::vector<double> cooccurrence_embeddings(std::span<const Instance> instances,
                                            const Vocabulary& vocab, std::size_t dim,
                                            double max_abs) {
  const std::size_t n = vocab.size();
  if (dim == 0) throw ConfigError("embedding dimension must be positive");
  std::vector<double> table(n * dim, 0.0);
  // Real tokens start after PAD and UNK.
  constexpr std::size_t first = Vocabulary::kUnk + 1;
  if (n <= first) return table;
  const std::size_t m = n - first;

  Eigen::MatrixXd counts = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(m),
                                                 static_cast<Eigen::Index>(m));
  std::vector<Eigen::Index> ids;
  for (const auto& inst : instances) {
    ids.clear();
    for (const auto& t : inst.tokens) {
      const auto idx = vocab.find(t);
      if (idx && *idx >= first) ids.push_back(static_cast<Eigen::Index>(*idx - first));
    }
    for (std::size_t a = 0; a < ids.size(); ++a)
      for (std::size_t b = 0; b < ids.size(); ++b)
        if (a != b) counts(ids[a], ids[b]) += 1.0;
  }
  const double total = counts.sum();
  if (total == 0.0) return table;
  const Eigen::VectorXd row = counts.rowwise().sum();
  Eigen::MatrixXd ppmi = Eigen::MatrixXd::Zero(counts.rows(), counts.cols());
  for (Eigen::Index i = 0; i < counts.rows(); ++i)
    for (Eigen::Index j = 0; j < counts.cols(); ++j)
      if (counts(i, j) > 0.0)
        ppmi(i, j) = std::max(0.0, std::log(counts(i, j) * total / (row(i) * row(j))));

  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(ppmi);
  if (solver.info() != Eigen::Success) throw DomainError("co-occurrence eigensolver failed");
  // Eigenvalues come in increasing order.
  const auto& values = solver.eigenvalues();
  const auto& vectors = solver.eigenvectors();
  const std::size_t keep = std::min(dim, m);
  double largest = 0.0;
  for (std::size_t k = 0; k < keep; ++k) {
    const Eigen::Index col = static_cast<Eigen::Index>(m - 1 - k);
    Eigen::VectorXd v = vectors.col(col) * std::sqrt(std::max(values(col), 0.0));
    Eigen::Index arg = 0;
    v.cwiseAbs().maxCoeff(&arg);
    if (v(arg) < 0) v = -v;
    for (Eigen::Index i = 0; i < v.size(); ++i) {
      table[(static_cast<std::size_t>(i) + first) * dim + k] = v(i);
      largest = std::max(largest, std::abs(v(i)));
    }
  }
  if (largest > 0.0)
    for (auto& x : table) x *= max_abs / largest;
  return table;
}

void save_embeddings(const std::string& path, const Vocabulary& vocab,
                     std::span<const double> table, std::size_t dim) {
  if (table.size() != vocab.size() * dim)
    throw DimensionError("embedding table does not match the vocabulary");
  std::ofstream out(path);
  if (!out) throw InputError("cannot write " + path);
  for (std::size_t i = Vocabulary::kUnk + 1; i < vocab.size(); ++i) {
    out << vocab.token(i);
    for (std::size_t d = 0; d < dim; ++d)
      out << ' ' << experiment::format_number(table[i * dim + d]);
    out << '\n';
  }
}

}  // namespace l2lws::data

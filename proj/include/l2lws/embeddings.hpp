#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "l2lws/data.hpp"

namespace l2lws::data {

// Unsupervised word vectors for desk-scale runs without a pretrained file.
// Counts in-sentence co-occurrence over the vocabulary, takes positive PMI,
// and keeps the top `dim` eigenvectors scaled by sqrt(eigenvalue). Each
// vector's sign is fixed so its largest-magnitude entry is positive; the
// matrix is then scaled so its largest entry is `max_abs`.
// Row-major [vocab.size() x dim]; PAD, UNK and unseen tokens get zero rows.
std::vector<double> cooccurrence_embeddings(std::span<const Instance> instances,
                                            const Vocabulary& vocab, std::size_t dim,
                                            double max_abs = 0.5);

// Text format read by nn::load_pretrained_embeddings; PAD and UNK omitted.
void save_embeddings(const std::string& path, const Vocabulary& vocab,
                     std::span<const double> table, std::size_t dim);

}  // namespace l2lws::data

#include "embalign/embedding_space.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

namespace embalign {

EmbeddingSpace EmbeddingSpace::create(std::vector<std::string> vocab, Matrix vectors,
                                      std::vector<std::uint64_t> frequencies) {
  if (static_cast<Eigen::Index>(vocab.size()) != vectors.rows()) {
    throw std::runtime_error("embedding space: vocab size " + std::to_string(vocab.size()) +
                             " does not match vector row count " + std::to_string(vectors.rows()));
  }
  if (!frequencies.empty() && frequencies.size() != vocab.size()) {
    throw std::runtime_error("embedding space: frequency count " + std::to_string(frequencies.size()) +
                             " does not match vocab size " + std::to_string(vocab.size()));
  }
  if (!vectors.allFinite()) {
    for (Eigen::Index i = 0; i < vectors.rows(); ++i) {
      if (!vectors.row(i).allFinite()) {
        throw std::runtime_error("embedding space: non-finite value in row for token '" +
                                 vocab[static_cast<std::size_t>(i)] + "'");
      }
    }
  }

  EmbeddingSpace space;
  space.vocab = std::move(vocab);
  space.vectors = std::move(vectors);
  space.frequencies = std::move(frequencies);
  space.index_.reserve(space.vocab.size());
  for (std::size_t i = 0; i < space.vocab.size(); ++i) {
    auto [it, inserted] = space.index_.emplace(space.vocab[i], static_cast<int>(i));
    if (!inserted) {
      throw std::runtime_error("embedding space: duplicate token '" + space.vocab[i] + "'");
    }
  }
  return space;
}

std::vector<std::string> BilingualDictionary::targets_of(const std::string& source) const {
  std::vector<std::string> out;
  for (const auto& [s, t] : pairs) {
    if (s == source) out.push_back(t);
  }
  return out;
}

EmbeddingSpace unit_normalize(const EmbeddingSpace& space) {
  Matrix scaled = space.vectors;
  for (Eigen::Index i = 0; i < scaled.rows(); ++i) {
    double norm = scaled.row(i).norm();
    if (norm == 0.0) {
      throw std::runtime_error("unit_normalize: zero vector for token '" +
                               space.vocab[static_cast<std::size_t>(i)] + "'");
    }
    scaled.row(i) /= norm;
  }
  EmbeddingSpace out = EmbeddingSpace::create(space.vocab, std::move(scaled), space.frequencies);
  out.unit_normalized = true;
  return out;
}

Matrix normalized_rows(const Matrix& m) {
  Matrix out = m;
  for (Eigen::Index i = 0; i < out.rows(); ++i) {
    double norm = out.row(i).norm();
    if (norm > 0.0) out.row(i) /= norm;
  }
  return out;
}

std::vector<int> most_frequent_rows(const EmbeddingSpace& space, int max_words) {
  if (max_words < 1) throw std::runtime_error("most_frequent_rows: max_words must be positive");
  std::vector<int> order(static_cast<std::size_t>(space.size()));
  std::iota(order.begin(), order.end(), 0);
  if (space.has_frequencies()) {
    std::stable_sort(order.begin(), order.end(), [&](int a, int b) {
      return space.frequencies[static_cast<std::size_t>(a)] >
             space.frequencies[static_cast<std::size_t>(b)];
    });
  }
  if (static_cast<int>(order.size()) > max_words) order.resize(static_cast<std::size_t>(max_words));
  return order;
}

}  // namespace embalign

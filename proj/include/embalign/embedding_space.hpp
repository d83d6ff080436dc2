#pragma once

#include <cstdint>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "embalign/types.hpp"

namespace embalign {

// A vocabulary plus one dense row vector per token. Immutable after
// construction; treat the public members as read-only.
struct EmbeddingSpace {
  std::vector<std::string> vocab;
  Matrix vectors;                         // rows == vocab.size()
  std::vector<std::uint64_t> frequencies; // empty when unknown
  bool unit_normalized = false;

  int size() const { return static_cast<int>(vocab.size()); }
  int dim() const { return static_cast<int>(vectors.cols()); }
  bool has_frequencies() const { return !frequencies.empty(); }

  // Row index of a token, -1 if absent.
  int row_of(const std::string& token) const {
    auto it = index_.find(token);
    return it == index_.end() ? -1 : it->second;
  }

  // Validates invariants and builds the token index. Throws on duplicate
  // tokens, non-finite values, or shape mismatches.
  static EmbeddingSpace create(std::vector<std::string> vocab, Matrix vectors,
                               std::vector<std::uint64_t> frequencies = {});

 private:
  std::unordered_map<std::string, int> index_;
};

struct BilingualDictionary {
  std::vector<std::pair<std::string, std::string>> pairs;

  int size() const { return static_cast<int>(pairs.size()); }
  bool empty() const { return pairs.empty(); }

  // All targets paired with a source token, in pair order.
  std::vector<std::string> targets_of(const std::string& source) const;
};

// Returns a copy with every row scaled to unit Euclidean norm. Throws on a
// zero row, naming the offending token.
EmbeddingSpace unit_normalize(const EmbeddingSpace& space);

// Row copies of `space.vectors` scaled to unit norm, zero rows left as-is.
Matrix normalized_rows(const Matrix& m);

// Row indices of the up-to max_words most frequent tokens, highest frequency
// first, ties toward the lower row. Spaces without frequencies keep their row
// order (rank implied by position).
std::vector<int> most_frequent_rows(const EmbeddingSpace& space, int max_words);

}  // namespace embalign

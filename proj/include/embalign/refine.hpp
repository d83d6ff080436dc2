#pragma once

#include <vector>

#include "embalign/embedding_space.hpp"
#include "embalign/types.hpp"

namespace embalign {

struct RefineConfig {
  int dict_max_rank = 10000;  // candidate pool: this many most frequent words per side
  int csls_k = 10;
  int iterations = 5;
  bool orthogonal = true;
};

struct MappingSolution {
  LinearMap map;
  // Set when the unconstrained solve has fewer pairs than input dimensions;
  // the ridge term then picks the (approximately) minimum-norm solution.
  bool underdetermined = false;
};

// Closed-form solve of min ||W X - Y||^2 over column-paired X (d1 x k) and
// Y (d2 x k). orthogonal=true gives the Procrustes solution U V^T from the
// SVD of Y X^T and requires d1 = d2; orthogonal=false solves the normal
// equations with a 1e-8 ridge.
MappingSolution solve_mapping(const Matrix& x, const Matrix& y, bool orthogonal);

// Mutual CSLS nearest neighbors between the dict_max_rank most frequent words
// of each side: (s, t) is kept iff t is the best target for mapped s and s is
// the best source for t, ties toward lower rows. Pairs come back in source
// candidate order.
BilingualDictionary build_synthetic_dictionary(const EmbeddingSpace& source,
                                               const EmbeddingSpace& target, const LinearMap& map,
                                               const RefineConfig& config);

struct RefineResult {
  LinearMap map;
  std::vector<int> dictionary_sizes;  // one entry per completed iteration
};

// Alternates build_synthetic_dictionary and solve_mapping for
// config.iterations rounds starting from w0 (0 rounds returns w0 unchanged).
// An empty synthetic dictionary aborts with the iteration index in the error.
RefineResult refine(const EmbeddingSpace& source, const EmbeddingSpace& target,
                    const LinearMap& w0, const RefineConfig& config);

// Solves the mapping on an explicit dictionary; every token must resolve to a
// row in its space.
MappingSolution solve_supervised(const EmbeddingSpace& source, const EmbeddingSpace& target,
                                 const BilingualDictionary& dictionary, bool orthogonal);

}  // namespace embalign

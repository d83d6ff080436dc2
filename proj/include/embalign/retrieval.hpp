#pragma once

#include <string>
#include <vector>

#include "embalign/embedding_space.hpp"
#include "embalign/types.hpp"

namespace embalign {

struct CslsConfig {
  int k_neighbors = 10;
};

struct ScoredToken {
  int row = -1;
  std::string token;
  double score = 0.0;
};

// Exact cosine top-k over the space's rows, descending score, ties broken by
// lowest row index. The query must be finite and nonzero.
std::vector<ScoredToken> cosine_topk(const Vector& query, const EmbeddingSpace& space, int k);

// CSLS(Ws, t) = 2 cos(Ws, t) - rT(Ws) - rS(t), where rT is the mean cosine of
// the mapped query to its k nearest target rows and rS the mean cosine of the
// target row to its k nearest mapped source rows. The rS terms depend only on
// (source, map, target) and are computed once per index; the index remembers
// the map version it was built from so stale reuse is detectable.
class CslsIndex {
 public:
  CslsIndex(const EmbeddingSpace& source, const EmbeddingSpace& target, const LinearMap& map,
            CslsConfig config);

  // `source_query` is a raw source-space vector; it is mapped internally.
  std::vector<ScoredToken> topk(const Vector& source_query, int k) const;
  double score(const Vector& source_query, int target_row) const;

  // Scores for every target row at once.
  Vector scores(const Vector& source_query) const;

  bool matches(const LinearMap& map) const { return map.version() == map_version_; }
  const Vector& target_penalty() const { return r_source_; }
  int target_size() const { return static_cast<int>(target_unit_.rows()); }

 private:
  Matrix target_unit_;   // unit rows of the target space
  Matrix map_matrix_;
  Vector r_source_;      // rS per target row
  std::vector<std::string> target_vocab_;
  CslsConfig config_;
  std::uint64_t map_version_;
};

// One-shot CSLS top-k; recomputes the rS terms from scratch. Prefer CslsIndex
// in loops.
std::vector<ScoredToken> csls_topk(const Vector& query, const EmbeddingSpace& source,
                                   const EmbeddingSpace& target, const LinearMap& map,
                                   const CslsConfig& config, int k);

// How concentrated retrieval is: counts per target row how often it appears
// in a query's top-k, and the largest count divided by the query count.
struct HubOccupancy {
  std::vector<int> counts;
  double max_fraction = 0.0;
};

// Cosine mode; queries live in the target coordinate system, one per row.
HubOccupancy hub_occupancy(const Matrix& queries, const EmbeddingSpace& space, int k);
// CSLS mode; queries live in the source coordinate system, one per row.
HubOccupancy hub_occupancy(const Matrix& queries, const CslsIndex& index, int k);

// Mean of the k largest entries of `values`.
double mean_topk(const Vector& values, int k);

}  // namespace embalign

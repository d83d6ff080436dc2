#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "embalign/corpus.hpp"
#include "embalign/embedding_space.hpp"
#include "embalign/types.hpp"

namespace embalign {

struct KMeansConfig {
  int k = 8;
  int max_iters = 100;
  int restarts = 1;
  double tol = 1e-6;       // stop when no centroid moves farther than this
  std::uint64_t seed = 1;
};

struct KMeansResult {
  std::vector<int> assignment;      // cluster id per input row
  Matrix centroids;                 // k x dim, exact means of the final assignment
  std::vector<double> wcss_trace;   // per-iteration WCSS of the winning restart
  double wcss = 0.0;                // final WCSS of the winning restart
  int iterations = 0;               // Lloyd iterations run by the winning restart
  std::vector<double> restart_wcss; // final WCSS of every restart, in restart order
};

// Lloyd's algorithm with k-means++ seeding. Restarts use seeds derived from
// config.seed; the restart with the lowest final WCSS wins, ties going to the
// earliest restart. Empty clusters are reseeded to the point farthest from its
// currently assigned centroid. Each point breaks distance ties toward the
// lowest cluster id, so results are deterministic under a fixed seed.
KMeansResult kmeans_cluster(const Matrix& points, const KMeansConfig& config);

// One embedding per non-empty cluster: the mean of its member instance
// vectors. Tokens are "cluster_<id>" and frequencies are member counts.
EmbeddingSpace average_clusters(const InstanceSet& instances, const std::vector<int>& assignment,
                                int k);

// One embedding per distinct label: the mean of that label's instances.
// Labels keep first-appearance order; frequencies are instance counts.
EmbeddingSpace group_by_label(const InstanceSet& instances);

// Fraction of points whose cluster's majority label matches their own.
double cluster_purity(const std::vector<int>& assignment, const std::vector<std::string>& labels,
                      int k);

}  // namespace embalign

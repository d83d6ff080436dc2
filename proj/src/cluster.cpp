#include "embalign/cluster.hpp"

#include <algorithm>
#include <limits>
#include <map>
#include <random>
#include <stdexcept>
#include <unordered_map>

namespace embalign {

namespace {

struct LloydRun {
  std::vector<int> assignment;
  Matrix centroids;
  std::vector<double> wcss_trace;
  double wcss = std::numeric_limits<double>::infinity();
  int iterations = 0;
};

Matrix kmeanspp_seed(const Matrix& points, int k, std::mt19937_64& rng) {
  const Eigen::Index n = points.rows();
  Matrix centroids(k, points.cols());
  std::uniform_int_distribution<Eigen::Index> first(0, n - 1);
  centroids.row(0) = points.row(first(rng));

  Vector dist2 = (points.rowwise() - centroids.row(0)).rowwise().squaredNorm();
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  for (int c = 1; c < k; ++c) {
    double total = dist2.sum();
    Eigen::Index chosen = 0;
    if (total > 0.0) {
      double u = unit(rng) * total;
      double acc = 0.0;
      chosen = n - 1;
      for (Eigen::Index i = 0; i < n; ++i) {
        acc += dist2(i);
        if (acc >= u) {
          chosen = i;
          break;
        }
      }
    } else {
      // All remaining distances zero: every point coincides with a centroid.
      chosen = first(rng);
    }
    centroids.row(c) = points.row(chosen);
    dist2 = dist2.cwiseMin((points.rowwise() - centroids.row(c)).rowwise().squaredNorm());
  }
  return centroids;
}

// Assign each point to its nearest centroid, lowest cluster id on ties.
double assign_points(const Matrix& points, const Matrix& centroids, std::vector<int>& assignment) {
  const Eigen::Index n = points.rows();
  const Eigen::Index k = centroids.rows();
  double wcss = 0.0;
  for (Eigen::Index i = 0; i < n; ++i) {
    double best = std::numeric_limits<double>::infinity();
    int best_c = 0;
    for (Eigen::Index c = 0; c < k; ++c) {
      double d = (points.row(i) - centroids.row(c)).squaredNorm();
      if (d < best) {
        best = d;
        best_c = static_cast<int>(c);
      }
    }
    assignment[static_cast<std::size_t>(i)] = best_c;
    wcss += best;
  }
  return wcss;
}

LloydRun lloyd(const Matrix& points, int k, int max_iters, double tol, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  const Eigen::Index n = points.rows();

  LloydRun run;
  run.centroids = kmeanspp_seed(points, k, rng);
  run.assignment.assign(static_cast<std::size_t>(n), 0);

  std::vector<Eigen::Index> counts(static_cast<std::size_t>(k), 0);
  for (int iter = 0; iter < max_iters; ++iter) {
    run.wcss = assign_points(points, run.centroids, run.assignment);

    // Give any empty cluster the point farthest from its assigned centroid.
    std::fill(counts.begin(), counts.end(), 0);
    for (int a : run.assignment) ++counts[static_cast<std::size_t>(a)];
    for (int c = 0; c < k; ++c) {
      if (counts[static_cast<std::size_t>(c)] > 0) continue;
      double worst = -1.0;
      Eigen::Index worst_i = 0;
      for (Eigen::Index i = 0; i < n; ++i) {
        int a = run.assignment[static_cast<std::size_t>(i)];
        if (counts[static_cast<std::size_t>(a)] <= 1) continue;
        double d = (points.row(i) - run.centroids.row(a)).squaredNorm();
        if (d > worst) {
          worst = d;
          worst_i = i;
        }
      }
      int old = run.assignment[static_cast<std::size_t>(worst_i)];
      --counts[static_cast<std::size_t>(old)];
      run.assignment[static_cast<std::size_t>(worst_i)] = c;
      ++counts[static_cast<std::size_t>(c)];
      run.centroids.row(c) = points.row(worst_i);
      run.wcss = assign_points(points, run.centroids, run.assignment);
      std::fill(counts.begin(), counts.end(), 0);
      for (int a : run.assignment) ++counts[static_cast<std::size_t>(a)];
    }

    run.wcss_trace.push_back(run.wcss);
    run.iterations = iter + 1;

    Matrix next = Matrix::Zero(k, points.cols());
    for (Eigen::Index i = 0; i < n; ++i) {
      next.row(run.assignment[static_cast<std::size_t>(i)]) += points.row(i);
    }
    double moved = 0.0;
    for (int c = 0; c < k; ++c) {
      next.row(c) /= static_cast<double>(counts[static_cast<std::size_t>(c)]);
      moved = std::max(moved, (next.row(c) - run.centroids.row(c)).norm());
    }
    run.centroids = next;
    if (moved < tol) break;
  }

  // Final assignment against the updated centroids, so the returned centroids
  // are the exact means of the returned assignment.
  run.wcss = assign_points(points, run.centroids, run.assignment);
  std::fill(counts.begin(), counts.end(), 0);
  Matrix means = Matrix::Zero(k, points.cols());
  for (Eigen::Index i = 0; i < n; ++i) {
    int a = run.assignment[static_cast<std::size_t>(i)];
    ++counts[static_cast<std::size_t>(a)];
    means.row(a) += points.row(i);
  }
  for (int c = 0; c < k; ++c) {
    if (counts[static_cast<std::size_t>(c)] > 0) {
      means.row(c) /= static_cast<double>(counts[static_cast<std::size_t>(c)]);
    } else {
      means.row(c) = run.centroids.row(c);
    }
  }
  run.centroids = means;
  run.wcss = assign_points(points, run.centroids, run.assignment);
  return run;
}

}  // namespace

KMeansResult kmeans_cluster(const Matrix& points, const KMeansConfig& config) {
  if (points.rows() == 0) throw std::runtime_error("kmeans_cluster: no points");
  if (config.k < 1) throw std::runtime_error("kmeans_cluster: k must be positive");
  if (config.k > points.rows()) {
    throw std::runtime_error("kmeans_cluster: k exceeds the number of points");
  }
  if (config.max_iters < 1 || config.restarts < 1 || config.tol < 0.0) {
    throw std::runtime_error("kmeans_cluster: invalid configuration");
  }
  if (!points.allFinite()) throw std::runtime_error("kmeans_cluster: non-finite input");

  KMeansResult result;
  for (int r = 0; r < config.restarts; ++r) {
    std::uint64_t seed = config.seed + 0x9e3779b97f4a7c15ULL * static_cast<std::uint64_t>(r + 1);
    LloydRun run = lloyd(points, config.k, config.max_iters, config.tol, seed);
    result.restart_wcss.push_back(run.wcss);
    if (r == 0 || run.wcss < result.wcss) {
      result.assignment = std::move(run.assignment);
      result.centroids = std::move(run.centroids);
      result.wcss_trace = std::move(run.wcss_trace);
      result.wcss = run.wcss;
      result.iterations = run.iterations;
    }
  }
  return result;
}

EmbeddingSpace average_clusters(const InstanceSet& instances, const std::vector<int>& assignment,
                                int k) {
  if (assignment.size() != static_cast<std::size_t>(instances.size())) {
    throw std::runtime_error("average_clusters: assignment size does not match instances");
  }
  std::vector<Eigen::Index> counts(static_cast<std::size_t>(k), 0);
  Matrix sums = Matrix::Zero(k, instances.dim());
  for (Eigen::Index i = 0; i < instances.vectors.rows(); ++i) {
    int a = assignment[static_cast<std::size_t>(i)];
    if (a < 0 || a >= k) throw std::runtime_error("average_clusters: cluster id out of range");
    ++counts[static_cast<std::size_t>(a)];
    sums.row(a) += instances.vectors.row(i);
  }

  std::vector<std::string> tokens;
  std::vector<std::uint64_t> freqs;
  std::vector<Eigen::Index> keep;
  for (int c = 0; c < k; ++c) {
    if (counts[static_cast<std::size_t>(c)] == 0) continue;
    tokens.push_back("cluster_" + std::to_string(c));
    freqs.push_back(static_cast<std::uint64_t>(counts[static_cast<std::size_t>(c)]));
    keep.push_back(c);
  }
  Matrix centroids(static_cast<Eigen::Index>(keep.size()), instances.dim());
  for (std::size_t i = 0; i < keep.size(); ++i) {
    centroids.row(static_cast<Eigen::Index>(i)) =
        sums.row(keep[i]) / static_cast<double>(counts[static_cast<std::size_t>(keep[i])]);
  }
  return EmbeddingSpace::create(tokens, std::move(centroids), freqs);
}

EmbeddingSpace group_by_label(const InstanceSet& instances) {
  if (instances.size() == 0) throw std::runtime_error("group_by_label: no instances");
  std::vector<std::string> labels;
  std::unordered_map<std::string, int> index;
  for (const auto& label : instances.labels) {
    if (index.emplace(label, static_cast<int>(labels.size())).second) labels.push_back(label);
  }

  Matrix sums = Matrix::Zero(static_cast<Eigen::Index>(labels.size()), instances.dim());
  std::vector<std::uint64_t> counts(labels.size(), 0);
  for (Eigen::Index i = 0; i < instances.vectors.rows(); ++i) {
    int a = index.at(instances.labels[static_cast<std::size_t>(i)]);
    sums.row(a) += instances.vectors.row(i);
    ++counts[static_cast<std::size_t>(a)];
  }
  for (Eigen::Index a = 0; a < sums.rows(); ++a) {
    sums.row(a) /= static_cast<double>(counts[static_cast<std::size_t>(a)]);
  }
  return EmbeddingSpace::create(labels, std::move(sums), counts);
}

double cluster_purity(const std::vector<int>& assignment, const std::vector<std::string>& labels,
                      int k) {
  if (assignment.size() != labels.size() || assignment.empty()) {
    throw std::runtime_error("cluster_purity: assignment and labels must align and be non-empty");
  }
  std::vector<std::map<std::string, std::size_t>> tallies(static_cast<std::size_t>(k));
  for (std::size_t i = 0; i < assignment.size(); ++i) {
    if (assignment[i] < 0 || assignment[i] >= k) {
      throw std::runtime_error("cluster_purity: cluster id out of range");
    }
    ++tallies[static_cast<std::size_t>(assignment[i])][labels[i]];
  }
  std::size_t matched = 0;
  for (const auto& tally : tallies) {
    std::size_t best = 0;
    for (const auto& [label, count] : tally) best = std::max(best, count);
    matched += best;
  }
  return static_cast<double>(matched) / static_cast<double>(assignment.size());
}

}  // namespace embalign

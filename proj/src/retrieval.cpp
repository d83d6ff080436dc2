#include "embalign/retrieval.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

namespace embalign {

namespace {

// Indices of the k best scores, descending, ties toward the lower index.
std::vector<int> topk_indices(const Vector& scores, int k) {
  const int n = static_cast<int>(scores.size());
  k = std::min(k, n);
  std::vector<int> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), 0);
  std::partial_sort(order.begin(), order.begin() + k, order.end(), [&](int a, int b) {
    if (scores(a) != scores(b)) return scores(a) > scores(b);
    return a < b;
  });
  order.resize(static_cast<std::size_t>(k));
  return order;
}

std::vector<ScoredToken> make_ranked(const Vector& scores, const std::vector<std::string>& vocab,
                                     int k) {
  std::vector<ScoredToken> out;
  for (int row : topk_indices(scores, k)) {
    out.push_back({row, vocab[static_cast<std::size_t>(row)], scores(row)});
  }
  return out;
}

Vector unit_or_throw(const Vector& query, const char* where) {
  if (!query.allFinite()) throw std::runtime_error(std::string(where) + ": non-finite query");
  double norm = query.norm();
  if (norm == 0.0) throw std::runtime_error(std::string(where) + ": zero query vector");
  return query / norm;
}

}  // namespace

double mean_topk(const Vector& values, int k) {
  const int n = static_cast<int>(values.size());
  k = std::min(k, n);
  if (k <= 0) return 0.0;
  std::vector<double> v(values.data(), values.data() + n);
  std::nth_element(v.begin(), v.begin() + (k - 1), v.end(), std::greater<double>());
  double sum = std::accumulate(v.begin(), v.begin() + k, 0.0);
  return sum / k;
}

std::vector<ScoredToken> cosine_topk(const Vector& query, const EmbeddingSpace& space, int k) {
  if (k <= 0) throw std::runtime_error("cosine_topk: k must be positive");
  Vector q = unit_or_throw(query, "cosine_topk");
  Vector scores = normalized_rows(space.vectors) * q;
  return make_ranked(scores, space.vocab, k);
}

CslsIndex::CslsIndex(const EmbeddingSpace& source, const EmbeddingSpace& target,
                     const LinearMap& map, CslsConfig config)
    : target_unit_(normalized_rows(target.vectors)),
      map_matrix_(map.matrix()),
      target_vocab_(target.vocab),
      config_(config),
      map_version_(map.version()) {
  if (config_.k_neighbors < 1 || config_.k_neighbors > target.size()) {
    throw std::runtime_error("csls: k_neighbors " + std::to_string(config_.k_neighbors) +
                             " out of range for target vocabulary of " +
                             std::to_string(target.size()));
  }
  if (!map_matrix_.allFinite()) throw std::runtime_error("csls: non-finite mapping");
  if (map_matrix_.cols() != source.vectors.cols()) {
    throw std::runtime_error("csls: mapping input dim does not match source space");
  }

  // rS per target row: mean cosine to its k nearest mapped source rows.
  Matrix mapped_unit = normalized_rows(source.vectors * map_matrix_.transpose());
  r_source_.resize(target_unit_.rows());
  Matrix sims = target_unit_ * mapped_unit.transpose();  // n_target x n_source
  for (Eigen::Index t = 0; t < sims.rows(); ++t) {
    r_source_(t) = mean_topk(sims.row(t).transpose(), config_.k_neighbors);
  }
}

Vector CslsIndex::scores(const Vector& source_query) const {
  if (source_query.size() != map_matrix_.cols()) {
    throw std::runtime_error("csls: query dim does not match mapping input dim");
  }
  Vector mapped = map_matrix_ * source_query;
  Vector q = unit_or_throw(mapped, "csls_topk");
  Vector cos = target_unit_ * q;
  double r_target = mean_topk(cos, config_.k_neighbors);
  return 2.0 * cos.array() - r_target - r_source_.array();
}

std::vector<ScoredToken> CslsIndex::topk(const Vector& source_query, int k) const {
  if (k <= 0) throw std::runtime_error("csls_topk: k must be positive");
  return make_ranked(scores(source_query), target_vocab_, k);
}

double CslsIndex::score(const Vector& source_query, int target_row) const {
  return scores(source_query)(target_row);
}

std::vector<ScoredToken> csls_topk(const Vector& query, const EmbeddingSpace& source,
                                   const EmbeddingSpace& target, const LinearMap& map,
                                   const CslsConfig& config, int k) {
  return CslsIndex(source, target, map, config).topk(query, k);
}

namespace {

HubOccupancy occupancy_from_counts(std::vector<int> counts, Eigen::Index n_queries) {
  HubOccupancy out;
  out.counts = std::move(counts);
  int max_count = out.counts.empty() ? 0 : *std::max_element(out.counts.begin(), out.counts.end());
  out.max_fraction = n_queries > 0 ? static_cast<double>(max_count) / static_cast<double>(n_queries) : 0.0;
  return out;
}

}  // namespace

HubOccupancy hub_occupancy(const Matrix& queries, const EmbeddingSpace& space, int k) {
  if (queries.rows() == 0) throw std::runtime_error("hub_occupancy: no queries");
  std::vector<int> counts(static_cast<std::size_t>(space.size()), 0);
  Matrix space_unit = normalized_rows(space.vectors);
  for (Eigen::Index i = 0; i < queries.rows(); ++i) {
    Vector q = unit_or_throw(queries.row(i).transpose(), "hub_occupancy");
    Vector scores = space_unit * q;
    for (int row : topk_indices(scores, k)) counts[static_cast<std::size_t>(row)]++;
  }
  return occupancy_from_counts(std::move(counts), queries.rows());
}

HubOccupancy hub_occupancy(const Matrix& queries, const CslsIndex& index, int k) {
  if (queries.rows() == 0) throw std::runtime_error("hub_occupancy: no queries");
  std::vector<int> counts(static_cast<std::size_t>(index.target_size()), 0);
  for (Eigen::Index i = 0; i < queries.rows(); ++i) {
    Vector scores = index.scores(queries.row(i).transpose());
    for (int row : topk_indices(scores, k)) counts[static_cast<std::size_t>(row)]++;
  }
  return occupancy_from_counts(std::move(counts), queries.rows());
}

}  // namespace embalign

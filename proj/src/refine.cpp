#include "embalign/refine.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <limits>
#include <stdexcept>
#include <string>

#include "embalign/retrieval.hpp"

namespace embalign {

namespace {

void check_config(const RefineConfig& config) {
  if (config.dict_max_rank < 1 || config.csls_k < 1) {
    throw std::runtime_error("refine: dict_max_rank and csls_k must be positive");
  }
  if (config.iterations < 0) {
    throw std::runtime_error("refine: iterations must be non-negative");
  }
}

// Argmax per row of 2*C(s,t) - penalty(t), ties toward the lower column.
std::vector<int> csls_argmax_rows(const Matrix& cosines, const Vector& penalty) {
  std::vector<int> best(static_cast<std::size_t>(cosines.rows()));
  for (Eigen::Index s = 0; s < cosines.rows(); ++s) {
    double top = -std::numeric_limits<double>::infinity();
    int arg = 0;
    for (Eigen::Index t = 0; t < cosines.cols(); ++t) {
      double v = 2.0 * cosines(s, t) - penalty(t);
      if (v > top) {
        top = v;
        arg = static_cast<int>(t);
      }
    }
    best[static_cast<std::size_t>(s)] = arg;
  }
  return best;
}

// Argmax per column of 2*C(s,t) - penalty(s), ties toward the lower row.
std::vector<int> csls_argmax_cols(const Matrix& cosines, const Vector& penalty) {
  std::vector<int> best(static_cast<std::size_t>(cosines.cols()));
  for (Eigen::Index t = 0; t < cosines.cols(); ++t) {
    double top = -std::numeric_limits<double>::infinity();
    int arg = 0;
    for (Eigen::Index s = 0; s < cosines.rows(); ++s) {
      double v = 2.0 * cosines(s, t) - penalty(s);
      if (v > top) {
        top = v;
        arg = static_cast<int>(s);
      }
    }
    best[static_cast<std::size_t>(t)] = arg;
  }
  return best;
}

}  // namespace

MappingSolution solve_mapping(const Matrix& x, const Matrix& y, bool orthogonal) {
  if (x.cols() < 1) throw std::runtime_error("solve_mapping: need at least one pair");
  if (x.cols() != y.cols()) {
    throw std::runtime_error("solve_mapping: X and Y must have the same number of columns");
  }
  if (!x.allFinite() || !y.allFinite()) {
    throw std::runtime_error("solve_mapping: non-finite input");
  }

  MappingSolution solution;
  if (orthogonal) {
    if (x.rows() != y.rows()) {
      throw std::runtime_error("solve_mapping: orthogonal solve requires equal dimensions, got " +
                               std::to_string(x.rows()) + " and " + std::to_string(y.rows()));
    }
    Eigen::JacobiSVD<Matrix> svd(y * x.transpose(), Eigen::ComputeFullU | Eigen::ComputeFullV);
    solution.map.set_matrix(svd.matrixU() * svd.matrixV().transpose());
    return solution;
  }

  solution.underdetermined = x.cols() < x.rows();
  Matrix gram = x * x.transpose();
  gram.diagonal().array() += 1e-8;
  Matrix w_t = gram.ldlt().solve(x * y.transpose());
  solution.map.set_matrix(w_t.transpose());
  return solution;
}

BilingualDictionary build_synthetic_dictionary(const EmbeddingSpace& source,
                                               const EmbeddingSpace& target, const LinearMap& map,
                                               const RefineConfig& config) {
  check_config(config);
  if (source.size() == 0 || target.size() == 0) {
    throw std::runtime_error("build_synthetic_dictionary: empty space");
  }
  if (map.input_dim() != source.dim() || map.output_dim() != target.dim()) {
    throw std::runtime_error("build_synthetic_dictionary: map shape does not fit the spaces");
  }
  if (!map.matrix().allFinite()) {
    throw std::runtime_error("build_synthetic_dictionary: non-finite map");
  }

  std::vector<int> src_rows = most_frequent_rows(source, config.dict_max_rank);
  std::vector<int> tgt_rows = most_frequent_rows(target, config.dict_max_rank);
  const Eigen::Index ns = static_cast<Eigen::Index>(src_rows.size());
  const Eigen::Index nt = static_cast<Eigen::Index>(tgt_rows.size());

  Matrix mapped(ns, target.dim());
  for (Eigen::Index i = 0; i < ns; ++i) {
    mapped.row(i) = source.vectors.row(src_rows[static_cast<std::size_t>(i)]) *
                    map.matrix().transpose();
  }
  mapped = normalized_rows(mapped);
  Matrix tgt_unit(nt, target.dim());
  for (Eigen::Index j = 0; j < nt; ++j) {
    tgt_unit.row(j) = target.vectors.row(tgt_rows[static_cast<std::size_t>(j)]);
  }
  tgt_unit = normalized_rows(tgt_unit);

  Matrix cosines = mapped * tgt_unit.transpose();

  // Density terms: mean cosine of each mapped source to its nearest targets
  // and of each target to its nearest mapped sources, within the candidates.
  const int k_row = std::min<int>(config.csls_k, static_cast<int>(nt));
  const int k_col = std::min<int>(config.csls_k, static_cast<int>(ns));
  Vector r_row(ns);
  for (Eigen::Index s = 0; s < ns; ++s) r_row(s) = mean_topk(cosines.row(s).transpose(), k_row);
  Vector r_col(nt);
  for (Eigen::Index t = 0; t < nt; ++t) r_col(t) = mean_topk(cosines.col(t), k_col);

  // The density term on the query's own side is constant along its direction
  // of search, so each argmax only needs the other side's term.
  std::vector<int> forward = csls_argmax_rows(cosines, r_col);
  std::vector<int> backward = csls_argmax_cols(cosines, r_row);

  BilingualDictionary dictionary;
  for (Eigen::Index s = 0; s < ns; ++s) {
    int t = forward[static_cast<std::size_t>(s)];
    if (backward[static_cast<std::size_t>(t)] != static_cast<int>(s)) continue;
    dictionary.pairs.emplace_back(
        source.vocab[static_cast<std::size_t>(src_rows[static_cast<std::size_t>(s)])],
        target.vocab[static_cast<std::size_t>(tgt_rows[static_cast<std::size_t>(t)])]);
  }
  return dictionary;
}

RefineResult refine(const EmbeddingSpace& source, const EmbeddingSpace& target,
                    const LinearMap& w0, const RefineConfig& config) {
  check_config(config);
  if (!w0.matrix().allFinite()) throw std::runtime_error("refine: non-finite starting map");

  RefineResult result;
  result.map.set_matrix(w0.matrix());
  for (int it = 0; it < config.iterations; ++it) {
    BilingualDictionary dictionary =
        build_synthetic_dictionary(source, target, result.map, config);
    if (dictionary.empty()) {
      throw std::runtime_error("refine: empty synthetic dictionary at iteration " +
                               std::to_string(it));
    }
    result.dictionary_sizes.push_back(dictionary.size());
    result.map = solve_supervised(source, target, dictionary, config.orthogonal).map;
  }
  return result;
}

MappingSolution solve_supervised(const EmbeddingSpace& source, const EmbeddingSpace& target,
                                 const BilingualDictionary& dictionary, bool orthogonal) {
  if (dictionary.empty()) throw std::runtime_error("solve_supervised: empty dictionary");

  Matrix x(source.dim(), dictionary.size());
  Matrix y(target.dim(), dictionary.size());
  for (int i = 0; i < dictionary.size(); ++i) {
    const auto& [s, t] = dictionary.pairs[static_cast<std::size_t>(i)];
    int sr = source.row_of(s);
    if (sr < 0) throw std::runtime_error("solve_supervised: source token '" + s + "' has no embedding");
    int tr = target.row_of(t);
    if (tr < 0) throw std::runtime_error("solve_supervised: target token '" + t + "' has no embedding");
    x.col(i) = source.vectors.row(sr).transpose();
    y.col(i) = target.vectors.row(tr).transpose();
  }
  return solve_mapping(x, y, orthogonal);
}

}  // namespace embalign

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>
#include <set>
#include <string>
#include <vector>

#include "embalign/refine.hpp"
#include "embalign/retrieval.hpp"
#include "test_util.hpp"

using embalign::BilingualDictionary;
using embalign::EmbeddingSpace;
using embalign::LinearMap;
using embalign::MappingSolution;
using embalign::Matrix;
using embalign::RefineConfig;
using embalign::RefineResult;

namespace {

// Column-paired data matrices (d x k) from row-major spaces.
Matrix columns_of(const Matrix& rows) { return rows.transpose(); }

double procrustes_objective(const Matrix& w, const Matrix& x, const Matrix& y) {
  return (w * x - y).squaredNorm();
}

// Target space = source rows rotated by q, tokens renamed.
EmbeddingSpace rotate_space(const EmbeddingSpace& source, const Matrix& q,
                            const std::string& prefix) {
  Matrix rotated = source.vectors * q.transpose();
  return EmbeddingSpace::create(test_util::numbered_tokens(prefix, source.size()), rotated,
                                source.frequencies);
}

BilingualDictionary identity_dictionary(const EmbeddingSpace& source,
                                        const EmbeddingSpace& target) {
  BilingualDictionary dict;
  for (int i = 0; i < source.size(); ++i) {
    dict.pairs.emplace_back(source.vocab[static_cast<std::size_t>(i)],
                            target.vocab[static_cast<std::size_t>(i)]);
  }
  return dict;
}

}  // namespace

TEST_CASE("mapping a space onto itself recovers the identity") {
  Matrix rows = test_util::random_matrix(40, 6, 3);
  Matrix x = columns_of(rows);
  for (bool orthogonal : {true, false}) {
    MappingSolution sol = embalign::solve_mapping(x, x, orthogonal);
    CHECK((sol.map.matrix() - Matrix::Identity(6, 6)).cwiseAbs().maxCoeff() < 1e-9);
    CHECK_FALSE(sol.underdetermined);
  }
}

TEST_CASE("a planted rotation is recovered exactly") {
  Matrix rows = test_util::random_matrix(50, 5, 7);
  Matrix q = test_util::random_orthogonal(5, 11);
  Matrix x = columns_of(rows);
  Matrix y = q * x;
  for (bool orthogonal : {true, false}) {
    MappingSolution sol = embalign::solve_mapping(x, y, orthogonal);
    CHECK((sol.map.matrix() - q).cwiseAbs().maxCoeff() < 1e-8);
  }
}

TEST_CASE("the orthogonal solution satisfies W^T W = I even under noise") {
  std::mt19937_64 rng(13);
  for (int trial = 0; trial < 5; ++trial) {
    Matrix x = test_util::random_matrix(6, 30, rng());
    Matrix y = test_util::random_matrix(6, 30, rng());  // unrelated: worst case
    MappingSolution sol = embalign::solve_mapping(x, y, true);
    Matrix wtw = sol.map.matrix().transpose() * sol.map.matrix();
    CHECK((wtw - Matrix::Identity(6, 6)).cwiseAbs().maxCoeff() < 1e-8);
  }
}

TEST_CASE("no random orthogonal probe beats the Procrustes solution") {
  Matrix x = test_util::random_matrix(5, 40, 17);
  Matrix y = test_util::random_matrix(5, 40, 19);
  MappingSolution sol = embalign::solve_mapping(x, y, true);
  double best = procrustes_objective(sol.map.matrix(), x, y);
  std::mt19937_64 rng(23);
  for (int probe = 0; probe < 1000; ++probe) {
    Matrix q = test_util::random_orthogonal(5, rng());
    CHECK(best <= procrustes_objective(q, x, y) + 1e-9);
  }
}

TEST_CASE("the unconstrained solve matches the normal equations and resists perturbation") {
  Matrix x = test_util::random_matrix(4, 60, 29);
  Matrix y = test_util::random_matrix(6, 60, 31);  // rectangular map, d2 != d1
  MappingSolution sol = embalign::solve_mapping(x, y, false);
  REQUIRE(sol.map.output_dim() == 6);
  REQUIRE(sol.map.input_dim() == 4);

  // Independent re-derivation: W = Y X^T (X X^T + ridge I)^{-1}.
  const double ridge = 1e-8;
  Matrix gram = x * x.transpose() + ridge * Matrix::Identity(4, 4);
  Matrix expected = y * x.transpose() * gram.inverse();
  CHECK((sol.map.matrix() - expected).cwiseAbs().maxCoeff() < 1e-8);

  // And it is a local (here global) minimum of the residual.
  double base = (sol.map.matrix() * x - y).squaredNorm();
  std::mt19937_64 rng(37);
  for (int probe = 0; probe < 1000; ++probe) {
    Matrix delta = 1e-3 * test_util::random_matrix(6, 4, rng());
    CHECK(base <= ((sol.map.matrix() + delta) * x - y).squaredNorm() + 1e-12);
  }
}

TEST_CASE("the orthogonal solve requires matching dimensions") {
  Matrix x = test_util::random_matrix(4, 20, 41);
  Matrix y = test_util::random_matrix(5, 20, 43);
  CHECK_THROWS(embalign::solve_mapping(x, y, true));
  CHECK_NOTHROW(embalign::solve_mapping(x, y, false));
  CHECK_THROWS(embalign::solve_mapping(Matrix(4, 0), Matrix(4, 0), false));
  CHECK_THROWS(embalign::solve_mapping(x, test_util::random_matrix(5, 19, 47), false));
}

TEST_CASE("fewer pairs than dimensions flags the solution as underdetermined") {
  Matrix x = test_util::random_matrix(5, 2, 53);
  Matrix y = test_util::random_matrix(5, 2, 59);
  MappingSolution sol = embalign::solve_mapping(x, y, false);
  CHECK(sol.underdetermined);
  CHECK(sol.map.matrix().allFinite());
  // One pair: W x = y is satisfiable and the ridge keeps W small.
  Matrix x1 = test_util::random_matrix(3, 1, 61);
  Matrix y1 = test_util::random_matrix(3, 1, 67);
  MappingSolution one = embalign::solve_mapping(x1, y1, false);
  CHECK(one.underdetermined);
  CHECK((one.map.matrix() * x1 - y1).cwiseAbs().maxCoeff() < 1e-4);
}

TEST_CASE("identical spaces under the identity map pair every word with itself") {
  EmbeddingSpace space = embalign::unit_normalize(test_util::random_space("w", 30, 5, 71));
  EmbeddingSpace target = EmbeddingSpace::create(space.vocab, space.vectors, space.frequencies);
  RefineConfig cfg;
  cfg.dict_max_rank = 30;
  cfg.csls_k = 5;
  BilingualDictionary dict = embalign::build_synthetic_dictionary(
      space, target, LinearMap(Matrix::Identity(5, 5)), cfg);
  REQUIRE(dict.size() == 30);
  for (const auto& [s, t] : dict.pairs) CHECK(s == t);
}

TEST_CASE("synthetic dictionary matches a brute-force mutual-neighbor oracle") {
  std::mt19937_64 rng(73);
  for (int trial = 0; trial < 4; ++trial) {
    int n = 15 + static_cast<int>(rng() % 15);
    EmbeddingSpace source = embalign::unit_normalize(test_util::random_space("s", n, 4, rng()));
    EmbeddingSpace target = embalign::unit_normalize(test_util::random_space("t", n, 4, rng()));
    LinearMap map(test_util::random_orthogonal(4, rng()));
    RefineConfig cfg;
    cfg.dict_max_rank = n;
    cfg.csls_k = 4;
    BilingualDictionary dict = embalign::build_synthetic_dictionary(source, target, map, cfg);

    // Oracle: plain loops. Cosines between unit-scaled mapped sources and
    // targets, density term per side = mean of its k best cosines, and a pair
    // is kept when each end is the other's penalized argmax.
    Matrix mapped = source.vectors * map.matrix().transpose();
    for (Eigen::Index i = 0; i < mapped.rows(); ++i) mapped.row(i) /= mapped.row(i).norm();
    Matrix cosines = mapped * target.vectors.transpose();
    auto mean_top = [&](std::vector<double> v, int k) {
      std::partial_sort(v.begin(), v.begin() + k, v.end(), std::greater<double>());
      double sum = 0.0;
      for (int i = 0; i < k; ++i) sum += v[static_cast<std::size_t>(i)];
      return sum / k;
    };
    std::vector<double> r_src(static_cast<std::size_t>(n)), r_tgt(static_cast<std::size_t>(n));
    for (int s = 0; s < n; ++s) {
      std::vector<double> row(static_cast<std::size_t>(n));
      for (int t = 0; t < n; ++t) row[static_cast<std::size_t>(t)] = cosines(s, t);
      r_src[static_cast<std::size_t>(s)] = mean_top(row, 4);
    }
    for (int t = 0; t < n; ++t) {
      std::vector<double> col(static_cast<std::size_t>(n));
      for (int s = 0; s < n; ++s) col[static_cast<std::size_t>(s)] = cosines(s, t);
      r_tgt[static_cast<std::size_t>(t)] = mean_top(col, 4);
    }
    std::vector<std::pair<std::string, std::string>> expected;
    for (int s = 0; s < n; ++s) {
      int best_t = 0;
      for (int t = 1; t < n; ++t) {
        if (2.0 * cosines(s, t) - r_tgt[static_cast<std::size_t>(t)] >
            2.0 * cosines(s, best_t) - r_tgt[static_cast<std::size_t>(best_t)]) {
          best_t = t;
        }
      }
      int best_s = 0;
      for (int s2 = 1; s2 < n; ++s2) {
        if (2.0 * cosines(s2, best_t) - r_src[static_cast<std::size_t>(s2)] >
            2.0 * cosines(best_s, best_t) - r_src[static_cast<std::size_t>(best_s)]) {
          best_s = s2;
        }
      }
      if (best_s == s) {
        expected.emplace_back(source.vocab[static_cast<std::size_t>(s)],
                              target.vocab[static_cast<std::size_t>(best_t)]);
      }
    }
    CHECK(dict.pairs == expected);
    // A mutual pair always exists: the globally best-scoring pair is one.
    CHECK(dict.size() >= 1);
  }
}

TEST_CASE("a planted rotation yields at least 90 percent ground-truth pairs") {
  EmbeddingSpace source = embalign::unit_normalize(test_util::random_space("s", 60, 6, 79));
  Matrix q = test_util::random_orthogonal(6, 83);
  EmbeddingSpace target = rotate_space(source, q, "t");
  RefineConfig cfg;
  cfg.dict_max_rank = 60;
  cfg.csls_k = 5;
  BilingualDictionary dict = embalign::build_synthetic_dictionary(source, target, LinearMap(q), cfg);
  int correct = 0;
  for (const auto& [s, t] : dict.pairs) {
    if (s.substr(1) == t.substr(1)) ++correct;  // s<i> should pair with t<i>
  }
  CHECK(dict.size() >= 54);
  CHECK(correct >= (dict.size() * 9) / 10);
}

TEST_CASE("a degenerate map collapses the synthetic dictionary") {
  EmbeddingSpace source = embalign::unit_normalize(test_util::random_space("s", 20, 4, 89));
  EmbeddingSpace target = embalign::unit_normalize(test_util::random_space("t", 20, 4, 97));
  Matrix rank_one = Matrix::Zero(4, 4);
  rank_one(0, 0) = 1.0;  // every source maps onto one ray
  RefineConfig cfg;
  cfg.dict_max_rank = 20;
  cfg.csls_k = 3;
  BilingualDictionary dict =
      embalign::build_synthetic_dictionary(source, target, LinearMap(rank_one), cfg);
  // All mapped sources share one best target, so at most one pair is mutual.
  CHECK(dict.size() <= 2);
}

TEST_CASE("zero refinement iterations return the starting map unchanged") {
  EmbeddingSpace source = embalign::unit_normalize(test_util::random_space("s", 20, 4, 101));
  EmbeddingSpace target = embalign::unit_normalize(test_util::random_space("t", 20, 4, 103));
  LinearMap w0(test_util::random_orthogonal(4, 107));
  RefineConfig cfg;
  cfg.iterations = 0;
  cfg.dict_max_rank = 20;
  cfg.csls_k = 3;
  RefineResult result = embalign::refine(source, target, w0, cfg);
  CHECK(result.map.matrix() == w0.matrix());
  CHECK(result.dictionary_sizes.empty());
}

TEST_CASE("refinement from the exact rotation is a fixed point") {
  EmbeddingSpace source = embalign::unit_normalize(test_util::random_space("s", 50, 5, 109));
  Matrix q = test_util::random_orthogonal(5, 113);
  EmbeddingSpace target = rotate_space(source, q, "t");
  RefineConfig cfg;
  cfg.iterations = 3;
  cfg.dict_max_rank = 50;
  cfg.csls_k = 5;
  RefineResult result = embalign::refine(source, target, LinearMap(q), cfg);
  CHECK((result.map.matrix() - q).cwiseAbs().maxCoeff() < 1e-6);
  REQUIRE(result.dictionary_sizes.size() == 3);
  for (int size : result.dictionary_sizes) CHECK(size == 50);
}

TEST_CASE("refinement improves retrieval from a perturbed rotation") {
  EmbeddingSpace source = embalign::unit_normalize(test_util::random_space("s", 80, 6, 127));
  Matrix q = test_util::random_orthogonal(6, 131);
  EmbeddingSpace target = rotate_space(source, q, "t");

  // Perturb the true rotation, then re-orthogonalize: a rough but usable start.
  Matrix noisy = q + 0.25 * test_util::random_matrix(6, 6, 137);
  Eigen::JacobiSVD<Matrix> svd(noisy, Eigen::ComputeFullU | Eigen::ComputeFullV);
  LinearMap w0(Matrix(svd.matrixU() * svd.matrixV().transpose()));

  RefineConfig cfg;
  cfg.iterations = 4;
  cfg.dict_max_rank = 80;
  cfg.csls_k = 6;
  RefineResult result = embalign::refine(source, target, w0, cfg);

  auto p_at_1 = [&](const LinearMap& map) {
    embalign::CslsConfig csls;
    csls.k_neighbors = 6;
    embalign::CslsIndex index(source, target, map, csls);
    int hits = 0;
    for (int i = 0; i < source.size(); ++i) {
      auto top = index.topk(source.vectors.row(i).transpose(), 1);
      if (!top.empty() && top[0].row == i) ++hits;
    }
    return hits;
  };
  int before = p_at_1(w0);
  int after = p_at_1(result.map);
  CHECK(after >= before);
  CHECK(after == source.size());  // desk-scale planted problem: exact recovery
  CHECK((result.map.matrix() - q).cwiseAbs().maxCoeff() < 1e-6);
}

TEST_CASE("refinement validates its configuration and starting map") {
  EmbeddingSpace source = embalign::unit_normalize(test_util::random_space("s", 10, 3, 139));
  EmbeddingSpace target = embalign::unit_normalize(test_util::random_space("t", 10, 3, 149));
  RefineConfig cfg;
  cfg.dict_max_rank = 0;
  CHECK_THROWS(embalign::refine(source, target, LinearMap(Matrix::Identity(3, 3)), cfg));
  cfg = RefineConfig{};
  cfg.iterations = -1;
  CHECK_THROWS(embalign::refine(source, target, LinearMap(Matrix::Identity(3, 3)), cfg));
  cfg = RefineConfig{};
  Matrix bad = Matrix::Identity(3, 3);
  bad(0, 0) = std::numeric_limits<double>::quiet_NaN();
  CHECK_THROWS(embalign::refine(source, target, LinearMap(bad), cfg));
  CHECK_THROWS(embalign::build_synthetic_dictionary(
      source, embalign::EmbeddingSpace::create({}, Matrix(0, 3)),
      LinearMap(Matrix::Identity(3, 3)), RefineConfig{}));
}

TEST_CASE("supervised solve on the full ground-truth dictionary recovers the rotation") {
  EmbeddingSpace source = embalign::unit_normalize(test_util::random_space("s", 40, 5, 151));
  Matrix q = test_util::random_orthogonal(5, 157);
  EmbeddingSpace target = rotate_space(source, q, "t");
  BilingualDictionary dict = identity_dictionary(source, target);
  MappingSolution sol = embalign::solve_supervised(source, target, dict, true);
  CHECK((sol.map.matrix() - q).cwiseAbs().maxCoeff() < 1e-8);
}

TEST_CASE("supervised solve rejects unresolvable tokens and empty dictionaries") {
  EmbeddingSpace source = embalign::unit_normalize(test_util::random_space("s", 10, 3, 163));
  EmbeddingSpace target = embalign::unit_normalize(test_util::random_space("t", 10, 3, 167));
  BilingualDictionary ghost;
  ghost.pairs = {{"s0", "t0"}, {"phantom", "t1"}};
  CHECK_THROWS_WITH_AS(embalign::solve_supervised(source, target, ghost, true),
                       doctest::Contains("phantom"), std::exception);
  BilingualDictionary empty;
  CHECK_THROWS(embalign::solve_supervised(source, target, empty, true));
}

TEST_CASE("supervised solve flags an underdetermined dictionary") {
  EmbeddingSpace source = embalign::unit_normalize(test_util::random_space("s", 10, 6, 173));
  EmbeddingSpace target = embalign::unit_normalize(test_util::random_space("t", 10, 6, 179));
  BilingualDictionary tiny;
  tiny.pairs = {{"s0", "t0"}, {"s1", "t1"}};  // 2 pairs < 6 dims
  MappingSolution sol = embalign::solve_supervised(source, target, tiny, false);
  CHECK(sol.underdetermined);
}

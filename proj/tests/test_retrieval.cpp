#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <random>
#include <vector>

#include "embalign/retrieval.hpp"
#include "test_util.hpp"

using embalign::CslsConfig;
using embalign::CslsIndex;
using embalign::EmbeddingSpace;
using embalign::LinearMap;
using embalign::Matrix;
using embalign::ScoredToken;
using embalign::Vector;

namespace {

EmbeddingSpace unit_space(const std::string& prefix, int n, int dim, std::uint64_t seed) {
  return embalign::unit_normalize(test_util::random_space(prefix, n, dim, seed));
}

// Independent CSLS: plain loops, no shared code with the library beyond Eigen.
Vector csls_oracle(const Vector& query, const Matrix& source_rows, const Matrix& target_rows,
                   const Matrix& w, int k) {
  auto unit = [](Vector v) { return Vector(v / v.norm()); };
  const Eigen::Index nt = target_rows.rows();
  const Eigen::Index ns = source_rows.rows();

  Vector mapped_query = unit(w * query);
  std::vector<Vector> tgt(static_cast<std::size_t>(nt));
  for (Eigen::Index t = 0; t < nt; ++t) tgt[static_cast<std::size_t>(t)] = unit(target_rows.row(t).transpose());
  std::vector<Vector> mapped_src(static_cast<std::size_t>(ns));
  for (Eigen::Index s = 0; s < ns; ++s) {
    mapped_src[static_cast<std::size_t>(s)] = unit(w * source_rows.row(s).transpose());
  }

  auto mean_top = [&](std::vector<double> v) {
    std::sort(v.begin(), v.end(), std::greater<double>());
    double sum = 0.0;
    for (int i = 0; i < k; ++i) sum += v[static_cast<std::size_t>(i)];
    return sum / k;
  };

  std::vector<double> query_cos(static_cast<std::size_t>(nt));
  for (Eigen::Index t = 0; t < nt; ++t) {
    query_cos[static_cast<std::size_t>(t)] = mapped_query.dot(tgt[static_cast<std::size_t>(t)]);
  }
  double r_target = mean_top(query_cos);

  Vector out(nt);
  for (Eigen::Index t = 0; t < nt; ++t) {
    std::vector<double> to_sources(static_cast<std::size_t>(ns));
    for (Eigen::Index s = 0; s < ns; ++s) {
      to_sources[static_cast<std::size_t>(s)] =
          tgt[static_cast<std::size_t>(t)].dot(mapped_src[static_cast<std::size_t>(s)]);
    }
    double r_source = mean_top(to_sources);
    out(t) = 2.0 * query_cos[static_cast<std::size_t>(t)] - r_target - r_source;
  }
  return out;
}

}  // namespace

TEST_CASE("a stored unit vector retrieves its own token with score one") {
  EmbeddingSpace space = unit_space("w", 20, 5, 3);
  Vector query = space.vectors.row(7).transpose();
  auto top = embalign::cosine_topk(query, space, 3);
  REQUIRE(top.size() == 3);
  CHECK(top[0].row == 7);
  CHECK(top[0].token == "w7");
  CHECK(top[0].score == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(top[1].score < top[0].score);
}

TEST_CASE("scores are cosines: scaling the query changes nothing") {
  EmbeddingSpace space = unit_space("w", 15, 4, 5);
  Vector query = test_util::random_matrix(1, 4, 7).row(0).transpose();
  auto a = embalign::cosine_topk(query, space, 15);
  auto b = embalign::cosine_topk(Vector(13.0 * query), space, 15);
  REQUIRE(a.size() == b.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    CHECK(a[i].row == b[i].row);
    CHECK(a[i].score == doctest::Approx(b[i].score).epsilon(1e-12));
  }
}

TEST_CASE("a query orthogonal to every row scores zero and keeps row order") {
  Matrix m = Matrix::Zero(4, 3);
  m(0, 0) = 1.0;
  m(1, 0) = -2.0;
  m(2, 1) = 0.5;
  m(3, 1) = 3.0;  // nothing has a z component
  EmbeddingSpace space = EmbeddingSpace::create({"a", "b", "c", "d"}, m);
  Vector query(3);
  query << 0.0, 0.0, 1.0;
  auto top = embalign::cosine_topk(query, space, 4);
  REQUIRE(top.size() == 4);
  for (int i = 0; i < 4; ++i) {
    CHECK(top[static_cast<std::size_t>(i)].row == i);  // ties fall back to row order
    CHECK(top[static_cast<std::size_t>(i)].score == doctest::Approx(0.0).epsilon(1e-12));
  }
}

TEST_CASE("cosine_topk matches a brute-force scan") {
  std::mt19937_64 rng(11);
  for (int trial = 0; trial < 5; ++trial) {
    EmbeddingSpace space = unit_space("w", 30, 6, rng());
    Vector query = test_util::random_matrix(1, 6, rng()).row(0).transpose();
    auto top = embalign::cosine_topk(query, space, 30);

    std::vector<std::pair<double, int>> oracle;
    Vector q = query / query.norm();
    for (int i = 0; i < 30; ++i) {
      Vector row = space.vectors.row(i).transpose();
      oracle.emplace_back(q.dot(row / row.norm()), i);
    }
    std::sort(oracle.begin(), oracle.end(), [](const auto& a, const auto& b) {
      if (a.first != b.first) return a.first > b.first;
      return a.second < b.second;
    });
    REQUIRE(top.size() == oracle.size());
    for (std::size_t i = 0; i < top.size(); ++i) {
      CHECK(top[i].row == oracle[i].second);
      CHECK(top[i].score == doctest::Approx(oracle[i].first).epsilon(1e-12));
    }
  }
}

TEST_CASE("exactly min(k, n) results come back, strictly ordered") {
  EmbeddingSpace space = unit_space("w", 8, 3, 13);
  Vector query = space.vectors.row(0).transpose();
  CHECK(embalign::cosine_topk(query, space, 5).size() == 5);
  CHECK(embalign::cosine_topk(query, space, 100).size() == 8);
  auto all = embalign::cosine_topk(query, space, 8);
  for (std::size_t i = 1; i < all.size(); ++i) {
    bool ordered = all[i - 1].score > all[i].score ||
                   (all[i - 1].score == all[i].score && all[i - 1].row < all[i].row);
    CHECK(ordered);
  }
}

TEST_CASE("zero or non-finite queries are rejected") {
  EmbeddingSpace space = unit_space("w", 5, 3, 17);
  CHECK_THROWS(embalign::cosine_topk(Vector::Zero(3), space, 2));
  Vector bad(3);
  bad << 1.0, std::numeric_limits<double>::infinity(), 0.0;
  CHECK_THROWS(embalign::cosine_topk(bad, space, 2));
  CHECK_THROWS(embalign::cosine_topk(Vector::Ones(3), space, 0));
}

TEST_CASE("csls scores match an independently written oracle") {
  std::mt19937_64 rng(19);
  for (int trial = 0; trial < 5; ++trial) {
    int d1 = 3 + static_cast<int>(rng() % 3);
    int d2 = 3 + static_cast<int>(rng() % 3);
    EmbeddingSpace source = unit_space("s", 18, d1, rng());
    EmbeddingSpace target = unit_space("t", 22, d2, rng());
    LinearMap map(test_util::random_matrix(d2, d1, rng()));
    CslsConfig cfg;
    cfg.k_neighbors = 5;
    CslsIndex index(source, target, map, cfg);

    for (int q = 0; q < 4; ++q) {
      Vector query = source.vectors.row(static_cast<int>(rng() % 18)).transpose();
      Vector got = index.scores(query);
      Vector expected =
          csls_oracle(query, source.vectors, target.vectors, map.matrix(), cfg.k_neighbors);
      REQUIRE(got.size() == expected.size());
      CHECK((got - expected).cwiseAbs().maxCoeff() < 1e-10);
    }
  }
}

TEST_CASE("csls topk, score, and scores agree with each other") {
  EmbeddingSpace source = unit_space("s", 12, 4, 23);
  EmbeddingSpace target = unit_space("t", 16, 4, 29);
  LinearMap map(test_util::random_orthogonal(4, 31));
  CslsConfig cfg;
  cfg.k_neighbors = 4;
  CslsIndex index(source, target, map, cfg);
  Vector query = source.vectors.row(3).transpose();

  Vector all = index.scores(query);
  auto ranked = index.topk(query, 16);
  REQUIRE(ranked.size() == 16);
  for (const auto& item : ranked) {
    CHECK(item.score == doctest::Approx(all(item.row)).epsilon(1e-12));
    CHECK(item.score == doctest::Approx(index.score(query, item.row)).epsilon(1e-12));
  }
  for (std::size_t i = 1; i < ranked.size(); ++i) CHECK(ranked[i - 1].score >= ranked[i].score);

  // One-shot helper agrees with the index.
  auto oneshot = embalign::csls_topk(query, source, target, map, cfg, 5);
  REQUIRE(oneshot.size() == 5);
  for (std::size_t i = 0; i < oneshot.size(); ++i) {
    CHECK(oneshot[i].row == ranked[i].row);
    CHECK(oneshot[i].score == doctest::Approx(ranked[i].score).epsilon(1e-12));
  }
}

TEST_CASE("with uniform neighborhood density csls ranks exactly like cosine") {
  // Sources and targets are the same orthonormal basis: every target's mean
  // cosine to its k nearest mapped sources is the same constant (1 and k-1
  // zeros), so the penalty shifts all scores equally and cosine order wins.
  const int n = 8;
  Matrix basis = Matrix::Identity(n, n);
  EmbeddingSpace target = EmbeddingSpace::create(test_util::numbered_tokens("t", n), basis);
  EmbeddingSpace source = EmbeddingSpace::create(test_util::numbered_tokens("s", n), basis);
  LinearMap identity(Matrix::Identity(n, n));
  CslsConfig cfg;
  cfg.k_neighbors = 3;
  CslsIndex index(source, target, identity, cfg);

  Vector query = test_util::random_matrix(1, n, 37).row(0).transpose();
  auto csls = index.topk(query, n);
  auto cosine = embalign::cosine_topk(query, target, n);
  REQUIRE(csls.size() == cosine.size());
  for (std::size_t i = 0; i < csls.size(); ++i) CHECK(csls[i].row == cosine[i].row);
}

TEST_CASE("csls demotes a planted hub that cosine retrieves everywhere") {
  // Every query leans 0.8 toward a shared hub direction and 0.6 toward its
  // own private axis. Cosine sends each query to the hub (0.8 > 0.6), but the
  // hub is near *all* queries, so its mean-similarity penalty is 0.8 while a
  // private target's penalty is only 0.6/k; csls flips every query back to
  // its own target.
  const int n = 12;
  const int dim = n + 1;
  Matrix spokes(n, dim);
  spokes.setZero();
  for (int i = 0; i < n; ++i) {
    spokes(i, 0) = 0.8;
    spokes(i, i + 1) = 0.6;
  }

  // Targets: the hub direction plus each query's private axis.
  Matrix tgt = Matrix::Zero(n + 1, dim);
  tgt(0, 0) = 1.0;
  for (int i = 0; i < n; ++i) tgt(i + 1, i + 1) = 1.0;
  EmbeddingSpace target =
      EmbeddingSpace::create(test_util::numbered_tokens("t", n + 1), tgt);
  EmbeddingSpace source =
      EmbeddingSpace::create(test_util::numbered_tokens("s", n), spokes);
  LinearMap identity(Matrix::Identity(dim, dim));

  embalign::HubOccupancy cos_occ = embalign::hub_occupancy(spokes, target, 1);
  CslsConfig cfg;
  cfg.k_neighbors = 5;
  CslsIndex index(source, target, identity, cfg);
  embalign::HubOccupancy csls_occ = embalign::hub_occupancy(spokes, index, 1);

  // Cosine sends a large share of queries to the hub; csls spreads them out.
  CHECK(csls_occ.counts[0] < cos_occ.counts[0]);
  CHECK(csls_occ.max_fraction < cos_occ.max_fraction);
  int csls_hits = 0;
  for (int i = 0; i < n; ++i) {
    if (csls_occ.counts[static_cast<std::size_t>(i + 1)] > 0) ++csls_hits;
  }
  int cos_hits = 0;
  for (int i = 0; i < n; ++i) {
    if (cos_occ.counts[static_cast<std::size_t>(i + 1)] > 0) ++cos_hits;
  }
  CHECK(csls_hits > cos_hits);  // more queries reach their own spoke
}

TEST_CASE("identical queries concentrate occupancy to one") {
  EmbeddingSpace space = unit_space("w", 10, 4, 43);
  Matrix queries(5, 4);
  for (int i = 0; i < 5; ++i) queries.row(i) = space.vectors.row(2);
  embalign::HubOccupancy occ = embalign::hub_occupancy(queries, space, 1);
  CHECK(occ.max_fraction == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(occ.counts[2] == 5);
}

TEST_CASE("querying every row of a clean space gives uniform occupancy") {
  EmbeddingSpace space = unit_space("w", 12, 6, 47);
  embalign::HubOccupancy occ = embalign::hub_occupancy(space.vectors, space, 1);
  CHECK(occ.max_fraction == doctest::Approx(1.0 / 12.0).epsilon(1e-12));
  for (int c : occ.counts) CHECK(c == 1);
}

TEST_CASE("an orthogonal transform of space and query preserves rankings and scores") {
  EmbeddingSpace space = unit_space("w", 20, 5, 53);
  Matrix q_rot = test_util::random_orthogonal(5, 59);
  EmbeddingSpace rotated = EmbeddingSpace::create(space.vocab, space.vectors * q_rot.transpose());
  Vector query = test_util::random_matrix(1, 5, 61).row(0).transpose();

  auto base = embalign::cosine_topk(query, space, 20);
  auto moved = embalign::cosine_topk(Vector(q_rot * query), rotated, 20);
  REQUIRE(base.size() == moved.size());
  for (std::size_t i = 0; i < base.size(); ++i) {
    CHECK(base[i].row == moved[i].row);
    CHECK(base[i].score == doctest::Approx(moved[i].score).epsilon(1e-10));
  }
}

TEST_CASE("the index detects a stale or fresh map by version") {
  EmbeddingSpace source = unit_space("s", 8, 3, 67);
  EmbeddingSpace target = unit_space("t", 8, 3, 71);
  LinearMap map(Matrix::Identity(3, 3));
  CslsConfig cfg;
  cfg.k_neighbors = 3;
  CslsIndex index(source, target, map, cfg);
  CHECK(index.matches(map));
  map.set_matrix(Matrix::Identity(3, 3));  // same values, new version
  CHECK_FALSE(index.matches(map));
}

TEST_CASE("csls validates k against the target vocabulary") {
  EmbeddingSpace source = unit_space("s", 8, 3, 73);
  EmbeddingSpace target = unit_space("t", 8, 3, 79);
  LinearMap map(Matrix::Identity(3, 3));
  CslsConfig cfg;
  cfg.k_neighbors = 9;  // > 8 targets
  CHECK_THROWS(CslsIndex(source, target, map, cfg));
  cfg.k_neighbors = 0;
  CHECK_THROWS(CslsIndex(source, target, map, cfg));
}

TEST_CASE("mean_topk averages the k largest values") {
  Vector v(5);
  v << 0.1, -3.0, 2.0, 1.0, 0.5;
  CHECK(embalign::mean_topk(v, 1) == doctest::Approx(2.0).epsilon(1e-12));
  CHECK(embalign::mean_topk(v, 2) == doctest::Approx(1.5).epsilon(1e-12));
  CHECK(embalign::mean_topk(v, 5) == doctest::Approx(0.12).epsilon(1e-12));
  CHECK(embalign::mean_topk(v, 50) == doctest::Approx(0.12).epsilon(1e-12));
}

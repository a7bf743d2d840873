#include "oracles.hpp"

#include "resaple/error.hpp"
#include "resaple/weights.hpp"

#include <doctest.h>

#include <cmath>
#include <numeric>

using namespace resaple;

namespace {

AdjacencyGraph cycle(int n) {
  std::vector<Edge> edges;
  for (int i = 0; i < n; ++i) {
    edges.push_back({i, (i + 1) % n, 1.0});
    edges.push_back({(i + 1) % n, i, 1.0});
  }
  return AdjacencyGraph(n, edges);
}

AdjacencyGraph complete(int n) {
  std::vector<Edge> edges;
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < n; ++j) {
      if (i != j) edges.push_back({i, j, 1.0});
    }
  }
  return AdjacencyGraph(n, edges);
}

AdjacencyGraph star() {
  return AdjacencyGraph(4, {{0, 1}, {1, 0}, {0, 2}, {2, 0}, {0, 3}, {3, 0}});
}

}  // namespace

TEST_CASE("lattice edge counts and degrees") {
  CHECK(build_lattice(2, 2, LatticeScheme::rook).undirected_edge_count() == 4);
  for (int d : build_lattice(2, 2, LatticeScheme::rook).out_degrees()) CHECK(d == 2);
  CHECK(build_lattice(2, 2, LatticeScheme::queen).undirected_edge_count() == 6);

  const auto q = build_lattice(3, 3, LatticeScheme::queen);
  const auto deg = q.out_degrees();
  CHECK(deg[0] == 3);
  CHECK(deg[1] == 5);
  CHECK(deg[4] == 8);
  CHECK(q.is_symmetric());
  REQUIRE(q.coords());
  CHECK((*q.coords())[5].x == 3.0);  // row 1, col 2
  CHECK((*q.coords())[5].y == 2.0);

  CHECK_THROWS_AS(build_lattice(1, 1, LatticeScheme::rook), Error);
}

TEST_CASE("knn: collinear points give a path") {
  const std::vector<Point> pts{{0, 0}, {1, 0}, {2, 0}, {3, 0}};
  const auto g = build_knn(pts, 1);
  const std::set<std::pair<int, int>> path{{0, 1}, {1, 2}, {2, 3}};
  CHECK(oracle::undirected_pairs(g) == path);
  CHECK(oracle::knn_pairs(pts, 1) == path);
  CHECK(g.is_symmetric());
}

TEST_CASE("knn: equilateral triangle with k = 2 is K3") {
  const std::vector<Point> pts{{0, 0}, {1, 0}, {0.5, std::sqrt(3.0) / 2}};
  CHECK(build_knn(pts, 2).undirected_edge_count() == 3);
}

TEST_CASE("knn: unit square with k = 1 follows the lowest-index tie rule") {
  // Corners in order (0,0), (1,0), (0,1), (1,1). Every corner has two
  // neighbours at distance 1; the lower index wins, giving 0-1, 0-2 and 1-3.
  const std::vector<Point> pts{{0, 0}, {1, 0}, {0, 1}, {1, 1}};
  const auto g = build_knn(pts, 1);
  const std::set<std::pair<int, int>> expected{{0, 1}, {0, 2}, {1, 3}};
  CHECK(oracle::knn_pairs(pts, 1) == expected);
  CHECK(oracle::undirected_pairs(g) == expected);
}

TEST_CASE("knn matches brute force on random points") {
  std::mt19937_64 rng(7);
  std::uniform_real_distribution<double> u(0, 1);
  for (int rep = 0; rep < 20; ++rep) {
    std::vector<Point> pts(30);
    for (auto& p : pts) p = {u(rng), u(rng)};
    for (int k : {1, 4, 6}) {
      const auto g = build_knn(pts, k);
      CHECK(oracle::undirected_pairs(g) == oracle::knn_pairs(pts, k));
      for (int d : g.out_degrees()) CHECK(d >= k);
    }
  }
}

TEST_CASE("knn rejects k out of range") {
  const std::vector<Point> pts{{0, 0}, {1, 0}, {2, 0}};
  try {
    (void)build_knn(pts, 3);
    FAIL("expected an error");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::invalid_k);
  }
  CHECK_THROWS_AS(build_knn(pts, 0), Error);
}

TEST_CASE("row standardisation") {
  const auto w3 = row_standardize(cycle(3));
  for (int i = 0; i < 3; ++i) {
    CHECK(w3.matrix().row(i).sum() == doctest::Approx(1.0).epsilon(1e-15));
    CHECK(w3.matrix()(i, (i + 1) % 3) == 0.5);
  }
  const auto w4 = row_standardize(complete(4));
  CHECK(w4.matrix()(0, 1) == doctest::Approx(1.0 / 3.0).epsilon(1e-15));
  const auto ws = row_standardize(star());
  CHECK(ws.matrix()(0, 3) == doctest::Approx(1.0 / 3.0).epsilon(1e-15));
  CHECK(ws.matrix()(2, 0) == 1.0);
  CHECK(ws.matrix().row(2).sum() == 1.0);
}

TEST_CASE("graph validation") {
  try {
    AdjacencyGraph g(3, {{0, 1}, {1, 0}});
    FAIL("isolated unit accepted");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::isolated_unit);
    CHECK(std::string(e.what()).find('2') != std::string::npos);
  }
  CHECK_THROWS_AS(AdjacencyGraph(2, {{0, 0}, {1, 0}}), Error);
  CHECK_THROWS_AS(AdjacencyGraph(2, {{0, 2}, {1, 0}}), Error);
  CHECK_THROWS_AS(AdjacencyGraph(2, {{0, 1, -1.0}, {1, 0}}), Error);
}

TEST_CASE("degree identities on named graphs") {
  const auto c8 = cycle(8);
  CHECK(degree_identities(c8).sum() == doctest::Approx(8.0).epsilon(1e-14));
  CHECK(null_information_unrestricted(row_standardize(c8)) == doctest::Approx(8.0).epsilon(1e-14));

  CHECK(degree_identities(complete(4)).sum() == doctest::Approx(8.0 / 3.0).epsilon(1e-14));

  const auto s = degree_identities(star());
  CHECK(s.tr_wtw == doctest::Approx(10.0 / 3.0).epsilon(1e-14));
  CHECK(s.tr_w2 == doctest::Approx(2.0).epsilon(1e-14));

  CHECK(null_information_unrestricted(WeightMatrix(Eigen::MatrixXd::Zero(4, 4), Normalization::raw)) == 0.0);
}

TEST_CASE("degree identities equal dense traces on random graphs") {
  std::mt19937_64 rng(11);
  for (int rep = 0; rep < 50; ++rep) {
    const int n = 5 + rep % 20;
    const auto g = oracle::random_graph(n, 0.25, rng);
    const auto w = row_standardize(g);
    const Eigen::MatrixXd& m = w.matrix();
    const double tr_wtw = (m.transpose() * m).trace();
    const double tr_w2 = (m * m).trace();
    const auto id = degree_identities(g);
    CHECK(std::abs(id.tr_wtw - tr_wtw) < 1e-10);
    CHECK(std::abs(id.tr_w2 - tr_w2) < 1e-10);
    CHECK(std::abs(null_information_unrestricted(w) - id.sum()) < 1e-10);

    // Relabelling leaves both traces unchanged.
    std::vector<int> perm(static_cast<std::size_t>(n));
    std::iota(perm.begin(), perm.end(), 0);
    std::shuffle(perm.begin(), perm.end(), rng);
    CHECK(std::abs(null_information_unrestricted(w.relabeled(perm)) - id.sum()) < 1e-10);
  }
}

TEST_CASE("d-regular graphs give 2n/d") {
  for (int n : {5, 9, 16}) {
    CHECK(std::abs(null_information_unrestricted(row_standardize(cycle(n))) - n) < 1e-10);
    CHECK(std::abs(null_information_unrestricted(row_standardize(complete(n))) -
                   2.0 * n / (n - 1)) < 1e-10);
  }
  // Rook torus-free 2x2 lattice is 2-regular.
  CHECK(std::abs(degree_identities(build_lattice(2, 2, LatticeScheme::rook)).sum() - 4.0) < 1e-12);
}

TEST_CASE("weight matrix validation") {
  Eigen::MatrixXd m = Eigen::MatrixXd::Zero(3, 3);
  m(0, 0) = 1.0;
  CHECK_THROWS_AS(WeightMatrix(m, Normalization::raw), Error);
  Eigen::MatrixXd bad(2, 2);
  bad << 0, 0.5, 1, 0;
  CHECK_THROWS_AS(WeightMatrix(bad, Normalization::row), Error);
  CHECK_NOTHROW(WeightMatrix(bad, Normalization::raw));
}

TEST_CASE("coordinate standardisation") {
  const std::vector<Point> pts{{1, 10}, {2, 20}, {3, 35}, {4, 41}};
  const auto s = standardize_coords(pts);
  double mx = 0, my = 0, vx = 0, vy = 0;
  for (const auto& p : s) {
    mx += p.x;
    my += p.y;
  }
  for (const auto& p : s) {
    vx += p.x * p.x;
    vy += p.y * p.y;
  }
  CHECK(std::abs(mx) < 1e-12);
  CHECK(std::abs(my) < 1e-12);
  CHECK(vx / 3.0 == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(vy / 3.0 == doctest::Approx(1.0).epsilon(1e-12));
}

#include "resaple/weights.hpp"

#include "resaple/error.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <set>
#include <utility>

namespace resaple {

AdjacencyGraph::AdjacencyGraph(int n, std::vector<Edge> edges,
                               std::optional<std::vector<Point>> coords)
    : n_(n), edges_(std::move(edges)), coords_(std::move(coords)) {
  if (n_ < 1) {
    throw Error(ErrorKind::invalid_dimension, "graph must have at least one unit");
  }
  if (coords_ && static_cast<int>(coords_->size()) != n_) {
    throw Error(ErrorKind::length_mismatch,
                "coordinate count " + std::to_string(coords_->size()) +
                    " does not match n = " + std::to_string(n_));
  }
  for (const Edge& e : edges_) {
    if (e.i < 0 || e.i >= n_ || e.j < 0 || e.j >= n_) {
      throw Error(ErrorKind::invalid_dimension,
                  "edge (" + std::to_string(e.i) + ", " + std::to_string(e.j) +
                      ") out of range for n = " + std::to_string(n_));
    }
    if (e.i == e.j) {
      throw Error(ErrorKind::invalid_dimension,
                  "self-loop at unit " + std::to_string(e.i));
    }
    if (!(e.w > 0.0) || !std::isfinite(e.w)) {
      throw Error(ErrorKind::invalid_dimension,
                  "edge weights must be positive and finite");
    }
  }
  std::sort(edges_.begin(), edges_.end(), [](const Edge& a, const Edge& b) {
    return std::pair(a.i, a.j) < std::pair(b.i, b.j);
  });
  edges_.erase(std::unique(edges_.begin(), edges_.end(),
                           [](const Edge& a, const Edge& b) {
                             return a.i == b.i && a.j == b.j;
                           }),
               edges_.end());

  const auto deg = out_degrees();
  for (int i = 0; i < n_; ++i) {
    if (deg[i] == 0) {
      throw Error(ErrorKind::isolated_unit,
                  "unit " + std::to_string(i) + " has no neighbours");
    }
  }
}

std::vector<int> AdjacencyGraph::out_degrees() const {
  std::vector<int> deg(n_, 0);
  for (const Edge& e : edges_) ++deg[e.i];
  return deg;
}

bool AdjacencyGraph::is_binary() const {
  return std::all_of(edges_.begin(), edges_.end(),
                     [](const Edge& e) { return e.w == 1.0; });
}

bool AdjacencyGraph::has_edge(int i, int j) const {
  auto it = std::lower_bound(
      edges_.begin(), edges_.end(), std::pair(i, j),
      [](const Edge& e, const std::pair<int, int>& key) {
        return std::pair(e.i, e.j) < key;
      });
  return it != edges_.end() && it->i == i && it->j == j;
}

bool AdjacencyGraph::is_symmetric() const {
  return std::all_of(edges_.begin(), edges_.end(),
                     [this](const Edge& e) { return has_edge(e.j, e.i); });
}

std::size_t AdjacencyGraph::undirected_edge_count() const {
  std::set<std::pair<int, int>> pairs;
  for (const Edge& e : edges_) pairs.emplace(std::min(e.i, e.j), std::max(e.i, e.j));
  return pairs.size();
}

Eigen::MatrixXd AdjacencyGraph::dense() const {
  Eigen::MatrixXd a = Eigen::MatrixXd::Zero(n_, n_);
  for (const Edge& e : edges_) a(e.i, e.j) = e.w;
  return a;
}

std::string to_string(Normalization n) {
  return n == Normalization::row ? "row" : "raw";
}

Normalization parse_normalization(const std::string& s) {
  if (s == "row") return Normalization::row;
  if (s == "raw") return Normalization::raw;
  throw Error(ErrorKind::io, "unknown normalization '" + s + "'");
}

WeightMatrix::WeightMatrix(Eigen::MatrixXd w, Normalization normalization)
    : w_(std::move(w)), normalization_(normalization) {
  if (w_.rows() != w_.cols() || w_.rows() < 1) {
    throw Error(ErrorKind::invalid_dimension, "weight matrix must be square and non-empty");
  }
  if (!w_.allFinite()) {
    throw Error(ErrorKind::invalid_dimension, "weight matrix has non-finite entries");
  }
  for (Eigen::Index i = 0; i < w_.rows(); ++i) {
    if (w_(i, i) != 0.0) {
      throw Error(ErrorKind::invalid_dimension,
                  "weight matrix diagonal must be zero (unit " + std::to_string(i) + ")");
    }
  }
  if (normalization_ == Normalization::row) {
    for (Eigen::Index i = 0; i < w_.rows(); ++i) {
      const double s = w_.row(i).sum();
      if (std::abs(s - 1.0) > 1e-12) {
        throw Error(ErrorKind::invalid_dimension,
                    "row " + std::to_string(i) + " of a row-standardized matrix sums to " +
                        std::to_string(s));
      }
    }
  }
}

double WeightMatrix::average_degree() const {
  return static_cast<double>((w_.array() != 0.0).count()) / static_cast<double>(n());
}

WeightMatrix WeightMatrix::relabeled(std::span<const int> perm) const {
  if (static_cast<int>(perm.size()) != n()) {
    throw Error(ErrorKind::length_mismatch, "permutation length does not match n");
  }
  Eigen::MatrixXd out(n(), n());
  for (int i = 0; i < n(); ++i)
    for (int j = 0; j < n(); ++j) out(i, j) = w_(perm[i], perm[j]);
  return WeightMatrix(std::move(out), normalization_);
}

LatticeScheme parse_lattice_scheme(const std::string& s) {
  if (s == "rook") return LatticeScheme::rook;
  if (s == "queen") return LatticeScheme::queen;
  throw Error(ErrorKind::io, "unknown lattice scheme '" + s + "' (rook|queen)");
}

AdjacencyGraph build_lattice(int rows, int cols, LatticeScheme scheme) {
  if (rows < 1 || cols < 1 || static_cast<long>(rows) * cols < 2) {
    throw Error(ErrorKind::invalid_dimension,
                "lattice needs rows*cols >= 2 (got " + std::to_string(rows) + "x" +
                    std::to_string(cols) + ")");
  }
  std::vector<Edge> edges;
  std::vector<Point> coords;
  coords.reserve(static_cast<std::size_t>(rows) * cols);
  for (int r = 0; r < rows; ++r) {
    for (int c = 0; c < cols; ++c) {
      coords.push_back({static_cast<double>(c + 1), static_cast<double>(r + 1)});
      for (int dr = -1; dr <= 1; ++dr) {
        for (int dc = -1; dc <= 1; ++dc) {
          if (dr == 0 && dc == 0) continue;
          if (scheme == LatticeScheme::rook && dr != 0 && dc != 0) continue;
          const int rr = r + dr;
          const int cc = c + dc;
          if (rr < 0 || rr >= rows || cc < 0 || cc >= cols) continue;
          edges.push_back({r * cols + c, rr * cols + cc, 1.0});
        }
      }
    }
  }
  return AdjacencyGraph(rows * cols, std::move(edges), std::move(coords));
}

AdjacencyGraph build_knn(std::span<const Point> coords, int k) {
  const int n = static_cast<int>(coords.size());
  if (k < 1 || k >= n) {
    throw Error(ErrorKind::invalid_k,
                "k must satisfy 1 <= k < n (k = " + std::to_string(k) +
                    ", n = " + std::to_string(n) + ")");
  }
  std::set<std::pair<int, int>> links;
  std::vector<std::pair<double, int>> dist(static_cast<std::size_t>(n - 1));
  for (int i = 0; i < n; ++i) {
    std::size_t m = 0;
    for (int j = 0; j < n; ++j) {
      if (j == i) continue;
      const double dx = coords[i].x - coords[j].x;
      const double dy = coords[i].y - coords[j].y;
      dist[m++] = {dx * dx + dy * dy, j};
    }
    // Lexicographic on (distance, index) realises the lowest-index tie rule.
    std::partial_sort(dist.begin(), dist.begin() + k, dist.end());
    for (int t = 0; t < k; ++t) {
      const int j = dist[t].second;
      links.emplace(i, j);
      links.emplace(j, i);
    }
  }
  std::vector<Edge> edges;
  edges.reserve(links.size());
  for (const auto& [i, j] : links) edges.push_back({i, j, 1.0});
  return AdjacencyGraph(n, std::move(edges),
                        std::vector<Point>(coords.begin(), coords.end()));
}

WeightMatrix row_standardize(const AdjacencyGraph& g) {
  Eigen::MatrixXd w = g.dense();
  for (int i = 0; i < g.n(); ++i) {
    const double s = w.row(i).sum();
    if (!(s > 0.0)) {
      throw Error(ErrorKind::isolated_unit, "unit " + std::to_string(i) + " has no neighbours");
    }
    w.row(i) /= s;
  }
  // Re-normalise so the row sum is 1 to the last bit where possible.
  for (int i = 0; i < g.n(); ++i) {
    const double s = w.row(i).sum();
    if (std::abs(s - 1.0) > 1e-14) w.row(i) /= s;
  }
  return WeightMatrix(std::move(w), Normalization::row);
}

WeightMatrix raw_weights(const AdjacencyGraph& g) {
  return WeightMatrix(g.dense(), Normalization::raw);
}

DegreeIdentities degree_identities(const AdjacencyGraph& g) {
  if (!g.is_binary()) {
    throw Error(ErrorKind::domain, "degree identities require a binary adjacency matrix");
  }
  const auto deg = g.out_degrees();
  // Count units per degree and reciprocal edges per degree pair, then divide
  // once per group; d-regular graphs then give n/d exactly.
  std::map<int, long long> by_degree;
  std::map<std::pair<int, int>, long long> by_pair;
  for (int i = 0; i < g.n(); ++i) ++by_degree[deg[i]];
  for (const Edge& e : g.edges()) {
    if (g.has_edge(e.j, e.i)) ++by_pair[{deg[e.i], deg[e.j]}];
  }
  DegreeIdentities out;
  for (const auto& [d, count] : by_degree) out.tr_wtw += static_cast<double>(count) / d;
  for (const auto& [dd, count] : by_pair) {
    out.tr_w2 += static_cast<double>(count) / (static_cast<double>(dd.first) * dd.second);
  }
  return out;
}

double null_information_unrestricted(const WeightMatrix& w) {
  const Eigen::MatrixXd& m = w.matrix();
  // Tr(W'W) = ||W||_F^2 and Tr(W^2) = sum_ij w_ij w_ji.
  return m.squaredNorm() + m.cwiseProduct(m.transpose()).sum();
}

std::vector<Point> standardize_coords(std::span<const Point> coords) {
  const std::size_t n = coords.size();
  if (n < 2) {
    throw Error(ErrorKind::invalid_dimension, "need at least two coordinates to standardize");
  }
  auto stats = [&](auto get) {
    double mean = 0.0;
    for (const Point& p : coords) mean += get(p);
    mean /= static_cast<double>(n);
    double ss = 0.0;
    for (const Point& p : coords) ss += (get(p) - mean) * (get(p) - mean);
    return std::pair(mean, std::sqrt(ss / static_cast<double>(n - 1)));
  };
  const auto [mx, sx] = stats([](const Point& p) { return p.x; });
  const auto [my, sy] = stats([](const Point& p) { return p.y; });
  if (!(sx > 0.0) || !(sy > 0.0)) {
    throw Error(ErrorKind::domain, "cannot standardize a constant coordinate axis");
  }
  std::vector<Point> out;
  out.reserve(n);
  for (const Point& p : coords) out.push_back({(p.x - mx) / sx, (p.y - my) / sy});
  return out;
}

}  // namespace resaple

#pragma once

#include <Eigen/Dense>

#include <optional>
#include <span>
#include <string>
#include <vector>

namespace resaple {

struct Point {
  double x = 0.0;
  double y = 0.0;
};

struct Edge {
  int i = 0;
  int j = 0;
  double w = 1.0;

  friend bool operator==(const Edge&, const Edge&) = default;
};

/// Directed neighbour structure over `n` units. Edges are kept sorted by
/// (i, j) with duplicates collapsed. Construction rejects self-loops,
/// out-of-range indices, non-positive weights and isolated units.
class AdjacencyGraph {
 public:
  AdjacencyGraph(int n, std::vector<Edge> edges,
                 std::optional<std::vector<Point>> coords = std::nullopt);

  int n() const noexcept { return n_; }
  const std::vector<Edge>& edges() const noexcept { return edges_; }
  const std::optional<std::vector<Point>>& coords() const noexcept {
    return coords_;
  }

  /// Out-degree d_i (number of out-neighbours, ignoring weights).
  std::vector<int> out_degrees() const;
  bool is_binary() const;
  bool is_symmetric() const;
  bool has_edge(int i, int j) const;
  /// Number of unordered pairs {i, j} connected in at least one direction.
  std::size_t undirected_edge_count() const;

  Eigen::MatrixXd dense() const;

 private:
  int n_;
  std::vector<Edge> edges_;
  std::optional<std::vector<Point>> coords_;
};

enum class Normalization { row, raw };

std::string to_string(Normalization n);
Normalization parse_normalization(const std::string& s);

/// Dense spatial weights with zero diagonal.
class WeightMatrix {
 public:
  WeightMatrix(Eigen::MatrixXd w, Normalization normalization);

  int n() const noexcept { return static_cast<int>(w_.rows()); }
  const Eigen::MatrixXd& matrix() const noexcept { return w_; }
  Normalization normalization() const noexcept { return normalization_; }

  /// Mean number of non-zero entries per row.
  double average_degree() const;
  /// Same weights with units reordered: result(i, j) = w(perm[i], perm[j]).
  WeightMatrix relabeled(std::span<const int> perm) const;

 private:
  Eigen::MatrixXd w_;
  Normalization normalization_;
};

enum class LatticeScheme { rook, queen };

LatticeScheme parse_lattice_scheme(const std::string& s);

/// rows x cols lattice; unit index is row * cols + col and its coordinate is
/// (col + 1, row + 1).
AdjacencyGraph build_lattice(int rows, int cols, LatticeScheme scheme);

/// k nearest neighbours, symmetrised by union. Distance ties are broken by
/// the lower unit index.
AdjacencyGraph build_knn(std::span<const Point> coords, int k);

WeightMatrix row_standardize(const AdjacencyGraph& g);
WeightMatrix raw_weights(const AdjacencyGraph& g);

struct DegreeIdentities {
  double tr_wtw = 0.0;  ///< sum_i 1/d_i
  double tr_w2 = 0.0;   ///< sum_{i,j} a_ij a_ji / (d_i d_j)
  double sum() const noexcept { return tr_wtw + tr_w2; }
};

/// Closed-form traces of W'W and W^2 for W = D^{-1} A with binary A.
DegreeIdentities degree_identities(const AdjacencyGraph& g);

/// Tr(W'W) + Tr(W^2) from the dense matrix.
double null_information_unrestricted(const WeightMatrix& w);

/// Standardise each coordinate axis to mean 0, sample SD 1.
std::vector<Point> standardize_coords(std::span<const Point> coords);

}  // namespace resaple

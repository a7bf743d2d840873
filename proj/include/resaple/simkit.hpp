#pragma once

#include "resaple/estimators.hpp"
#include "resaple/inference.hpp"
#include "resaple/residual_space.hpp"
#include "resaple/weights.hpp"

#include <Eigen/Dense>

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace resaple {

struct Covariates {
  DesignMatrix x;
  Eigen::VectorXd beta;
};

/// Intercept; column 2 (3) is the standardised x (y) coordinate plus
/// N(0, 0.1^2) noise, re-standardised; later columns are standardised
/// Gaussian draws. beta_1 = 1, beta_j = 0.6 / sqrt(j - 1).
Covariates build_covariates(std::span<const Point> coords, int n, int p, std::uint64_t seed);

/// Draws z = X beta + u with (I - rho W) u = eps, eps ~ N(0, sigma^2 I).
/// The LU factorisation is shared across draws.
class SemGenerator {
 public:
  SemGenerator(const DesignMatrix& x, Eigen::VectorXd beta, const WeightMatrix& w, double rho,
               double sigma);
  Eigen::VectorXd draw(std::uint64_t seed) const;
  /// Error vector u only.
  Eigen::VectorXd draw_errors(std::uint64_t seed) const;

 private:
  Eigen::VectorXd mean_;
  Eigen::PartialPivLU<Eigen::MatrixXd> lu_;
  double sigma_;
};

Eigen::VectorXd generate_sem(const DesignMatrix& x, const Eigen::VectorXd& beta,
                             const WeightMatrix& w, double rho, double sigma, std::uint64_t seed);

enum class Topology { lattice_queen, lattice_rook, custom_graph };
std::string to_string(Topology t);
Topology parse_topology(const std::string& s);

enum class StudyKind { estimation, power };
std::string to_string(StudyKind k);

/// Power-study procedures.
enum class PowerMethod { resaple_exact, resaple_perm, resaple_z, moran_perm, aple_perm, maple_perm };
std::string to_string(PowerMethod m);
PowerMethod parse_power_method(const std::string& s);

struct SimDesign {
  StudyKind study = StudyKind::estimation;
  Topology topology = Topology::lattice_queen;
  /// Lattice side lengths m (n = m^2); lattice topologies only.
  std::vector<int> lattice_sizes{5, 10};
  /// custom_graph only; coordinates are required for covariates and kNN.
  std::optional<AdjacencyGraph> graph;
  std::vector<int> p_values{1, 5};
  std::vector<double> rho_grid = default_rho_grid();
  double sigma = 1.0;
  int replicates = 500;
  /// Independent streams pooled into one estimate; K = streams * replicates.
  int seed_streams = 1;
  /// Candidate weights labels: rook, queen, knn<k>, custom. Empty means the
  /// topology's own contiguity.
  std::vector<std::string> weights;
  /// Power study: generate data under this label for every candidate
  /// instead of under each candidate itself.
  std::optional<std::string> dgp_weights;
  double alpha = 0.05;
  int permutations = 199;
  PermutationScheme scheme = PermutationScheme::freedman_lane;
  Side side = Side::greater;
  std::vector<Estimator> estimators{Estimator::moran, Estimator::aple, Estimator::maple,
                                    Estimator::resaple, Estimator::reml};
  std::vector<PowerMethod> power_methods{PowerMethod::resaple_exact, PowerMethod::resaple_perm,
                                         PowerMethod::resaple_z, PowerMethod::moran_perm,
                                         PowerMethod::aple_perm, PowerMethod::maple_perm};
  int threads = 0;

  /// {0, 0.05, ..., 0.95}.
  static std::vector<double> default_rho_grid();
  /// Throws on an inconsistent design.
  void validate() const;
};

struct MetricRow {
  std::string design_id;
  std::string topology;
  int n = 0;
  int p = 0;
  std::string w_label;
  std::string method;
  double rho_true = 0.0;
  std::string metric;
  double value = 0.0;
  std::optional<double> mc_se;
};

struct SimMetrics {
  std::vector<MetricRow> rows;
  /// `design_id,topology,n,p,w_label,method,rho_true,metric,value,mc_se`,
  /// numbers printed with %.17g.
  std::string to_csv() const;
};

/// Row-standardised candidate weights for a base graph with coordinates.
/// `rook`/`queen` need a lattice (rows, cols); `custom` returns the graph.
WeightMatrix candidate_weights(const std::string& label, const AdjacencyGraph& base,
                               std::optional<std::pair<int, int>> lattice_shape);

/// Bias, SD (1/K normalisation so rmse^2 = bias^2 + sd^2), RMSE and failure
/// count per (design point, rho, estimator).
SimMetrics run_estimation_study(const SimDesign& design, std::uint64_t seed);

/// Rejection rates per (design point, candidate W, rho, method) together
/// with I_r(0) of each candidate.
SimMetrics run_power_study(const SimDesign& design, std::uint64_t seed);

SimMetrics run_study(const SimDesign& design, std::uint64_t seed);

}  // namespace resaple

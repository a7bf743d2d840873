#pragma once

#include "resaple/residual_space.hpp"
#include "resaple/weights.hpp"

#include <Eigen/Dense>

#include <span>
#include <string>
#include <vector>

namespace resaple {

/// Symmetric square roots B_r^{1/2} and B_r^{-1/2} of the denominator
/// operator, from its eigendecomposition.
struct Whitening {
  Eigen::MatrixXd sqrt_b;
  Eigen::MatrixXd inv_sqrt_b;
};

/// Throws if B_r has an eigenvalue at or below 1e-12 * lambda_max.
Whitening whiten(const ResidualSpace& s);

struct ScatterPoint {
  int id = 0;
  double x_tilde = 0.0;
  double y_tilde = 0.0;
  double c_i = 0.0;
  double s_i = 0.0;
  double leverage = 0.0;
};

/// Unit-level scatterplot coordinates x~ = H B^{1/2} e, y~ = H B^{-1/2} A e.
/// Individual coordinates depend on the QR contrast basis; the slope and
/// the totals do not.
struct ScatterData {
  std::vector<ScatterPoint> points;
  double numerator = 0.0;    // e'A_r e
  double denominator = 0.0;  // e'B_r e
  double rho_hat = 0.0;

  /// OLS slope through the origin of y~ on x~.
  double slope() const;
};

ScatterData scatter_coordinates(const ResidualSpace& s, const Eigen::VectorXd& e);
ScatterData scatter_coordinates(const ResidualSpace& s, const Whitening& wh,
                                const Eigen::VectorXd& e);

struct LocalContributions {
  Eigen::VectorXd c;  // C_i = x~_i y~_i
  Eigen::VectorXd s;  // S_i = C_i / e'B_r e, sums to rho_hat
};

LocalContributions local_contributions(const ResidualSpace& s, const Eigen::VectorXd& e);

struct WeightCandidate {
  std::string label;
  WeightMatrix w;
};

struct WeightComparisonRow {
  std::string label;
  double avg_degree = 0.0;
  double i_n0 = 0.0;
  double i_r0 = 0.0;
  double info_ratio = 0.0;
  bool selected = false;
};

/// Rows sorted by descending restricted information; the first row is the
/// selected candidate.
struct WeightComparison {
  std::vector<WeightComparisonRow> rows;
};

WeightComparison compare_weights(const DesignMatrix& x, std::span<const WeightCandidate> candidates);

}  // namespace resaple

#pragma once

#include "resaple/residual_space.hpp"
#include "resaple/weights.hpp"

#include <Eigen/Dense>

#include <optional>
#include <string>
#include <vector>

namespace resaple {

enum class Estimator { moran, aple, maple, resaple, reml };

std::string to_string(Estimator m);
Estimator parse_estimator(const std::string& s);

struct EstimateResult {
  Estimator method = Estimator::resaple;
  double rho_hat = 0.0;
  double numerator = 0.0;    // one-step methods only
  double denominator = 0.0;  // one-step methods only
  std::optional<double> sigma2_hat;
  std::optional<double> loglik;
  bool boundary = false;  // reml: optimum at an edge of the search interval
};

/// Moran's index of OLS residuals, (n / S0) r'Wr / r'r. With row-standardised
/// weights S0 = n and the prefactor is 1.
EstimateResult moran_residual(const Eigen::VectorXd& z, const DesignMatrix& x,
                              const WeightMatrix& w);

/// z'Kz / z'(W'W + nu_n I)z with K = (W + W')/2 and nu_n = Tr(W^2)/n.
EstimateResult aple(const Eigen::VectorXd& z, const WeightMatrix& w);

/// Covariate-adjusted one-step estimator:
///   Z'MKMZ / Z'(MW'WM - M(W' + W)P(W'W)M + nu_n M)Z.
EstimateResult maple(const Eigen::VectorXd& z, const DesignMatrix& x, const WeightMatrix& w);

/// e'(K_r - mu_r I)e / e'B_r e.
EstimateResult resaple(const ResidualSpace& s, const Eigen::VectorXd& e);

/// Restricted profile score at rho = 0: r e'K_r e / e'e - Tr(K_r).
double restricted_score(const ResidualSpace& s, const Eigen::VectorXd& e);

/// Approximate restricted curvature at rho = 0: -(r / e'e) e'B_r e.
double approximate_curvature(const ResidualSpace& s, const Eigen::VectorXd& e);

/// Restricted profile log-likelihood in contrast form,
///   -1/2 log|Sigma_r(rho)| - r/2 log(e'Sigma_r(rho)^{-1} e / r),
/// with Sigma_r(rho) = H'R^{-1}R^{-T}H and e = H'z.
double restricted_profile_loglik(const DesignMatrix& x, const WeightMatrix& w,
                                 const Eigen::VectorXd& z, double rho);

/// Same likelihood in response form,
///   log|R| - 1/2 log|X'R'RX| - r/2 log(Z'P_{R'R}Z / r).
/// The contrast form exceeds this one by the rho-free constant 1/2 log|X'X|.
double restricted_profile_loglik_zform(const DesignMatrix& x, const WeightMatrix& w,
                                       const Eigen::VectorXd& z, double rho);

struct Interval {
  double lo = -0.999;
  double hi = 0.999;
};

/// (-0.999, 0.999) for row-standardised W; otherwise 0.999 times the
/// reciprocals of the extreme real eigenvalues of W.
Interval default_reml_interval(const WeightMatrix& w);

/// Precomputed state for repeated REML fits on one (X, W) pair.
class RemlProblem {
 public:
  static constexpr int grid_points = 41;

  RemlProblem(const DesignMatrix& x, const WeightMatrix& w,
              std::optional<Interval> interval = std::nullopt);

  const Interval& interval() const noexcept { return interval_; }
  bool uses_eigen_logdet() const noexcept { return eigen_path_; }

  /// Response-form restricted profile log-likelihood.
  double loglik(const Eigen::VectorXd& z, double rho) const;
  /// Restricted variance estimate sigma_r^2(rho) = Z'P_{R'R}Z / r.
  double sigma2(const Eigen::VectorXd& z, double rho) const;

  EstimateResult fit(const Eigen::VectorXd& z) const;

 private:
  double log_det_r(double rho) const;
  std::pair<double, double> quad_and_logdet_xrx(const Eigen::VectorXd& z, double rho) const;

  Eigen::MatrixXd x_;
  Eigen::MatrixXd w_;
  Eigen::MatrixXd wx_;
  Interval interval_;
  Eigen::VectorXd eigenvalues_;
  bool eigen_path_ = false;
  int r_ = 0;
};

/// Maximise the restricted profile likelihood over `interval` (coarse grid
/// followed by Brent's method, absolute tolerance 1e-7).
EstimateResult reml_fit(const DesignMatrix& x, const WeightMatrix& w, const Eigen::VectorXd& z,
                        std::optional<Interval> interval = std::nullopt);

/// Quadratic-form evaluators for every one-step statistic as a function of an
/// OLS residual vector (any vector in Im(M)). Used by permutation and Monte
/// Carlo loops where X and W stay fixed.
class ResidualStatistics {
 public:
  ResidualStatistics(const DesignMatrix& x, const WeightMatrix& w, const ResidualSpace& s);

  /// Throws on a degenerate (zero) denominator.
  double evaluate(Estimator m, const Eigen::VectorXd& resid) const;
  const ResidualSpace& space() const noexcept { return space_; }

 private:
  ResidualSpace space_;
  Eigen::MatrixXd k_;
  Eigen::MatrixXd aple_den_;
  Eigen::MatrixXd maple_den_;
  double moran_scale_ = 1.0;
};

}  // namespace resaple

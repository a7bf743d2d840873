#include "resaple/esda.hpp"

#include "resaple/error.hpp"
#include "resaple/estimators.hpp"

#include <algorithm>
#include <cmath>

namespace resaple {

Whitening whiten(const ResidualSpace& s) {
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(s.b_r());
  if (es.info() != Eigen::Success) {
    throw Error(ErrorKind::singular, "eigendecomposition of B_r failed");
  }
  const Eigen::VectorXd& lambda = es.eigenvalues();
  const double lmax = lambda.maxCoeff();
  if (!(lmax > 0.0) || lambda.minCoeff() <= 1e-12 * lmax) {
    throw Error(ErrorKind::singular, "B_r is not positive definite");
  }
  const Eigen::MatrixXd& v = es.eigenvectors();
  Whitening out;
  out.sqrt_b = v * lambda.cwiseSqrt().asDiagonal() * v.transpose();
  out.inv_sqrt_b = v * lambda.cwiseSqrt().cwiseInverse().asDiagonal() * v.transpose();
  return out;
}

double ScatterData::slope() const {
  double xy = 0.0;
  double xx = 0.0;
  for (const ScatterPoint& p : points) {
    xy += p.x_tilde * p.y_tilde;
    xx += p.x_tilde * p.x_tilde;
  }
  return xy / xx;
}

ScatterData scatter_coordinates(const ResidualSpace& s, const Whitening& wh,
                                const Eigen::VectorXd& e) {
  const EstimateResult est = resaple(s, e);
  const Eigen::VectorXd x_tilde = s.h() * (wh.sqrt_b * e);
  const Eigen::VectorXd y_tilde = s.h() * (wh.inv_sqrt_b * (s.a_r() * e));
  ScatterData out;
  out.numerator = est.numerator;
  out.denominator = est.denominator;
  out.rho_hat = est.rho_hat;
  out.points.reserve(static_cast<std::size_t>(s.n()));
  for (int i = 0; i < s.n(); ++i) {
    ScatterPoint p;
    p.id = i;
    p.x_tilde = x_tilde(i);
    p.y_tilde = y_tilde(i);
    p.c_i = p.x_tilde * p.y_tilde;
    p.s_i = p.c_i / est.denominator;
    p.leverage = p.x_tilde * p.x_tilde;
    out.points.push_back(p);
  }
  return out;
}

ScatterData scatter_coordinates(const ResidualSpace& s, const Eigen::VectorXd& e) {
  return scatter_coordinates(s, whiten(s), e);
}

LocalContributions local_contributions(const ResidualSpace& s, const Eigen::VectorXd& e) {
  const ScatterData sd = scatter_coordinates(s, e);
  LocalContributions out;
  out.c.resize(s.n());
  out.s.resize(s.n());
  for (int i = 0; i < s.n(); ++i) {
    out.c(i) = sd.points[i].c_i;
    out.s(i) = sd.points[i].s_i;
  }
  return out;
}

WeightComparison compare_weights(const DesignMatrix& x,
                                 std::span<const WeightCandidate> candidates) {
  if (candidates.empty()) throw Error(ErrorKind::invalid_dimension, "no candidate weights");
  WeightComparison out;
  for (const WeightCandidate& c : candidates) {
    if (c.w.n() != x.n()) {
      throw Error(ErrorKind::length_mismatch,
                  "candidate '" + c.label + "' has n = " + std::to_string(c.w.n()) +
                      " but the design has n = " + std::to_string(x.n()));
    }
    const ResidualSpace s = build_residual_space(x, c.w);
    WeightComparisonRow row;
    row.label = c.label;
    row.avg_degree = c.w.average_degree();
    row.i_n0 = null_information_unrestricted(c.w);
    row.i_r0 = s.i_r0();
    row.info_ratio = row.i_r0 / row.i_n0;
    out.rows.push_back(std::move(row));
  }
  std::stable_sort(out.rows.begin(), out.rows.end(),
                   [](const auto& a, const auto& b) { return a.i_r0 > b.i_r0; });
  out.rows.front().selected = true;
  return out;
}

}  // namespace resaple

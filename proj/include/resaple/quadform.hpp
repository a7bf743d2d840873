#pragma once

#include "resaple/residual_space.hpp"

#include <Eigen/Dense>

#include <span>

namespace resaple {

/// Eigenvalues of C_t = A_r - t B_r, sorted descending.
struct QuadFormSpectrum {
  Eigen::VectorXd eigenvalues;
  double t = 0.0;
};

QuadFormSpectrum test_spectrum(const ResidualSpace& s, double t);

struct TailProbability {
  double probability = 0.0;
  /// Estimated absolute error (quadrature + truncation + extrapolation).
  double error_estimate = 0.0;
  /// False when the error estimate exceeds the 1e-6 accuracy target.
  bool accurate = true;
};

/// P(sum_j lambda_j chi2_1 >= x) by Imhof's characteristic-function
/// inversion. Weights with |lambda| < 1e-12 max|lambda| are dropped.
TailProbability imhof_tail(std::span<const double> weights, double x);

struct RayleighMoments {
  double mean = 0.0;
  double variance = 0.0;
};

/// Mean and variance of g'Sg / g'g for g ~ N(0, I_r), given the spectrum of S.
RayleighMoments rayleigh_moments(std::span<const double> eigenvalues);

}  // namespace resaple

#pragma once

#include "resaple/estimators.hpp"
#include "resaple/residual_space.hpp"
#include "resaple/weights.hpp"

#include <Eigen/Dense>

#include <cstdint>
#include <optional>
#include <string>

namespace resaple {

enum class Side { greater, less, two_sided };
std::string to_string(Side s);
Side parse_side(const std::string& s);

enum class PermutationScheme { coordinate, freedman_lane };
std::string to_string(PermutationScheme s);
PermutationScheme parse_scheme(const std::string& s);

enum class TestMethod { exact, perm_coordinate, perm_freedman_lane, z };
std::string to_string(TestMethod m);

struct TestResult {
  double statistic = 0.0;
  double p_value = 1.0;
  TestMethod method = TestMethod::exact;
  Side side = Side::greater;
  std::optional<int> permutations;
  std::optional<std::uint64_t> seed;
  std::optional<double> min_attainable_p;
  /// Both one-sided tails, kept so callers can check coherence.
  double p_greater = 1.0;
  double p_less = 1.0;
  /// Permutation statistics equal to the observed one (within 1e-12 relative).
  std::optional<int> ties;
  /// Exact test only: false when the Imhof error estimate missed its target.
  bool accurate = true;
};

/// Gaussian-null test of rho = 0 using the exact law of RESAPLE:
/// P(rho_hat >= t) = P(e'(A_r - t B_r)e >= 0).
TestResult exact_test(const ResidualSpace& s, const Eigen::VectorXd& e, Side side = Side::greater);

/// Normal calibration of sqrt(I_r(0)) * rho_hat.
TestResult z_test(const ResidualSpace& s, const Eigen::VectorXd& e, Side side = Side::greater);

struct PermutationOptions {
  PermutationScheme scheme = PermutationScheme::freedman_lane;
  int permutations = 199;
  std::uint64_t seed = 0;
  Side side = Side::greater;
  /// Statistic recomputed on each permuted residual vector.
  Estimator statistic = Estimator::resaple;
  /// 0 defers to RESAPLE_THREADS, then hardware concurrency.
  int threads = 0;
};

/// Permutation test on precomputed residual-space state. `z` is the raw
/// response; only its OLS residuals are used.
TestResult permutation_test(const ResidualStatistics& stats, const Eigen::VectorXd& z,
                            const PermutationOptions& opt);

TestResult permutation_test(const Eigen::VectorXd& z, const DesignMatrix& x, const WeightMatrix& w,
                            const PermutationOptions& opt);

struct LocalTestResult {
  Eigen::VectorXd c;
  Eigen::VectorXd s;
  Eigen::VectorXd p_value;
  Eigen::VectorXd p_adjusted;
  double rho_hat = 0.0;
  int permutations = 0;
  std::uint64_t seed = 0;
  double fdr_q = 0.05;
  /// Units with p_adjusted <= fdr_q.
  std::vector<bool> significant;
};

/// Per-unit contributions with two-sided coordinate-permutation p-values and
/// Benjamini-Hochberg adjustment.
LocalTestResult local_tests(const ResidualSpace& s, const Eigen::VectorXd& e, int permutations,
                            std::uint64_t seed, double fdr_q = 0.05, int threads = 0);

/// Benjamini-Hochberg step-up adjusted p-values, capped at 1.
Eigen::VectorXd benjamini_hochberg(const Eigen::VectorXd& p);

}  // namespace resaple

#include "oracles.hpp"

#include "resaple/error.hpp"
#include "resaple/estimators.hpp"
#include "resaple/quadform.hpp"

#include <doctest.h>

#include <cmath>

using namespace resaple;
using Eigen::MatrixXd;
using Eigen::VectorXd;

namespace {

double imhof(std::vector<double> w, double x) { return imhof_tail(w, x).probability; }

/// Monte Carlo estimate of P(sum w_j chi2_1 >= x).
double mc_tail(const std::vector<double>& w, double x, int draws, std::mt19937_64& rng) {
  std::normal_distribution<double> nd;
  int hits = 0;
  for (int k = 0; k < draws; ++k) {
    double q = 0;
    for (double l : w) {
      const double g = nd(rng);
      q += l * g * g;
    }
    if (q >= x) ++hits;
  }
  return static_cast<double>(hits) / draws;
}

}  // namespace

TEST_CASE("Imhof closed forms") {
  CHECK(std::abs(imhof({1, 1}, 2.0) - std::exp(-1.0)) < 1e-6);
  CHECK(std::abs(imhof({1}, 1.0) - std::erfc(1.0 / std::sqrt(2.0))) < 1e-6);
  CHECK(std::abs(imhof({3, 3}, 1.5) - std::exp(-0.25)) < 1e-6);
  // chi2_10 tail at 10 (regularised upper gamma Q(5, 5)).
  const double q55 = std::exp(-5.0) * (1 + 5 + 12.5 + 125.0 / 6 + 625.0 / 24);
  CHECK(std::abs(imhof(std::vector<double>(10, 1.0), 10.0) - q55) < 1e-6);
  // Symmetric two-term difference is symmetric about 0.
  CHECK(std::abs(imhof({-1, 1}, 0.0) - 0.5) < 1e-6);
  CHECK(imhof({1, 2}, 0.0) == 1.0);
  CHECK(imhof({-1, -2}, 0.0) == 0.0);
  CHECK_THROWS_AS(imhof_tail(std::vector<double>{0.0, 0.0}, 1.0), Error);
}

TEST_CASE("Imhof against Monte Carlo") {
  std::mt19937_64 rng(101);
  CHECK(std::abs(imhof({2, 1, -1}, 0.5) - mc_tail({2, 1, -1}, 0.5, 1000000, rng)) < 0.002);
  std::uniform_real_distribution<double> u(-2, 2);
  for (int rep = 0; rep < 4; ++rep) {
    std::vector<double> w(2 + rep);
    for (double& l : w) l = u(rng);
    for (int t = 0; t < 5; ++t) {
      const double x = u(rng);
      const auto tail = imhof_tail(w, x);
      CHECK(tail.accurate);
      CHECK(std::abs(tail.probability - mc_tail(w, x, 200000, rng)) < 0.005);
    }
  }
}

TEST_CASE("Imhof tail is non-increasing in x") {
  const std::vector<double> w{1.5, 0.7, -0.4, -1.1, 0.2};
  double prev = 1.0;
  for (double x = -6; x <= 8; x += 0.25) {
    const double p = imhof(w, x);
    CHECK(p <= prev + 1e-9);
    prev = p;
  }
}

TEST_CASE("test spectrum") {
  const auto w = row_standardize(build_lattice(2, 3, LatticeScheme::queen));
  const auto s = build_residual_space(DesignMatrix::intercept(6), w);
  const auto spec0 = test_spectrum(s, 0.0);
  CHECK(std::abs(spec0.eigenvalues.sum()) < 1e-12);
  for (Eigen::Index i = 1; i < spec0.eigenvalues.size(); ++i) {
    CHECK(spec0.eigenvalues(i - 1) >= spec0.eigenvalues(i));
  }
  CHECK(test_spectrum(s, 1e6).eigenvalues.maxCoeff() < 0.0);

  const auto d = oracle::dense_space(s.h(), w.matrix());
  const double t = 0.37;
  Eigen::EigenSolver<MatrixXd> es(d.a - t * d.b);  // general solver as the oracle
  std::vector<double> ev;
  for (Eigen::Index i = 0; i < es.eigenvalues().size(); ++i) ev.push_back(es.eigenvalues()(i).real());
  std::sort(ev.rbegin(), ev.rend());
  const auto spec = test_spectrum(s, t);
  for (std::size_t i = 0; i < ev.size(); ++i) CHECK(std::abs(spec.eigenvalues(i) - ev[i]) < 1e-9);
}

TEST_CASE("exact law of RESAPLE matches Monte Carlo") {
  std::mt19937_64 rng(103);
  const auto w = row_standardize(build_lattice(6, 6, LatticeScheme::queen));
  const DesignMatrix x(oracle::random_design(36, 3, rng));
  const auto s = build_residual_space(x, w);
  const int draws = 100000;
  std::vector<double> rho(draws);
  for (int k = 0; k < draws; ++k) rho[k] = resaple::resaple(s, oracle::random_vector(s.r(), rng)).rho_hat;
  for (double t : {-0.3, -0.1, 0.0, 0.1, 0.25}) {
    const auto spec = test_spectrum(s, t);
    const double p = imhof_tail(std::vector<double>(spec.eigenvalues.data(),
                                                    spec.eigenvalues.data() + spec.eigenvalues.size()),
                                0.0)
                         .probability;
    const double mc = std::count_if(rho.begin(), rho.end(), [&](double v) { return v >= t; }) /
                      static_cast<double>(draws);
    CHECK(std::abs(p - mc) < 0.005);
  }
}

TEST_CASE("Rayleigh moments") {
  const auto flat = rayleigh_moments(std::vector<double>(5, 2.5));
  CHECK(flat.mean == 2.5);
  CHECK(flat.variance == 0.0);

  std::vector<double> e1(10, 0.0);
  e1[0] = 1.0;
  const auto m1 = rayleigh_moments(e1);
  CHECK(m1.mean == doctest::Approx(0.1).epsilon(1e-14));
  CHECK(m1.variance == doctest::Approx(0.015).epsilon(1e-14));

  const auto m3 = rayleigh_moments(std::vector<double>{1, -1, 0});
  CHECK(std::abs(m3.mean) < 1e-15);
  CHECK(m3.variance == doctest::Approx(4.0 / 15.0).epsilon(1e-14));

  CHECK_THROWS_AS(rayleigh_moments(std::vector<double>{1, 2}), Error);

  // Monte Carlo cross-check of the r = 10 case (within 3%).
  std::mt19937_64 rng(105);
  std::normal_distribution<double> nd;
  const int draws = 1000000;
  double s1 = 0, s2 = 0;
  for (int k = 0; k < draws; ++k) {
    double top = 0, all = 0;
    for (int j = 0; j < 10; ++j) {
      const double g = nd(rng);
      all += g * g;
      if (j == 0) top = g * g;
    }
    const double t = top / all;
    s1 += t;
    s2 += t * t;
  }
  const double mean = s1 / draws;
  const double var = s2 / draws - mean * mean;
  CHECK(std::abs(mean - 0.1) < 0.03 * 0.1);
  CHECK(std::abs(var - 0.015) < 0.03 * 0.015);
}

#include "resaple/inference.hpp"

#include "resaple/error.hpp"
#include "resaple/esda.hpp"
#include "resaple/parallel.hpp"
#include "resaple/quadform.hpp"
#include "resaple/random.hpp"

#include <boost/math/distributions/normal.hpp>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <vector>

namespace resaple {

std::string to_string(Side s) {
  switch (s) {
    case Side::greater: return "greater";
    case Side::less: return "less";
    case Side::two_sided: return "two_sided";
  }
  return "?";
}

Side parse_side(const std::string& s) {
  if (s == "greater") return Side::greater;
  if (s == "less") return Side::less;
  if (s == "two_sided" || s == "two-sided") return Side::two_sided;
  throw Error(ErrorKind::domain, "unknown side '" + s + "' (expected greater, less, two_sided)");
}

std::string to_string(PermutationScheme s) {
  return s == PermutationScheme::coordinate ? "coordinate" : "freedman_lane";
}

PermutationScheme parse_scheme(const std::string& s) {
  if (s == "coordinate") return PermutationScheme::coordinate;
  if (s == "freedman_lane" || s == "freedman-lane") return PermutationScheme::freedman_lane;
  throw Error(ErrorKind::domain,
              "unknown permutation scheme '" + s + "' (expected coordinate, freedman_lane)");
}

std::string to_string(TestMethod m) {
  switch (m) {
    case TestMethod::exact: return "exact";
    case TestMethod::perm_coordinate: return "perm_coordinate";
    case TestMethod::perm_freedman_lane: return "perm_freedman_lane";
    case TestMethod::z: return "z";
  }
  return "?";
}

namespace {

double pick_side(Side side, double p_greater, double p_less) {
  switch (side) {
    case Side::greater: return p_greater;
    case Side::less: return p_less;
    case Side::two_sided: return std::min(1.0, 2.0 * std::min(p_greater, p_less));
  }
  return 1.0;
}

bool is_tie(double a, double b) {
  return std::abs(a - b) <= 1e-12 * std::max(std::abs(a), std::abs(b));
}

void require_permutations(int l) {
  if (l < 19) {
    throw Error(ErrorKind::domain,
                "at least 19 permutations are required (got " + std::to_string(l) + ")");
  }
}

}  // namespace

TestResult exact_test(const ResidualSpace& s, const Eigen::VectorXd& e, Side side) {
  const double t_obs = resaple(s, e).rho_hat;
  const QuadFormSpectrum spec = test_spectrum(s, t_obs);
  const TailProbability tail = imhof_tail(
      std::span<const double>(spec.eigenvalues.data(), spec.eigenvalues.size()), 0.0);
  TestResult out;
  out.statistic = t_obs;
  out.method = TestMethod::exact;
  out.side = side;
  out.p_greater = tail.probability;
  out.p_less = 1.0 - tail.probability;
  out.p_value = pick_side(side, out.p_greater, out.p_less);
  out.accurate = tail.accurate;
  return out;
}

TestResult z_test(const ResidualSpace& s, const Eigen::VectorXd& e, Side side) {
  const double rho = resaple(s, e).rho_hat;
  const double z = std::sqrt(s.i_r0()) * rho;
  const boost::math::normal_distribution<double> nd;
  TestResult out;
  out.statistic = z;
  out.method = TestMethod::z;
  out.side = side;
  out.p_greater = boost::math::cdf(boost::math::complement(nd, z));
  out.p_less = boost::math::cdf(nd, z);
  out.p_value = pick_side(side, out.p_greater, out.p_less);
  return out;
}

TestResult permutation_test(const ResidualStatistics& stats, const Eigen::VectorXd& z,
                            const PermutationOptions& opt) {
  require_permutations(opt.permutations);
  if (opt.statistic == Estimator::reml) {
    throw Error(ErrorKind::domain, "permutation tests support one-step statistics only");
  }
  const ResidualSpace& s = stats.space();
  if (z.size() != s.n()) {
    throw Error(ErrorKind::length_mismatch, "response has length " + std::to_string(z.size()) +
                                                ", expected " + std::to_string(s.n()));
  }
  const Eigen::MatrixXd& h = s.h();
  const Eigen::VectorXd e = h.transpose() * z;
  const Eigen::VectorXd resid = h * e;

  auto statistic_of = [&](const Eigen::VectorXd& contrast) {
    if (opt.statistic == Estimator::resaple) return resaple(s, contrast).rho_hat;
    return stats.evaluate(opt.statistic, h * contrast);
  };

  const double t_obs = statistic_of(e);
  const int l = opt.permutations;
  std::vector<double> t_perm(static_cast<std::size_t>(l));
  parallel_for(t_perm.size(), opt.threads, [&](std::size_t k) {
    Rng rng(derive_seed(opt.seed, {static_cast<std::uint64_t>(k)}));
    if (opt.scheme == PermutationScheme::coordinate) {
      Eigen::VectorXd ep = e;
      shuffle_in_place(ep, rng);
      t_perm[k] = statistic_of(ep);
    } else {
      // Pseudo-response z* = Pz + Pi r; its contrasts are H'(Pi r).
      Eigen::VectorXd rp = resid;
      shuffle_in_place(rp, rng);
      t_perm[k] = statistic_of(h.transpose() * rp);
    }
  });

  int ge = 0;
  int le = 0;
  int ties = 0;
  for (double t : t_perm) {
    if (is_tie(t, t_obs)) {
      ++ties;
      ++ge;
      ++le;
    } else if (t > t_obs) {
      ++ge;
    } else {
      ++le;
    }
  }
  const double denom = static_cast<double>(l + 1);
  TestResult out;
  out.statistic = t_obs;
  out.method = opt.scheme == PermutationScheme::coordinate ? TestMethod::perm_coordinate
                                                           : TestMethod::perm_freedman_lane;
  out.side = opt.side;
  out.permutations = l;
  out.seed = opt.seed;
  out.min_attainable_p = 1.0 / denom;
  out.p_greater = (1.0 + ge) / denom;
  out.p_less = (1.0 + le) / denom;
  out.ties = ties;
  out.p_value = pick_side(opt.side, out.p_greater, out.p_less);
  return out;
}

TestResult permutation_test(const Eigen::VectorXd& z, const DesignMatrix& x, const WeightMatrix& w,
                            const PermutationOptions& opt) {
  const ResidualSpace s = build_residual_space(x, w);
  const ResidualStatistics stats(x, w, s);
  return permutation_test(stats, z, opt);
}

Eigen::VectorXd benjamini_hochberg(const Eigen::VectorXd& p) {
  const Eigen::Index m = p.size();
  std::vector<Eigen::Index> order(static_cast<std::size_t>(m));
  std::iota(order.begin(), order.end(), Eigen::Index{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](Eigen::Index a, Eigen::Index b) { return p(a) < p(b); });
  Eigen::VectorXd adj(m);
  double running = 1.0;
  for (Eigen::Index rank = m; rank >= 1; --rank) {
    const Eigen::Index i = order[static_cast<std::size_t>(rank - 1)];
    running = std::min(running, p(i) * static_cast<double>(m) / static_cast<double>(rank));
    adj(i) = running;
  }
  return adj;
}

LocalTestResult local_tests(const ResidualSpace& s, const Eigen::VectorXd& e, int permutations,
                            std::uint64_t seed, double fdr_q, int threads) {
  require_permutations(permutations);
  if (!(fdr_q > 0.0 && fdr_q < 1.0)) throw Error(ErrorKind::domain, "fdr_q must lie in (0, 1)");
  const Whitening wh = whiten(s);
  const ScatterData obs = scatter_coordinates(s, wh, e);
  const int n = s.n();

  // C_i(e) = (Gx e)_i (Gy e)_i.
  const Eigen::MatrixXd gx = s.h() * wh.sqrt_b;
  const Eigen::MatrixXd gy = s.h() * (wh.inv_sqrt_b * s.a_r());
  Eigen::MatrixXd c_perm(n, permutations);
  parallel_for(static_cast<std::size_t>(permutations), threads, [&](std::size_t k) {
    Rng rng(derive_seed(seed, {static_cast<std::uint64_t>(k)}));
    Eigen::VectorXd ep = e;
    shuffle_in_place(ep, rng);
    c_perm.col(static_cast<Eigen::Index>(k)) = (gx * ep).cwiseProduct(gy * ep);
  });

  LocalTestResult out;
  out.c.resize(n);
  out.s.resize(n);
  out.p_value.resize(n);
  out.rho_hat = obs.rho_hat;
  out.permutations = permutations;
  out.seed = seed;
  out.fdr_q = fdr_q;
  const double denom = static_cast<double>(permutations + 1);
  for (int i = 0; i < n; ++i) {
    const double ci = obs.points[static_cast<std::size_t>(i)].c_i;
    out.c(i) = ci;
    out.s(i) = obs.points[static_cast<std::size_t>(i)].s_i;
    int ge = 0;
    int le = 0;
    for (int k = 0; k < permutations; ++k) {
      const double t = c_perm(i, k);
      if (is_tie(t, ci)) {
        ++ge;
        ++le;
      } else if (t > ci) {
        ++ge;
      } else {
        ++le;
      }
    }
    out.p_value(i) = pick_side(Side::two_sided, (1.0 + ge) / denom, (1.0 + le) / denom);
  }
  out.p_adjusted = benjamini_hochberg(out.p_value);
  out.significant.resize(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) out.significant[static_cast<std::size_t>(i)] = out.p_adjusted(i) <= fdr_q;
  return out;
}

}  // namespace resaple

#include "resaple/quadform.hpp"

#include "resaple/error.hpp"

#include <boost/math/constants/constants.hpp>
#include <boost/math/quadrature/gauss_kronrod.hpp>

#include <algorithm>
#include <cmath>
#include <vector>

namespace resaple {

namespace {

using boost::math::constants::pi;

constexpr double drop_ratio = 1e-12;
constexpr double truncation_target = 1e-9;
constexpr double quad_tolerance = 1e-11;
constexpr double accuracy_target = 1e-6;
constexpr double max_direct_half_periods = 4000.0;
constexpr int max_extrapolated_chunks = 4000;

/// Wynn's epsilon algorithm on a sequence of partial sums. Returns the last
/// even-column estimate and the gap to the previous one.
std::pair<double, double> wynn_epsilon(const std::vector<double>& s) {
  const std::size_t n = s.size();
  if (n < 3) return {s.back(), std::abs(s.back() - (n > 1 ? s[n - 2] : 0.0))};
  std::vector<double> prev(n, 0.0);
  std::vector<double> cur(s);
  double best = s.back();
  double prev_best = n > 1 ? s[n - 2] : s.back();
  for (std::size_t col = 1; col < n; ++col) {
    std::vector<double> next(n - col);
    bool ok = true;
    for (std::size_t i = 0; i + 1 < cur.size(); ++i) {
      const double diff = cur[i + 1] - cur[i];
      if (diff == 0.0) {
        ok = false;
        break;
      }
      next[i] = prev[i + 1] + 1.0 / diff;
    }
    if (!ok || next.empty()) break;
    if (col % 2 == 0) {
      prev_best = next.size() > 1 ? next[next.size() - 2] : best;
      best = next.back();
    }
    prev.assign(cur.begin(), cur.end());
    cur = std::move(next);
  }
  return {best, std::abs(best - prev_best)};
}

class ImhofIntegrand {
 public:
  ImhofIntegrand(std::vector<double> lambda, double x) : lambda_(std::move(lambda)), x_(x) {}

  double operator()(double u) const {
    if (u <= 0.0) {
      double s = 0.0;
      for (double l : lambda_) s += l;
      return 0.5 * (s - x_);
    }
    double theta = -0.5 * x_ * u;
    double log_rho = 0.0;
    for (double l : lambda_) {
      theta += 0.5 * std::atan(l * u);
      log_rho += 0.25 * std::log1p(l * l * u * u);
    }
    return std::sin(theta) / (u * std::exp(log_rho));
  }

 private:
  std::vector<double> lambda_;
  double x_;
};

struct Piece {
  double value = 0.0;
  double error = 0.0;
};

Piece integrate_piece(const ImhofIntegrand& f, double a, double b) {
  double err = 0.0;
  double l1 = 0.0;
  const double v = boost::math::quadrature::gauss_kronrod<double, 31>::integrate(
      f, a, b, 15, quad_tolerance, &err, &l1);
  return {v, err};
}

}  // namespace

QuadFormSpectrum test_spectrum(const ResidualSpace& s, double t) {
  Eigen::MatrixXd c = s.a_r() - t * s.b_r();
  const double scale = std::max(1.0, c.cwiseAbs().maxCoeff());
  if ((c - c.transpose()).cwiseAbs().maxCoeff() > 1e-10 * scale) {
    throw Error(ErrorKind::consistency, "test matrix A_r - t B_r is not symmetric");
  }
  c = 0.5 * (c + c.transpose());
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(c, Eigen::EigenvaluesOnly);
  QuadFormSpectrum out;
  out.t = t;
  out.eigenvalues = es.eigenvalues().reverse();
  return out;
}

TailProbability imhof_tail(std::span<const double> weights, double x) {
  double lmax = 0.0;
  for (double l : weights) {
    if (!std::isfinite(l)) throw Error(ErrorKind::domain, "imhof: non-finite weight");
    lmax = std::max(lmax, std::abs(l));
  }
  if (!(lmax > 0.0)) throw Error(ErrorKind::domain, "imhof: all weights are zero");
  if (!std::isfinite(x)) throw Error(ErrorKind::domain, "imhof: non-finite threshold");

  // Rescale so that max |lambda| = 1; the event is unchanged.
  std::vector<double> lambda;
  bool any_pos = false;
  bool any_neg = false;
  for (double l : weights) {
    if (std::abs(l) < drop_ratio * lmax) continue;
    lambda.push_back(l / lmax);
    any_pos = any_pos || l > 0.0;
    any_neg = any_neg || l < 0.0;
  }
  const double xs = x / lmax;
  if (!any_neg && xs <= 0.0) return {1.0, 0.0, true};
  if (!any_pos && xs >= 0.0) return {0.0, 0.0, true};

  const double k = 0.5 * static_cast<double>(lambda.size());
  double sum_log_abs = 0.0;
  double lmin_abs = 1.0;
  for (double l : lambda) {
    sum_log_abs += std::log(std::abs(l));
    lmin_abs = std::min(lmin_abs, std::abs(l));
  }
  // Imhof's truncation bound: |tail beyond U| <= 1 / (pi k U^k prod |lambda|^{1/2}).
  auto truncation_bound = [&](double u) {
    return std::exp(-std::log(pi<double>() * k) - k * std::log(u) - 0.5 * sum_log_abs);
  };
  const double log_u =
      (-std::log(pi<double>() * k) - 0.5 * sum_log_abs - std::log(truncation_target)) / k;
  const double u_trunc = std::exp(std::min(log_u, 700.0));

  const ImhofIntegrand f(lambda, xs);
  const double half_period =
      xs != 0.0 ? 2.0 * pi<double>() / std::abs(xs) : std::numeric_limits<double>::infinity();

  double integral = 0.0;
  double error = 0.0;
  auto integrate_range = [&](double from, double to) {
    double a = from;
    while (a < to) {
      double b = a == 0.0 ? 1.0 : std::min(2.0 * a, a + half_period);
      b = std::min(b, to);
      const Piece p = integrate_piece(f, a, b);
      integral += p.value;
      error += p.error;
      a = b;
    }
  };

  const bool direct = xs == 0.0 || u_trunc / half_period <= max_direct_half_periods;
  if (direct) {
    integrate_range(0.0, u_trunc);
    error += truncation_bound(u_trunc);
  } else {
    // Many oscillations before the truncation point: integrate past the
    // transient, then sum half-period chunks and extrapolate.
    const double start = std::min(u_trunc, std::max(1.0, 50.0 / lmin_abs));
    if (start / half_period > 50.0 * max_direct_half_periods) {
      integrate_range(0.0, u_trunc);
      error += truncation_bound(u_trunc);
    } else {
      integrate_range(0.0, start);
      std::vector<double> partial;
      partial.reserve(max_extrapolated_chunks);
      double acc = 0.0;
      double a = start;
      double chunk_error = 0.0;
      double extrapolated = 0.0;
      double extrapolation_error = std::numeric_limits<double>::infinity();
      for (int i = 0; i < max_extrapolated_chunks; ++i) {
        const double b = a + half_period;
        const Piece p = integrate_piece(f, a, b);
        acc += p.value;
        chunk_error += p.error;
        partial.push_back(acc);
        a = b;
        if (a >= u_trunc) {
          extrapolated = acc;
          extrapolation_error = truncation_bound(a);
          break;
        }
        if (partial.size() >= 8 && partial.size() % 4 == 0) {
          const std::size_t keep = std::min<std::size_t>(partial.size(), 40);
          const std::vector<double> tail(partial.end() - static_cast<std::ptrdiff_t>(keep),
                                         partial.end());
          const auto [est, gap] = wynn_epsilon(tail);
          extrapolated = est;
          extrapolation_error = gap;
          if (gap < 1e-12) break;
        }
      }
      integral += extrapolated;
      error += chunk_error + extrapolation_error;
    }
  }

  TailProbability out;
  out.probability = std::clamp(0.5 + integral / pi<double>(), 0.0, 1.0);
  out.error_estimate = error / pi<double>();
  out.accurate = out.error_estimate <= accuracy_target;
  return out;
}

RayleighMoments rayleigh_moments(std::span<const double> eigenvalues) {
  const std::size_t r = eigenvalues.size();
  if (r < 3) throw Error(ErrorKind::domain, "Rayleigh moments need r >= 3");
  double mean = 0.0;
  for (double l : eigenvalues) mean += l;
  mean /= static_cast<double>(r);
  double ss = 0.0;
  for (double l : eigenvalues) ss += (l - mean) * (l - mean);
  const double rd = static_cast<double>(r);
  return {mean, 2.0 / (rd * (rd + 2.0)) * ss};
}

}  // namespace resaple

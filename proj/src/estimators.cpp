#include "resaple/estimators.hpp"

#include "resaple/error.hpp"

#include <boost/math/tools/minima.hpp>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>

namespace resaple {

namespace {

constexpr double degenerate_ratio = 1e-20;

void require_length(const Eigen::VectorXd& v, int n, const char* what) {
  if (v.size() != n) {
    throw Error(ErrorKind::length_mismatch, std::string(what) + " has length " +
                                                std::to_string(v.size()) + ", expected " +
                                                std::to_string(n));
  }
}

void require_nonzero_denominator(double den, double scale, const char* method) {
  if (!(scale > 0.0) || !(den > degenerate_ratio * scale)) {
    throw Error(ErrorKind::degenerate,
                std::string(method) + ": denominator vanishes (degenerate input)");
  }
}

Eigen::MatrixXd symmetric_part(const Eigen::MatrixXd& w) { return 0.5 * (w + w.transpose()); }

double nu_n(const Eigen::MatrixXd& w) {
  return w.cwiseProduct(w.transpose()).sum() / static_cast<double>(w.rows());
}

double log_abs_det_lu(const Eigen::PartialPivLU<Eigen::MatrixXd>& lu) {
  const auto diag = lu.matrixLU().diagonal().cwiseAbs();
  const double dmax = diag.maxCoeff();
  if (!(dmax > 0.0) || diag.minCoeff() <= 1e-14 * dmax) {
    throw Error(ErrorKind::singular, "I - rho W is singular");
  }
  return diag.array().log().sum();
}

Eigen::MatrixXd r_matrix(const Eigen::MatrixXd& w, double rho) {
  Eigen::MatrixXd r = -rho * w;
  r.diagonal().array() += 1.0;
  return r;
}

}  // namespace

std::string to_string(Estimator m) {
  switch (m) {
    case Estimator::moran: return "moran";
    case Estimator::aple: return "aple";
    case Estimator::maple: return "maple";
    case Estimator::resaple: return "resaple";
    case Estimator::reml: return "reml";
  }
  return "unknown";
}

Estimator parse_estimator(const std::string& s) {
  if (s == "moran") return Estimator::moran;
  if (s == "aple") return Estimator::aple;
  if (s == "maple") return Estimator::maple;
  if (s == "resaple") return Estimator::resaple;
  if (s == "reml") return Estimator::reml;
  throw Error(ErrorKind::io, "unknown estimator '" + s + "'");
}

EstimateResult moran_residual(const Eigen::VectorXd& z, const DesignMatrix& x,
                              const WeightMatrix& w) {
  require_length(z, x.n(), "response");
  if (w.n() != x.n()) throw Error(ErrorKind::length_mismatch, "weights and design disagree on n");
  const Eigen::VectorXd res = x.residuals(z);
  const double rr = res.squaredNorm();
  if (!(rr > 1e-24 * z.squaredNorm()) || rr == 0.0) {
    throw Error(ErrorKind::degenerate, "moran: OLS residuals vanish");
  }
  const double s0 = w.matrix().sum();
  const double scale = static_cast<double>(w.n()) / s0;
  EstimateResult out;
  out.method = Estimator::moran;
  out.numerator = scale * res.dot(w.matrix() * res);
  out.denominator = rr;
  out.rho_hat = out.numerator / out.denominator;
  return out;
}

EstimateResult aple(const Eigen::VectorXd& z, const WeightMatrix& w) {
  require_length(z, w.n(), "response");
  const Eigen::MatrixXd& wm = w.matrix();
  const Eigen::VectorXd wz = wm * z;
  EstimateResult out;
  out.method = Estimator::aple;
  out.numerator = z.dot(wz);  // z'Kz = z'Wz
  out.denominator = wz.squaredNorm() + nu_n(wm) * z.squaredNorm();
  require_nonzero_denominator(out.denominator, z.squaredNorm(), "aple");
  out.rho_hat = out.numerator / out.denominator;
  return out;
}

EstimateResult maple(const Eigen::VectorXd& z, const DesignMatrix& x, const WeightMatrix& w) {
  require_length(z, x.n(), "response");
  if (w.n() != x.n()) throw Error(ErrorKind::length_mismatch, "weights and design disagree on n");
  const Eigen::MatrixXd& wm = w.matrix();
  const Eigen::MatrixXd m = x.residual_projector();
  const Eigen::MatrixXd p = Eigen::MatrixXd::Identity(x.n(), x.n()) - m;
  const Eigen::MatrixXd wtw = wm.transpose() * wm;
  const Eigen::MatrixXd den_op = m * wtw * m - m * (wm.transpose() + wm) * p * wtw * m +
                                 nu_n(wm) * m;
  EstimateResult out;
  out.method = Estimator::maple;
  const Eigen::VectorXd mz = m * z;
  if (!(mz.squaredNorm() > 1e-24 * z.squaredNorm())) {
    throw Error(ErrorKind::degenerate, "maple: residuals vanish (response in the column space of X)");
  }
  out.numerator = mz.dot(symmetric_part(wm) * mz);
  out.denominator = z.dot(den_op * z);
  require_nonzero_denominator(std::abs(out.denominator), z.squaredNorm(), "maple");
  out.rho_hat = out.numerator / out.denominator;
  return out;
}

EstimateResult resaple(const ResidualSpace& s, const Eigen::VectorXd& e) {
  require_length(e, s.r(), "contrast vector");
  EstimateResult out;
  out.method = Estimator::resaple;
  out.numerator = e.dot(s.a_r() * e);
  out.denominator = e.dot(s.b_r() * e);
  require_nonzero_denominator(out.denominator, e.squaredNorm(), "resaple");
  out.rho_hat = out.numerator / out.denominator;
  return out;
}

double restricted_score(const ResidualSpace& s, const Eigen::VectorXd& e) {
  require_length(e, s.r(), "contrast vector");
  const double ee = e.squaredNorm();
  if (!(ee > 0.0)) throw Error(ErrorKind::degenerate, "score: contrast vector is zero");
  return s.r() * e.dot(s.k_r() * e) / ee - s.tr_k_r();
}

double approximate_curvature(const ResidualSpace& s, const Eigen::VectorXd& e) {
  require_length(e, s.r(), "contrast vector");
  const double ee = e.squaredNorm();
  if (!(ee > 0.0)) throw Error(ErrorKind::degenerate, "curvature: contrast vector is zero");
  return -(s.r() / ee) * e.dot(s.b_r() * e);
}

double restricted_profile_loglik(const DesignMatrix& x, const WeightMatrix& w,
                                 const Eigen::VectorXd& z, double rho) {
  require_length(z, x.n(), "response");
  const ResidualSpace s = build_residual_space(x, w);
  const Eigen::VectorXd e = contrasts(s, z);
  const Eigen::PartialPivLU<Eigen::MatrixXd> lu(r_matrix(w.matrix(), rho).transpose());
  (void)log_abs_det_lu(lu);
  const Eigen::MatrixXd g = lu.solve(s.h());  // R^{-T} H
  const Eigen::MatrixXd sigma = g.transpose() * g;
  const Eigen::LLT<Eigen::MatrixXd> llt(sigma);
  if (llt.info() != Eigen::Success) throw Error(ErrorKind::singular, "Sigma_r(rho) not positive definite");
  const double logdet = 2.0 * llt.matrixL().toDenseMatrix().diagonal().array().log().sum();
  const double quad = llt.matrixL().solve(e).squaredNorm();
  if (!(quad > 0.0)) throw Error(ErrorKind::degenerate, "restricted likelihood: e = 0");
  const double r = s.r();
  return -0.5 * logdet - 0.5 * r * std::log(quad / r);
}

double restricted_profile_loglik_zform(const DesignMatrix& x, const WeightMatrix& w,
                                       const Eigen::VectorXd& z, double rho) {
  return RemlProblem(x, w).loglik(z, rho);
}

Interval default_reml_interval(const WeightMatrix& w) {
  if (w.normalization() == Normalization::row) return {};
  Eigen::EigenSolver<Eigen::MatrixXd> es(w.matrix(), false);
  const auto& ev = es.eigenvalues();
  double scale = 0.0;
  for (Eigen::Index i = 0; i < ev.size(); ++i) scale = std::max(scale, std::abs(ev(i)));
  if (!(scale > 0.0)) throw Error(ErrorKind::domain, "weight matrix has zero spectrum");
  double lmin = 0.0;
  double lmax = 0.0;
  for (Eigen::Index i = 0; i < ev.size(); ++i) {
    if (std::abs(ev(i).imag()) > 1e-10 * scale) continue;
    lmin = std::min(lmin, ev(i).real());
    lmax = std::max(lmax, ev(i).real());
  }
  Interval out;
  out.lo = lmin < -1e-12 * scale ? 0.999 / lmin : -0.999 / scale;
  out.hi = lmax > 1e-12 * scale ? 0.999 / lmax : 0.999 / scale;
  return out;
}

RemlProblem::RemlProblem(const DesignMatrix& x, const WeightMatrix& w,
                         std::optional<Interval> interval)
    : x_(x.matrix()), w_(w.matrix()), interval_(interval.value_or(default_reml_interval(w))) {
  if (w.n() != x.n()) throw Error(ErrorKind::length_mismatch, "weights and design disagree on n");
  if (!(interval_.lo < 0.0 && 0.0 < interval_.hi)) {
    throw Error(ErrorKind::domain, "REML interval must contain 0");
  }
  r_ = x.n() - x.p();
  wx_ = w_ * x_;
  // Fast log-determinant path: log|I - rho W| = sum log|1 - rho lambda| when
  // the spectrum is verified to be real.
  Eigen::EigenSolver<Eigen::MatrixXd> es(w_, false);
  const auto& ev = es.eigenvalues();
  const double scale = std::max(1.0, ev.cwiseAbs().maxCoeff());
  if (es.info() == Eigen::Success && ev.imag().cwiseAbs().maxCoeff() <= 1e-10 * scale) {
    eigenvalues_ = ev.real();
    eigen_path_ = true;
  }
}

double RemlProblem::log_det_r(double rho) const {
  if (eigen_path_) {
    double acc = 0.0;
    for (Eigen::Index i = 0; i < eigenvalues_.size(); ++i) {
      const double f = 1.0 - rho * eigenvalues_(i);
      if (std::abs(f) <= 1e-14) throw Error(ErrorKind::singular, "I - rho W is singular");
      acc += std::log(std::abs(f));
    }
    return acc;
  }
  const Eigen::PartialPivLU<Eigen::MatrixXd> lu(r_matrix(w_, rho));
  return log_abs_det_lu(lu);
}

std::pair<double, double> RemlProblem::quad_and_logdet_xrx(const Eigen::VectorXd& z,
                                                            double rho) const {
  const Eigen::VectorXd rz = z - rho * (w_ * z);
  if (x_.cols() == 0) return {rz.squaredNorm(), 0.0};
  const Eigen::MatrixXd rx = x_ - rho * wx_;
  const Eigen::MatrixXd xrrx = rx.transpose() * rx;
  const Eigen::LLT<Eigen::MatrixXd> llt(xrrx);
  if (llt.info() != Eigen::Success) throw Error(ErrorKind::singular, "X'R'RX is singular");
  const Eigen::VectorXd b = rx.transpose() * rz;
  const double quad = rz.squaredNorm() - llt.matrixL().solve(b).squaredNorm();
  const double logdet = 2.0 * llt.matrixL().toDenseMatrix().diagonal().array().log().sum();
  return {quad, logdet};
}

double RemlProblem::loglik(const Eigen::VectorXd& z, double rho) const {
  require_length(z, static_cast<int>(x_.rows()), "response");
  const auto [quad, logdet_xrx] = quad_and_logdet_xrx(z, rho);
  if (!(quad > 0.0)) throw Error(ErrorKind::degenerate, "restricted likelihood: residuals vanish");
  return log_det_r(rho) - 0.5 * logdet_xrx - 0.5 * r_ * std::log(quad / r_);
}

double RemlProblem::sigma2(const Eigen::VectorXd& z, double rho) const {
  return quad_and_logdet_xrx(z, rho).first / r_;
}

EstimateResult RemlProblem::fit(const Eigen::VectorXd& z) const {
  require_length(z, static_cast<int>(x_.rows()), "response");
  const double lo = interval_.lo;
  const double hi = interval_.hi;
  std::vector<double> grid(grid_points);
  std::vector<double> vals(grid_points);
  for (int i = 0; i < grid_points; ++i) {
    grid[i] = lo + (hi - lo) * i / (grid_points - 1);
    double v = std::numeric_limits<double>::quiet_NaN();
    try {
      v = loglik(z, grid[i]);
    } catch (const Error& err) {
      if (err.kind() == ErrorKind::degenerate) throw;
    }
    if (!std::isfinite(v)) {
      throw Error(ErrorKind::optimization,
                  "restricted likelihood is not finite at rho = " + std::to_string(grid[i]));
    }
    vals[i] = v;
  }
  const auto best = static_cast<int>(std::max_element(vals.begin(), vals.end()) - vals.begin());
  const double a = grid[std::max(best - 1, 0)];
  const double b = grid[std::min(best + 1, grid_points - 1)];
  auto neg = [&](double rho) { return -loglik(z, rho); };
  std::uintmax_t iters = 200;
  const auto [rho_hat, neg_ll] = boost::math::tools::brent_find_minima(neg, a, b, 26, iters);

  EstimateResult out;
  out.method = Estimator::reml;
  out.rho_hat = rho_hat;
  out.loglik = -neg_ll;
  if (vals[best] > *out.loglik) {
    out.rho_hat = grid[best];
    out.loglik = vals[best];
  }
  out.sigma2_hat = sigma2(z, out.rho_hat);
  out.boundary = (best == 0 || best == grid_points - 1) &&
                 (out.rho_hat - lo < 1e-6 || hi - out.rho_hat < 1e-6);
  return out;
}

EstimateResult reml_fit(const DesignMatrix& x, const WeightMatrix& w, const Eigen::VectorXd& z,
                        std::optional<Interval> interval) {
  return RemlProblem(x, w, interval).fit(z);
}

ResidualStatistics::ResidualStatistics(const DesignMatrix& x, const WeightMatrix& w,
                                       const ResidualSpace& s)
    : space_(s) {
  if (w.n() != x.n() || s.n() != x.n()) {
    throw Error(ErrorKind::length_mismatch, "design, weights and residual space disagree on n");
  }
  const Eigen::MatrixXd& wm = w.matrix();
  const int n = x.n();
  k_ = symmetric_part(wm);
  const Eigen::MatrixXd wtw = wm.transpose() * wm;
  const double nu = nu_n(wm);
  aple_den_ = wtw;
  aple_den_.diagonal().array() += nu;
  // For resid = Mz the MAPLE denominator reduces to resid'(W'W - (W'+W)PW'W + nu I)resid.
  const Eigen::MatrixXd p = Eigen::MatrixXd::Identity(n, n) - x.residual_projector();
  maple_den_ = wtw - (wm.transpose() + wm) * p * wtw;
  maple_den_.diagonal().array() += nu;
  moran_scale_ = static_cast<double>(n) / wm.sum();
}

double ResidualStatistics::evaluate(Estimator m, const Eigen::VectorXd& resid) const {
  const double rr = resid.squaredNorm();
  switch (m) {
    case Estimator::moran: {
      if (!(rr > 0.0)) throw Error(ErrorKind::degenerate, "moran: residuals vanish");
      return moran_scale_ * resid.dot(k_ * resid) / rr;
    }
    case Estimator::aple: {
      const double den = resid.dot(aple_den_ * resid);
      require_nonzero_denominator(den, rr, "aple");
      return resid.dot(k_ * resid) / den;
    }
    case Estimator::maple: {
      const double den = resid.dot(maple_den_ * resid);
      require_nonzero_denominator(std::abs(den), rr, "maple");
      return resid.dot(k_ * resid) / den;
    }
    case Estimator::resaple: {
      const Eigen::VectorXd e = space_.h().transpose() * resid;
      return resaple(space_, e).rho_hat;
    }
    case Estimator::reml:
      break;
  }
  throw Error(ErrorKind::domain, "REML is not a closed-form residual statistic");
}

}  // namespace resaple

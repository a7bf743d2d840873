#include "resaple/residual_space.hpp"

#include "resaple/error.hpp"

#include <algorithm>
#include <cmath>

namespace resaple {

namespace {

bool close_rel(double a, double b, double tol) {
  return std::abs(a - b) <= tol * std::max(1.0, std::max(std::abs(a), std::abs(b)));
}

}  // namespace

DesignMatrix::DesignMatrix(Eigen::MatrixXd x, bool /*skip_checks*/) : x_(std::move(x)) {}

DesignMatrix::DesignMatrix(Eigen::MatrixXd x) : x_(std::move(x)) {
  if (x_.rows() < 1) {
    throw Error(ErrorKind::invalid_dimension, "design matrix has no rows");
  }
  if (x_.cols() >= x_.rows()) {
    throw Error(ErrorKind::invalid_dimension,
                "design has p = " + std::to_string(x_.cols()) + " >= n = " +
                    std::to_string(x_.rows()));
  }
  if (!x_.allFinite()) {
    throw Error(ErrorKind::invalid_dimension, "design matrix has non-finite entries");
  }
  if (x_.cols() > 0) {
    Eigen::JacobiSVD<Eigen::MatrixXd> svd(x_);
    const auto& sv = svd.singularValues();
    const double smax = sv(0);
    const double smin = sv(sv.size() - 1);
    if (!(smax > 0.0) || smin <= rank_tolerance * smax) {
      throw Error(ErrorKind::rank_deficient, "design matrix is rank deficient");
    }
  }
}

DesignMatrix DesignMatrix::empty(int n) {
  if (n < 1) throw Error(ErrorKind::invalid_dimension, "design needs n >= 1");
  return DesignMatrix(Eigen::MatrixXd(n, 0), true);
}

DesignMatrix DesignMatrix::intercept(int n) {
  return DesignMatrix(Eigen::MatrixXd::Ones(n, 1));
}

Eigen::MatrixXd DesignMatrix::residual_projector() const {
  const int nn = n();
  Eigen::MatrixXd m = Eigen::MatrixXd::Identity(nn, nn);
  if (p() == 0) return m;
  const Eigen::MatrixXd xtx = x_.transpose() * x_;
  const Eigen::MatrixXd coef = xtx.ldlt().solve(x_.transpose());
  m.noalias() -= x_ * coef;
  return m;
}

Eigen::VectorXd DesignMatrix::residuals(const Eigen::VectorXd& z) const {
  if (z.size() != n()) {
    throw Error(ErrorKind::length_mismatch, "response length does not match design rows");
  }
  if (p() == 0) return z;
  const Eigen::VectorXd beta = x_.colPivHouseholderQr().solve(z);
  return z - x_ * beta;
}

ResidualSpace::ResidualSpace(Eigen::MatrixXd h, const Eigen::MatrixXd& m,
                             const WeightMatrix& w)
    : h_(std::move(h)) {
  const Eigen::MatrixXd& wm = w.matrix();
  const int rr = r();
  if (rr < 1) throw Error(ErrorKind::invalid_dimension, "residual dimension must be >= 1");

  w_r_.noalias() = h_.transpose() * wm * h_;
  k_r_ = 0.5 * (w_r_ + w_r_.transpose());
  mu_r_ = k_r_.trace() / rr;
  tr_wtw_r_ = w_r_.squaredNorm();
  tr_w2_r_ = w_r_.cwiseProduct(w_r_.transpose()).sum();
  nu_r_ = tr_w2_r_ / rr;

  a_r_ = k_r_;
  a_r_.diagonal().array() -= mu_r_;

  const Eigen::MatrixXd wtw = w_r_.transpose() * w_r_;
  b_r_ = wtw;
  b_r_.diagonal().array() += nu_r_;
  b_r_ = 0.5 * (b_r_ + b_r_.transpose());
  double lambda_min = 0.0;
  if (nu_r_ > 0.0) {
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(b_r_, Eigen::EigenvaluesOnly);
    lambda_min = es.eigenvalues()(0);
  }
  if (nu_r_ <= 0.0 || lambda_min <= stabilization_floor) {
    stabilized_ = true;
    b_r_ = wtw;
    b_r_.diagonal().array() += tr_wtw_r_ / rr;
    b_r_ = 0.5 * (b_r_ + b_r_.transpose());
  }

  i_r0_ = 2.0 * k_r_.squaredNorm();
  const double alt = tr_wtw_r_ + tr_w2_r_;
  const Eigen::MatrixXd k = 0.5 * (wm + wm.transpose());
  const Eigen::MatrixXd mk = m * k;
  i_r0_basis_free_ = 2.0 * mk.cwiseProduct(mk.transpose()).sum();
  if (!close_rel(i_r0_, alt, 1e-10) || !close_rel(i_r0_, i_r0_basis_free_, 1e-10)) {
    throw Error(ErrorKind::consistency,
                "restricted information cross-check failed: 2Tr(K_r^2) = " +
                    std::to_string(i_r0_) + ", Tr(W_r'W_r)+Tr(W_r^2) = " +
                    std::to_string(alt) + ", 2Tr(MKMK) = " +
                    std::to_string(i_r0_basis_free_));
  }
}

ResidualSpace ResidualSpace::from_basis(Eigen::MatrixXd h, const WeightMatrix& w) {
  if (h.rows() != w.n()) {
    throw Error(ErrorKind::length_mismatch, "basis rows do not match weight matrix size");
  }
  const Eigen::MatrixXd gram = h.transpose() * h;
  if ((gram - Eigen::MatrixXd::Identity(h.cols(), h.cols())).cwiseAbs().maxCoeff() > 1e-10) {
    throw Error(ErrorKind::consistency, "basis columns are not orthonormal");
  }
  const Eigen::MatrixXd m = h * h.transpose();
  return ResidualSpace(std::move(h), m, w);
}

ResidualSpace build_residual_space(const DesignMatrix& x, const WeightMatrix& w) {
  const int n = x.n();
  const int p = x.p();
  if (w.n() != n) {
    throw Error(ErrorKind::length_mismatch,
                "design has " + std::to_string(n) + " rows but weights are " +
                    std::to_string(w.n()) + " x " + std::to_string(w.n()));
  }
  if (p >= n) throw Error(ErrorKind::invalid_dimension, "need p < n");

  Eigen::MatrixXd h;
  if (p == 0) {
    h = Eigen::MatrixXd::Identity(n, n);
  } else {
    Eigen::HouseholderQR<Eigen::MatrixXd> qr(x.matrix());
    Eigen::MatrixXd q = qr.householderQ() * Eigen::MatrixXd::Identity(n, n);
    h = q.rightCols(n - p);
  }
  return ResidualSpace(std::move(h), x.residual_projector(), w);
}

Eigen::VectorXd contrasts(const ResidualSpace& s, const Eigen::VectorXd& z) {
  if (z.size() != s.n()) {
    throw Error(ErrorKind::length_mismatch,
                "vector length " + std::to_string(z.size()) + " does not match n = " +
                    std::to_string(s.n()));
  }
  return s.h().transpose() * z;
}

double restricted_information(const ResidualSpace& s) { return s.i_r0(); }

}  // namespace resaple

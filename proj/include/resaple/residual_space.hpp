#pragma once

#include "resaple/weights.hpp"

#include <Eigen/Dense>

namespace resaple {

/// n x p fixed-effects design with full column rank and p < n. A design with
/// p = 0 (no covariates, not even an intercept) is allowed.
class DesignMatrix {
 public:
  /// Singular values below this fraction of the largest count as zero.
  static constexpr double rank_tolerance = 1e-10;

  explicit DesignMatrix(Eigen::MatrixXd x);

  static DesignMatrix empty(int n);
  static DesignMatrix intercept(int n);

  int n() const noexcept { return static_cast<int>(x_.rows()); }
  int p() const noexcept { return static_cast<int>(x_.cols()); }
  const Eigen::MatrixXd& matrix() const noexcept { return x_; }

  /// Orthogonal projector M = I - X (X'X)^{-1} X' formed from the normal
  /// equations (independent of the QR route used for the contrast basis).
  Eigen::MatrixXd residual_projector() const;
  /// OLS residuals Mz.
  Eigen::VectorXd residuals(const Eigen::VectorXd& z) const;

 private:
  DesignMatrix(Eigen::MatrixXd x, bool skip_checks);
  Eigen::MatrixXd x_;
};

/// Restricted residual space for a fixed (X, W): contrast basis H, the
/// residualised operators and the trace constants used by every
/// residual-space statistic. Immutable once built.
class ResidualSpace {
 public:
  /// Threshold on the smallest eigenvalue of W_r'W_r + nu_r I below which
  /// the stabilised denominator is used.
  static constexpr double stabilization_floor = 1e-12;

  int n() const noexcept { return static_cast<int>(h_.rows()); }
  int r() const noexcept { return static_cast<int>(h_.cols()); }
  int p() const noexcept { return n() - r(); }

  const Eigen::MatrixXd& h() const noexcept { return h_; }
  const Eigen::MatrixXd& w_r() const noexcept { return w_r_; }
  const Eigen::MatrixXd& k_r() const noexcept { return k_r_; }
  /// Numerator operator K_r - mu_r I.
  const Eigen::MatrixXd& a_r() const noexcept { return a_r_; }
  /// Denominator operator (stabilised when `stabilized()`).
  const Eigen::MatrixXd& b_r() const noexcept { return b_r_; }

  double mu_r() const noexcept { return mu_r_; }
  double nu_r() const noexcept { return nu_r_; }
  bool stabilized() const noexcept { return stabilized_; }
  double tr_k_r() const noexcept { return mu_r_ * r(); }
  double tr_wtw_r() const noexcept { return tr_wtw_r_; }
  double tr_w2_r() const noexcept { return tr_w2_r_; }
  /// Restricted null information 2 Tr(K_r^2).
  double i_r0() const noexcept { return i_r0_; }
  /// Basis-free form 2 Tr(MKMK), computed independently at build time.
  double i_r0_basis_free() const noexcept { return i_r0_basis_free_; }

  /// Build from an explicit orthonormal basis of Im(X)^perp. H'H = I is
  /// checked; callers are responsible for H'X = 0.
  static ResidualSpace from_basis(Eigen::MatrixXd h, const WeightMatrix& w);

 private:
  ResidualSpace(Eigen::MatrixXd h, const Eigen::MatrixXd& m, const WeightMatrix& w);

  Eigen::MatrixXd h_;
  Eigen::MatrixXd w_r_;
  Eigen::MatrixXd k_r_;
  Eigen::MatrixXd a_r_;
  Eigen::MatrixXd b_r_;
  double mu_r_ = 0.0;
  double nu_r_ = 0.0;
  double tr_wtw_r_ = 0.0;
  double tr_w2_r_ = 0.0;
  double i_r0_ = 0.0;
  double i_r0_basis_free_ = 0.0;
  bool stabilized_ = false;

  friend ResidualSpace build_residual_space(const DesignMatrix& x, const WeightMatrix& w);
};

/// H is the orthonormal complement from a full Householder QR of X
/// (H = I_n when p = 0).
ResidualSpace build_residual_space(const DesignMatrix& x, const WeightMatrix& w);

/// e = H'z.
Eigen::VectorXd contrasts(const ResidualSpace& s, const Eigen::VectorXd& z);

double restricted_information(const ResidualSpace& s);

}  // namespace resaple

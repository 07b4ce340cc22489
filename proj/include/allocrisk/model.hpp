#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include <Eigen/Dense>

namespace allocrisk {

using Eigen::MatrixXd;
using Eigen::VectorXd;
using Eigen::RowVectorXd;

inline constexpr double kPdTol = 1e-12;
inline constexpr double kOffDiagRelTol = 1e-9;
inline constexpr double kReconRelTol = 1e-8;

/// Blocks of the upper Cholesky factor Q of the prior precision,
///
///   Q = [ H  B ]     H = diag(h1, h2),  B is 2 x p,
///       [ 0  D ]     D is p x p upper triangular.
///
/// h1^2 and h2^2 act as pseudo-sample sizes for control and treatment,
/// rows of B / h as pseudo-covariate means, and D'D as a ridge term.
struct PriorDecomposition {
  double h1 = 1.0;
  double h2 = 1.0;
  MatrixXd b_rows;  // 2 x p
  MatrixXd d;       // p x p, upper triangular

  std::size_t p() const { return static_cast<std::size_t>(d.rows()); }
  MatrixXd q() const;
  MatrixXd precision() const;  // Q'Q
};

/// Conjugate Normal-Inverse-Gamma prior on (zeta, sigma^2), zeta = (gamma0, gamma1, beta).
///
/// A flat prior keeps V0^-1 = 0 exactly; it has no covariance matrix.
class NigPrior {
 public:
  static NigPrior from_covariance(VectorXd zeta0, MatrixXd v0, double a0, double b0);
  static NigPrior from_precision(VectorXd zeta0, MatrixXd precision, double a0, double b0);
  static NigPrior from_decomposition(const PriorDecomposition& decomp, VectorXd zeta0, double a0,
                                     double b0);
  static NigPrior flat(std::size_t p, double a0 = 2.0, double b0 = 1.0);

  /// How the prior was specified; serialization writes back the same form.
  enum class Origin { Covariance, Precision, Flat };

  bool is_flat() const { return flat_; }
  Origin origin() const { return origin_; }
  std::size_t p() const { return static_cast<std::size_t>(zeta0_.size()) - 2; }
  const VectorXd& zeta0() const { return zeta0_; }
  /// Prior covariance shape. Throws InvalidPrior for a flat prior.
  const MatrixXd& v0() const;
  const MatrixXd& precision() const { return precision_; }
  double a0() const { return a0_; }
  double b0() const { return b0_; }

  /// Inverse-gamma mean b0 / (a0 - 1).
  double expected_sigma2() const { return b0_ / (a0_ - 1.0); }

 private:
  NigPrior() = default;
  static void check_scalars(double a0, double b0);

  VectorXd zeta0_;
  MatrixXd v0_;
  MatrixXd precision_;
  double a0_ = 2.0;
  double b0_ = 1.0;
  bool flat_ = false;
  Origin origin_ = Origin::Covariance;
};

/// n x p unit covariates, with column means, Gram and scatter cached at construction.
class CovariateMatrix {
 public:
  CovariateMatrix() = default;
  explicit CovariateMatrix(MatrixXd x);

  std::size_t n() const { return static_cast<std::size_t>(x_.rows()); }
  std::size_t p() const { return static_cast<std::size_t>(x_.cols()); }
  const MatrixXd& x() const { return x_; }
  const RowVectorXd& mean() const { return mean_; }
  const RowVectorXd& column_sum() const { return sum_; }
  const MatrixXd& gram() const { return gram_; }
  /// S(X) = X'X - n xbar' xbar.
  const MatrixXd& scatter() const { return scatter_; }

 private:
  MatrixXd x_;
  RowVectorXd sum_;
  RowVectorXd mean_;
  MatrixXd gram_;
  MatrixXd scatter_;
};

/// Binary treatment indicator per unit: 0 = control, 1 = treatment.
class Allocation {
 public:
  Allocation() = default;
  explicit Allocation(std::vector<std::uint8_t> w);

  static Allocation from_mask(std::uint64_t mask, std::size_t n);

  std::size_t size() const { return w_.size(); }
  std::size_t n_c() const { return n_c_; }
  std::size_t n_t() const { return n_t_; }
  bool treated(std::size_t i) const { return w_[i] != 0; }
  std::span<const std::uint8_t> w() const { return w_; }
  const std::vector<std::uint8_t>& values() const { return w_; }

  Allocation swapped() const;

  friend bool operator==(const Allocation&, const Allocation&) = default;
  friend auto operator<=>(const Allocation& a, const Allocation& b) { return a.w_ <=> b.w_; }

 private:
  std::vector<std::uint8_t> w_;
  std::size_t n_c_ = 0;
  std::size_t n_t_ = 0;
};

struct Posterior {
  VectorXd zeta1;
  MatrixXd v1;
  MatrixXd precision;  // V1^-1 = V0^-1 + Z'Z
  double a1 = 0.0;
  double b1 = 0.0;

  double expected_sigma2() const { return b1 / (a1 - 1.0); }
  NigPrior as_prior() const;
};

/// Splits V0 into H, B, D blocks. Requires V0 positive definite and the
/// Schur complement nu - rho gamma^-1 rho' diagonal.
PriorDecomposition decompose_prior(const NigPrior& prior);
PriorDecomposition decompose_prior(const MatrixXd& v0);

/// Z = (1 - w, w, X).
MatrixXd build_design(const CovariateMatrix& x, const Allocation& alloc);

Posterior posterior_update(const NigPrior& prior, const CovariateMatrix& x,
                           const Allocation& alloc, const VectorXd& y);

double max_abs(const MatrixXd& m);

}  // namespace allocrisk

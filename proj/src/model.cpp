#include "allocrisk/model.hpp"

#include <cmath>
#include <string>

#include "allocrisk/error.hpp"
#include "linalg.hpp"

namespace allocrisk {

double max_abs(const MatrixXd& m) { return m.size() == 0 ? 0.0 : m.cwiseAbs().maxCoeff(); }

MatrixXd PriorDecomposition::q() const {
  const auto dim = static_cast<Eigen::Index>(p());
  MatrixXd out = MatrixXd::Zero(dim + 2, dim + 2);
  out(0, 0) = h1;
  out(1, 1) = h2;
  out.block(0, 2, 2, dim) = b_rows;
  out.block(2, 2, dim, dim) = d;
  return out;
}

MatrixXd PriorDecomposition::precision() const {
  const MatrixXd qm = q();
  return qm.transpose() * qm;
}

void NigPrior::check_scalars(double a0, double b0) {
  if (!(a0 > 1.0) || !std::isfinite(a0)) {
    throw Error(ErrorCode::InvalidPrior, "a0 must be finite and > 1, got " + std::to_string(a0));
  }
  if (!(b0 > 0.0) || !std::isfinite(b0)) {
    throw Error(ErrorCode::InvalidPrior, "b0 must be finite and > 0, got " + std::to_string(b0));
  }
}

namespace {

void check_square(const MatrixXd& m, const VectorXd& zeta0, const char* what) {
  if (m.rows() != m.cols() || m.rows() != zeta0.size() || m.rows() < 3) {
    throw Error(ErrorCode::DimensionMismatch,
                std::string(what) + " must be (p+2)x(p+2) with p >= 1 and match zeta0");
  }
  if (!m.allFinite() || !zeta0.allFinite()) {
    throw Error(ErrorCode::InvalidPrior, std::string(what) + " has non-finite entries");
  }
  if (max_abs(m - m.transpose()) > 1e-9 * (1.0 + max_abs(m))) {
    throw Error(ErrorCode::InvalidPrior, std::string(what) + " is not symmetric");
  }
}

}  // namespace

NigPrior NigPrior::from_covariance(VectorXd zeta0, MatrixXd v0, double a0, double b0) {
  check_scalars(a0, b0);
  check_square(v0, zeta0, "v0");
  detail::symmetrize(v0);
  const Eigen::LLT<MatrixXd> llt(v0);
  if (!detail::cholesky_ok(llt, v0)) {
    throw Error(ErrorCode::NotPositiveDefinite, "v0 is not positive definite");
  }
  NigPrior out;
  out.precision_ = llt.solve(MatrixXd::Identity(v0.rows(), v0.cols()));
  detail::symmetrize(out.precision_);
  out.v0_ = std::move(v0);
  out.zeta0_ = std::move(zeta0);
  out.a0_ = a0;
  out.b0_ = b0;
  return out;
}

NigPrior NigPrior::from_precision(VectorXd zeta0, MatrixXd precision, double a0, double b0) {
  check_scalars(a0, b0);
  check_square(precision, zeta0, "precision");
  detail::symmetrize(precision);
  const Eigen::LLT<MatrixXd> llt(precision);
  if (!detail::cholesky_ok(llt, precision)) {
    throw Error(ErrorCode::NotPositiveDefinite, "prior precision is not positive definite");
  }
  NigPrior out;
  out.origin_ = Origin::Precision;
  out.v0_ = llt.solve(MatrixXd::Identity(precision.rows(), precision.cols()));
  detail::symmetrize(out.v0_);
  out.precision_ = std::move(precision);
  out.zeta0_ = std::move(zeta0);
  out.a0_ = a0;
  out.b0_ = b0;
  return out;
}

NigPrior NigPrior::from_decomposition(const PriorDecomposition& decomp, VectorXd zeta0, double a0,
                                      double b0) {
  const auto p = static_cast<Eigen::Index>(decomp.p());
  if (decomp.b_rows.rows() != 2 || decomp.b_rows.cols() != p || decomp.d.cols() != p) {
    throw Error(ErrorCode::DimensionMismatch, "decomposition blocks have inconsistent shapes");
  }
  if (!(decomp.h1 > 0.0) || !(decomp.h2 > 0.0)) {
    throw Error(ErrorCode::InvalidPrior, "h1 and h2 must be positive");
  }
  for (Eigen::Index i = 0; i < p; ++i) {
    if (!(decomp.d(i, i) > 0.0)) {
      throw Error(ErrorCode::InvalidPrior, "D must have a positive diagonal");
    }
    for (Eigen::Index j = 0; j < i; ++j) {
      if (decomp.d(i, j) != 0.0) {
        throw Error(ErrorCode::InvalidPrior, "D must be upper triangular");
      }
    }
  }
  return from_precision(std::move(zeta0), decomp.precision(), a0, b0);
}

NigPrior NigPrior::flat(std::size_t p, double a0, double b0) {
  check_scalars(a0, b0);
  if (p == 0) throw Error(ErrorCode::DimensionMismatch, "flat prior needs p >= 1");
  const auto dim = static_cast<Eigen::Index>(p + 2);
  NigPrior out;
  out.zeta0_ = VectorXd::Zero(dim);
  out.precision_ = MatrixXd::Zero(dim, dim);
  out.a0_ = a0;
  out.b0_ = b0;
  out.flat_ = true;
  out.origin_ = Origin::Flat;
  return out;
}

const MatrixXd& NigPrior::v0() const {
  if (flat_) throw Error(ErrorCode::InvalidPrior, "flat prior has no covariance matrix");
  return v0_;
}

CovariateMatrix::CovariateMatrix(MatrixXd x) : x_(std::move(x)) {
  if (!x_.allFinite()) throw Error(ErrorCode::ParseError, "covariates contain non-finite values");
  const auto n = static_cast<double>(x_.rows());
  sum_ = x_.colwise().sum();
  mean_ = x_.rows() > 0 ? RowVectorXd(sum_ / n) : RowVectorXd::Zero(x_.cols());
  gram_ = x_.transpose() * x_;
  scatter_ = gram_ - n * mean_.transpose() * mean_;
  detail::symmetrize(scatter_);
}

Allocation::Allocation(std::vector<std::uint8_t> w) : w_(std::move(w)) {
  for (auto v : w_) {
    if (v > 1) throw Error(ErrorCode::DimensionMismatch, "allocation entries must be 0 or 1");
    n_t_ += v;
  }
  n_c_ = w_.size() - n_t_;
}

Allocation Allocation::from_mask(std::uint64_t mask, std::size_t n) {
  std::vector<std::uint8_t> w(n);
  for (std::size_t i = 0; i < n; ++i) w[i] = static_cast<std::uint8_t>((mask >> (n - 1 - i)) & 1U);
  return Allocation(std::move(w));
}

Allocation Allocation::swapped() const {
  std::vector<std::uint8_t> w(w_.size());
  for (std::size_t i = 0; i < w_.size(); ++i) w[i] = static_cast<std::uint8_t>(1 - w_[i]);
  return Allocation(std::move(w));
}

NigPrior Posterior::as_prior() const { return NigPrior::from_precision(zeta1, precision, a1, b1); }

PriorDecomposition decompose_prior(const NigPrior& prior) {
  if (prior.is_flat()) {
    throw Error(ErrorCode::InvalidPrior, "flat prior has no Cholesky decomposition");
  }
  return decompose_prior(prior.v0());
}

PriorDecomposition decompose_prior(const MatrixXd& v0) {
  if (v0.rows() != v0.cols() || v0.rows() < 3) {
    throw Error(ErrorCode::DimensionMismatch, "v0 must be (p+2)x(p+2) with p >= 1");
  }
  const Eigen::Index p = v0.rows() - 2;
  const Eigen::LLT<MatrixXd> full(v0);
  if (!detail::cholesky_ok(full, v0)) {
    throw Error(ErrorCode::NotPositiveDefinite, "v0 is not positive definite");
  }

  const MatrixXd nu = v0.topLeftCorner(2, 2);
  const MatrixXd rho = v0.topRightCorner(2, p);
  const MatrixXd gamma = v0.bottomRightCorner(p, p);
  const Eigen::LLT<MatrixXd> gamma_llt(gamma);
  if (!detail::cholesky_ok(gamma_llt, gamma)) {
    throw Error(ErrorCode::NotPositiveDefinite, "gamma block is not positive definite");
  }
  MatrixXd gamma_inv = gamma_llt.solve(MatrixXd::Identity(p, p));
  detail::symmetrize(gamma_inv);

  // rho gamma^-1, 2 x p
  const MatrixXd rho_gi = gamma_llt.solve(rho.transpose()).transpose();
  MatrixXd schur = nu - rho_gi * rho.transpose();
  detail::symmetrize(schur);
  if (std::abs(schur(0, 1)) > kOffDiagRelTol * max_abs(schur)) {
    throw Error(ErrorCode::SchurNotDiagonal,
                "nu - rho gamma^-1 rho' has off-diagonal " + std::to_string(schur(0, 1)) +
                    "; H must be diagonal");
  }
  if (!(schur(0, 0) > kPdTol) || !(schur(1, 1) > kPdTol)) {
    throw Error(ErrorCode::NotPositiveDefinite, "Schur complement has a non-positive pivot");
  }

  PriorDecomposition out;
  out.h1 = 1.0 / std::sqrt(schur(0, 0));
  out.h2 = 1.0 / std::sqrt(schur(1, 1));
  out.b_rows.resize(2, p);
  out.b_rows.row(0) = -out.h1 * rho_gi.row(0);
  out.b_rows.row(1) = -out.h2 * rho_gi.row(1);
  const Eigen::LLT<MatrixXd> d_llt(gamma_inv);
  if (!detail::cholesky_ok(d_llt, gamma_inv)) {
    throw Error(ErrorCode::NotPositiveDefinite, "gamma^-1 is not positive definite");
  }
  out.d = d_llt.matrixU();

  const MatrixXd target = full.solve(MatrixXd::Identity(p + 2, p + 2));
  const double err = max_abs(out.precision() - target);
  if (err > kReconRelTol * (1.0 + max_abs(target))) {
    throw Error(ErrorCode::NotPositiveDefinite,
                "Q'Q reconstruction error " + std::to_string(err) + " exceeds tolerance");
  }
  return out;
}

MatrixXd build_design(const CovariateMatrix& x, const Allocation& alloc) {
  if (alloc.size() != x.n()) {
    throw Error(ErrorCode::DimensionMismatch, "allocation length " + std::to_string(alloc.size()) +
                                                  " does not match n = " + std::to_string(x.n()));
  }
  const auto n = static_cast<Eigen::Index>(x.n());
  const auto p = static_cast<Eigen::Index>(x.p());
  MatrixXd z(n, p + 2);
  for (Eigen::Index i = 0; i < n; ++i) {
    const double wi = alloc.treated(static_cast<std::size_t>(i)) ? 1.0 : 0.0;
    z(i, 0) = 1.0 - wi;
    z(i, 1) = wi;
  }
  z.rightCols(p) = x.x();
  return z;
}

Posterior posterior_update(const NigPrior& prior, const CovariateMatrix& x,
                           const Allocation& alloc, const VectorXd& y) {
  if (x.p() != prior.p()) {
    throw Error(ErrorCode::DimensionMismatch, "covariate dimension does not match prior");
  }
  if (static_cast<std::size_t>(y.size()) != x.n()) {
    throw Error(ErrorCode::DimensionMismatch, "outcome length does not match n");
  }
  const MatrixXd z = build_design(x, alloc);
  if (x.n() == 0 && !prior.is_flat()) {
    return Posterior{prior.zeta0(), prior.v0(), prior.precision(), prior.a0(), prior.b0()};
  }

  MatrixXd precision = prior.precision() + z.transpose() * z;
  detail::symmetrize(precision);
  const Eigen::LLT<MatrixXd> llt(precision);
  if (!detail::cholesky_ok(llt, precision)) {
    throw Error(ErrorCode::SingularSystem, "V0^-1 + Z'Z is not invertible");
  }
  const auto dim = precision.rows();
  Posterior out;
  out.precision = precision;
  out.v1 = llt.solve(MatrixXd::Identity(dim, dim));
  detail::symmetrize(out.v1);
  const VectorXd rhs = prior.precision() * prior.zeta0() + z.transpose() * y;
  out.zeta1 = llt.solve(rhs);
  out.a1 = prior.a0() + 0.5 * static_cast<double>(x.n());
  const double prior_quad = prior.zeta0().dot(prior.precision() * prior.zeta0());
  out.b1 = prior.b0() + 0.5 * (prior_quad + y.squaredNorm() - out.zeta1.dot(rhs));
  if (!(out.b1 > 0.0)) throw Error(ErrorCode::SingularSystem, "posterior b1 is not positive");
  return out;
}

}  // namespace allocrisk

#pragma once

// Independent reference computations for the test suites. Nothing here calls
// the closed-form risk code; the design matrix is rebuilt by hand and systems
// are solved through a Householder QR of the stacked square-root system.

#include <cmath>
#include <random>
#include <vector>

#include <Eigen/Dense>

#include "allocrisk/instances.hpp"
#include "allocrisk/model.hpp"

namespace oracle {

using allocrisk::Allocation;
using allocrisk::CovariateMatrix;
using Eigen::MatrixXd;
using Eigen::VectorXd;

inline MatrixXd design(const MatrixXd& x, const std::vector<std::uint8_t>& w) {
  MatrixXd z(x.rows(), x.cols() + 2);
  for (Eigen::Index i = 0; i < x.rows(); ++i) {
    const double t = w[static_cast<std::size_t>(i)] ? 1.0 : 0.0;
    z(i, 0) = 1.0 - t;
    z(i, 1) = t;
    z.row(i).tail(x.cols()) = x.row(i);
  }
  return z;
}

// [chol(P)'; Z] so that S'S = P + Z'Z. A zero precision contributes no rows.
inline MatrixXd stacked(const MatrixXd& precision, const MatrixXd& z) {
  if (precision.isZero(0.0)) return z;
  const Eigen::LLT<MatrixXd> llt(precision);
  const MatrixXd r = llt.matrixU();
  MatrixXd s(r.rows() + z.rows(), z.cols());
  s << r, z;
  return s;
}

// Triangular factor R of S = QR.
inline MatrixXd qr_r(const MatrixXd& s) {
  const Eigen::HouseholderQR<MatrixXd> qr(s);
  return qr.matrixQR().topRows(s.cols()).triangularView<Eigen::Upper>();
}

/// A (P + Z'Z)^-1 A' with A = (-1, 1, 0, ...).
inline double contrast_variance(const MatrixXd& precision, const MatrixXd& x,
                                const std::vector<std::uint8_t>& w) {
  const MatrixXd r = qr_r(stacked(precision, design(x, w)));
  VectorXd a = VectorXd::Zero(r.cols());
  a(0) = -1.0;
  a(1) = 1.0;
  const VectorXd v = r.transpose().triangularView<Eigen::Lower>().solve(a);
  return v.squaredNorm();
}

inline double risk(const allocrisk::NigPrior& prior, const CovariateMatrix& x,
                   const Allocation& alloc, double e) {
  return contrast_variance(prior.precision(), x.x(), alloc.values()) * e;
}

/// Posterior mean and precision through normal equations solved by QR.
struct PosteriorRef {
  VectorXd zeta1;
  MatrixXd precision;
  double a1;
  double b1;
};

inline PosteriorRef posterior(const allocrisk::NigPrior& prior, const MatrixXd& x,
                              const std::vector<std::uint8_t>& w, const VectorXd& y) {
  const MatrixXd z = design(x, w);
  const MatrixXd p0 = prior.precision();
  PosteriorRef out;
  out.precision = p0 + z.transpose() * z;
  const VectorXd rhs = p0 * prior.zeta0() + z.transpose() * y;
  out.zeta1 = out.precision.colPivHouseholderQr().solve(rhs);
  out.a1 = prior.a0() + 0.5 * static_cast<double>(y.size());
  out.b1 = prior.b0() + 0.5 * (prior.zeta0().dot(p0 * prior.zeta0()) + y.squaredNorm() -
                               out.zeta1.dot(out.precision * out.zeta1));
  return out;
}

/// Explicit hat matrix of M.
inline MatrixXd hat(const MatrixXd& m) {
  return m * (m.transpose() * m).inverse() * m.transpose();
}

inline double rel(double a, double b) { return std::abs(a - b) / std::abs(b); }

inline std::vector<std::vector<std::uint8_t>> all_allocations(std::size_t n) {
  std::vector<std::vector<std::uint8_t>> out;
  for (std::uint64_t m = 0; m < (std::uint64_t{1} << n); ++m) {
    std::vector<std::uint8_t> w(n);
    for (std::size_t i = 0; i < n; ++i) w[i] = static_cast<std::uint8_t>((m >> i) & 1U);
    out.push_back(std::move(w));
  }
  return out;
}

inline VectorXd normal_vector(std::mt19937_64& rng, Eigen::Index n) {
  std::normal_distribution<double> d(0.0, 1.0);
  VectorXd v(n);
  for (Eigen::Index i = 0; i < n; ++i) v(i) = d(rng);
  return v;
}

}  // namespace oracle

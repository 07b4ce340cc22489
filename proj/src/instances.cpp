#include "allocrisk/instances.hpp"

#include <cmath>

#include "linalg.hpp"

namespace allocrisk {

namespace {

double uniform(std::mt19937_64& rng, double lo, double hi) {
  return std::uniform_real_distribution<double>(lo, hi)(rng);
}

void fill_blocks(std::mt19937_64& rng, PriorDecomposition& d, std::size_t p,
                 const InstanceOptions& opts) {
  const auto ip = static_cast<Eigen::Index>(p);
  std::normal_distribution<double> normal(0.0, opts.b_scale);
  d.b_rows.resize(2, ip);
  for (Eigen::Index i = 0; i < 2; ++i) {
    for (Eigen::Index j = 0; j < ip; ++j) d.b_rows(i, j) = normal(rng);
  }
  d.d = MatrixXd::Zero(ip, ip);
  for (Eigen::Index i = 0; i < ip; ++i) {
    d.d(i, i) = uniform(rng, opts.d_diag_min, opts.d_diag_max);
    for (Eigen::Index j = i + 1; j < ip; ++j) d.d(i, j) = 0.5 * normal(rng);
  }
}

}  // namespace

PriorDecomposition random_decomposition(std::mt19937_64& rng, std::size_t p,
                                        const InstanceOptions& opts) {
  PriorDecomposition d;
  d.h1 = uniform(rng, opts.h_min, opts.h_max);
  d.h2 = uniform(rng, opts.h_min, opts.h_max);
  fill_blocks(rng, d, p, opts);
  return d;
}

PriorDecomposition random_integer_decomposition(std::mt19937_64& rng, std::size_t p,
                                                std::span<const int> squares) {
  std::uniform_int_distribution<std::size_t> pick(0, squares.size() - 1);
  PriorDecomposition d;
  d.h1 = std::sqrt(static_cast<double>(squares[pick(rng)]));
  d.h2 = std::sqrt(static_cast<double>(squares[pick(rng)]));
  fill_blocks(rng, d, p, InstanceOptions{});
  return d;
}

NigPrior random_prior(std::mt19937_64& rng, std::size_t p, const InstanceOptions& opts) {
  const PriorDecomposition d = random_decomposition(rng, p, opts);
  const MatrixXd precision = d.precision();
  MatrixXd v0 = precision.inverse();
  detail::symmetrize(v0);
  std::normal_distribution<double> normal(0.0, 1.0);
  VectorXd zeta0(static_cast<Eigen::Index>(p + 2));
  for (Eigen::Index i = 0; i < zeta0.size(); ++i) zeta0(i) = normal(rng);
  const double a0 = uniform(rng, 1.5, 5.0);
  const double b0 = uniform(rng, 0.5, 3.0);
  return NigPrior::from_covariance(std::move(zeta0), std::move(v0), a0, b0);
}

CovariateMatrix random_covariates(std::mt19937_64& rng, std::size_t n, std::size_t p) {
  std::normal_distribution<double> normal(0.0, 1.0);
  MatrixXd x(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(p));
  for (Eigen::Index i = 0; i < x.rows(); ++i) {
    for (Eigen::Index j = 0; j < x.cols(); ++j) x(i, j) = normal(rng);
  }
  return CovariateMatrix(std::move(x));
}

}  // namespace allocrisk

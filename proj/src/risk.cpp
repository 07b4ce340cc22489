#include "allocrisk/risk.hpp"

#include <cmath>
#include <string>

#include "allocrisk/error.hpp"
#include "linalg.hpp"

namespace allocrisk {

namespace {

constexpr double kDenominatorRelTol = 1e-12;

void check_alloc(const CovariateMatrix& x, std::span<const std::uint8_t> w) {
  if (w.size() != x.n()) {
    throw Error(ErrorCode::DimensionMismatch, "allocation length " + std::to_string(w.size()) +
                                                  " does not match n = " + std::to_string(x.n()));
  }
}

}  // namespace

EffectivePrior EffectivePrior::flat(std::size_t p) {
  const auto dim = static_cast<Eigen::Index>(p);
  EffectivePrior out;
  out.sum_c = RowVectorXd::Zero(dim);
  out.sum_t = RowVectorXd::Zero(dim);
  out.gram = MatrixXd::Zero(dim, dim);
  return out;
}

EffectivePrior EffectivePrior::from_decomposition(const PriorDecomposition& decomp) {
  EffectivePrior out;
  out.weight_c = decomp.h1 * decomp.h1;
  out.weight_t = decomp.h2 * decomp.h2;
  out.sum_c = decomp.h1 * decomp.b_rows.row(0);
  out.sum_t = decomp.h2 * decomp.b_rows.row(1);
  out.gram = decomp.b_rows.transpose() * decomp.b_rows + decomp.d.transpose() * decomp.d;
  return out;
}

EffectivePrior EffectivePrior::from_prior(const NigPrior& prior) {
  if (prior.is_flat()) return flat(prior.p());
  return from_decomposition(decompose_prior(prior));
}

bool EffectivePrior::is_zero() const {
  return weight_c == 0.0 && weight_t == 0.0 && sum_c.isZero(0.0) && sum_t.isZero(0.0) &&
         gram.isZero(0.0);
}

RiskEvaluator::RiskEvaluator(EffectivePrior prior, CovariateMatrix x, double e_sigma2)
    : prior_(std::move(prior)), x_(std::move(x)), e_sigma2_(e_sigma2), flat_(prior_.is_zero()) {
  if (prior_.p() != x_.p()) {
    throw Error(ErrorCode::DimensionMismatch, "covariate dimension " + std::to_string(x_.p()) +
                                                  " does not match prior p = " +
                                                  std::to_string(prior_.p()));
  }
  if (!(e_sigma2_ > 0.0) || !std::isfinite(e_sigma2_)) {
    throw Error(ErrorCode::InvalidPrior, "E[sigma^2] must be positive and finite");
  }
  const double s = prior_.weight_c + prior_.weight_t + static_cast<double>(x_.n());
  const RowVectorXd total = prior_.sum_c + prior_.sum_t + x_.column_sum();
  MatrixXd phi = prior_.gram + x_.gram();
  if (s > 0.0) phi -= (total.transpose() * total) / s;
  detail::symmetrize(phi);
  phi_llt_.compute(phi);
  if (!detail::cholesky_ok(phi_llt_, phi)) {
    if (flat_) throw Error(ErrorCode::SingularScatter, "scatter matrix S(X) is singular");
    throw Error(ErrorCode::SingularPhi, "X'X + B'B - s gbar'gbar + D'D is singular");
  }
}

RiskEvaluator::Status RiskEvaluator::compute(std::span<const std::uint8_t> w,
                                             RiskBreakdown& out) const {
  const auto p = static_cast<Eigen::Index>(x_.p());
  const MatrixXd& xm = x_.x();
  RowVectorXd sum_c = RowVectorXd::Zero(p);
  RowVectorXd sum_t = RowVectorXd::Zero(p);
  std::size_t n_t = 0;
  for (std::size_t i = 0; i < w.size(); ++i) {
    if (w[i]) {
      sum_t += xm.row(static_cast<Eigen::Index>(i));
      ++n_t;
    } else {
      sum_c += xm.row(static_cast<Eigen::Index>(i));
    }
  }
  const std::size_t n_c = w.size() - n_t;
  out.n_c = n_c;
  out.n_t = n_t;
  out.s_c = prior_.weight_c + static_cast<double>(n_c);
  out.s_t = prior_.weight_t + static_cast<double>(n_t);
  if (!(out.s_c > 0.0) || !(out.s_t > 0.0)) return Status::EmptyArm;

  const double s = out.s_c + out.s_t;
  const RowVectorXd gbar_c = (prior_.sum_c + sum_c) / out.s_c;
  const RowVectorXd gbar_t = (prior_.sum_t + sum_t) / out.s_t;
  const VectorXd u = (gbar_t - gbar_c).transpose();
  out.imbalance_quad = u.dot(phi_llt_.solve(u));
  out.size_term = s / (out.s_c * out.s_t);
  const double denom = out.size_term - out.imbalance_quad;
  if (!(denom > kDenominatorRelTol * out.size_term)) return Status::Denominator;
  out.contrast_variance = out.size_term * out.size_term / denom;
  out.risk = out.contrast_variance * e_sigma2_;
  if (flat_) {
    const double n = static_cast<double>(w.size());
    out.mahalanobis =
        static_cast<double>(n_c) * static_cast<double>(n_t) / n * (n - 1.0) * out.imbalance_quad;
  } else {
    out.mahalanobis.reset();
  }
  return Status::Ok;
}

RiskBreakdown RiskEvaluator::evaluate(const Allocation& alloc) const {
  return evaluate(alloc.w());
}

RiskBreakdown RiskEvaluator::evaluate(std::span<const std::uint8_t> w) const {
  check_alloc(x_, w);
  RiskBreakdown out;
  switch (compute(w, out)) {
    case Status::Ok:
      return out;
    case Status::EmptyArm:
      throw Error(ErrorCode::EmptyArm, "both arms need at least one unit under a flat prior");
    case Status::Denominator:
      if (flat_) {
        throw Error(ErrorCode::DegenerateDesign,
                    "n/(n_c n_t) - quadratic form is not positive; Z'Z is singular");
      }
      throw Error(ErrorCode::NonPositiveDenominator,
                  "s/(s_c s_t) - quadratic form is not positive; conditioning failure");
  }
  return out;
}

std::optional<RiskBreakdown> RiskEvaluator::try_evaluate(std::span<const std::uint8_t> w) const {
  check_alloc(x_, w);
  RiskBreakdown out;
  if (compute(w, out) != Status::Ok) return std::nullopt;
  return out;
}

RiskBreakdown risk_general(const PriorDecomposition& decomp, const CovariateMatrix& x,
                           const Allocation& alloc, double e_sigma2) {
  return RiskEvaluator(EffectivePrior::from_decomposition(decomp), x, e_sigma2).evaluate(alloc);
}

RiskBreakdown risk_pseudo_sample(const PriorDecomposition& decomp, const CovariateMatrix& x,
                                 const Allocation& alloc, double e_sigma2) {
  const auto as_count = [](double h, const char* name) {
    const double h2 = h * h;
    const double k = std::round(h2);
    if (k < 1.0 || std::abs(h2 - k) > 1e-9 * std::max(1.0, h2)) {
      throw Error(ErrorCode::NonIntegerH2,
                  std::string(name) + "^2 = " + std::to_string(h2) + " is not a positive integer");
    }
    return static_cast<Eigen::Index>(k);
  };
  const Eigen::Index k1 = as_count(decomp.h1, "h1");
  const Eigen::Index k2 = as_count(decomp.h2, "h2");
  if (alloc.size() != x.n()) throw Error(ErrorCode::DimensionMismatch, "allocation length mismatch");
  if (decomp.p() != x.p()) throw Error(ErrorCode::DimensionMismatch, "covariate dimension mismatch");

  const auto n = static_cast<Eigen::Index>(x.n());
  const auto p = static_cast<Eigen::Index>(x.p());
  const RowVectorXd pseudo_c = decomp.b_rows.row(0) / decomp.h1;
  const RowVectorXd pseudo_t = decomp.b_rows.row(1) / decomp.h2;

  MatrixXd g(n + k1 + k2, p);
  g.topRows(n) = x.x();
  for (Eigen::Index i = 0; i < k1; ++i) g.row(n + i) = pseudo_c;
  for (Eigen::Index i = 0; i < k2; ++i) g.row(n + k1 + i) = pseudo_t;

  // Arm membership over the rows of G: pseudo rows belong to their own arm.
  RowVectorXd sum_c = static_cast<double>(k1) * pseudo_c;
  RowVectorXd sum_t = static_cast<double>(k2) * pseudo_t;
  for (Eigen::Index i = 0; i < n; ++i) {
    if (alloc.treated(static_cast<std::size_t>(i))) {
      sum_t += g.row(i);
    } else {
      sum_c += g.row(i);
    }
  }

  RiskBreakdown out;
  out.n_c = alloc.n_c();
  out.n_t = alloc.n_t();
  out.s_c = static_cast<double>(alloc.n_c() + static_cast<std::size_t>(k1));
  out.s_t = static_cast<double>(alloc.n_t() + static_cast<std::size_t>(k2));
  const double s = static_cast<double>(g.rows());
  const RowVectorXd gbar = g.colwise().mean();
  const MatrixXd scatter_g = g.transpose() * g - s * gbar.transpose() * gbar;
  const MatrixXd phi = scatter_g + decomp.d.transpose() * decomp.d;
  const Eigen::LDLT<MatrixXd> ldlt(phi);
  if (ldlt.info() != Eigen::Success || !(ldlt.vectorD().minCoeff() > 0.0)) {
    throw Error(ErrorCode::SingularPhi, "S(G) + D'D is singular");
  }
  const VectorXd u = (sum_t / out.s_t - sum_c / out.s_c).transpose();
  out.imbalance_quad = u.dot(ldlt.solve(u));
  out.size_term = s / (out.s_c * out.s_t);
  const double denom = out.size_term - out.imbalance_quad;
  if (!(denom > kDenominatorRelTol * out.size_term)) {
    throw Error(ErrorCode::NonPositiveDenominator, "pseudo-sample denominator is not positive");
  }
  out.contrast_variance = out.size_term * out.size_term / denom;
  out.risk = out.contrast_variance * e_sigma2;
  return out;
}

RiskBreakdown risk_flat(const CovariateMatrix& x, const Allocation& alloc, double e_sigma2) {
  if (alloc.size() != x.n()) throw Error(ErrorCode::DimensionMismatch, "allocation length mismatch");
  if (alloc.n_c() == 0 || alloc.n_t() == 0) {
    throw Error(ErrorCode::EmptyArm, "flat prior risk needs both arms nonempty");
  }
  return RiskEvaluator(EffectivePrior::flat(x.p()), x, e_sigma2).evaluate(alloc);
}

double risk_direct(const NigPrior& prior, const CovariateMatrix& x, const Allocation& alloc) {
  return risk_direct(prior, x, alloc, prior.expected_sigma2());
}

double risk_direct(const NigPrior& prior, const CovariateMatrix& x, const Allocation& alloc,
                   double e_sigma2) {
  if (x.p() != prior.p()) throw Error(ErrorCode::DimensionMismatch, "covariate dimension mismatch");
  const MatrixXd z = build_design(x, alloc);
  const MatrixXd system = prior.precision() + z.transpose() * z;
  const Eigen::LDLT<MatrixXd> ldlt(system);
  const double scale = system.diagonal().cwiseAbs().maxCoeff();
  if (ldlt.info() != Eigen::Success || !ldlt.isPositive() ||
      !(ldlt.vectorD().minCoeff() > kPdTol * scale)) {
    throw Error(ErrorCode::SingularSystem, "V0^-1 + Z'Z is not invertible");
  }
  VectorXd contrast = VectorXd::Zero(system.rows());
  contrast(0) = -1.0;
  contrast(1) = 1.0;
  return contrast.dot(ldlt.solve(contrast)) * e_sigma2;
}

double mahalanobis(const CovariateMatrix& x, const Allocation& alloc) {
  if (alloc.size() != x.n()) throw Error(ErrorCode::DimensionMismatch, "allocation length mismatch");
  if (alloc.n_c() == 0 || alloc.n_t() == 0) {
    throw Error(ErrorCode::EmptyArm, "Mahalanobis distance needs both arms nonempty");
  }
  if (x.n() < 2) throw Error(ErrorCode::SingularScatter, "Cov(X) needs n >= 2");
  const double n = static_cast<double>(x.n());
  const MatrixXd cov = x.scatter() / (n - 1.0);
  const Eigen::LLT<MatrixXd> llt(cov);
  if (!detail::cholesky_ok(llt, cov)) {
    throw Error(ErrorCode::SingularScatter, "sample covariance of X is singular");
  }
  const auto p = static_cast<Eigen::Index>(x.p());
  RowVectorXd mean_c = RowVectorXd::Zero(p);
  RowVectorXd mean_t = RowVectorXd::Zero(p);
  for (Eigen::Index i = 0; i < x.x().rows(); ++i) {
    if (alloc.treated(static_cast<std::size_t>(i))) {
      mean_t += x.x().row(i);
    } else {
      mean_c += x.x().row(i);
    }
  }
  const double n_c = static_cast<double>(alloc.n_c());
  const double n_t = static_cast<double>(alloc.n_t());
  const VectorXd diff = (mean_t / n_t - mean_c / n_c).transpose();
  return n * (n_c / n) * (n_t / n) * diff.dot(llt.solve(diff));
}

}  // namespace allocrisk

#pragma once

#include <optional>
#include <span>

#include "allocrisk/model.hpp"

namespace allocrisk {

/// Precision matrix in the block layout the risk formula needs,
///
///   [ weight_c 0        sum_c ]
///   [ 0        weight_t sum_t ]
///   [ sum_c'   sum_t'   gram  ]
///
/// A proper prior contributes (h1^2, h2^2, h1 b1, h2 b2, B'B + D'D). Earlier
/// batches of a sequential trial add their arm counts, arm covariate sums
/// and Gram matrix on top, and the flat prior is all zeros.
struct EffectivePrior {
  double weight_c = 0.0;
  double weight_t = 0.0;
  RowVectorXd sum_c;
  RowVectorXd sum_t;
  MatrixXd gram;

  static EffectivePrior flat(std::size_t p);
  static EffectivePrior from_decomposition(const PriorDecomposition& decomp);
  static EffectivePrior from_prior(const NigPrior& prior);

  std::size_t p() const { return static_cast<std::size_t>(gram.rows()); }
  bool is_zero() const;
};

struct RiskBreakdown {
  double risk = 0.0;            // A V1 A' E[sigma^2]
  double contrast_variance = 0.0;  // A V1 A'
  double size_term = 0.0;       // s / (s_c s_t)
  double imbalance_quad = 0.0;  // u' Phi^-1 u
  double s_c = 0.0;
  double s_t = 0.0;
  std::size_t n_c = 0;
  std::size_t n_t = 0;
  std::optional<double> mahalanobis;  // flat prior only
};

/// Evaluates the closed-form risk for many allocations of one covariate matrix.
///
/// Phi = X'X + gram - s gbar' gbar does not depend on the allocation (s and
/// s gbar are totals), so it is factorized once at construction.
class RiskEvaluator {
 public:
  RiskEvaluator(EffectivePrior prior, CovariateMatrix x, double e_sigma2);

  const CovariateMatrix& covariates() const { return x_; }
  const EffectivePrior& prior() const { return prior_; }
  double e_sigma2() const { return e_sigma2_; }
  bool is_flat() const { return flat_; }
  std::size_t n() const { return x_.n(); }

  /// Throws EmptyArm / DegenerateDesign (flat) or NonPositiveDenominator.
  RiskBreakdown evaluate(const Allocation& alloc) const;
  RiskBreakdown evaluate(std::span<const std::uint8_t> w) const;

  /// As evaluate, but returns nullopt where the allocation is infeasible.
  std::optional<RiskBreakdown> try_evaluate(std::span<const std::uint8_t> w) const;

 private:
  enum class Status { Ok, EmptyArm, Denominator };
  Status compute(std::span<const std::uint8_t> w, RiskBreakdown& out) const;

  EffectivePrior prior_;
  CovariateMatrix x_;
  double e_sigma2_;
  bool flat_;
  Eigen::LLT<MatrixXd> phi_llt_;
};

RiskBreakdown risk_general(const PriorDecomposition& decomp, const CovariateMatrix& x,
                           const Allocation& alloc, double e_sigma2);

/// Same risk computed through the pseudo-sample matrix G (X with h1^2 copies of
/// b1/h1 and h2^2 copies of b2/h2 appended). Needs integer h1^2 and h2^2.
RiskBreakdown risk_pseudo_sample(const PriorDecomposition& decomp, const CovariateMatrix& x,
                                 const Allocation& alloc, double e_sigma2);

/// Flat conditional prior limit; fills the Mahalanobis distance.
RiskBreakdown risk_flat(const CovariateMatrix& x, const Allocation& alloc, double e_sigma2);

/// Reference value A (V0^-1 + Z'Z)^-1 A' E[sigma^2] by explicit factorization.
double risk_direct(const NigPrior& prior, const CovariateMatrix& x, const Allocation& alloc);
double risk_direct(const NigPrior& prior, const CovariateMatrix& x, const Allocation& alloc,
                   double e_sigma2);

/// M = n (n_c/n)(n_t/n) (xbar_t - xbar_c) Cov(X)^-1 (xbar_t - xbar_c)'.
double mahalanobis(const CovariateMatrix& x, const Allocation& alloc);

}  // namespace allocrisk

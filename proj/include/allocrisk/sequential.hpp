#pragma once

#include <optional>
#include <vector>

#include "allocrisk/allocator.hpp"
#include "allocrisk/model.hpp"
#include "allocrisk/risk.hpp"

namespace allocrisk {

/// Arm-wise sufficient statistics of every unit allocated so far.
struct ArmTotals {
  std::size_t count_c = 0;
  std::size_t count_t = 0;
  RowVectorXd sum_c;
  RowVectorXd sum_t;
  MatrixXd gram;  // O'O over all allocated units

  static ArmTotals zero(std::size_t p);
  void add(const CovariateMatrix& u, const Allocation& w);
};

struct BatchRecord {
  CovariateMatrix u;
  Allocation w;
  std::optional<VectorXd> y;
  /// A V A' of the batch decision at the time it was made (risk without E[sigma^2]).
  double contrast_variance = 0.0;
};

struct BatchRequest {
  CovariateMatrix u;
  std::optional<FixedSizes> quota;
  OptimizerConfig optimizer;
};

/// Greedy sequential trial state. Each operation returns a new session; a
/// session value is never mutated in place by the engine.
class SequentialSession {
 public:
  SequentialSession(NigPrior prior, std::size_t p);

  const NigPrior& prior() const { return prior_; }
  std::size_t p() const { return p_; }
  const EffectivePrior& base() const { return base_; }
  const ArmTotals& totals() const { return totals_; }
  const std::vector<BatchRecord>& history() const { return history_; }
  std::size_t l_c() const { return totals_.count_c; }
  std::size_t l_t() const { return totals_.count_t; }

  /// Prior blocks plus all allocated units.
  EffectivePrior effective_prior() const;

  /// Posterior inverse-gamma shape/scale given the batches with recorded outcomes.
  double a() const { return a_; }
  double b() const { return b_; }
  std::size_t scored_units() const { return scored_units_; }
  /// b / (a - 1); equals the prior mean until outcomes are recorded.
  double expected_sigma2() const { return b_ / (a_ - 1.0); }

  /// Appends a batch with an already chosen allocation.
  SequentialSession with_batch(CovariateMatrix u, Allocation w, double contrast_variance) const;
  SequentialSession with_outcomes(std::size_t batch_index, const VectorXd& y) const;

 private:
  void rescore();

  NigPrior prior_;
  std::size_t p_;
  EffectivePrior base_;
  ArmTotals totals_;
  std::vector<BatchRecord> history_;
  std::size_t scored_units_ = 0;
  double a_;
  double b_;
};

struct BatchDecision {
  Allocation alloc;
  RiskBreakdown risk;
  OptimizationResult search;
  SequentialSession session;
};

SequentialSession open_session(const NigPrior& prior, std::size_t p);

RiskBreakdown conditional_risk(const SequentialSession& session, const CovariateMatrix& u,
                               const Allocation& w2);

/// Evaluator for candidate allocations of `u` given the session history.
RiskEvaluator conditional_evaluator(const SequentialSession& session, const CovariateMatrix& u);

BatchDecision allocate_batch(const SequentialSession& session, const BatchRequest& req);

SequentialSession record_outcomes(const SequentialSession& session, std::size_t batch_index,
                                  const VectorXd& y);

}  // namespace allocrisk

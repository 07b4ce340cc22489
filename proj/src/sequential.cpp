#include "allocrisk/sequential.hpp"

#include <string>

#include "allocrisk/error.hpp"
#include "linalg.hpp"

namespace allocrisk {

ArmTotals ArmTotals::zero(std::size_t p) {
  const auto dim = static_cast<Eigen::Index>(p);
  ArmTotals out;
  out.sum_c = RowVectorXd::Zero(dim);
  out.sum_t = RowVectorXd::Zero(dim);
  out.gram = MatrixXd::Zero(dim, dim);
  return out;
}

void ArmTotals::add(const CovariateMatrix& u, const Allocation& w) {
  for (Eigen::Index i = 0; i < u.x().rows(); ++i) {
    if (w.treated(static_cast<std::size_t>(i))) {
      sum_t += u.x().row(i);
    } else {
      sum_c += u.x().row(i);
    }
  }
  count_c += w.n_c();
  count_t += w.n_t();
  gram += u.gram();
}

SequentialSession::SequentialSession(NigPrior prior, std::size_t p)
    : prior_(std::move(prior)), p_(p), totals_(ArmTotals::zero(p)) {
  if (p == 0 || prior_.p() != p) {
    throw Error(ErrorCode::DimensionMismatch,
                "session p = " + std::to_string(p) + " does not match prior p = " +
                    std::to_string(prior_.p()));
  }
  base_ = EffectivePrior::from_prior(prior_);
  a_ = prior_.a0();
  b_ = prior_.b0();
}

EffectivePrior SequentialSession::effective_prior() const {
  EffectivePrior out = base_;
  out.weight_c += static_cast<double>(totals_.count_c);
  out.weight_t += static_cast<double>(totals_.count_t);
  out.sum_c += totals_.sum_c;
  out.sum_t += totals_.sum_t;
  out.gram += totals_.gram;
  return out;
}

SequentialSession SequentialSession::with_batch(CovariateMatrix u, Allocation w,
                                                double contrast_variance) const {
  if (u.p() != p_) {
    throw Error(ErrorCode::DimensionMismatch, "batch has p = " + std::to_string(u.p()) +
                                                  ", session expects " + std::to_string(p_));
  }
  if (w.size() != u.n()) throw Error(ErrorCode::DimensionMismatch, "allocation length mismatch");
  SequentialSession out = *this;
  out.totals_.add(u, w);
  out.history_.push_back(BatchRecord{std::move(u), std::move(w), std::nullopt, contrast_variance});
  return out;
}

SequentialSession SequentialSession::with_outcomes(std::size_t batch_index,
                                                   const VectorXd& y) const {
  if (batch_index >= history_.size()) {
    throw Error(ErrorCode::NotFound, "no batch with index " + std::to_string(batch_index));
  }
  const BatchRecord& batch = history_[batch_index];
  if (batch.y) {
    throw Error(ErrorCode::AlreadyScored,
                "outcomes for batch " + std::to_string(batch_index) + " are already recorded");
  }
  if (static_cast<std::size_t>(y.size()) != batch.u.n()) {
    throw Error(ErrorCode::LengthMismatch, "batch " + std::to_string(batch_index) + " has " +
                                               std::to_string(batch.u.n()) + " units, got " +
                                               std::to_string(y.size()) + " outcomes");
  }
  if (!y.allFinite()) throw Error(ErrorCode::ParseError, "outcomes must be finite");
  SequentialSession out = *this;
  out.history_[batch_index].y = y;
  out.rescore();
  return out;
}

// Recomputes (a, b) from the prior and every batch with recorded outcomes.
void SequentialSession::rescore() {
  const auto dim = static_cast<Eigen::Index>(p_ + 2);
  MatrixXd precision = prior_.precision();
  VectorXd rhs = prior_.precision() * prior_.zeta0();
  double yty = 0.0;
  std::size_t units = 0;
  for (const auto& batch : history_) {
    if (!batch.y) continue;
    const MatrixXd z = build_design(batch.u, batch.w);
    precision += z.transpose() * z;
    rhs += z.transpose() * *batch.y;
    yty += batch.y->squaredNorm();
    units += batch.u.n();
  }
  detail::symmetrize(precision);

  // r' P^- r; P is only singular for a flat prior with too few scored units,
  // where the pseudo-inverse gives the least-squares residual.
  double fitted = 0.0;
  const Eigen::LLT<MatrixXd> llt(precision);
  if (detail::cholesky_ok(llt, precision)) {
    fitted = rhs.dot(llt.solve(rhs));
  } else {
    const Eigen::SelfAdjointEigenSolver<MatrixXd> eig(precision);
    const VectorXd& values = eig.eigenvalues();
    const double cutoff = 1e-10 * std::max(1.0, values.cwiseAbs().maxCoeff());
    const VectorXd proj = eig.eigenvectors().transpose() * rhs;
    for (Eigen::Index i = 0; i < dim; ++i) {
      if (values(i) > cutoff) fitted += proj(i) * proj(i) / values(i);
    }
  }
  const double prior_quad = prior_.zeta0().dot(prior_.precision() * prior_.zeta0());
  scored_units_ = units;
  a_ = prior_.a0() + 0.5 * static_cast<double>(units);
  b_ = prior_.b0() + 0.5 * (prior_quad + yty - fitted);
  if (!(b_ > 0.0)) throw Error(ErrorCode::SingularSystem, "posterior b is not positive");
}

SequentialSession open_session(const NigPrior& prior, std::size_t p) {
  return SequentialSession(prior, p);
}

RiskEvaluator conditional_evaluator(const SequentialSession& session, const CovariateMatrix& u) {
  if (u.p() != session.p()) {
    throw Error(ErrorCode::DimensionMismatch, "batch has p = " + std::to_string(u.p()) +
                                                  ", session expects " +
                                                  std::to_string(session.p()));
  }
  return RiskEvaluator(session.effective_prior(), u, session.expected_sigma2());
}

RiskBreakdown conditional_risk(const SequentialSession& session, const CovariateMatrix& u,
                               const Allocation& w2) {
  return conditional_evaluator(session, u).evaluate(w2);
}

BatchDecision allocate_batch(const SequentialSession& session, const BatchRequest& req) {
  const RiskEvaluator evaluator = conditional_evaluator(session, req.u);
  OptimizerConfig cfg = req.optimizer;
  if (req.quota) {
    if (req.quota->n_c + req.quota->n_t != req.u.n()) {
      throw Error(ErrorCode::InfeasibleConstraint,
                  "quota " + std::to_string(req.quota->n_c) + "," + std::to_string(req.quota->n_t) +
                      " does not sum to batch size " + std::to_string(req.u.n()));
    }
    cfg.constraint = *req.quota;
  }
  if (cfg.mode == SearchMode::Exhaustive && req.u.n() > cfg.exhaustive_limit) {
    cfg.mode = SearchMode::LocalSearch;
  }
  OptimizationResult search = optimize(evaluator, cfg);
  Allocation alloc = search.best_alloc;
  RiskBreakdown risk = search.best_risk;
  SequentialSession next = session.with_batch(req.u, alloc, risk.contrast_variance);
  return BatchDecision{std::move(alloc), risk, std::move(search), std::move(next)};
}

SequentialSession record_outcomes(const SequentialSession& session, std::size_t batch_index,
                                  const VectorXd& y) {
  return session.with_outcomes(batch_index, y);
}

}  // namespace allocrisk

#include "allocrisk/balance.hpp"

#include <limits>
#include <string>

#include "allocrisk/allocator.hpp"
#include "allocrisk/error.hpp"
#include "linalg.hpp"

namespace allocrisk {

namespace {

// Precomputes K = L^-1 M' with L L' = M'M, so that v' H v = |K v|^2.
class HatForm {
 public:
  HatForm(const CovariateMatrix& x, HatBasis basis) {
    MatrixXd m = x.x();
    if (basis == HatBasis::Centered) m.rowwise() -= x.mean();
    const MatrixXd gram = m.transpose() * m;
    const Eigen::LLT<MatrixXd> llt(gram);
    if (x.n() == 0 || !detail::cholesky_ok(llt, gram)) {
      throw Error(ErrorCode::SingularGram,
                  basis == HatBasis::Centered ? "X'X of centered X is singular" : "X'X is singular");
    }
    k_ = llt.matrixL().solve(m.transpose());
  }

  double operator()(std::span<const std::uint8_t> w) const {
    VectorXd v(static_cast<Eigen::Index>(w.size()));
    for (std::size_t i = 0; i < w.size(); ++i) v(static_cast<Eigen::Index>(i)) = w[i] ? 0.5 : -0.5;
    return (k_ * v).squaredNorm();
  }

 private:
  MatrixXd k_;
};

}  // namespace

double hat_quadratic_form(const CovariateMatrix& x, const Allocation& alloc, HatBasis basis) {
  if (alloc.size() != x.n()) throw Error(ErrorCode::DimensionMismatch, "allocation length mismatch");
  return HatForm(x, basis)(alloc.w());
}

EqualSplitReport equal_split_condition(const CovariateMatrix& x, const EqualSplitOptions& opts) {
  const std::size_t n = x.n();
  if (n % 2 != 0) {
    throw Error(ErrorCode::OddN, "equal-split condition needs even n, got " + std::to_string(n));
  }
  const HatForm centered(x, HatBasis::Centered);
  const HatForm raw(x, HatBasis::Uncentered);

  EqualSplitReport report;
  report.threshold = 1.0 / static_cast<double>(n);

  if (n <= opts.exhaustive_limit) {
    double best_c = std::numeric_limits<double>::infinity();
    double best_u = std::numeric_limits<double>::infinity();
    std::vector<std::uint8_t> wit_c;
    std::vector<std::uint8_t> wit_u;
    for_each_allocation(n, EqualSizes{}, false, opts.exhaustive_limit,
                        [&](const std::vector<std::uint8_t>& w) {
                          const double qc = centered(w);
                          const double qu = raw(w);
                          if (qc < best_c) {
                            best_c = qc;
                            wit_c = w;
                          }
                          if (qu < best_u) {
                            best_u = qu;
                            wit_u = w;
                          }
                        });
    report.min_qform = best_c;
    report.witness = Allocation(wit_c);
    report.min_qform_uncentered = best_u;
    report.witness_uncentered = Allocation(wit_u);
  } else {
    // Under the flat prior at fixed equal sizes the risk is increasing in the
    // centered form, so minimizing risk minimizes the form.
    OptimizerConfig cfg;
    cfg.mode = SearchMode::LocalSearch;
    cfg.restarts = opts.restarts;
    cfg.rng_seed = opts.rng_seed;
    cfg.exhaustive_limit = opts.exhaustive_limit;
    const auto result = optimize_equal_split(NigPrior::flat(x.p()), x, cfg, 1.0);
    report.witness = result.best_alloc;
    report.min_qform = centered(result.best_alloc.w());
    report.witness_uncentered = result.best_alloc;
    report.min_qform_uncentered = raw(result.best_alloc.w());
    report.heuristic = true;
  }
  report.condition_met = report.min_qform <= report.threshold;

  if (opts.run_optimizer) {
    OptimizerConfig cfg;
    cfg.exhaustive_limit = opts.exhaustive_limit;
    cfg.rng_seed = opts.rng_seed;
    cfg.restarts = opts.restarts;
    cfg.mode = n <= opts.exhaustive_limit ? SearchMode::Exhaustive : SearchMode::LocalSearch;
    const auto result = optimize(NigPrior::flat(x.p()), x, cfg, 1.0);
    report.optimal_alloc = result.best_alloc;
    report.optimal_is_equal = result.best_alloc.n_c() == result.best_alloc.n_t();
  }
  return report;
}

CovariateMatrix counterexample_table() {
  MatrixXd x(8, 3);
  x << 0.1, -0.8, -1.3,
       0.5, 2.1, 1.3,
       0.8, -0.2, 0.2,
       -0.3, 0.3, 0.6,
       1.1, -0.8, 0.0,
       -0.5, 0.7, -0.7,
       -0.8, 1.2, -0.4,
       -0.7, 1.0, 1.4;
  return CovariateMatrix(std::move(x));
}

}  // namespace allocrisk

#pragma once

#include <optional>

#include "allocrisk/model.hpp"

namespace allocrisk {

/// Which matrix the hat projection is built from.
///   Centered:   H(X - 1 xbar), the matrix X S(X)^-1 X' used by the equal-split bound.
///   Uncentered: H(X) = X (X'X)^-1 X' on the raw covariates.
enum class HatBasis { Centered, Uncentered };

/// (w - 1/2)' H (w - 1/2).
double hat_quadratic_form(const CovariateMatrix& x, const Allocation& alloc,
                          HatBasis basis = HatBasis::Centered);

struct EqualSplitReport {
  double threshold = 0.0;  // 1/n
  double min_qform = 0.0;  // centered; decides condition_met
  Allocation witness;
  double min_qform_uncentered = 0.0;
  Allocation witness_uncentered;
  bool condition_met = false;
  bool heuristic = false;  // min_qform found by local search, not enumeration
  std::optional<bool> optimal_is_equal;
  std::optional<Allocation> optimal_alloc;
};

struct EqualSplitOptions {
  bool run_optimizer = false;
  std::size_t exhaustive_limit = 22;
  std::size_t restarts = 50;
  std::uint64_t rng_seed = 0;
};

/// Sufficient condition for an equal split to be optimal under the flat prior:
/// some equal split has centered hat quadratic form <= 1/n.
EqualSplitReport equal_split_condition(const CovariateMatrix& x, const EqualSplitOptions& opts = {});

/// The 8 x 3 sample on which the optimal allocation is a 3/5 split.
CovariateMatrix counterexample_table();

}  // namespace allocrisk

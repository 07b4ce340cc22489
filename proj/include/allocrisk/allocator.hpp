#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "allocrisk/model.hpp"
#include "allocrisk/risk.hpp"

namespace allocrisk {

enum class SearchMode { Exhaustive, LocalSearch, BestOfK };

std::string_view mode_name(SearchMode mode);
SearchMode parse_mode(std::string_view name);

/// Arm-size restriction on feasible allocations.
struct FreeSizes {};
/// n_c = n_t; for odd n, |n_c - n_t| = 1 (either arm may be larger).
struct EqualSizes {};
struct FixedSizes {
  std::size_t n_c = 0;
  std::size_t n_t = 0;
};
using SizeConstraint = std::variant<FreeSizes, EqualSizes, FixedSizes>;

std::string describe(const SizeConstraint& constraint);

struct OptimizerConfig {
  SearchMode mode = SearchMode::Exhaustive;
  SizeConstraint constraint = FreeSizes{};
  std::size_t restarts = 20;
  std::size_t k = 1000;
  std::uint64_t rng_seed = 0;
  std::size_t exhaustive_limit = 22;
  bool keep_trace = false;

  void validate(std::size_t n) const;
};

inline constexpr double kTieRelTol = 1e-12;

struct ScoredAllocation {
  Allocation alloc;
  RiskBreakdown risk;
};

struct OptimizationResult {
  Allocation best_alloc;
  RiskBreakdown best_risk;
  std::size_t evaluated = 0;
  std::size_t skipped = 0;  // infeasible allocations encountered (flat prior)
  bool dedup_active = false;
  std::vector<Allocation> ties;  // sorted, includes best_alloc
  std::vector<double> trace;
};

struct EnumerationInfo {
  std::size_t count = 0;
  bool dedup_active = false;
};

/// Calls `visit` once per feasible allocation of n units, in lexicographic
/// order of w. With `dedup_label_swap` and a free constraint only the
/// representative with w[0] = 0 of each {w, 1 - w} pair is produced.
EnumerationInfo for_each_allocation(std::size_t n, const SizeConstraint& constraint,
                                    bool dedup_label_swap, std::size_t exhaustive_limit,
                                    const std::function<void(const std::vector<std::uint8_t>&)>& visit);

std::vector<Allocation> enumerate_allocations(std::size_t n, const SizeConstraint& constraint,
                                              bool dedup_label_swap = false,
                                              std::size_t exhaustive_limit = 22);

/// Minimizes risk over allocations of the evaluator's covariates.
OptimizationResult optimize(const RiskEvaluator& evaluator, const OptimizerConfig& cfg);

OptimizationResult optimize(const NigPrior& prior, const CovariateMatrix& x,
                            const OptimizerConfig& cfg);
OptimizationResult optimize(const NigPrior& prior, const CovariateMatrix& x,
                            const OptimizerConfig& cfg, double e_sigma2);

/// optimize() with the constraint forced to EqualSizes.
OptimizationResult optimize_equal_split(const NigPrior& prior, const CovariateMatrix& x,
                                        OptimizerConfig cfg, double e_sigma2);
OptimizationResult optimize_equal_split(const NigPrior& prior, const CovariateMatrix& x,
                                        OptimizerConfig cfg);

}  // namespace allocrisk

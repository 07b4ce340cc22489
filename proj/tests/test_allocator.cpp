#include <doctest.h>

#include <algorithm>
#include <limits>

#include "allocrisk/allocator.hpp"
#include "allocrisk/balance.hpp"
#include "allocrisk/error.hpp"
#include "oracles.hpp"

using namespace allocrisk;

namespace {

template <typename F>
ErrorCode code_of(F&& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.code();
  }
  FAIL("expected an allocrisk::Error");
  return ErrorCode::NotFound;
}

// Brute-force minimum over all feasible allocations.
double brute_min(const NigPrior& prior, const CovariateMatrix& x, const SizeConstraint& c) {
  double best = std::numeric_limits<double>::infinity();
  const RiskEvaluator ev(EffectivePrior::from_prior(prior), x, 1.0);
  for (const auto& w : oracle::all_allocations(x.n())) {
    const Allocation a(w);
    if (const auto* f = std::get_if<FixedSizes>(&c); f && a.n_t() != f->n_t) continue;
    if (std::holds_alternative<EqualSizes>(c) &&
        std::max(a.n_c(), a.n_t()) - std::min(a.n_c(), a.n_t()) > 1) {
      continue;
    }
    if (const auto r = ev.try_evaluate(a.w())) best = std::min(best, r->risk);
  }
  return best;
}

}  // namespace

TEST_CASE("enumeration counts and order") {
  CHECK(enumerate_allocations(5, FreeSizes{}).size() == 32);
  CHECK(enumerate_allocations(5, FreeSizes{}, true).size() == 16);
  CHECK(enumerate_allocations(6, EqualSizes{}).size() == 20);
  CHECK(enumerate_allocations(5, EqualSizes{}).size() == 20);  // 10 with n_t = 2, 10 with n_t = 3
  CHECK(enumerate_allocations(6, FixedSizes{4, 2}).size() == 15);
  for (const auto& constraint : {SizeConstraint{FreeSizes{}}, SizeConstraint{EqualSizes{}},
                                 SizeConstraint{FixedSizes{2, 4}}}) {
    const auto all = enumerate_allocations(6, constraint);
    CHECK(std::is_sorted(all.begin(), all.end()));
    CHECK(std::adjacent_find(all.begin(), all.end()) == all.end());
  }
  for (const auto& a : enumerate_allocations(6, FreeSizes{}, true)) CHECK(a.values()[0] == 0);
}

TEST_CASE("constraint validation") {
  CHECK(code_of([] { enumerate_allocations(4, FixedSizes{1, 2}); }) ==
        ErrorCode::InfeasibleConstraint);
  CHECK(code_of([] { enumerate_allocations(30, FreeSizes{}); }) ==
        ErrorCode::TooLargeForExhaustive);
  OptimizerConfig cfg;
  cfg.restarts = 0;
  CHECK(code_of([&] { cfg.validate(4); }) == ErrorCode::InvalidConfig);
  CHECK(code_of([] { parse_mode("annealing"); }) == ErrorCode::InvalidConfig);
  CHECK(parse_mode("local") == SearchMode::LocalSearch);
  CHECK(parse_mode("best-of-k") == SearchMode::BestOfK);
}

TEST_CASE("exhaustive search finds the brute-force minimum") {
  std::mt19937_64 rng(404);
  for (int rep = 0; rep < 12; ++rep) {
    const std::size_t p = 1 + static_cast<std::size_t>(rep % 2);
    const std::size_t n = 5 + static_cast<std::size_t>(rep % 4);
    const CovariateMatrix x = random_covariates(rng, n, p);
    const NigPrior prior = rep % 2 == 0 ? NigPrior::flat(p) : random_prior(rng, p);
    for (const auto& c : {SizeConstraint{FreeSizes{}}, SizeConstraint{EqualSizes{}},
                          SizeConstraint{FixedSizes{2, n - 2}}}) {
      OptimizerConfig cfg;
      cfg.constraint = c;
      const auto r = optimize(prior, x, cfg, 1.0);
      CHECK(r.best_risk.risk == doctest::Approx(brute_min(prior, x, c)).epsilon(1e-12));
      CHECK(std::find(r.ties.begin(), r.ties.end(), r.best_alloc) != r.ties.end());
      CHECK(r.best_alloc == r.ties.front());
    }
  }
}

TEST_CASE("flat free search deduplicates and reports mirrors as ties") {
  const CovariateMatrix x = counterexample_table();
  OptimizerConfig cfg;
  const auto r = optimize(NigPrior::flat(3), x, cfg, 1.0);
  CHECK(r.dedup_active);
  CHECK(r.evaluated + r.skipped == 128);
  CHECK(r.best_alloc.values() == std::vector<std::uint8_t>{0, 0, 1, 0, 1, 1, 1, 1});
  REQUIRE(r.ties.size() == 2);
  CHECK(r.ties[1] == r.best_alloc.swapped());
  CHECK(r.best_risk.risk == doctest::Approx(0.5479050661335354).epsilon(1e-13));

  std::mt19937_64 rng(1);
  const auto proper = optimize(random_prior(rng, 3), x, cfg, 1.0);
  CHECK_FALSE(proper.dedup_active);
  CHECK(proper.evaluated == 256);
}

TEST_CASE("fixed quota with all units in one arm") {
  std::mt19937_64 rng(2);
  const NigPrior prior = random_prior(rng, 2);
  const CovariateMatrix x = random_covariates(rng, 4, 2);
  OptimizerConfig cfg;
  cfg.constraint = FixedSizes{0, 4};
  const auto r = optimize(prior, x, cfg, 1.0);
  CHECK(r.best_alloc.values() == std::vector<std::uint8_t>{1, 1, 1, 1});
  CHECK(r.evaluated == 1);
}

TEST_CASE("local search and best-of-k are deterministic and feasible") {
  std::mt19937_64 rng(505);
  const CovariateMatrix x = random_covariates(rng, 14, 2);
  const NigPrior prior = NigPrior::flat(2);
  for (const auto mode : {SearchMode::LocalSearch, SearchMode::BestOfK}) {
    OptimizerConfig cfg;
    cfg.mode = mode;
    cfg.rng_seed = 77;
    cfg.k = 200;
    cfg.constraint = EqualSizes{};
    cfg.keep_trace = true;
    const auto a = optimize(prior, x, cfg, 1.0);
    const auto b = optimize(prior, x, cfg, 1.0);
    CHECK(a.best_alloc == b.best_alloc);
    CHECK(a.best_risk.risk == b.best_risk.risk);
    CHECK(a.best_alloc.n_c() == 7);
    CHECK(std::is_sorted(a.trace.rbegin(), a.trace.rend()));
    cfg.rng_seed = 78;
    CHECK(optimize(prior, x, cfg, 1.0).best_alloc.n_t() == 7);
  }
}

TEST_CASE("local search reaches the exhaustive optimum on small problems") {
  std::mt19937_64 rng(606);
  int hits = 0;
  for (int rep = 0; rep < 100; ++rep) {
    const CovariateMatrix x = random_covariates(rng, 10, 2);
    const NigPrior prior = random_prior(rng, 2);
    OptimizerConfig cfg;
    const double best = optimize(prior, x, cfg, 1.0).best_risk.risk;
    cfg.mode = SearchMode::LocalSearch;
    cfg.restarts = 20;
    const double found = optimize(prior, x, cfg, 1.0).best_risk.risk;
    CHECK(found >= best * (1.0 - 1e-12));
    if (found <= best * (1.0 + 1e-12)) ++hits;
  }
  CHECK(hits >= 95);
}

TEST_CASE("exhaustive over the limit is refused") {
  std::mt19937_64 rng(3);
  const CovariateMatrix x = random_covariates(rng, 12, 1);
  OptimizerConfig cfg;
  cfg.exhaustive_limit = 10;
  CHECK(code_of([&] { optimize(NigPrior::flat(1), x, cfg, 1.0); }) ==
        ErrorCode::TooLargeForExhaustive);
}

#include <doctest.h>

#include <cmath>

#include "allocrisk/allocator.hpp"
#include "allocrisk/balance.hpp"
#include "allocrisk/error.hpp"
#include "oracles.hpp"

using namespace allocrisk;

namespace {

double explicit_form(const MatrixXd& m, const Allocation& a) {
  VectorXd v(static_cast<Eigen::Index>(a.size()));
  for (std::size_t i = 0; i < a.size(); ++i) v(static_cast<Eigen::Index>(i)) = a.treated(i) ? 0.5 : -0.5;
  return v.dot(oracle::hat(m) * v);
}

}  // namespace

TEST_CASE("hat quadratic forms match the explicit projection") {
  std::mt19937_64 rng(1);
  const CovariateMatrix x = random_covariates(rng, 8, 3);
  const MatrixXd centered = x.x().rowwise() - x.mean();
  for (const auto& a : enumerate_allocations(8, EqualSizes{})) {
    CHECK(hat_quadratic_form(x, a) == doctest::Approx(explicit_form(centered, a)).epsilon(1e-12));
    CHECK(hat_quadratic_form(x, a, HatBasis::Uncentered) ==
          doctest::Approx(explicit_form(x.x(), a)).epsilon(1e-12));
  }
}

TEST_CASE("counterexample table values") {
  const CovariateMatrix x = counterexample_table();
  CHECK(x.n() == 8);
  CHECK(x.p() == 3);
  const EqualSplitReport r = equal_split_condition(x, EqualSplitOptions{true});
  CHECK(r.threshold == 0.125);
  CHECK_FALSE(r.condition_met);
  CHECK_FALSE(r.heuristic);
  CHECK(std::round(r.min_qform_uncentered * 100.0) / 100.0 == doctest::Approx(0.24));
  CHECK(r.min_qform == doctest::Approx(0.26891006575193643).epsilon(1e-12));
  CHECK(r.witness.values() == std::vector<std::uint8_t>{0, 0, 1, 0, 1, 0, 1, 1});
  REQUIRE(r.optimal_is_equal.has_value());
  CHECK_FALSE(*r.optimal_is_equal);
  CHECK(r.optimal_alloc->n_c() == 3);
}

TEST_CASE("odd n is rejected") {
  std::mt19937_64 rng(2);
  try {
    equal_split_condition(random_covariates(rng, 7, 2));
    FAIL("expected OddN");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::OddN);
  }
}

TEST_CASE("duplicated rows meet the condition and the optimum is equal") {
  std::mt19937_64 rng(3);
  const CovariateMatrix half = random_covariates(rng, 4, 2);
  MatrixXd xm(8, 2);
  xm << half.x(), half.x();
  const EqualSplitReport r = equal_split_condition(CovariateMatrix(xm), EqualSplitOptions{true});
  CHECK(r.min_qform == doctest::Approx(0.0).scale(1.0));
  CHECK(r.condition_met);
  CHECK(*r.optimal_is_equal);
}

TEST_CASE("singular covariates") {
  MatrixXd xm = MatrixXd::Ones(4, 1);
  try {
    equal_split_condition(CovariateMatrix(xm));
    FAIL("expected SingularGram");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::SingularGram);
  }
}

TEST_CASE("large n falls back to local search") {
  std::mt19937_64 rng(4);
  const CovariateMatrix x = random_covariates(rng, 30, 2);
  EqualSplitOptions opts;
  opts.exhaustive_limit = 16;
  opts.restarts = 10;
  const EqualSplitReport r = equal_split_condition(x, opts);
  CHECK(r.heuristic);
  CHECK(r.witness.n_c() == 15);
  CHECK(r.min_qform == doctest::Approx(hat_quadratic_form(x, r.witness)));
}

#include <doctest.h>

#include <cmath>
#include <limits>

#include "allocrisk/error.hpp"
#include "allocrisk/model.hpp"
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

}  // namespace

TEST_CASE("error codes carry their module") {
  const Error e(ErrorCode::SingularPhi, "x");
  CHECK(e.qualified() == "risk.SingularPhi");
  CHECK(code_module(ErrorCode::SchurNotDiagonal) == "model");
  CHECK(code_module(ErrorCode::RevisionConflict) == "service");
  CHECK(code_name(ErrorCode::OddN) == "OddN");
}

TEST_CASE("prior scalars are validated") {
  CHECK(code_of([] { NigPrior::flat(2, 1.0, 1.0); }) == ErrorCode::InvalidPrior);
  CHECK(code_of([] { NigPrior::flat(2, 0.5, 1.0); }) == ErrorCode::InvalidPrior);
  CHECK(code_of([] { NigPrior::flat(2, 2.0, 0.0); }) == ErrorCode::InvalidPrior);
  CHECK(NigPrior::flat(2, 3.0, 4.0).expected_sigma2() == doctest::Approx(2.0));
  CHECK(code_of([] { (void)NigPrior::flat(2).v0(); }) == ErrorCode::InvalidPrior);
}

TEST_CASE("covariance must be positive definite") {
  MatrixXd v0 = MatrixXd::Identity(3, 3);
  v0(2, 2) = -1.0;
  CHECK(code_of([&] { NigPrior::from_covariance(VectorXd::Zero(3), v0, 2, 1); }) ==
        ErrorCode::NotPositiveDefinite);
  CHECK(code_of([&] { NigPrior::from_covariance(VectorXd::Zero(4), MatrixXd::Identity(3, 3), 2, 1); }) ==
        ErrorCode::DimensionMismatch);
}

TEST_CASE("decomposition reproduces the prior precision") {
  std::mt19937_64 rng(11);
  for (int rep = 0; rep < 30; ++rep) {
    const std::size_t p = 1 + static_cast<std::size_t>(rep % 4);
    const NigPrior prior = random_prior(rng, p);
    const PriorDecomposition d = decompose_prior(prior);
    CHECK(d.h1 > 0.0);
    CHECK(d.h2 > 0.0);
    CHECK(max_abs(d.precision() - prior.precision()) <= 1e-9 * max_abs(prior.precision()));
    // D upper triangular with positive diagonal.
    for (Eigen::Index i = 0; i < d.d.rows(); ++i) {
      CHECK(d.d(i, i) > 0.0);
      for (Eigen::Index j = 0; j < i; ++j) CHECK(d.d(i, j) == 0.0);
    }
  }
}

TEST_CASE("decomposition of a known prior") {
  // V0 with nu = diag(4, 1), rho = 0, gamma = 0.25 gives H = diag(1/2, 1), D = 2.
  MatrixXd v0 = MatrixXd::Zero(3, 3);
  v0.diagonal() << 4.0, 1.0, 0.25;
  const PriorDecomposition d = decompose_prior(v0);
  CHECK(d.h1 == doctest::Approx(0.5));
  CHECK(d.h2 == doctest::Approx(1.0));
  CHECK(d.b_rows.norm() == doctest::Approx(0.0));
  CHECK(d.d(0, 0) == doctest::Approx(2.0));
}

TEST_CASE("non-diagonal Schur complement is rejected") {
  MatrixXd v0 = MatrixXd::Identity(3, 3);
  v0(0, 1) = v0(1, 0) = 0.4;
  CHECK(code_of([&] { decompose_prior(v0); }) == ErrorCode::SchurNotDiagonal);
  // Correlation between an arm effect and a covariate alone keeps the complement diagonal.
  MatrixXd ok = MatrixXd::Identity(3, 3);
  ok(0, 2) = ok(2, 0) = 0.5;
  CHECK_NOTHROW(decompose_prior(ok));
}

TEST_CASE("covariate matrix caches moments") {
  MatrixXd x(3, 2);
  x << 1, 2, 3, 5, -1, 0;
  const CovariateMatrix c(x);
  CHECK(c.n() == 3);
  CHECK(c.p() == 2);
  CHECK(c.mean()(0) == doctest::Approx(1.0));
  CHECK(max_abs(c.gram() - x.transpose() * x) == 0.0);
  MatrixXd centered = x.rowwise() - x.colwise().mean();
  CHECK(max_abs(c.scatter() - centered.transpose() * centered) <= 1e-12);

  MatrixXd bad = x;
  bad(1, 1) = std::numeric_limits<double>::quiet_NaN();
  CHECK(code_of([&] { CovariateMatrix{bad}; }) == ErrorCode::ParseError);
}

TEST_CASE("allocation masks follow lexicographic order") {
  CHECK(Allocation::from_mask(0b011, 3).values() == std::vector<std::uint8_t>{0, 1, 1});
  CHECK(Allocation::from_mask(0b100, 3).values() == std::vector<std::uint8_t>{1, 0, 0});
  CHECK(Allocation::from_mask(0b011, 3) < Allocation::from_mask(0b100, 3));
  const Allocation a({1, 0, 1, 1});
  CHECK(a.n_t() == 3);
  CHECK(a.n_c() == 1);
  CHECK(a.swapped().values() == std::vector<std::uint8_t>{0, 1, 0, 0});
  CHECK(code_of([] { Allocation({0, 2}); }) == ErrorCode::DimensionMismatch);
}

TEST_CASE("design matrix layout") {
  MatrixXd x(2, 1);
  x << 7, 8;
  const MatrixXd z = build_design(CovariateMatrix(x), Allocation({1, 0}));
  CHECK(z(0, 0) == 0.0);
  CHECK(z(0, 1) == 1.0);
  CHECK(z(1, 0) == 1.0);
  CHECK(z(1, 2) == 8.0);
  CHECK(code_of([&] { build_design(CovariateMatrix(x), Allocation({1})); }) ==
        ErrorCode::DimensionMismatch);
}

TEST_CASE("posterior update matches normal equations") {
  std::mt19937_64 rng(5);
  for (int rep = 0; rep < 25; ++rep) {
    const std::size_t p = 1 + static_cast<std::size_t>(rep % 3);
    const std::size_t n = 3 + static_cast<std::size_t>(rep % 6);
    const NigPrior prior = random_prior(rng, p);
    const CovariateMatrix x = random_covariates(rng, n, p);
    std::vector<std::uint8_t> w(n);
    for (std::size_t i = 0; i < n; ++i) w[i] = static_cast<std::uint8_t>((rep + i) % 2);
    const VectorXd y = oracle::normal_vector(rng, static_cast<Eigen::Index>(n));
    const Posterior post = posterior_update(prior, x, Allocation(w), y);
    const auto ref = oracle::posterior(prior, x.x(), w, y);
    CHECK((post.zeta1 - ref.zeta1).norm() <= 1e-9 * (1.0 + ref.zeta1.norm()));
    CHECK(post.a1 == doctest::Approx(ref.a1));
    CHECK(post.b1 == doctest::Approx(ref.b1).epsilon(1e-9));
    CHECK(post.b1 > 0.0);
    CHECK(max_abs(post.v1 * post.precision - MatrixXd::Identity(p + 2, p + 2)) <= 1e-9);
  }
}

TEST_CASE("empty update returns the prior") {
  std::mt19937_64 rng(8);
  const NigPrior prior = random_prior(rng, 2);
  const Posterior post =
      posterior_update(prior, CovariateMatrix(MatrixXd(0, 2)), Allocation(std::vector<std::uint8_t>{}), VectorXd(0));
  CHECK(post.zeta1 == prior.zeta0());
  CHECK(post.a1 == prior.a0());
  CHECK(post.b1 == prior.b0());
}

TEST_CASE("posterior as prior composes") {
  std::mt19937_64 rng(21);
  const NigPrior prior = random_prior(rng, 2);
  const CovariateMatrix x1 = random_covariates(rng, 4, 2);
  const CovariateMatrix x2 = random_covariates(rng, 5, 2);
  const Allocation w1({0, 1, 1, 0});
  const Allocation w2({1, 0, 0, 1, 1});
  const VectorXd y1 = oracle::normal_vector(rng, 4);
  const VectorXd y2 = oracle::normal_vector(rng, 5);

  const Posterior two = posterior_update(posterior_update(prior, x1, w1, y1).as_prior(), x2, w2, y2);
  MatrixXd xx(9, 2);
  xx << x1.x(), x2.x();
  std::vector<std::uint8_t> ww = w1.values();
  ww.insert(ww.end(), w2.values().begin(), w2.values().end());
  VectorXd yy(9);
  yy << y1, y2;
  const Posterior one = posterior_update(prior, CovariateMatrix(xx), Allocation(ww), yy);
  CHECK((two.zeta1 - one.zeta1).norm() <= 1e-9);
  CHECK(two.a1 == doctest::Approx(one.a1));
  CHECK(two.b1 == doctest::Approx(one.b1).epsilon(1e-9));
}

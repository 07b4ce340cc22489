#include <doctest.h>

#include <array>

#include "allocrisk/error.hpp"
#include "allocrisk/risk.hpp"
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

bool both_arms(const std::vector<std::uint8_t>& w) {
  std::size_t t = 0;
  for (auto v : w) t += v;
  return t > 0 && t < w.size();
}

}  // namespace

TEST_CASE("closed form equals the QR oracle for proper priors") {
  std::mt19937_64 rng(101);
  double worst = 0.0;
  for (int rep = 0; rep < 20; ++rep) {
    const std::size_t p = 1 + static_cast<std::size_t>(rep % 3);
    const std::size_t n = 3 + static_cast<std::size_t>(rep % 5);
    const NigPrior prior = random_prior(rng, p);
    const CovariateMatrix x = random_covariates(rng, n, p);
    const PriorDecomposition d = decompose_prior(prior);
    for (const auto& w : oracle::all_allocations(n)) {
      const Allocation a(w);
      const double ref = oracle::risk(prior, x, a, prior.expected_sigma2());
      worst = std::max(worst, oracle::rel(risk_general(d, x, a, prior.expected_sigma2()).risk, ref));
      worst = std::max(worst, oracle::rel(risk_direct(prior, x, a), ref));
    }
  }
  CHECK(worst <= 1e-9);
}

TEST_CASE("empty arms are allowed under a proper prior") {
  std::mt19937_64 rng(3);
  const NigPrior prior = random_prior(rng, 2);
  const CovariateMatrix x = random_covariates(rng, 4, 2);
  const Allocation all_t({1, 1, 1, 1});
  const double r = risk_general(decompose_prior(prior), x, all_t, 1.0).risk;
  CHECK(r > 0.0);
  CHECK(r == doctest::Approx(oracle::risk(prior, x, all_t, 1.0)).epsilon(1e-10));
}

TEST_CASE("breakdown fields are consistent") {
  std::mt19937_64 rng(4);
  const NigPrior prior = random_prior(rng, 2);
  const CovariateMatrix x = random_covariates(rng, 6, 2);
  const PriorDecomposition d = decompose_prior(prior);
  const RiskBreakdown r = risk_general(d, x, Allocation({0, 1, 0, 1, 1, 0}), 2.5);
  CHECK(r.n_c == 3);
  CHECK(r.n_t == 3);
  CHECK(r.s_c == doctest::Approx(3 + d.h1 * d.h1));
  CHECK(r.s_t == doctest::Approx(3 + d.h2 * d.h2));
  CHECK(r.size_term == doctest::Approx((r.s_c + r.s_t) / (r.s_c * r.s_t)));
  CHECK(r.risk == doctest::Approx(2.5 * r.contrast_variance));
  CHECK(r.contrast_variance ==
        doctest::Approx(r.size_term * r.size_term / (r.size_term - r.imbalance_quad)));
  CHECK_FALSE(r.mahalanobis.has_value());
}

TEST_CASE("pseudo-sample route agrees for integer h squared") {
  std::mt19937_64 rng(202);
  constexpr std::array<int, 3> squares{1, 4, 9};
  double worst = 0.0;
  for (int rep = 0; rep < 15; ++rep) {
    const std::size_t p = 1 + static_cast<std::size_t>(rep % 3);
    const std::size_t n = 4 + static_cast<std::size_t>(rep % 4);
    const PriorDecomposition d = random_integer_decomposition(rng, p, squares);
    const CovariateMatrix x = random_covariates(rng, n, p);
    for (const auto& w : oracle::all_allocations(n)) {
      const Allocation a(w);
      worst = std::max(worst, oracle::rel(risk_pseudo_sample(d, x, a, 1.0).risk,
                                          risk_general(d, x, a, 1.0).risk));
    }
  }
  CHECK(worst <= 1e-10);
}

TEST_CASE("pseudo-sample route needs integer h squared") {
  std::mt19937_64 rng(7);
  PriorDecomposition d = random_decomposition(rng, 2);
  d.h1 = 1.5;
  const CovariateMatrix x = random_covariates(rng, 4, 2);
  CHECK(code_of([&] { risk_pseudo_sample(d, x, Allocation({0, 1, 0, 1}), 1.0); }) ==
        ErrorCode::NonIntegerH2);
}

TEST_CASE("flat prior matches the QR oracle and the Mahalanobis identity") {
  std::mt19937_64 rng(303);
  double worst = 0.0;
  double identity = 0.0;
  for (int rep = 0; rep < 20; ++rep) {
    const std::size_t p = 1 + static_cast<std::size_t>(rep % 3);
    const std::size_t n = p + 3 + static_cast<std::size_t>(rep % 4);
    const CovariateMatrix x = random_covariates(rng, n, p);
    const NigPrior flat = NigPrior::flat(p);
    const RiskEvaluator ev(EffectivePrior::flat(p), x, 1.0);
    for (const auto& w : oracle::all_allocations(n)) {
      if (!both_arms(w)) continue;
      const Allocation a(w);
      const auto r = ev.try_evaluate(w);
      if (!r) continue;
      worst = std::max(worst, oracle::rel(r->risk, oracle::risk(flat, x, a, 1.0)));
      REQUIRE(r->mahalanobis.has_value());
      CHECK(*r->mahalanobis == doctest::Approx(mahalanobis(x, a)).epsilon(1e-9));
      const double nn = static_cast<double>(n);
      const double expect = nn / static_cast<double>(a.n_c() * a.n_t()) /
                            (1.0 - *r->mahalanobis / (nn - 1.0));
      identity = std::max(identity, oracle::rel(r->risk, expect));
    }
  }
  CHECK(worst <= 1e-9);
  CHECK(identity <= 1e-12);
}

TEST_CASE("Mahalanobis distance by definition") {
  MatrixXd xm(5, 2);
  xm << 1, 0, 0, 1, 2, 2, -1, 0.5, 0.3, -2;
  const CovariateMatrix x(xm);
  const Allocation a({0, 1, 1, 0, 0});
  const Eigen::RowVectorXd mt = (xm.row(1) + xm.row(2)) / 2.0;
  const Eigen::RowVectorXd mc = (xm.row(0) + xm.row(3) + xm.row(4)) / 3.0;
  const Eigen::RowVectorXd diff = mt - mc;
  MatrixXd centered = xm.rowwise() - xm.colwise().mean();
  const MatrixXd cov = centered.transpose() * centered / 4.0;
  const double expect = 5.0 * (3.0 / 5.0) * (2.0 / 5.0) * (diff * cov.inverse() * diff.transpose())(0, 0);
  CHECK(mahalanobis(x, a) == doctest::Approx(expect).epsilon(1e-12));
  CHECK(code_of([&] { mahalanobis(x, Allocation({0, 0, 0, 0, 0})); }) == ErrorCode::EmptyArm);
}

TEST_CASE("balanced duplicated rows give the ideal flat risk") {
  MatrixXd base(3, 2);
  base << 0.3, -1.0, 1.2, 0.4, -0.7, 2.0;
  MatrixXd xm(6, 2);
  xm << base, base;
  const CovariateMatrix x(xm);
  const RiskBreakdown r = risk_flat(x, Allocation({0, 0, 0, 1, 1, 1}), 3.0);
  CHECK(r.risk == doctest::Approx(3.0 * 4.0 / 6.0).epsilon(1e-12));
  CHECK(*r.mahalanobis == doctest::Approx(0.0).scale(1.0));
}

TEST_CASE("flat prior error paths") {
  std::mt19937_64 rng(9);
  const CovariateMatrix x = random_covariates(rng, 5, 2);
  CHECK(code_of([&] { risk_flat(x, Allocation({1, 1, 1, 1, 1}), 1.0); }) == ErrorCode::EmptyArm);
  // n <= p leaves the scatter singular.
  const CovariateMatrix tiny = random_covariates(rng, 2, 2);
  CHECK(code_of([&] { risk_flat(tiny, Allocation({0, 1}), 1.0); }) == ErrorCode::SingularScatter);
  // A covariate equal to the treatment indicator makes the design rank deficient.
  MatrixXd xm(4, 1);
  xm << 0, 0, 1, 1;
  const RiskEvaluator ev(EffectivePrior::flat(1), CovariateMatrix(xm), 1.0);
  CHECK_FALSE(ev.try_evaluate(Allocation({0, 0, 1, 1}).w()).has_value());
  CHECK(ev.try_evaluate(Allocation({0, 1, 0, 1}).w()).has_value());
}

TEST_CASE("label swap symmetry under a symmetric prior") {
  std::mt19937_64 rng(10);
  const CovariateMatrix x = random_covariates(rng, 6, 2);
  PriorDecomposition d = random_decomposition(rng, 2);
  d.h2 = d.h1;
  d.b_rows.row(1) = d.b_rows.row(0);
  for (const auto& w : oracle::all_allocations(6)) {
    const Allocation a(w);
    CHECK(risk_general(d, x, a, 1.0).risk == doctest::Approx(risk_general(d, x, a.swapped(), 1.0).risk).epsilon(1e-12));
  }
}

TEST_CASE("vague proper priors approach the flat risk") {
  std::mt19937_64 rng(12);
  const CovariateMatrix x = random_covariates(rng, 7, 2);
  const Allocation a({0, 1, 1, 0, 1, 0, 0});
  const double flat = risk_flat(x, a, 1.0).risk;
  // risk(eps) = flat + c eps + O(eps^2); Richardson removes the linear term.
  const auto at = [&](double eps) {
    const NigPrior prior = NigPrior::from_precision(VectorXd::Zero(4), eps * MatrixXd::Identity(4, 4), 2, 1);
    return risk_direct(prior, x, a, 1.0);
  };
  const double e1 = 1e-4;
  const double richardson = 2.0 * at(e1 / 2) - at(e1);
  CHECK(std::abs(at(e1) - flat) / flat < 1e-2);
  CHECK(std::abs(richardson - flat) / flat < 1e-7);
}

TEST_CASE("general prior error paths") {
  std::mt19937_64 rng(13);
  const PriorDecomposition d = random_decomposition(rng, 2);
  const CovariateMatrix x = random_covariates(rng, 4, 3);
  CHECK(code_of([&] { risk_general(d, x, Allocation({0, 1, 0, 1}), 1.0); }) ==
        ErrorCode::DimensionMismatch);
}

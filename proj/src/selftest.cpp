#include "allocrisk/selftest.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <random>

#include "allocrisk/allocator.hpp"
#include "allocrisk/instances.hpp"
#include "allocrisk/risk.hpp"

namespace allocrisk {

namespace {

double rel(double a, double b) { return std::abs(a - b) / std::max(std::abs(b), 1e-300); }

}  // namespace

SelftestReport run_selftest(const SelftestOptions& opts) {
  std::mt19937_64 rng(opts.seed);
  std::uniform_int_distribution<std::size_t> pick_n(4, 8);
  std::uniform_int_distribution<std::size_t> pick_p(1, 3);
  constexpr std::array<int, 3> kSquares{1, 4, 9};

  SelftestReport report;
  for (std::size_t k = 0; k < opts.instances; ++k) {
    const std::size_t n = pick_n(rng);
    const std::size_t p = pick_p(rng);
    const CovariateMatrix x = random_covariates(rng, n, p);
    const NigPrior prior = random_prior(rng, p);
    const PriorDecomposition decomp = decompose_prior(prior);
    const PriorDecomposition integer = random_integer_decomposition(rng, p, kSquares);
    const RiskEvaluator general(EffectivePrior::from_decomposition(decomp), x,
                                prior.expected_sigma2());
    const RiskEvaluator integer_eval(EffectivePrior::from_decomposition(integer), x, 1.0);
    const RiskEvaluator flat(EffectivePrior::flat(p), x, 1.0);
    const NigPrior flat_prior = NigPrior::flat(p);
    const double nd = static_cast<double>(n);

    for_each_allocation(n, FreeSizes{}, false, 22, [&](const std::vector<std::uint8_t>& w) {
      const Allocation alloc(w);
      ++report.allocations;
      report.max_rel_general = std::max(
          report.max_rel_general, rel(general.evaluate(alloc).risk, risk_direct(prior, x, alloc)));
      report.max_rel_pseudo =
          std::max(report.max_rel_pseudo, rel(risk_pseudo_sample(integer, x, alloc, 1.0).risk,
                                              integer_eval.evaluate(alloc).risk));
      if (n < p + 2) return;
      const auto f = flat.try_evaluate(w);
      if (!f) return;
      report.max_rel_flat =
          std::max(report.max_rel_flat, rel(f->risk, risk_direct(flat_prior, x, alloc, 1.0)));
      if (f->mahalanobis) {
        const double nc = static_cast<double>(alloc.n_c());
        const double nt = static_cast<double>(alloc.n_t());
        const double identity = nd / (nc * nt) / (1.0 - *f->mahalanobis / (nd - 1.0));
        report.max_identity_gap = std::max(report.max_identity_gap, rel(f->risk, identity));
      }
    });
    ++report.instances;
  }
  report.passed = report.max_rel_general <= opts.tolerance &&
                  report.max_rel_pseudo <= opts.tolerance &&
                  report.max_rel_flat <= opts.tolerance && report.max_identity_gap <= 1e-12;
  return report;
}

io::json to_json(const SelftestReport& report) {
  return {{"instances", report.instances},
          {"allocations", report.allocations},
          {"max_rel_general", report.max_rel_general},
          {"max_rel_pseudo", report.max_rel_pseudo},
          {"max_rel_flat", report.max_rel_flat},
          {"max_identity_gap", report.max_identity_gap},
          {"passed", report.passed}};
}

}  // namespace allocrisk

#pragma once

#include <cstdint>
#include <random>
#include <span>

#include "allocrisk/model.hpp"

namespace allocrisk {

/// Random problem generators shared by the self-test, the test suites and the
/// python bindings. Deterministic for a given engine state.
struct InstanceOptions {
  double h_min = 0.3;
  double h_max = 2.0;
  double b_scale = 1.0;
  double d_diag_min = 0.3;
  double d_diag_max = 1.5;
};

/// Decomposition with positive h's and an upper-triangular D.
PriorDecomposition random_decomposition(std::mt19937_64& rng, std::size_t p,
                                        const InstanceOptions& opts = {});

/// Same, with h1^2 and h2^2 drawn from `squares`.
PriorDecomposition random_integer_decomposition(std::mt19937_64& rng, std::size_t p,
                                                std::span<const int> squares);

/// Proper prior specified through V0 = (Q'Q)^-1, so the Schur complement of its
/// covariate block is diagonal by construction.
NigPrior random_prior(std::mt19937_64& rng, std::size_t p, const InstanceOptions& opts = {});

/// n x p standard normal covariates.
CovariateMatrix random_covariates(std::mt19937_64& rng, std::size_t n, std::size_t p);

}  // namespace allocrisk

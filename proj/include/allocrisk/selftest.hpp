#pragma once

#include <cstdint>

#include "allocrisk/io.hpp"

namespace allocrisk {

struct SelftestOptions {
  std::uint64_t seed = 0;
  std::size_t instances = 40;
  double tolerance = 1e-9;
};

/// Closed-form risk against explicit factorization on random instances.
struct SelftestReport {
  std::size_t instances = 0;
  std::size_t allocations = 0;
  double max_rel_general = 0.0;   // closed form vs direct, proper priors
  double max_rel_pseudo = 0.0;    // pseudo-sample vs closed form, integer h^2
  double max_rel_flat = 0.0;      // flat closed form vs direct
  double max_identity_gap = 0.0;  // size/M identity under the flat prior
  bool passed = false;
};

SelftestReport run_selftest(const SelftestOptions& opts = {});

io::json to_json(const SelftestReport& report);

}  // namespace allocrisk

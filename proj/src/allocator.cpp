#include "allocrisk/allocator.hpp"

#include <algorithm>
#include <bit>
#include <limits>
#include <numeric>
#include <random>
#include <set>

#include "allocrisk/error.hpp"

namespace allocrisk {

namespace {

using Bits = std::vector<std::uint8_t>;

std::vector<std::size_t> allowed_treated_counts(std::size_t n, const SizeConstraint& constraint) {
  std::vector<std::size_t> out;
  if (std::holds_alternative<FreeSizes>(constraint)) {
    out.resize(n + 1);
    std::iota(out.begin(), out.end(), std::size_t{0});
  } else if (std::holds_alternative<EqualSizes>(constraint)) {
    out.push_back(n / 2);
    if (n % 2 == 1) out.push_back(n / 2 + 1);
  } else {
    const auto& fixed = std::get<FixedSizes>(constraint);
    if (fixed.n_c + fixed.n_t != n) {
      throw Error(ErrorCode::InfeasibleConstraint,
                  "arm sizes " + std::to_string(fixed.n_c) + " + " + std::to_string(fixed.n_t) +
                      " do not sum to n = " + std::to_string(n));
    }
    out.push_back(fixed.n_t);
  }
  return out;
}

void bits_from_mask(std::uint64_t mask, std::size_t n, Bits& w) {
  for (std::size_t i = 0; i < n; ++i) w[i] = static_cast<std::uint8_t>((mask >> (n - 1 - i)) & 1U);
}

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

// Keeps every allocation within kTieRelTol of the running minimum.
class TieTracker {
 public:
  void offer(const Bits& w, double risk) {
    if (candidates_.empty() || risk < best_) {
      best_ = risk;
      std::erase_if(candidates_, [this](const auto& c) { return !within(c.second); });
    }
    if (within(risk)) candidates_.emplace_back(w, risk);
  }

  bool empty() const { return candidates_.empty(); }

  std::vector<Allocation> ties(bool add_mirrors) const {
    std::set<Bits> unique;
    for (const auto& [w, risk] : candidates_) {
      if (!within(risk)) continue;
      unique.insert(w);
      if (add_mirrors) {
        Bits mirror(w.size());
        for (std::size_t i = 0; i < w.size(); ++i) mirror[i] = static_cast<std::uint8_t>(1 - w[i]);
        unique.insert(std::move(mirror));
      }
    }
    std::vector<Allocation> out;
    out.reserve(unique.size());
    for (const auto& w : unique) out.emplace_back(w);
    return out;
  }

 private:
  bool within(double risk) const { return risk <= best_ + kTieRelTol * best_; }

  double best_ = 0.0;
  std::vector<std::pair<Bits, double>> candidates_;
};

OptimizationResult finish(const RiskEvaluator& evaluator, const TieTracker& tracker,
                          bool add_mirrors, std::size_t evaluated, std::size_t skipped) {
  if (tracker.empty()) {
    throw Error(ErrorCode::InfeasibleConstraint, "no feasible allocation satisfies the constraint");
  }
  OptimizationResult out;
  out.ties = tracker.ties(add_mirrors);
  out.best_alloc = out.ties.front();
  out.best_risk = evaluator.evaluate(out.best_alloc);
  out.evaluated = evaluated;
  out.skipped = skipped;
  out.dedup_active = add_mirrors;
  return out;
}

OptimizationResult run_exhaustive(const RiskEvaluator& evaluator, const OptimizerConfig& cfg) {
  const bool dedup = evaluator.is_flat() && std::holds_alternative<FreeSizes>(cfg.constraint);
  TieTracker tracker;
  std::size_t evaluated = 0;
  std::size_t skipped = 0;
  for_each_allocation(evaluator.n(), cfg.constraint, dedup, cfg.exhaustive_limit,
                      [&](const Bits& w) {
                        if (auto r = evaluator.try_evaluate(w)) {
                          ++evaluated;
                          tracker.offer(w, r->risk);
                        } else {
                          ++skipped;
                        }
                      });
  return finish(evaluator, tracker, dedup, evaluated, skipped);
}

class RandomAllocations {
 public:
  RandomAllocations(std::size_t n, const SizeConstraint& constraint)
      : n_(n), free_(std::holds_alternative<FreeSizes>(constraint)),
        counts_(allowed_treated_counts(n, constraint)) {}

  void draw(std::mt19937_64& rng, Bits& w) const {
    w.assign(n_, 0);
    if (free_) {
      for (auto& v : w) v = static_cast<std::uint8_t>(rng() >> 63);
      return;
    }
    std::uniform_int_distribution<std::size_t> pick(0, counts_.size() - 1);
    const std::size_t n_t = counts_[pick(rng)];
    std::fill(w.begin(), w.begin() + static_cast<std::ptrdiff_t>(n_t), std::uint8_t{1});
    std::shuffle(w.begin(), w.end(), rng);
  }

 private:
  std::size_t n_;
  bool free_;
  std::vector<std::size_t> counts_;
};

constexpr std::size_t kMaxDrawAttempts = 10000;

// Draws until a feasible allocation appears; returns its risk.
double draw_feasible(const RiskEvaluator& evaluator, const RandomAllocations& sampler,
                     std::mt19937_64& rng, Bits& w, std::size_t& skipped) {
  for (std::size_t attempt = 0; attempt < kMaxDrawAttempts; ++attempt) {
    sampler.draw(rng, w);
    if (auto r = evaluator.try_evaluate(w)) return r->risk;
    ++skipped;
  }
  throw Error(ErrorCode::InfeasibleConstraint, "could not draw a feasible allocation");
}

OptimizationResult run_local_search(const RiskEvaluator& evaluator, const OptimizerConfig& cfg) {
  const std::size_t n = evaluator.n();
  const bool fixed_sizes = !std::holds_alternative<FreeSizes>(cfg.constraint);
  const RandomAllocations sampler(n, cfg.constraint);
  TieTracker tracker;
  std::size_t evaluated = 0;
  std::size_t skipped = 0;
  std::vector<double> trace;
  double global_best = std::numeric_limits<double>::infinity();

  std::vector<std::pair<std::size_t, std::size_t>> moves;
  Bits w(n);
  for (std::size_t restart = 0; restart < cfg.restarts; ++restart) {
    std::mt19937_64 rng(splitmix64(cfg.rng_seed ^ splitmix64(restart)));
    double current = draw_feasible(evaluator, sampler, rng, w, skipped);
    ++evaluated;
    global_best = std::min(global_best, current);
    if (cfg.keep_trace) trace.push_back(global_best);

    bool improved = true;
    while (improved) {
      improved = false;
      moves.clear();
      // Swaps keep sizes; flips are added only when sizes are free.
      for (std::size_t i = 0; i < n; ++i) {
        if (!fixed_sizes) moves.emplace_back(i, i);
        for (std::size_t j = i + 1; j < n; ++j) {
          if (w[i] != w[j]) moves.emplace_back(i, j);
        }
      }
      std::shuffle(moves.begin(), moves.end(), rng);
      for (const auto& [i, j] : moves) {
        const auto apply = [&] {
          w[i] = static_cast<std::uint8_t>(1 - w[i]);
          if (j != i) w[j] = static_cast<std::uint8_t>(1 - w[j]);
        };
        apply();
        const auto r = evaluator.try_evaluate(w);
        if (!r) {
          ++skipped;
          apply();
          continue;
        }
        ++evaluated;
        if (r->risk < current - kTieRelTol * current) {
          current = r->risk;
          global_best = std::min(global_best, current);
          if (cfg.keep_trace) trace.push_back(global_best);
          improved = true;
          break;
        }
        apply();
      }
    }
    tracker.offer(w, current);
  }
  auto out = finish(evaluator, tracker, false, evaluated, skipped);
  out.trace = std::move(trace);
  return out;
}

OptimizationResult run_best_of_k(const RiskEvaluator& evaluator, const OptimizerConfig& cfg) {
  const RandomAllocations sampler(evaluator.n(), cfg.constraint);
  std::mt19937_64 rng(splitmix64(cfg.rng_seed));
  TieTracker tracker;
  std::size_t skipped = 0;
  std::vector<double> trace;
  Bits w(evaluator.n());
  double best = std::numeric_limits<double>::infinity();
  for (std::size_t draw = 0; draw < cfg.k; ++draw) {
    const double risk = draw_feasible(evaluator, sampler, rng, w, skipped);
    tracker.offer(w, risk);
    best = std::min(best, risk);
    if (cfg.keep_trace) trace.push_back(best);
  }
  auto out = finish(evaluator, tracker, false, cfg.k, skipped);
  out.trace = std::move(trace);
  return out;
}

}  // namespace

std::string_view mode_name(SearchMode mode) {
  switch (mode) {
    case SearchMode::Exhaustive: return "exhaustive";
    case SearchMode::LocalSearch: return "local_search";
    case SearchMode::BestOfK: return "best_of_k";
  }
  return "unknown";
}

SearchMode parse_mode(std::string_view name) {
  if (name == "exhaustive") return SearchMode::Exhaustive;
  if (name == "local" || name == "local_search" || name == "local-search") return SearchMode::LocalSearch;
  if (name == "best_of_k" || name == "best-of-k") return SearchMode::BestOfK;
  throw Error(ErrorCode::InvalidConfig, "unknown optimizer mode '" + std::string(name) + "'");
}

std::string describe(const SizeConstraint& constraint) {
  if (std::holds_alternative<FreeSizes>(constraint)) return "free";
  if (std::holds_alternative<EqualSizes>(constraint)) return "equal";
  const auto& f = std::get<FixedSizes>(constraint);
  return std::to_string(f.n_c) + "," + std::to_string(f.n_t);
}

void OptimizerConfig::validate(std::size_t n) const {
  if (restarts < 1) throw Error(ErrorCode::InvalidConfig, "restarts must be >= 1");
  if (k < 1) throw Error(ErrorCode::InvalidConfig, "k must be >= 1");
  if (n == 0) throw Error(ErrorCode::InfeasibleConstraint, "no units to allocate");
  (void)allowed_treated_counts(n, constraint);
  if (mode == SearchMode::Exhaustive && n > exhaustive_limit) {
    throw Error(ErrorCode::TooLargeForExhaustive,
                "n = " + std::to_string(n) + " exceeds exhaustive_limit = " +
                    std::to_string(exhaustive_limit));
  }
}

EnumerationInfo for_each_allocation(std::size_t n, const SizeConstraint& constraint,
                                    bool dedup_label_swap, std::size_t exhaustive_limit,
                                    const std::function<void(const Bits&)>& visit) {
  if (n > exhaustive_limit || n > 62) {
    throw Error(ErrorCode::TooLargeForExhaustive,
                "cannot enumerate 2^" + std::to_string(n) + " allocations (limit " +
                    std::to_string(exhaustive_limit) + ")");
  }
  const auto counts = allowed_treated_counts(n, constraint);
  const bool dedup = dedup_label_swap && std::holds_alternative<FreeSizes>(constraint) && n > 0;
  EnumerationInfo info{0, dedup};
  Bits w(n);
  const std::uint64_t end = dedup ? (std::uint64_t{1} << (n - 1)) : (std::uint64_t{1} << n);

  if (counts.size() == 1) {
    // Gosper's hack walks masks of fixed popcount in increasing order.
    const std::size_t k = counts.front();
    if (k == 0) {
      bits_from_mask(0, n, w);
      visit(w);
      return {1, dedup};
    }
    std::uint64_t mask = (std::uint64_t{1} << k) - 1;
    while (mask < end) {
      bits_from_mask(mask, n, w);
      visit(w);
      ++info.count;
      const std::uint64_t low = mask & (~mask + 1);
      const std::uint64_t ripple = mask + low;
      mask = (((ripple ^ mask) >> 2) / low) | ripple;
    }
    return info;
  }

  std::vector<bool> allowed(n + 1, false);
  for (auto c : counts) allowed[c] = true;
  for (std::uint64_t mask = 0; mask < end; ++mask) {
    if (!allowed[static_cast<std::size_t>(std::popcount(mask))]) continue;
    bits_from_mask(mask, n, w);
    visit(w);
    ++info.count;
  }
  return info;
}

std::vector<Allocation> enumerate_allocations(std::size_t n, const SizeConstraint& constraint,
                                              bool dedup_label_swap,
                                              std::size_t exhaustive_limit) {
  std::vector<Allocation> out;
  for_each_allocation(n, constraint, dedup_label_swap, exhaustive_limit,
                      [&](const Bits& w) { out.emplace_back(w); });
  return out;
}

OptimizationResult optimize(const RiskEvaluator& evaluator, const OptimizerConfig& cfg) {
  cfg.validate(evaluator.n());
  switch (cfg.mode) {
    case SearchMode::Exhaustive: return run_exhaustive(evaluator, cfg);
    case SearchMode::LocalSearch: return run_local_search(evaluator, cfg);
    case SearchMode::BestOfK: return run_best_of_k(evaluator, cfg);
  }
  throw Error(ErrorCode::InvalidConfig, "unknown optimizer mode");
}

OptimizationResult optimize(const NigPrior& prior, const CovariateMatrix& x,
                            const OptimizerConfig& cfg, double e_sigma2) {
  return optimize(RiskEvaluator(EffectivePrior::from_prior(prior), x, e_sigma2), cfg);
}

OptimizationResult optimize(const NigPrior& prior, const CovariateMatrix& x,
                            const OptimizerConfig& cfg) {
  return optimize(prior, x, cfg, prior.expected_sigma2());
}

OptimizationResult optimize_equal_split(const NigPrior& prior, const CovariateMatrix& x,
                                        OptimizerConfig cfg, double e_sigma2) {
  cfg.constraint = EqualSizes{};
  return optimize(prior, x, cfg, e_sigma2);
}

OptimizationResult optimize_equal_split(const NigPrior& prior, const CovariateMatrix& x,
                                        OptimizerConfig cfg) {
  return optimize_equal_split(prior, x, std::move(cfg), prior.expected_sigma2());
}

}  // namespace allocrisk

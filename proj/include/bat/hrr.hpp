#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "bat/prob_core.hpp"
#include "bat/sampler.hpp"
#include "bat/toy_model.hpp"

namespace bat {

/// One gold next token with the model distribution at its position.
struct HrrCase {
  Distribution p_hat;
  std::size_t gold = 0;
};

struct HrrReport {
  std::string method;
  double parameter = 0.0;
  std::size_t rejected = 0;
  std::size_t total = 0;
  double hrr = 0.0;
};

struct HrrOptions {
  std::size_t constraints = 20;  // clamped to the hidden size
  double tol = lp::kDefaultTolerance;
  /// Use at most this many positions, drawn uniformly without replacement
  /// (0 = every position).
  std::size_t max_positions = 0;
  std::uint64_t seed = 0;
};

/// Would the sampler keep the gold token? Threshold rules use truncate()
/// membership; basis-aware rules ask proves_in_support at the rule's
/// threshold, and a threshold of 1 or more means greedy.
bool accepts(const HrrCase& c, const SamplerSpec& spec, const BasisConstraints& basis,
             double tol = lp::kDefaultTolerance);

/// Positions t >= m of every document, or a uniform sample of them.
std::vector<HrrCase> collect_cases(const Corpus& corpus, const ToyModel& model,
                                   const HrrOptions& options = {});

/// basis is only read by basis-aware specs.
HrrReport hrr_from_cases(const std::vector<HrrCase>& cases, const SamplerSpec& spec,
                         const BasisConstraints& basis, double tol = lp::kDefaultTolerance);

HrrReport hrr(const Corpus& corpus, const ToyModel& model, const SamplerSpec& spec,
              const HrrOptions& options = {});

struct MatchOptions {
  /// Search interval for the target parameter; defaults depend on the kind.
  std::optional<double> lo;
  std::optional<double> hi;
  std::size_t max_iter = 40;
  double tol = lp::kDefaultTolerance;
};

struct MatchResult {
  double parameter = 0.0;
  HrrReport reference;
  HrrReport matched;
  std::size_t iterations = 0;
  bool converged = false;
  /// Final bracket.
  double lo = 0.0;
  double hi = 0.0;
};

/// Bisection on target's parameter until its HRR is within half a count of
/// the reference HRR. target.rule.parameter is ignored.
///
/// Throws NumericalError when the reference HRR lies outside the HRRs at the
/// interval ends, or when a midpoint HRR falls outside the current bracket's
/// HRRs (non-monotone). Reaching max_iter returns converged = false.
MatchResult match_param(const std::vector<HrrCase>& cases, const BasisConstraints& basis,
                        const SamplerSpec& reference, const SamplerSpec& target,
                        const MatchOptions& options = {});

}  // namespace bat

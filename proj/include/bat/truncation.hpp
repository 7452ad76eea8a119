#pragma once

#include <cstddef>
#include <string>
#include <string_view>
#include <vector>

#include "bat/prob_core.hpp"
#include "bat/rng.hpp"

namespace bat {

enum class RuleKind { Epsilon, Eta, Nucleus, TopK, FixedTau };

/// A threshold heuristic and its parameter (epsilon, eta, p, k or tau).
struct TruncationRule {
  RuleKind kind = RuleKind::Epsilon;
  double parameter = 0.0;

  /// Throws ConfigError when the parameter is outside the kind's range.
  void validate() const;

  /// Parses `epsilon:0.0009`, `eta:0.002`, `nucleus:0.95`, `topk:50`,
  /// `tau:0.3`.
  static TruncationRule parse(std::string_view text);

  std::string to_string() const;
};

std::string_view rule_kind_name(RuleKind kind);

/// Tokens surviving a threshold, with the renormalized distribution.
struct CandidateSet {
  std::vector<std::size_t> accepted;  // ascending
  double threshold_used = 0.0;
  Distribution renormalized;
};

/// Per-step threshold selected by the rule.
///
/// Nucleus follows min{d_i : sum_{d_j >= d_i} d_j <= p}; when no token
/// qualifies the result is (1 + max d) / 2, which lies above every token and
/// triggers the argmax fallback in truncate().
double threshold_for(const TruncationRule& rule, const Distribution& d);

/// Keeps {i : d_i >= tau, d_i > 0}; falls back to {argmax} when empty.
CandidateSet truncate(const Distribution& d, double tau);

std::size_t truncation_sample(const Distribution& d, const TruncationRule& rule, Rng& rng);

}  // namespace bat

#include "bat/truncation.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

#include "bat/error.hpp"

namespace bat {

namespace {

// Cumulative-mass slack so nucleus:1.0 keeps the whole vocabulary despite
// rounding in the prefix sums.
constexpr double kNucleusSlack = 1e-12;

double kth_largest(const Distribution& d, std::size_t k) {
  std::vector<double> sorted(d.probs().begin(), d.probs().end());
  k = std::min(k, sorted.size());
  std::nth_element(sorted.begin(), sorted.begin() + static_cast<std::ptrdiff_t>(k - 1),
                   sorted.end(), std::greater<double>());
  return sorted[k - 1];
}

double nucleus_threshold(const Distribution& d, double p) {
  std::vector<std::size_t> order(d.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(),
                   [&d](std::size_t a, std::size_t b) { return d[a] > d[b]; });

  double tau = (1.0 + d.max()) / 2.0;
  double cumulative = 0.0;
  std::size_t i = 0;
  while (i < order.size()) {
    // Tied tokens all enter the sum together.
    const double value = d[order[i]];
    std::size_t j = i;
    while (j < order.size() && d[order[j]] == value) cumulative += d[order[j++]];
    if (cumulative > p + kNucleusSlack) break;
    tau = value;
    i = j;
  }
  return tau;
}

}  // namespace

std::string_view rule_kind_name(RuleKind kind) {
  switch (kind) {
    case RuleKind::Epsilon: return "epsilon";
    case RuleKind::Eta: return "eta";
    case RuleKind::Nucleus: return "nucleus";
    case RuleKind::TopK: return "topk";
    case RuleKind::FixedTau: return "tau";
  }
  return "unknown";
}

void TruncationRule::validate() const {
  const double x = parameter;
  if (!std::isfinite(x)) throw ConfigError("rule parameter must be finite");
  switch (kind) {
    case RuleKind::Epsilon:
    case RuleKind::Eta:
      if (x < 0.0 || x >= 1.0) {
        throw ConfigError(std::string(rule_kind_name(kind)) + " parameter must be in [0, 1)");
      }
      break;
    case RuleKind::FixedTau:
      // tau = 1 is allowed as the greedy sentinel.
      if (x < 0.0 || x > 1.0) throw ConfigError("tau parameter must be in [0, 1]");
      break;
    case RuleKind::Nucleus:
      if (x <= 0.0 || x > 1.0) throw ConfigError("nucleus parameter must be in (0, 1]");
      break;
    case RuleKind::TopK:
      if (x < 1.0 || x != std::floor(x)) throw ConfigError("topk parameter must be an integer >= 1");
      break;
  }
}

TruncationRule TruncationRule::parse(std::string_view text) {
  const auto colon = text.find(':');
  if (colon == std::string_view::npos) {
    throw ConfigError("rule must look like kind:value, got '" + std::string(text) + "'");
  }
  const std::string_view name = text.substr(0, colon);
  const std::string_view value = text.substr(colon + 1);

  TruncationRule rule;
  if (name == "epsilon") rule.kind = RuleKind::Epsilon;
  else if (name == "eta") rule.kind = RuleKind::Eta;
  else if (name == "nucleus") rule.kind = RuleKind::Nucleus;
  else if (name == "topk") rule.kind = RuleKind::TopK;
  else if (name == "tau") rule.kind = RuleKind::FixedTau;
  else throw ConfigError("unknown rule kind '" + std::string(name) + "'");

  // std::from_chars for double is missing from older libstdc++.
  std::string owned(value);
  std::size_t used = 0;
  try {
    rule.parameter = std::stod(owned, &used);
  } catch (const std::exception&) {
    throw ConfigError("bad rule parameter '" + owned + "'");
  }
  if (used != owned.size()) throw ConfigError("bad rule parameter '" + owned + "'");
  rule.validate();
  return rule;
}

std::string TruncationRule::to_string() const {
  std::string out(rule_kind_name(kind));
  out += ':';
  if (kind == RuleKind::TopK) return out + std::to_string(static_cast<long long>(parameter));
  return out + format_real(parameter);
}

double threshold_for(const TruncationRule& rule, const Distribution& d) {
  rule.validate();
  switch (rule.kind) {
    case RuleKind::Epsilon:
    case RuleKind::FixedTau:
      return rule.parameter;
    case RuleKind::Eta:
      return std::min(rule.parameter, std::sqrt(rule.parameter) * entropy(d));
    case RuleKind::Nucleus:
      return nucleus_threshold(d, rule.parameter);
    case RuleKind::TopK:
      return kth_largest(d, static_cast<std::size_t>(rule.parameter));
  }
  throw ConfigError("unknown rule kind");
}

CandidateSet truncate(const Distribution& d, double tau) {
  CandidateSet out{{}, tau, d};
  std::vector<double> kept(d.size(), 0.0);
  for (std::size_t i = 0; i < d.size(); ++i) {
    if (d[i] > 0.0 && d[i] >= tau) {
      out.accepted.push_back(i);
      kept[i] = d[i];
    }
  }
  if (out.accepted.empty()) {
    const std::size_t top = d.argmax();
    out.accepted.push_back(top);
    kept[top] = 1.0;
  }
  out.renormalized = Distribution::from_weights(std::move(kept));
  return out;
}

std::size_t truncation_sample(const Distribution& d, const TruncationRule& rule, Rng& rng) {
  return sample_categorical(truncate(d, threshold_for(rule, d)).renormalized, rng);
}

}  // namespace bat

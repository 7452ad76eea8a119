#include "bat/hrr.hpp"

#include <algorithm>
#include <numeric>
#include <sstream>
#include <utility>

#include "bat/error.hpp"
#include "bat/parallel.hpp"
#include "bat/rng.hpp"

namespace bat {

namespace {

std::string method_name(const SamplerSpec& spec) {
  return (spec.basis_aware ? "ba-" : "") + std::string(rule_kind_name(spec.rule.kind));
}

std::pair<double, double> default_interval(RuleKind kind) {
  switch (kind) {
    case RuleKind::Epsilon:
    case RuleKind::Eta:
      return {0.0, 1.0 - 1e-9};
    case RuleKind::FixedTau:
      return {0.0, 1.0};
    case RuleKind::Nucleus:
      return {1e-9, 1.0};
    case RuleKind::TopK:
      break;
  }
  throw ConfigError("topk cannot be matched by bisection");
}

}  // namespace

bool accepts(const HrrCase& c, const SamplerSpec& spec, const BasisConstraints& basis, double tol) {
  if (c.gold >= c.p_hat.size()) throw InvalidInput("gold token out of range");
  const double tau = threshold_for(spec.rule, c.p_hat);
  if (!spec.basis_aware) {
    const double p = c.p_hat[c.gold];
    if (p > 0.0 && p >= tau) return true;
    // truncate() keeps only the argmax when nothing reaches tau.
    return c.p_hat.max() < tau && c.gold == c.p_hat.argmax();
  }
  if (tau >= 1.0) return c.gold == c.p_hat.argmax();
  return proves_in_support(c.p_hat, basis, delta_from_tau(tau), c.gold, nullptr, tol);
}

std::vector<HrrCase> collect_cases(const Corpus& corpus, const ToyModel& model,
                                   const HrrOptions& options) {
  corpus.validate();
  if (corpus.vocab_size != model.vocab_size()) {
    throw InvalidInput("corpus and model disagree on vocabulary size");
  }
  const std::size_t m = model.context_order;
  std::vector<std::pair<std::size_t, std::size_t>> positions;
  positions.reserve(corpus.positions(m));
  for (std::size_t d = 0; d < corpus.docs.size(); ++d) {
    for (std::size_t t = m; t < corpus.docs[d].size(); ++t) positions.emplace_back(d, t);
  }
  if (options.max_positions > 0 && options.max_positions < positions.size()) {
    Rng rng(options.seed);
    for (std::size_t k = 0; k < options.max_positions; ++k) {
      std::swap(positions[k], positions[k + rng.below(positions.size() - k)]);
    }
    positions.resize(options.max_positions);
    std::sort(positions.begin(), positions.end());
  }

  std::vector<std::optional<HrrCase>> slots(positions.size());
  parallel_for(positions.size(), [&](std::size_t k) {
    const auto& doc = corpus.docs[positions[k].first];
    const std::size_t t = positions[k].second;
    slots[k] = HrrCase{model.distribution(std::span(doc).first(t)), doc[t]};
  });
  std::vector<HrrCase> cases;
  cases.reserve(slots.size());
  for (auto& s : slots) cases.push_back(std::move(*s));
  return cases;
}

HrrReport hrr_from_cases(const std::vector<HrrCase>& cases, const SamplerSpec& spec,
                         const BasisConstraints& basis, double tol) {
  if (cases.empty()) throw InvalidInput("HRR needs at least one position");
  spec.rule.validate();
  std::vector<unsigned char> rejected(cases.size(), 0);
  parallel_for(cases.size(), [&](std::size_t k) {
    rejected[k] = accepts(cases[k], spec, basis, tol) ? 0 : 1;
  });

  HrrReport report;
  report.method = method_name(spec);
  report.parameter = spec.rule.parameter;
  report.total = cases.size();
  report.rejected = static_cast<std::size_t>(std::accumulate(rejected.begin(), rejected.end(), 0ull));
  report.hrr = static_cast<double>(report.rejected) / static_cast<double>(report.total);
  return report;
}

HrrReport hrr(const Corpus& corpus, const ToyModel& model, const SamplerSpec& spec,
              const HrrOptions& options) {
  const std::vector<HrrCase> cases = collect_cases(corpus, model, options);
  const BasisConstraints basis =
      spec.basis_aware ? svd_reduce(model.w, std::min(options.constraints, model.hidden_size()))
                       : BasisConstraints::none(model.vocab_size());
  return hrr_from_cases(cases, spec, basis, options.tol);
}

MatchResult match_param(const std::vector<HrrCase>& cases, const BasisConstraints& basis,
                        const SamplerSpec& reference, const SamplerSpec& target,
                        const MatchOptions& options) {
  const auto [default_lo, default_hi] = default_interval(target.rule.kind);
  double lo = options.lo.value_or(default_lo);
  double hi = options.hi.value_or(default_hi);
  if (!(lo < hi)) throw ConfigError("search interval must have lo < hi");

  auto evaluate = [&](double parameter) {
    SamplerSpec spec = target;
    spec.rule.parameter = parameter;
    return hrr_from_cases(cases, spec, basis, options.tol);
  };
  auto bracket_text = [](double a, double b, std::size_t ra, std::size_t rb) {
    std::ostringstream out;
    out.precision(17);
    out << "[" << a << ", " << b << "] with rejected counts " << ra << " and " << rb;
    return out.str();
  };

  MatchResult result;
  result.reference = hrr_from_cases(cases, reference, basis, options.tol);
  const std::size_t goal = result.reference.rejected;

  HrrReport at_lo = evaluate(lo);
  HrrReport at_hi = evaluate(hi);
  const bool increasing = at_hi.rejected >= at_lo.rejected;
  auto finish = [&](double parameter, HrrReport report, bool converged) {
    result.parameter = parameter;
    result.matched = std::move(report);
    result.converged = converged;
    result.lo = lo;
    result.hi = hi;
    return result;
  };

  if (at_lo.rejected == goal) return finish(lo, at_lo, true);
  if (at_hi.rejected == goal) return finish(hi, at_hi, true);
  if (goal < std::min(at_lo.rejected, at_hi.rejected) || goal > std::max(at_lo.rejected, at_hi.rejected)) {
    throw NumericalError("reference HRR is not bracketed by " +
                         bracket_text(lo, hi, at_lo.rejected, at_hi.rejected));
  }

  while (result.iterations < options.max_iter) {
    ++result.iterations;
    const double mid = lo + (hi - lo) / 2.0;
    HrrReport at_mid = evaluate(mid);
    const std::size_t low_count = std::min(at_lo.rejected, at_hi.rejected);
    const std::size_t high_count = std::max(at_lo.rejected, at_hi.rejected);
    if (at_mid.rejected < low_count || at_mid.rejected > high_count) {
      throw NumericalError("HRR is not monotone on " +
                           bracket_text(lo, hi, at_lo.rejected, at_hi.rejected) +
                           " (midpoint count " + std::to_string(at_mid.rejected) + ")");
    }
    if (at_mid.rejected == goal) return finish(mid, at_mid, true);
    if ((at_mid.rejected < goal) == increasing) {
      lo = mid;
      at_lo = std::move(at_mid);
    } else {
      hi = mid;
      at_hi = std::move(at_mid);
    }
  }

  const auto gap = [goal](const HrrReport& r) {
    return r.rejected > goal ? r.rejected - goal : goal - r.rejected;
  };
  if (gap(at_lo) <= gap(at_hi)) return finish(lo, at_lo, false);
  return finish(hi, at_hi, false);
}

}  // namespace bat

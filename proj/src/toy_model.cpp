#include "bat/toy_model.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "bat/error.hpp"
#include "bat/parallel.hpp"
#include "bat/rng.hpp"

namespace bat {

namespace {

constexpr std::string_view kBasisAwarePrefix = "ba-";

Eigen::VectorXd fit_or_throw(const SoftmaxMatrix& w, const Distribution& target, double tol,
                             double& worst, const std::string& what) {
  const lab::FitReport fit = lab::fit_hidden_state(w, target, tol);
  if (!fit.converged) {
    throw NumericalError("fit for " + what + " stopped at gradient norm " +
                         std::to_string(fit.grad_norm));
  }
  worst = std::max(worst, fit.grad_norm);
  return fit.h;
}

}  // namespace

const Eigen::VectorXd& ToyModel::hidden_for(std::span<const std::uint32_t> history) const {
  if (history.size() < context_order) return fallback_h;
  const Context key(history.end() - static_cast<std::ptrdiff_t>(context_order), history.end());
  const auto it = contexts.find(key);
  return it == contexts.end() ? fallback_h : it->second;
}

Distribution ToyModel::distribution(std::span<const std::uint32_t> history) const {
  return w.distribution(hidden_for(history));
}

void ToyModel::validate() const {
  const auto d = static_cast<Eigen::Index>(hidden_size());
  if (fallback_h.size() != d || !fallback_h.allFinite()) throw InvalidInput("bad fallback state");
  for (const auto& [ctx, h] : contexts) {
    if (ctx.size() != context_order) throw InvalidInput("context has the wrong length");
    for (std::uint32_t t : ctx) {
      if (t >= vocab_size()) throw InvalidInput("context token out of range");
    }
    if (h.size() != d || !h.allFinite()) throw InvalidInput("bad hidden state in context table");
  }
}

std::size_t context_count(std::size_t v, std::size_t m) {
  std::size_t n = 1;
  for (std::size_t k = 0; k < m; ++k) {
    if (n > kMaxToyContexts / v) {
      throw Refused("v^m exceeds the limit of " + std::to_string(kMaxToyContexts) + " contexts");
    }
    n *= v;
  }
  return n;
}

Context decode_context(std::size_t id, std::size_t v, std::size_t m) {
  Context ctx(m);
  for (std::size_t k = m; k-- > 0;) {
    ctx[k] = static_cast<std::uint32_t>(id % v);
    id /= v;
  }
  return ctx;
}

std::size_t encode_context(std::span<const std::uint32_t> ctx, std::size_t v) {
  std::size_t id = 0;
  for (std::uint32_t t : ctx) id = id * v + t;
  return id;
}

ToyBuild build_toy_model(std::size_t v, std::size_t d, std::size_t m, std::uint64_t seed,
                         double support_frac, double fit_tol) {
  if (v < 2 || d < 1) throw ConfigError("toy model needs v >= 2 and d >= 1");
  const std::size_t n = context_count(v, m);

  Rng rng(seed);
  lab::CondDistMatrix truth = lab::synth_true_matrix(v, n, support_frac, rng.next());
  Eigen::MatrixXd weights(static_cast<Eigen::Index>(v), static_cast<Eigen::Index>(d));
  for (Eigen::Index i = 0; i < weights.rows(); ++i) {
    for (Eigen::Index j = 0; j < weights.cols(); ++j) weights(i, j) = rng.normal();
  }
  SoftmaxMatrix w(std::move(weights));

  std::vector<Eigen::VectorXd> states(n);
  std::vector<double> worst(n, 0.0);
  parallel_for(n, [&](std::size_t j) {
    states[j] = fit_or_throw(w, truth.column(j), fit_tol, worst[j], "context " + std::to_string(j));
  });

  ToyBuild out{ToyModel{w, m, {}, {}}, std::move(truth), 0.0};
  for (std::size_t j = 0; j < n; ++j) {
    out.model.contexts.emplace(decode_context(j, v, m), std::move(states[j]));
    out.max_grad_norm = std::max(out.max_grad_norm, worst[j]);
  }

  std::vector<double> mean(v, 0.0);
  const Eigen::MatrixXd& a = out.truth.log_probs();
  for (Eigen::Index j = 0; j < a.cols(); ++j) {
    for (Eigen::Index i = 0; i < a.rows(); ++i) mean[static_cast<std::size_t>(i)] += std::exp(a(i, j));
  }
  out.model.fallback_h = fit_or_throw(w, Distribution::from_weights(std::move(mean)), fit_tol,
                                      out.max_grad_norm, "fallback state");
  return out;
}

Eigen::MatrixXd toy_demo_weights() {
  Eigen::MatrixXd w(3, 1);
  w << 0.55, 0.71, 0.29;
  return w;
}

ToyBuild toy_demo_model() {
  const Distribution p_star = Distribution::from_probs({0.0, 0.7, 0.3});
  Eigen::MatrixXd log_p(3, 1);
  for (Eigen::Index i = 0; i < 3; ++i) log_p(i, 0) = std::log(p_star[static_cast<std::size_t>(i)]);

  SoftmaxMatrix w(toy_demo_weights());
  double worst = 0.0;
  Eigen::VectorXd h = fit_or_throw(w, p_star, 1e-12, worst, "toy demo");
  ToyBuild out{ToyModel{w, 0, {}, h}, lab::CondDistMatrix(std::move(log_p)), worst};
  out.model.contexts.emplace(Context{}, std::move(h));
  return out;
}

void Corpus::validate() const {
  if (vocab_size == 0) throw InvalidInput("corpus vocabulary is empty");
  for (const auto& doc : docs) {
    for (std::uint32_t t : doc) {
      if (t >= vocab_size) throw InvalidInput("corpus token " + std::to_string(t) + " out of range");
    }
  }
}

std::size_t Corpus::positions(std::size_t m) const {
  std::size_t total = 0;
  for (const auto& doc : docs) total += doc.size() > m ? doc.size() - m : 0;
  return total;
}

Corpus sample_corpus(const lab::CondDistMatrix& truth, std::size_t m, std::size_t docs,
                     std::size_t doc_len, std::uint64_t seed) {
  const std::size_t v = truth.vocab_size();
  if (context_count(v, m) != truth.prefixes()) {
    throw InvalidInput("ground truth has the wrong number of contexts for this order");
  }
  Rng rng(seed);
  Corpus corpus{v, {}};
  corpus.docs.reserve(docs);
  for (std::size_t k = 0; k < docs; ++k) {
    std::vector<std::uint32_t> doc;
    doc.reserve(m + doc_len);
    for (std::size_t t = 0; t < m; ++t) doc.push_back(static_cast<std::uint32_t>(rng.below(v)));
    for (std::size_t t = 0; t < doc_len; ++t) {
      const std::size_t ctx = encode_context(std::span(doc).last(m), v);
      doc.push_back(static_cast<std::uint32_t>(sample_categorical(truth.column(ctx), rng)));
    }
    corpus.docs.push_back(std::move(doc));
  }
  return corpus;
}

SamplerSpec SamplerSpec::parse(std::string_view text) {
  SamplerSpec spec;
  if (text.substr(0, kBasisAwarePrefix.size()) == kBasisAwarePrefix) {
    spec.basis_aware = true;
    text.remove_prefix(kBasisAwarePrefix.size());
  }
  spec.rule = TruncationRule::parse(text);
  if (spec.basis_aware && spec.rule.kind == RuleKind::TopK) {
    throw ConfigError("topk has no basis-aware variant");
  }
  return spec;
}

std::string SamplerSpec::to_string() const {
  return (basis_aware ? std::string(kBasisAwarePrefix) : std::string()) + rule.to_string();
}

GenerateResult generate(const ToyModel& model, std::span<const std::uint32_t> prefix,
                        const SamplerSpec& spec, std::size_t length, std::uint64_t seed,
                        const GenerateOptions& options) {
  for (std::uint32_t t : prefix) {
    if (t >= model.vocab_size()) throw InvalidInput("prefix token out of range");
  }
  spec.rule.validate();
  BatConfig config;
  config.constraints = std::min(options.constraints, model.hidden_size());
  config.max_retries = options.max_retries;
  config.base_rule = spec.rule;
  config.tol = options.tol;
  if (spec.basis_aware) config.validate();

  const BasisConstraints basis = spec.basis_aware ? svd_reduce(model.w, config.constraints)
                                                  : BasisConstraints::none(model.vocab_size());
  Rng rng(seed);
  std::vector<std::uint32_t> history(prefix.begin(), prefix.end());
  GenerateResult result;
  result.tokens.reserve(length);
  result.steps.reserve(length);

  for (std::size_t step = 0; step < length; ++step) {
    const Distribution p = model.distribution(history);
    GenerateStep record;
    if (spec.basis_aware) {
      const BatStep drawn = ba_rule_sample(p, basis, spec.rule, rng, config);
      record.token = drawn.token;
      record.diagnostics = drawn.diagnostics;
      if (options.audit && !drawn.diagnostics.fallback) {
        const double tau = threshold_for(spec.rule, p);
        std::vector<std::size_t> allowed{p.argmax()};
        if (tau < 1.0) {
          allowed = candidate_set(p, basis, delta_from_tau(tau), {0, true, options.tol});
        }
        record.audit_violation = !std::binary_search(allowed.begin(), allowed.end(), drawn.token);
        result.audit_violations += record.audit_violation ? 1 : 0;
      }
    } else {
      record.token = truncation_sample(p, spec.rule, rng);
    }
    history.push_back(static_cast<std::uint32_t>(record.token));
    result.tokens.push_back(static_cast<std::uint32_t>(record.token));
    result.steps.push_back(record);
  }
  return result;
}

}  // namespace bat

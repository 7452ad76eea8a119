#include "bat/sampler.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "bat/error.hpp"
#include "bat/linalg.hpp"
#include "bat/parallel.hpp"

namespace bat {

namespace {

// Singular values at or below this fraction of the largest count as zero.
constexpr double kRankCutoff = 1e-12;

}  // namespace

SoftmaxMatrix::SoftmaxMatrix(Eigen::MatrixXd weights) : weights_(std::move(weights)) {
  if (weights_.rows() == 0 || weights_.cols() == 0) throw InvalidInput("softmax matrix is empty");
  if (!weights_.allFinite()) throw InvalidInput("softmax matrix is not finite");
}

Eigen::VectorXd SoftmaxMatrix::logits(const Eigen::VectorXd& hidden) const {
  if (static_cast<std::size_t>(hidden.size()) != hidden_size()) {
    throw InvalidInput("hidden state has the wrong size");
  }
  return weights_ * hidden;
}

Distribution SoftmaxMatrix::distribution(const Eigen::VectorXd& hidden) const {
  const Eigen::VectorXd z = logits(hidden);
  return softmax(std::span<const double>(z.data(), static_cast<std::size_t>(z.size())));
}

const ThinSvd& SoftmaxMatrix::thin_svd() const {
  std::call_once(cache_->once, [this] {
    const Eigen::MatrixXd gram = weights_.transpose() * weights_;
    const linalg::SymmetricEigen eig = linalg::symmetric_eigen(gram);

    // sqrt of a Gram eigenvalue only resolves sigma down to about
    // sqrt(eps) * sigma_1; the norm of W v is accurate to eps * sigma_1, so
    // null directions are recognized.
    Eigen::MatrixXd wv = weights_ * eig.vectors;
    const Eigen::Index d = wv.cols();
    Eigen::VectorXd norms(d);
    for (Eigen::Index k = 0; k < d; ++k) norms[k] = wv.col(k).norm();
    std::vector<Eigen::Index> order(static_cast<std::size_t>(d));
    for (Eigen::Index k = 0; k < d; ++k) order[static_cast<std::size_t>(k)] = k;
    std::stable_sort(order.begin(), order.end(),
                     [&norms](Eigen::Index a, Eigen::Index b) { return norms[a] > norms[b]; });

    const double top = d > 0 ? norms[order[0]] : 0.0;
    Eigen::Index rank = 0;
    while (rank < d && top > 0.0 && norms[order[static_cast<std::size_t>(rank)]] > kRankCutoff * top) ++rank;

    auto svd = std::make_unique<ThinSvd>();
    svd->sigma.resize(rank);
    svd->v.resize(d, rank);
    svd->u.resize(wv.rows(), rank);
    for (Eigen::Index k = 0; k < rank; ++k) {
      const Eigen::Index src = order[static_cast<std::size_t>(k)];
      svd->sigma[k] = norms[src];
      svd->v.col(k) = eig.vectors.col(src);
      svd->u.col(k) = wv.col(src) / norms[src];
      // First nonzero entry positive.
      for (Eigen::Index i = 0; i < svd->u.rows(); ++i) {
        const double x = svd->u(i, k);
        if (x == 0.0) continue;
        if (x < 0.0) {
          svd->u.col(k) *= -1.0;
          svd->v.col(k) *= -1.0;
        }
        break;
      }
    }
    cache_->svd = std::move(svd);
  });
  return *cache_->svd;
}

BasisConstraints BasisConstraints::none(std::size_t v) {
  return BasisConstraints{Eigen::MatrixXd(static_cast<Eigen::Index>(v), 0), 0, false};
}

void BatConfig::validate() const {
  if (constraints < 1) throw ConfigError("BAT needs at least one constraint");
  if (max_retries < 1) throw ConfigError("max_retries must be >= 1");
  if (!(tol > 0.0)) throw ConfigError("solver tolerance must be positive");
  base_rule.validate();
}

BasisConstraints svd_reduce(const SoftmaxMatrix& w, std::size_t c) {
  if (c < 1 || c > w.hidden_size()) {
    throw ConfigError("constraint count must be in [1, " + std::to_string(w.hidden_size()) + "]");
  }
  const ThinSvd& svd = w.thin_svd();
  const auto available = static_cast<std::size_t>(svd.u.cols());
  const std::size_t kept = std::min(c, available);
  return BasisConstraints{svd.u.leftCols(static_cast<Eigen::Index>(kept)), c, kept < c};
}

lp::FeasibilityProgram build_program(const Distribution& p_hat, const BasisConstraints& basis,
                                     Delta delta, std::size_t token) {
  const std::size_t v = p_hat.size();
  if (basis.vocab_size() != v) throw InvalidInput("basis and distribution disagree on vocabulary size");
  if (token >= v) throw InvalidInput("token index out of range");
  if (delta.is_infinite()) throw DomainError("build_program needs a finite delta");

  const auto c = static_cast<Eigen::Index>(basis.count());
  const auto vi = static_cast<Eigen::Index>(v);
  auto lhs = std::make_shared<Eigen::MatrixXd>(c + 1, vi);
  lhs->row(0).setOnes();
  if (c > 0) lhs->bottomRows(c) = basis.u_c.transpose();

  lp::FeasibilityProgram prog;
  prog.fixed_zero = token;
  prog.upper_bounds.resize(v);
  const double scale = std::exp(delta.nats());
  for (std::size_t j = 0; j < v; ++j) prog.upper_bounds[j] = p_hat[j] * scale;
  prog.eq_rhs.resize(static_cast<std::size_t>(c) + 1);
  prog.eq_rhs[0] = 1.0;
  if (c > 0) {
    Eigen::Map<const Eigen::VectorXd> p(p_hat.probs().data(), vi);
    const Eigen::VectorXd moments = basis.u_c.transpose() * p;
    for (Eigen::Index k = 0; k < c; ++k) prog.eq_rhs[static_cast<std::size_t>(k) + 1] = moments[k];
  }
  prog.eq_lhs = std::move(lhs);
  // p_hat satisfies every equality, so only the fixed token's mass is off.
  prog.start = std::make_shared<const std::vector<double>>(p_hat.probs().begin(), p_hat.probs().end());
  return prog;
}

SupportProver::SupportProver(const Distribution& p_hat, const BasisConstraints& basis, Delta delta,
                             double tol)
    : p_hat_(p_hat),
      base_(build_program(p_hat, basis, delta, 0)),
      tau_(tau_from_delta(delta)),
      tol_(tol) {}

bool SupportProver::proves(std::size_t token, ProofStats* stats) const {
  if (token >= p_hat_.size()) throw InvalidInput("token index out of range");
  if (p_hat_[token] > tau_) {
    if (stats) ++stats->fastpath_hits;
    return true;
  }
  lp::FeasibilityProgram prog = base_;
  prog.fixed_zero = token;
  if (stats) ++stats->solver_calls;
  return !lp::solve_feasibility(prog, tol_).feasible();
}

bool proves_in_support(const Distribution& p_hat, const BasisConstraints& basis, Delta delta,
                       std::size_t token, ProofStats* stats, double tol) {
  if (token < p_hat.size() && p_hat[token] > tau_from_delta(delta)) {
    if (stats) ++stats->fastpath_hits;
    return true;
  }
  return SupportProver(p_hat, basis, delta, tol).proves(token, stats);
}

BatStep bat_sample(const Distribution& p_hat, const BasisConstraints& basis, Delta delta, Rng& rng,
                   const BatConfig& config) {
  if (config.max_retries < 1) throw ConfigError("max_retries must be >= 1");
  BatStep step;
  if (delta.is_infinite()) {
    step.token = p_hat.argmax();
    return step;
  }

  const std::size_t v = p_hat.size();
  const double tau = tau_from_delta(delta);
  std::unique_ptr<SupportProver> prover;  // built on the first slow-path draw
  std::vector<double> weights(p_hat.probs().begin(), p_hat.probs().end());
  double remaining = 1.0;
  const std::size_t supported = p_hat.support_size();
  ProofStats stats;

  while (true) {
    // Draw from p_hat with rejected tokens masked out.
    const double u = rng.uniform() * remaining;
    double cumulative = 0.0;
    std::size_t token = v;
    std::size_t last = v;
    for (std::size_t i = 0; i < v; ++i) {
      if (weights[i] <= 0.0) continue;
      cumulative += weights[i];
      last = i;
      if (u < cumulative) {
        token = i;
        break;
      }
    }
    if (token == v) token = last;

    bool accepted;
    if (p_hat[token] > tau) {
      ++stats.fastpath_hits;
      accepted = true;
    } else {
      if (!prover) prover = std::make_unique<SupportProver>(p_hat, basis, delta, config.tol);
      accepted = prover->proves(token, &stats);
    }
    if (accepted) {
      step.token = token;
      break;
    }

    ++step.diagnostics.retries;
    remaining -= weights[token];
    weights[token] = 0.0;
    if (step.diagnostics.retries >= config.max_retries || step.diagnostics.retries >= supported) {
      step.token = p_hat.argmax();
      step.diagnostics.fallback = true;
      break;
    }
    if (!(remaining > 0.0)) {
      remaining = 0.0;
      for (double w : weights) remaining += w;
    }
  }
  step.diagnostics.solver_calls = stats.solver_calls;
  step.diagnostics.fastpath_hits = stats.fastpath_hits;
  return step;
}

std::vector<std::size_t> candidate_set(const Distribution& p_hat, const BasisConstraints& basis,
                                       Delta delta, const CandidateOptions& options) {
  const std::size_t v = p_hat.size();
  if (v > options.max_vocab && !options.allow_large) {
    throw Refused("candidate_set over " + std::to_string(v) + " tokens exceeds the guard of " +
                  std::to_string(options.max_vocab));
  }
  if (delta.is_infinite()) return {p_hat.argmax()};

  const SupportProver prover(p_hat, basis, delta, options.tol);
  std::vector<unsigned char> accepted(v, 0);
  parallel_for(v, [&](std::size_t i) { accepted[i] = prover.proves(i) ? 1 : 0; });

  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < v; ++i) {
    if (accepted[i]) out.push_back(i);
  }
  return out;
}

BatStep ba_rule_sample(const Distribution& p_hat, const BasisConstraints& basis,
                       const TruncationRule& rule, Rng& rng, const BatConfig& config) {
  if (rule.kind == RuleKind::TopK) throw ConfigError("topk has no basis-aware variant");
  const double tau = threshold_for(rule, p_hat);
  if (tau >= 1.0) return bat_sample(p_hat, basis, Delta(std::numeric_limits<double>::infinity()), rng, config);
  return bat_sample(p_hat, basis, delta_from_tau(tau), rng, config);
}

}  // namespace bat

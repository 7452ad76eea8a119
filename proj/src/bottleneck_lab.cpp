#include "bat/bottleneck_lab.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "bat/error.hpp"
#include "bat/linalg.hpp"
#include "bat/rng.hpp"

namespace bat::lab {

namespace {

constexpr double kArmijo = 1e-4;
constexpr int kMaxHalvings = 60;

struct Objective {
  double value = 0.0;
  Eigen::VectorXd probs;
};

// f(h) = logsumexp(W h) - target . h, which equals CE(p*, softmax(W h)).
Objective evaluate(const Eigen::MatrixXd& w, const Eigen::VectorXd& target, const Eigen::VectorXd& h) {
  const Eigen::VectorXd z = w * h;
  const double top = z.maxCoeff();
  Eigen::VectorXd e = (z.array() - top).exp();
  const double mass = e.sum();
  Objective out;
  out.value = top + std::log(mass) - target.dot(h);
  out.probs = e / mass;
  return out;
}

std::vector<std::size_t> curve_points(std::size_t n) {
  std::vector<std::size_t> points;
  for (std::size_t k = 1; k < n; k *= 2) points.push_back(k);
  points.push_back(n);
  return points;
}

}  // namespace

CondDistMatrix::CondDistMatrix(Eigen::MatrixXd log_probs) : entries_(std::move(log_probs)) {
  if (entries_.rows() == 0 || entries_.cols() == 0) throw InvalidInput("distribution matrix is empty");
  for (Eigen::Index j = 0; j < entries_.cols(); ++j) {
    double mass = 0.0;
    for (Eigen::Index i = 0; i < entries_.rows(); ++i) {
      const double x = entries_(i, j);
      if (std::isnan(x) || x == std::numeric_limits<double>::infinity()) {
        throw InvalidInput("log-probability matrix has a NaN or +inf entry");
      }
      mass += std::exp(x);
    }
    if (std::abs(mass - 1.0) > kMassTolerance) {
      throw InvalidInput("column " + std::to_string(j) + " does not sum to 1");
    }
  }
}

Distribution CondDistMatrix::column(std::size_t j) const {
  if (j >= prefixes()) throw InvalidInput("column index out of range");
  std::vector<double> probs(vocab_size());
  for (std::size_t i = 0; i < probs.size(); ++i) {
    probs[i] = std::exp(entries_(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)));
  }
  return Distribution::from_probs(std::move(probs));
}

bool CondDistMatrix::all_finite() const { return entries_.allFinite(); }

CondDistMatrix synth_true_matrix(std::size_t v, std::size_t n, double support_frac,
                                 std::uint64_t seed) {
  if (v < 2 || n < 1) throw ConfigError("synth_true_matrix needs v >= 2 and n >= 1");
  if (!(support_frac > 0.0) || support_frac > 1.0) throw ConfigError("support_frac must be in (0, 1]");
  // The epsilon keeps 0.5 * 10 at exactly 5 after rounding.
  const auto k = std::clamp<std::size_t>(
      static_cast<std::size_t>(std::ceil(support_frac * static_cast<double>(v) - 1e-9)), 1, v);

  Rng rng(seed);
  Eigen::MatrixXd a = Eigen::MatrixXd::Constant(static_cast<Eigen::Index>(v), static_cast<Eigen::Index>(n),
                                                -std::numeric_limits<double>::infinity());
  std::vector<std::size_t> tokens(v);
  std::vector<double> logits(k);
  for (std::size_t j = 0; j < n; ++j) {
    std::iota(tokens.begin(), tokens.end(), std::size_t{0});
    for (std::size_t t = 0; t < k; ++t) {
      std::swap(tokens[t], tokens[t + rng.below(v - t)]);
    }
    for (double& x : logits) x = rng.normal();
    const std::vector<double> logp = log_softmax(logits);
    for (std::size_t t = 0; t < k; ++t) {
      a(static_cast<Eigen::Index>(tokens[t]), static_cast<Eigen::Index>(j)) = logp[t];
    }
  }
  return CondDistMatrix(std::move(a));
}

FitReport fit_hidden_state(const SoftmaxMatrix& w, const Distribution& p_star, double tol,
                           std::size_t max_iter) {
  if (!(tol > 0.0)) throw ConfigError("fit tolerance must be positive");
  if (p_star.size() != w.vocab_size()) throw InvalidInput("target distribution has the wrong size");

  const Eigen::MatrixXd& wm = w.weights();
  const Eigen::Index d = wm.cols();
  const Eigen::VectorXd p = Eigen::Map<const Eigen::VectorXd>(p_star.probs().data(), wm.rows());
  const Eigen::VectorXd target = wm.transpose() * p;

  FitReport report;
  report.h = Eigen::VectorXd::Zero(d);
  Objective cur = evaluate(wm, target, report.h);
  Eigen::VectorXd grad = wm.transpose() * cur.probs - target;
  report.objective_trace.push_back(cur.value);

  while (grad.lpNorm<Eigen::Infinity>() > tol && report.iterations < max_iter) {
    const Eigen::VectorXd mean = wm.transpose() * cur.probs;
    Eigen::MatrixXd hessian = wm.transpose() * cur.probs.asDiagonal() * wm;
    hessian.noalias() -= mean * mean.transpose();

    Eigen::VectorXd step;
    Eigen::LDLT<Eigen::MatrixXd> ldlt(hessian);
    if (ldlt.info() == Eigen::Success && ldlt.isPositive()) step = ldlt.solve(-grad);
    if (step.size() != d || !step.allFinite() || step.dot(grad) >= 0.0) step = -grad;

    const double slope = grad.dot(step);
    double t = 1.0;
    bool accepted = false;
    bool saw_finite = false;
    Objective next;
    for (int halving = 0; halving <= kMaxHalvings; ++halving, t *= 0.5) {
      next = evaluate(wm, target, report.h + t * step);
      if (!std::isfinite(next.value)) continue;
      saw_finite = true;
      if (next.value <= cur.value + kArmijo * t * slope) {
        accepted = true;
        break;
      }
      // At the rounding floor of f the Armijo test is noise; take the full
      // step if it is flat in value and shrinks the gradient.
      if (halving == 0 && next.value <= cur.value + 4e-16 * std::max(1.0, std::abs(cur.value))) {
        const Eigen::VectorXd g_next = wm.transpose() * next.probs - target;
        if (g_next.lpNorm<Eigen::Infinity>() < grad.lpNorm<Eigen::Infinity>()) {
          accepted = true;
          break;
        }
      }
    }
    if (!saw_finite) throw NumericalError("fit objective stayed non-finite while backtracking");
    if (!accepted) break;

    report.h += t * step;
    cur = std::move(next);
    grad = wm.transpose() * cur.probs - target;
    report.objective_trace.push_back(cur.value);
    ++report.iterations;
  }

  report.grad_norm = grad.lpNorm<Eigen::Infinity>();
  report.ce = cur.value;
  report.converged = report.grad_norm <= tol;
  return report;
}

double eym_residual(const CondDistMatrix& a, std::size_t rank) {
  if (!a.all_finite()) throw Refused("EYM residual needs finite log-probabilities");
  const std::size_t limit = std::min(a.vocab_size(), a.prefixes());
  if (rank < 1 || rank > limit) throw ConfigError("rank must be in [1, min(v, n)]");
  const Eigen::VectorXd sigma = linalg::singular_values(a.log_probs());
  double residual = 0.0;
  for (Eigen::Index i = sigma.size() - 1; i >= static_cast<Eigen::Index>(rank); --i) {
    residual += sigma[i] * sigma[i];
  }
  return residual;
}

UnderestimationReport max_log_underestimation(const CondDistMatrix& a_true,
                                              const CondDistMatrix& a_model) {
  const Eigen::MatrixXd& t = a_true.log_probs();
  const Eigen::MatrixXd& m = a_model.log_probs();
  if (t.rows() != m.rows() || t.cols() != m.cols()) throw InvalidInput("matrix shapes differ");

  UnderestimationReport out;
  out.max_underestimation = -std::numeric_limits<double>::infinity();
  out.upper_bound = -m.minCoeff();
  for (Eigen::Index j = 0; j < t.cols(); ++j) {
    for (Eigen::Index i = 0; i < t.rows(); ++i) {
      if (!std::isfinite(t(i, j))) continue;
      const double gap = t(i, j) - m(i, j);
      if (gap > out.max_underestimation) {
        out.max_underestimation = gap;
        out.row = static_cast<std::size_t>(i);
        out.col = static_cast<std::size_t>(j);
      }
    }
  }
  if (out.max_underestimation > out.upper_bound) {
    throw NumericalError("underestimation exceeds -min(A_model)");
  }
  return out;
}

CondDistMatrix model_logprob_matrix(const SoftmaxMatrix& w, const Eigen::MatrixXd& hidden) {
  if (static_cast<std::size_t>(hidden.rows()) != w.hidden_size()) {
    throw InvalidInput("hidden states have the wrong dimension");
  }
  if (!hidden.allFinite()) throw InvalidInput("hidden states are not finite");
  const Eigen::MatrixXd z = w.weights() * hidden;
  Eigen::MatrixXd out(z.rows(), z.cols());
  for (Eigen::Index j = 0; j < z.cols(); ++j) {
    const std::vector<double> col = log_softmax(std::span<const double>(z.col(j).data(),
                                                                        static_cast<std::size_t>(z.rows())));
    out.col(j) = Eigen::Map<const Eigen::VectorXd>(col.data(), z.rows());
  }
  return CondDistMatrix(std::move(out));
}

Eigen::MatrixXd truncated_logprob_matrix(const SoftmaxMatrix& w, const Eigen::MatrixXd& hidden,
                                         const TruncationRule& rule, double sentinel) {
  const Eigen::MatrixXd z = w.weights() * hidden;
  Eigen::MatrixXd out = Eigen::MatrixXd::Constant(z.rows(), z.cols(), sentinel);
  for (Eigen::Index j = 0; j < z.cols(); ++j) {
    const Distribution p = softmax(std::span<const double>(z.col(j).data(), static_cast<std::size_t>(z.rows())));
    const CandidateSet kept = truncate(p, threshold_for(rule, p));
    for (std::size_t i : kept.accepted) {
      out(static_cast<Eigen::Index>(i), j) = std::log(kept.renormalized[i]);
    }
  }
  return out;
}

RankExperiment truncated_rank_experiment(const SoftmaxMatrix& w, const Eigen::MatrixXd& hidden,
                                         const TruncationRule& rule, const RankOptions& options,
                                         bool with_curve) {
  const Eigen::MatrixXd pre = model_logprob_matrix(w, hidden).log_probs();
  const Eigen::MatrixXd post = truncated_logprob_matrix(w, hidden, rule, options.sentinel);

  auto rank_of = [&](const Eigen::MatrixXd& m) {
    return linalg::numeric_rank(linalg::singular_values(m), options.rel_tol);
  };

  RankExperiment out;
  out.pre_rank = rank_of(pre);
  out.post_rank = rank_of(post);
  if (with_curve) {
    const auto n = static_cast<std::size_t>(hidden.cols());
    for (std::size_t k : curve_points(n)) {
      if (k == n) {
        out.curve.push_back({k, out.pre_rank, out.post_rank});
        continue;
      }
      const auto cols = static_cast<Eigen::Index>(k);
      out.curve.push_back({k, rank_of(pre.leftCols(cols)), rank_of(post.leftCols(cols))});
    }
  }
  return out;
}

}  // namespace bat::lab

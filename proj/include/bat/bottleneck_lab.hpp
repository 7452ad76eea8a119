#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

#include <Eigen/Dense>

#include "bat/prob_core.hpp"
#include "bat/sampler.hpp"
#include "bat/truncation.hpp"

namespace bat::lab {

/// v x n matrix of log-probabilities; column j is the next-token
/// distribution for prefix j. -inf marks zero probability.
class CondDistMatrix {
 public:
  /// Throws InvalidInput unless every column exponentiates to mass 1
  /// within kMassTolerance.
  explicit CondDistMatrix(Eigen::MatrixXd log_probs);

  const Eigen::MatrixXd& log_probs() const { return entries_; }
  std::size_t vocab_size() const { return static_cast<std::size_t>(entries_.rows()); }
  std::size_t prefixes() const { return static_cast<std::size_t>(entries_.cols()); }

  Distribution column(std::size_t j) const;
  bool all_finite() const;

 private:
  Eigen::MatrixXd entries_;
};

/// Random true distributions: ceil(support_frac * v) tokens per column get
/// softmax-of-Gaussian mass, the rest are exact zeros.
CondDistMatrix synth_true_matrix(std::size_t v, std::size_t n, double support_frac,
                                 std::uint64_t seed);

struct FitReport {
  Eigen::VectorXd h;
  std::size_t iterations = 0;
  /// ||W^T (softmax(W h) - p*)||_inf at the returned h.
  double grad_norm = 0.0;
  /// CE(p*, softmax(W h)) in nats.
  double ce = 0.0;
  bool converged = false;
  /// Objective value after every accepted step, starting at h = 0.
  std::vector<double> objective_trace;
};

/// Minimizes log sum exp(W h) - (W^T p*) . h from h = 0 with Newton steps
/// and Armijo backtracking (factor 0.5, c = 1e-4). Stops at grad_norm <= tol
/// or after max_iter steps; a non-converged result is returned as is.
/// Throws NumericalError if the objective stays non-finite while
/// backtracking.
FitReport fit_hidden_state(const SoftmaxMatrix& w, const Distribution& p_star, double tol = 1e-10,
                           std::size_t max_iter = 200);

/// Sum of sigma_i^2 for i > r: the least squared Frobenius error of any
/// rank-r approximation. Refuses matrices with -inf entries.
double eym_residual(const CondDistMatrix& a, std::size_t rank);

struct UnderestimationReport {
  /// max over finite A_true entries of A_true - A_model.
  double max_underestimation = 0.0;
  /// -min(A_model), which bounds the above since A_true <= 0.
  double upper_bound = 0.0;
  std::size_t row = 0;
  std::size_t col = 0;
};

/// Throws NumericalError if the bound is violated, which would mean A_true
/// has a positive log-probability.
UnderestimationReport max_log_underestimation(const CondDistMatrix& a_true,
                                              const CondDistMatrix& a_model);

/// Column-wise log_softmax(W H).
CondDistMatrix model_logprob_matrix(const SoftmaxMatrix& w, const Eigen::MatrixXd& hidden);

struct RankOptions {
  double rel_tol = 1e-8;
  /// Stand-in for log 0 after truncation.
  double sentinel = -1e4;
};

struct RankPoint {
  std::size_t prefixes = 0;
  std::size_t pre_rank = 0;
  std::size_t post_rank = 0;
};

struct RankExperiment {
  std::size_t pre_rank = 0;
  std::size_t post_rank = 0;
  std::vector<RankPoint> curve;  // prefix counts 1, 2, 4, ..., n
};

/// Applies truncate(threshold_for(rule)) to every column of softmax(W H),
/// takes logs with truncated entries set to options.sentinel, and compares
/// numeric ranks before and after.
RankExperiment truncated_rank_experiment(const SoftmaxMatrix& w, const Eigen::MatrixXd& hidden,
                                         const TruncationRule& rule,
                                         const RankOptions& options = {},
                                         bool with_curve = true);

/// log of each truncated-and-renormalized column, sentinel where truncated.
Eigen::MatrixXd truncated_logprob_matrix(const SoftmaxMatrix& w, const Eigen::MatrixXd& hidden,
                                         const TruncationRule& rule, double sentinel);

}  // namespace bat::lab

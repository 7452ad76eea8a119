#pragma once

#include <cstddef>
#include <memory>
#include <mutex>
#include <vector>

#include <Eigen/Dense>

#include "bat/linprog.hpp"
#include "bat/prob_core.hpp"
#include "bat/rng.hpp"
#include "bat/truncation.hpp"

namespace bat {

struct ThinSvd {
  Eigen::MatrixXd u;      // v x r, orthonormal columns
  Eigen::VectorXd sigma;  // r, descending, > 0
  Eigen::MatrixXd v;      // d x r
};

/// The v x d softmax (embedding) matrix W with a lazily computed thin SVD.
class SoftmaxMatrix {
 public:
  explicit SoftmaxMatrix(Eigen::MatrixXd weights);

  const Eigen::MatrixXd& weights() const { return weights_; }
  std::size_t vocab_size() const { return static_cast<std::size_t>(weights_.rows()); }
  std::size_t hidden_size() const { return static_cast<std::size_t>(weights_.cols()); }

  Eigen::VectorXd logits(const Eigen::VectorXd& hidden) const;
  Distribution distribution(const Eigen::VectorXd& hidden) const;

  /// Thin SVD from the Jacobi eigendecomposition of W^T W, with
  /// sigma_k = |W v_k|. Columns with sigma_k <= 1e-12 sigma_1 are dropped;
  /// each U column has its first nonzero entry positive. Computed once,
  /// thread-safe.
  const ThinSvd& thin_svd() const;

 private:
  struct SvdCache {
    std::once_flag once;
    std::unique_ptr<ThinSvd> svd;
  };

  Eigen::MatrixXd weights_;
  // Shared by copies; W is immutable so the decomposition is too.
  std::shared_ptr<SvdCache> cache_ = std::make_shared<SvdCache>();
};

/// First c left-singular vectors of W.
struct BasisConstraints {
  Eigen::MatrixXd u_c;  // v x c
  std::size_t requested = 0;
  /// rank(W) < requested; u_c holds every available column.
  bool shortfall = false;

  std::size_t count() const { return static_cast<std::size_t>(u_c.cols()); }
  std::size_t vocab_size() const { return static_cast<std::size_t>(u_c.rows()); }

  /// No basis-aware rows: the program reduces to plain threshold truncation.
  static BasisConstraints none(std::size_t v);
};

struct BatConfig {
  std::size_t constraints = 20;
  std::size_t max_retries = 32;
  TruncationRule base_rule{RuleKind::Eta, 0.002};
  double tol = lp::kDefaultTolerance;

  void validate() const;
};

/// Throws ConfigError unless 1 <= c <= d.
BasisConstraints svd_reduce(const SoftmaxMatrix& w, std::size_t c);

/// Feasibility program for "token may have zero true probability":
/// p[token] = 0, sum p = 1, 0 <= p_j <= p_hat_j exp(delta), U_c^T p = U_c^T p_hat.
lp::FeasibilityProgram build_program(const Distribution& p_hat, const BasisConstraints& basis,
                                     Delta delta, std::size_t token);

struct ProofStats {
  std::size_t solver_calls = 0;
  std::size_t fastpath_hits = 0;
};

/// Decides membership in the provable support for one (p_hat, basis, delta)
/// step. The program is assembled once and reused across tokens.
class SupportProver {
 public:
  SupportProver(const Distribution& p_hat, const BasisConstraints& basis, Delta delta,
                double tol = lp::kDefaultTolerance);

  /// True iff the token's program is infeasible. Tokens above
  /// 1 - exp(-delta) are accepted without solving.
  bool proves(std::size_t token, ProofStats* stats = nullptr) const;

  double fastpath_threshold() const { return tau_; }
  const lp::FeasibilityProgram& program() const { return base_; }

 private:
  Distribution p_hat_;
  lp::FeasibilityProgram base_;
  double tau_;
  double tol_;
};

/// One-shot form of SupportProver::proves.
bool proves_in_support(const Distribution& p_hat, const BasisConstraints& basis, Delta delta,
                       std::size_t token, ProofStats* stats = nullptr,
                       double tol = lp::kDefaultTolerance);

struct BatDiagnostics {
  std::size_t solver_calls = 0;
  std::size_t fastpath_hits = 0;
  std::size_t retries = 0;
  bool fallback = false;
};

struct BatStep {
  std::size_t token = 0;
  BatDiagnostics diagnostics;
};

/// Rejection sampling from p_hat restricted to provable tokens.
///
/// Rejected tokens are masked out of later draws, so each is solved at most
/// once. After config.max_retries rejections, or when every supported token
/// has been rejected, returns argmax(p_hat) and sets diagnostics.fallback.
/// Infinite delta is greedy.
BatStep bat_sample(const Distribution& p_hat, const BasisConstraints& basis, Delta delta,
                   Rng& rng, const BatConfig& config);

struct CandidateOptions {
  std::size_t max_vocab = 2048;
  bool allow_large = false;
  double tol = lp::kDefaultTolerance;
};

/// Every provable token, ascending. Refused above options.max_vocab unless
/// options.allow_large is set.
std::vector<std::size_t> candidate_set(const Distribution& p_hat, const BasisConstraints& basis,
                                       Delta delta, const CandidateOptions& options = {});

/// BA-epsilon / BA-eta / BA-tau / BA-nucleus: delta comes from the rule's
/// per-step threshold; tau >= 1 is greedy. TopK is rejected.
BatStep ba_rule_sample(const Distribution& p_hat, const BasisConstraints& basis,
                       const TruncationRule& rule, Rng& rng, const BatConfig& config);

}  // namespace bat

#pragma once

#include <cstddef>
#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Dense>

#include "bat/bottleneck_lab.hpp"
#include "bat/prob_core.hpp"
#include "bat/sampler.hpp"
#include "bat/truncation.hpp"

namespace bat {

inline constexpr std::string_view kVersion = "0.1.0";

/// Largest number of contexts build_toy_model will enumerate.
inline constexpr std::size_t kMaxToyContexts = 65536;

using Context = std::vector<std::uint32_t>;

/// Order-m tabular model: each m-token context maps to a hidden state h and
/// the next-token distribution is softmax(W h).
struct ToyModel {
  SoftmaxMatrix w;
  std::size_t context_order = 0;
  std::map<Context, Eigen::VectorXd> contexts;
  Eigen::VectorXd fallback_h;

  std::size_t vocab_size() const { return w.vocab_size(); }
  std::size_t hidden_size() const { return w.hidden_size(); }

  /// Hidden state for the last m tokens of history; fallback_h when the
  /// history is shorter than m or the context is not in the table.
  const Eigen::VectorXd& hidden_for(std::span<const std::uint32_t> history) const;
  Distribution distribution(std::span<const std::uint32_t> history) const;

  /// Throws InvalidInput on non-finite states or inconsistent sizes.
  void validate() const;
};

/// Context with index id in base-v order (first token most significant).
Context decode_context(std::size_t id, std::size_t v, std::size_t m);
std::size_t encode_context(std::span<const std::uint32_t> ctx, std::size_t v);

/// v^m, or Refused when it exceeds kMaxToyContexts.
std::size_t context_count(std::size_t v, std::size_t m);

struct ToyBuild {
  ToyModel model;
  /// Column j is p*(. | decode_context(j)).
  lab::CondDistMatrix truth;
  /// Largest fit gradient norm over all contexts.
  double max_grad_norm = 0.0;
};

/// Synthetic order-m Markov ground truth, Gaussian W, and one fitted hidden
/// state per context (fit tolerance fit_tol). The fallback state is fitted
/// to the average ground-truth column.
ToyBuild build_toy_model(std::size_t v, std::size_t d, std::size_t m, std::uint64_t seed,
                         double support_frac = 1.0, double fit_tol = 1e-8);

/// The three-token, one-dimensional example: W^T = [0.55, 0.71, 0.29].
Eigen::MatrixXd toy_demo_weights();

/// m = 0 model over toy_demo_weights() with h fitted to p* = [0, 0.7, 0.3].
ToyBuild toy_demo_model();

struct Corpus {
  std::size_t vocab_size = 0;
  std::vector<std::vector<std::uint32_t>> docs;

  /// Throws InvalidInput if any id is >= vocab_size.
  void validate() const;
  /// Number of positions t >= m across all documents.
  std::size_t positions(std::size_t m) const;
};

/// Documents drawn from the ground-truth chain. Each starts with m uniform
/// tokens followed by doc_len tokens from p*(. | previous m tokens).
Corpus sample_corpus(const lab::CondDistMatrix& truth, std::size_t m, std::size_t docs,
                     std::size_t doc_len, std::uint64_t seed);

/// Truncation rule, optionally basis-aware (written `ba-<rule>`).
struct SamplerSpec {
  bool basis_aware = false;
  TruncationRule rule;

  static SamplerSpec parse(std::string_view text);
  std::string to_string() const;
};

struct GenerateOptions {
  std::size_t constraints = 20;  // clamped to the hidden size
  std::size_t max_retries = 32;
  double tol = lp::kDefaultTolerance;
  /// Recompute candidate_set at every BAT step and check the emitted token.
  bool audit = false;
};

struct GenerateStep {
  std::size_t token = 0;
  BatDiagnostics diagnostics;
  bool audit_violation = false;
};

struct GenerateResult {
  std::vector<std::uint32_t> tokens;  // continuation only
  std::vector<GenerateStep> steps;
  std::size_t audit_violations = 0;
};

GenerateResult generate(const ToyModel& model, std::span<const std::uint32_t> prefix,
                        const SamplerSpec& spec, std::size_t length, std::uint64_t seed,
                        const GenerateOptions& options = {});

}  // namespace bat

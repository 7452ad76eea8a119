#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "bat/rng.hpp"

namespace bat {

/// Absolute tolerance on the total mass of a probability vector.
inline constexpr double kMassTolerance = 1e-9;

/// Probability vector over a vocabulary.
///
/// Entries are non-negative and sum to one. Construction renormalizes inputs
/// whose mass is within kMassTolerance of one and rejects anything else.
/// Exact zeros are out of support.
class Distribution {
 public:
  static Distribution from_probs(std::vector<double> probs);

  /// Normalizes any non-negative vector with positive finite mass. Used for
  /// LP witnesses and masked weights, whose mass is only known to solver
  /// tolerance.
  static Distribution from_weights(std::vector<double> weights);

  static Distribution uniform(std::size_t v);
  static Distribution one_hot(std::size_t v, std::size_t index);

  std::size_t size() const { return probs_.size(); }
  double operator[](std::size_t i) const { return probs_[i]; }
  std::span<const double> probs() const { return probs_; }

  /// Index of the largest probability, lowest index on ties.
  std::size_t argmax() const;

  double max() const { return probs_[argmax()]; }

  /// Number of strictly positive entries.
  std::size_t support_size() const;

 private:
  explicit Distribution(std::vector<double> probs) : probs_(std::move(probs)) {}

  std::vector<double> probs_;
};

/// Assumed bound on log-probability underestimation, in nats. +inf means
/// greedy.
class Delta {
 public:
  explicit Delta(double nats);
  double nats() const { return nats_; }
  bool is_infinite() const;

 private:
  double nats_;
};

Distribution softmax(std::span<const double> logits);

std::vector<double> log_softmax(std::span<const double> logits);

/// Shannon entropy in nats; 0 log 0 = 0.
double entropy(const Distribution& d);

/// -sum p_i log q_i in nats. Returns +inf when q is zero somewhere p is not.
double cross_entropy(const Distribution& p, const Distribution& q);

/// Inverse-CDF draw; never returns a zero-probability index.
std::size_t sample_categorical(const Distribution& d, Rng& rng);

/// tau = 1 - exp(-delta).
double tau_from_delta(Delta delta);

/// delta = -log(1 - tau). Throws DomainError unless 0 <= tau < 1.
Delta delta_from_tau(double tau);

/// Shortest decimal text that parses back to x; plain notation for
/// moderate magnitudes.
std::string format_real(double x);

}  // namespace bat

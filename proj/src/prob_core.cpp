#include "bat/prob_core.hpp"

#include <algorithm>
#include <cfloat>
#include <charconv>
#include <cmath>
#include <limits>
#include <numeric>
#include <string>

#include "bat/error.hpp"

namespace bat {

namespace {

void check_finite(std::span<const double> logits) {
  if (logits.empty()) throw InvalidInput("logits are empty");
  for (double x : logits) {
    if (!std::isfinite(x)) throw InvalidInput("logits contain a non-finite value");
  }
}

}  // namespace

Distribution Distribution::from_probs(std::vector<double> probs) {
  if (probs.empty()) throw InvalidInput("distribution is empty");
  double mass = 0.0;
  for (double p : probs) {
    if (!std::isfinite(p) || p < 0.0) {
      throw InvalidInput("distribution entry is negative or non-finite");
    }
    mass += p;
  }
  if (std::abs(mass - 1.0) > kMassTolerance) {
    throw InvalidInput("distribution mass " + std::to_string(mass) + " is not 1");
  }
  for (double& p : probs) p /= mass;
  return Distribution(std::move(probs));
}

Distribution Distribution::from_weights(std::vector<double> weights) {
  if (weights.empty()) throw InvalidInput("weights are empty");
  double mass = 0.0;
  for (double w : weights) {
    if (!std::isfinite(w) || w < 0.0) throw InvalidInput("weight is negative or non-finite");
    mass += w;
  }
  if (!(mass > 0.0)) throw InvalidInput("weights have zero mass");
  for (double& w : weights) w /= mass;
  return Distribution(std::move(weights));
}

Distribution Distribution::uniform(std::size_t v) {
  if (v == 0) throw InvalidInput("distribution is empty");
  return Distribution(std::vector<double>(v, 1.0 / static_cast<double>(v)));
}

Distribution Distribution::one_hot(std::size_t v, std::size_t index) {
  if (index >= v) throw InvalidInput("one-hot index out of range");
  std::vector<double> probs(v, 0.0);
  probs[index] = 1.0;
  return Distribution(std::move(probs));
}

std::size_t Distribution::argmax() const {
  return static_cast<std::size_t>(std::max_element(probs_.begin(), probs_.end()) -
                                  probs_.begin());
}

std::size_t Distribution::support_size() const {
  return static_cast<std::size_t>(
      std::count_if(probs_.begin(), probs_.end(), [](double p) { return p > 0.0; }));
}

Delta::Delta(double nats) : nats_(nats) {
  if (std::isnan(nats) || nats < 0.0) throw DomainError("delta must be >= 0");
}

bool Delta::is_infinite() const { return std::isinf(nats_); }

Distribution softmax(std::span<const double> logits) {
  check_finite(logits);
  const double top = *std::max_element(logits.begin(), logits.end());
  std::vector<double> probs(logits.size());
  double mass = 0.0;
  for (std::size_t i = 0; i < logits.size(); ++i) {
    double e = std::exp(logits[i] - top);
    // Subnormals become hard zeros so LP bounds never carry denormal noise.
    if (e < DBL_MIN) e = 0.0;
    probs[i] = e;
    mass += e;
  }
  for (double& p : probs) {
    p /= mass;
    if (p < DBL_MIN) p = 0.0;
  }
  return Distribution::from_weights(std::move(probs));
}

std::vector<double> log_softmax(std::span<const double> logits) {
  check_finite(logits);
  const double top = *std::max_element(logits.begin(), logits.end());
  double mass = 0.0;
  for (double x : logits) mass += std::exp(x - top);
  const double log_norm = top + std::log(mass);
  std::vector<double> out(logits.size());
  for (std::size_t i = 0; i < logits.size(); ++i) out[i] = logits[i] - log_norm;
  return out;
}

double entropy(const Distribution& d) {
  double h = 0.0;
  for (double p : d.probs()) {
    if (p > 0.0) h -= p * std::log(p);
  }
  return std::max(h, 0.0);
}

double cross_entropy(const Distribution& p, const Distribution& q) {
  if (p.size() != q.size()) throw InvalidInput("cross entropy of mismatched sizes");
  double ce = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    if (p[i] == 0.0) continue;
    if (q[i] == 0.0) return std::numeric_limits<double>::infinity();
    ce -= p[i] * std::log(q[i]);
  }
  return ce;
}

std::size_t sample_categorical(const Distribution& d, Rng& rng) {
  const double u = rng.uniform();
  double cumulative = 0.0;
  std::size_t last_positive = d.argmax();
  for (std::size_t i = 0; i < d.size(); ++i) {
    if (d[i] <= 0.0) continue;
    cumulative += d[i];
    last_positive = i;
    if (u < cumulative) return i;
  }
  // u landed in the rounding gap above the accumulated mass.
  return last_positive;
}

double tau_from_delta(Delta delta) {
  if (delta.is_infinite()) return 1.0;
  return -std::expm1(-delta.nats());
}

Delta delta_from_tau(double tau) {
  if (std::isnan(tau) || tau < 0.0 || tau >= 1.0) {
    throw DomainError("tau must lie in [0, 1); tau >= 1 means greedy");
  }
  return Delta(-std::log1p(-tau));
}

std::string format_real(double x) {
  char buf[64];
  const double mag = std::abs(x);
  const bool plain = x == 0.0 || (mag >= 1e-5 && mag < 1e15);
  const auto res = plain ? std::to_chars(buf, buf + sizeof buf, x, std::chars_format::fixed)
                         : std::to_chars(buf, buf + sizeof buf, x);
  return std::string(buf, res.ptr);
}

}  // namespace bat

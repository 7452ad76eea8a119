#include <doctest.h>

#include <cmath>
#include <limits>
#include <vector>

#include "bat/error.hpp"
#include "bat/prob_core.hpp"
#include "test_util.hpp"

using namespace bat;

namespace {

std::vector<double> toy_logits() {
  const double h = 2.55;
  return {0.55 * h, 0.71 * h, 0.29 * h};
}

}  // namespace

TEST_CASE("distribution construction") {
  const Distribution d = Distribution::from_probs({0.2, 0.3, 0.5 + 1e-11});
  double total = 0.0;
  for (double x : d.probs()) total += x;
  CHECK(total == doctest::Approx(1.0).epsilon(1e-15));
  CHECK_THROWS_AS(Distribution::from_probs({0.2, 0.3, 0.5 + 1e-6}), InvalidInput);
  CHECK_THROWS_AS(Distribution::from_probs({-0.1, 1.1}), InvalidInput);
  CHECK_THROWS_AS(Distribution::from_probs({}), InvalidInput);
  CHECK_THROWS_AS(Distribution::from_weights({0.0, 0.0}), InvalidInput);

  const Distribution w = Distribution::from_weights({1.0, 3.0});
  CHECK(w[1] == doctest::Approx(0.75));
  CHECK(Distribution::uniform(4)[2] == 0.25);
  CHECK(Distribution::one_hot(5, 3).support_size() == 1);
  CHECK(Distribution::from_probs({0.4, 0.2, 0.4}).argmax() == 0);
}

TEST_CASE("softmax examples") {
  const Distribution p = softmax(toy_logits());
  CHECK(std::abs(p[0] - 0.33) <= 5e-3);
  CHECK(std::abs(p[1] - 0.50) <= 5e-3);
  CHECK(std::abs(p[2] - 0.17) <= 5e-3);

  const Distribution u = softmax(std::vector<double>{0, 0, 0});
  for (double x : u.probs()) CHECK(x == doctest::Approx(1.0 / 3.0).epsilon(1e-15));

  for (double c : {-700.0, -3.0, 0.0, 12.5, 700.0}) {
    const Distribution q = softmax(std::vector<double>{c, c + std::log(2.0)});
    CHECK(q[0] == doctest::Approx(1.0 / 3.0).epsilon(1e-12));
    CHECK(q[1] == doctest::Approx(2.0 / 3.0).epsilon(1e-12));
  }

  CHECK_THROWS_AS(softmax(std::vector<double>{0.0, std::nan("")}), InvalidInput);
  CHECK_THROWS_AS(softmax(std::vector<double>{0.0, std::numeric_limits<double>::infinity()}),
                  InvalidInput);
}

TEST_CASE("softmax underflow becomes a hard zero") {
  const Distribution p = softmax(std::vector<double>{0.0, -800.0});
  CHECK(p[1] == 0.0);
  CHECK(p.support_size() == 1);
}

TEST_CASE("softmax properties on random logits") {
  Rng rng(11);
  for (int trial = 0; trial < 100; ++trial) {
    std::vector<double> x(1 + rng.below(40));
    for (double& e : x) e = 5.0 * rng.normal();
    const Distribution p = softmax(x);

    double total = 0.0;
    std::size_t best = 0;
    for (std::size_t i = 0; i < x.size(); ++i) {
      CHECK(p[i] >= 0.0);
      total += p[i];
      if (x[i] > x[best]) best = i;
    }
    CHECK(std::abs(total - 1.0) <= 1e-12);
    CHECK(p.argmax() == best);

    const double c = 100.0 * rng.normal();
    std::vector<double> shifted = x;
    for (double& e : shifted) e += c;
    const Distribution q = softmax(shifted);
    for (std::size_t i = 0; i < x.size(); ++i) CHECK(std::abs(p[i] - q[i]) <= 1e-12);

    const std::vector<double> lp = log_softmax(x);
    for (std::size_t i = 0; i < x.size(); ++i) {
      CHECK(lp[i] <= 0.0);
      CHECK(std::abs(std::exp(lp[i]) - p[i]) <= 1e-12);
    }
  }
}

TEST_CASE("log_softmax examples") {
  const std::vector<double> a = log_softmax(std::vector<double>{0.0, 0.0});
  CHECK(a[0] == doctest::Approx(-std::log(2.0)).epsilon(1e-15));
  CHECK(a[1] == doctest::Approx(-std::log(2.0)).epsilon(1e-15));

  const std::vector<double> b = log_softmax(std::vector<double>{1000.0, 0.0});
  CHECK(std::isfinite(b[0]));
  CHECK(std::abs(b[0]) <= 1e-300);
  CHECK(b[1] == doctest::Approx(-1000.0).epsilon(1e-15));
}

TEST_CASE("entropy") {
  CHECK(entropy(Distribution::uniform(4)) == doctest::Approx(std::log(4.0)).epsilon(1e-15));
  CHECK(entropy(Distribution::one_hot(7, 2)) == 0.0);

  const Distribution toy = Distribution::from_probs({0.33, 0.50, 0.17});
  long double oracle = 0.0L;
  for (double x : {0.33, 0.50, 0.17}) oracle -= static_cast<long double>(x) * std::log(static_cast<long double>(x));
  CHECK(std::abs(entropy(toy) - static_cast<double>(oracle)) <= 1e-12);

  Rng rng(3);
  for (int trial = 0; trial < 50; ++trial) {
    const std::size_t v = 2 + rng.below(30);
    const Distribution d = testutil::random_distribution(rng, v, 2.0, rng.below(v));
    const double h = entropy(d);
    CHECK(h >= 0.0);
    CHECK(h <= std::log(static_cast<double>(v)) + 1e-12);
  }
}

TEST_CASE("cross entropy") {
  Rng rng(5);
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t v = 2 + rng.below(20);
    const Distribution p = testutil::random_distribution(rng, v, 1.5, rng.below(v));
    const Distribution q = testutil::random_distribution(rng, v, 1.5);
    CHECK(cross_entropy(p, p) == doctest::Approx(entropy(p)).epsilon(1e-12));
    CHECK(cross_entropy(p, q) >= entropy(p) - 1e-12);

    const std::size_t i = rng.below(v);
    CHECK(cross_entropy(Distribution::one_hot(v, i), q) == doctest::Approx(-std::log(q[i])).epsilon(1e-12));
  }
  const Distribution p = Distribution::from_probs({0.5, 0.5});
  const Distribution q = Distribution::one_hot(2, 0);
  CHECK(std::isinf(cross_entropy(p, q)));
  CHECK(cross_entropy(q, p) == doctest::Approx(std::log(2.0)));
  CHECK_THROWS_AS(cross_entropy(p, Distribution::uniform(3)), InvalidInput);
}

TEST_CASE("sample_categorical") {
  Rng rng(1);
  const Distribution hot = Distribution::one_hot(6, 3);
  for (int k = 0; k < 1000; ++k) CHECK(sample_categorical(hot, rng) == 3);

  const Distribution d = Distribution::from_probs({0.25, 0.75});
  Rng draws(2024);
  const int n = 1'000'000;
  int ones = 0;
  for (int k = 0; k < n; ++k) ones += sample_categorical(d, draws) == 1 ? 1 : 0;
  CHECK(std::abs(static_cast<double>(ones) / n - 0.75) <= 0.005);

  Rng a(99), b(99);
  const Distribution r = Distribution::from_probs({0.1, 0.2, 0.3, 0.4});
  for (int k = 0; k < 100; ++k) CHECK(sample_categorical(r, a) == sample_categorical(r, b));

  // Zero-probability tokens are never drawn.
  const Distribution gaps = Distribution::from_probs({0.0, 0.5, 0.0, 0.5, 0.0});
  Rng g(8);
  for (int k = 0; k < 10000; ++k) {
    const std::size_t t = sample_categorical(gaps, g);
    CHECK((t == 1 || t == 3));
  }
}

TEST_CASE("delta and tau") {
  CHECK(tau_from_delta(Delta(0.0)) == 0.0);
  CHECK(tau_from_delta(Delta(std::log(1.9))) == doctest::Approx(1.0 - 1.0 / 1.9).epsilon(1e-15));
  CHECK(std::abs(tau_from_delta(Delta(std::log(1.9))) - 0.4737) <= 1e-4);
  CHECK(tau_from_delta(Delta(std::numeric_limits<double>::infinity())) == 1.0);
  CHECK(Delta(std::numeric_limits<double>::infinity()).is_infinite());

  CHECK(delta_from_tau(0.0).nats() == 0.0);
  CHECK(delta_from_tau(0.5).nats() == doctest::Approx(std::log(2.0)).epsilon(1e-15));
  CHECK_THROWS_AS(delta_from_tau(1.0), DomainError);
  CHECK_THROWS_AS(delta_from_tau(-0.1), DomainError);
  CHECK_THROWS_AS(Delta(-1e-3), DomainError);
  CHECK_THROWS_AS(Delta(std::nan("")), DomainError);

  Rng rng(17);
  double previous_tau = -1.0;
  for (int k = 0; k < 100; ++k) {
    const double tau = rng.uniform();
    CHECK(std::abs(tau_from_delta(delta_from_tau(tau)) - tau) <= 1e-12);
    const double delta = 0.05 * k;
    const double t = tau_from_delta(Delta(delta));
    CHECK(t > previous_tau);
    previous_tau = t;
  }
}

TEST_CASE("overestimation bound on random underestimated pairs") {
  Rng rng(123);
  for (int trial = 0; trial < 2000; ++trial) {
    const std::size_t v = 2 + rng.below(50);
    const double delta = 3.0 * rng.uniform();
    const testutil::UnderestimatedPair pair = testutil::underestimated_pair(rng, v, delta);
    const Distribution star = Distribution::from_probs(pair.p_star);
    const Distribution hat = Distribution::from_probs(pair.p_hat);
    double worst = -1.0;
    for (std::size_t i = 0; i < v; ++i) {
      if (star[i] > 0.0) CHECK(std::log(star[i]) - std::log(hat[i]) <= delta + 1e-12);
      worst = std::max(worst, hat[i] - star[i]);
    }
    CHECK(worst <= tau_from_delta(Delta(delta)) + 1e-12);
  }
}

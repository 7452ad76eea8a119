#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <limits>
#include <vector>

#include "bat/error.hpp"
#include "bat/sampler.hpp"
#include "test_util.hpp"

using namespace bat;

namespace {

SoftmaxMatrix toy_w() {
  Eigen::MatrixXd w(3, 1);
  w << 0.55, 0.71, 0.29;
  return SoftmaxMatrix(w);
}

Distribution toy_p() {
  Eigen::VectorXd h(1);
  h << 2.55;
  return toy_w().distribution(h);
}

const Delta kToyDelta(std::log(1.9));

std::vector<std::size_t> fast_set(const Distribution& p, Delta delta) {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < p.size(); ++i) {
    if (p[i] > tau_from_delta(delta)) out.push_back(i);
  }
  return out;
}

bool subset(const std::vector<std::size_t>& a, const std::vector<std::size_t>& b) {
  return std::includes(b.begin(), b.end(), a.begin(), a.end());
}

// Random instance where p_hat comes from the model so the moment rows matter.
struct Instance {
  SoftmaxMatrix w;
  Distribution p;
};

Instance random_instance(Rng& rng, Eigen::Index v, Eigen::Index d) {
  SoftmaxMatrix w(testutil::gaussian(rng, v, d));
  const Eigen::VectorXd h = testutil::gaussian(rng, d, 1);
  return {w, w.distribution(h)};
}

}  // namespace

TEST_CASE("thin SVD") {
  SUBCASE("identity") {
    const SoftmaxMatrix w(Eigen::MatrixXd::Identity(5, 5));
    const BasisConstraints b = svd_reduce(w, 3);
    CHECK(b.count() == 3);
    CHECK(!b.shortfall);
    CHECK((b.u_c - Eigen::MatrixXd::Identity(5, 5).leftCols(3)).cwiseAbs().maxCoeff() <= 1e-15);
  }
  SUBCASE("toy column") {
    const BasisConstraints b = svd_reduce(toy_w(), 1);
    const Eigen::Vector3d expected = Eigen::Vector3d(0.55, 0.71, 0.29) / std::sqrt(0.55 * 0.55 + 0.71 * 0.71 + 0.29 * 0.29);
    CHECK((b.u_c.col(0) - expected).cwiseAbs().maxCoeff() <= 1e-15);
    CHECK(std::abs(b.u_c(0, 0) - 0.5828) <= 1e-4);
    CHECK(std::abs(b.u_c(1, 0) - 0.7523) <= 1e-4);
    CHECK(std::abs(b.u_c(2, 0) - 0.3073) <= 1e-4);
  }
  SUBCASE("reconstruction and orthonormality on random W") {
    Rng rng(6);
    for (int trial = 0; trial < 5; ++trial) {
      const SoftmaxMatrix w(testutil::gaussian(rng, 200, 16));
      const ThinSvd& svd = w.thin_svd();
      const Eigen::MatrixXd back = svd.u * svd.sigma.asDiagonal() * svd.v.transpose();
      CHECK((back - w.weights()).norm() / w.weights().norm() <= 1e-10);
      CHECK((svd.u.transpose() * svd.u - Eigen::MatrixXd::Identity(16, 16)).cwiseAbs().maxCoeff() <= 1e-8);
      for (Eigen::Index k = 1; k < svd.sigma.size(); ++k) CHECK(svd.sigma[k] <= svd.sigma[k - 1]);
      for (Eigen::Index k = 0; k < svd.u.cols(); ++k) {
        Eigen::Index first = 0;
        while (svd.u(first, k) == 0.0) ++first;
        CHECK(svd.u(first, k) > 0.0);
      }
      // Singular values agree with an independent decomposition.
      const Eigen::VectorXd oracle = Eigen::JacobiSVD<Eigen::MatrixXd>(w.weights()).singularValues();
      CHECK((svd.sigma - oracle).cwiseAbs().maxCoeff() <= 1e-10 * oracle[0]);
    }
  }
  SUBCASE("rank shortfall") {
    Rng rng(7);
    const Eigen::MatrixXd low = testutil::gaussian(rng, 30, 2) * testutil::gaussian(rng, 2, 6);
    const BasisConstraints b = svd_reduce(SoftmaxMatrix(low), 5);
    CHECK(b.shortfall);
    CHECK(b.count() == 2);
    CHECK(b.requested == 5);
  }
  SUBCASE("copies share the cached decomposition") {
    const SoftmaxMatrix a = toy_w();
    const SoftmaxMatrix b = a;
    CHECK(&a.thin_svd() == &b.thin_svd());
  }
  CHECK_THROWS_AS(svd_reduce(toy_w(), 0), ConfigError);
  CHECK_THROWS_AS(svd_reduce(toy_w(), 2), ConfigError);
}

TEST_CASE("build_program") {
  const Distribution p = toy_p();
  const BasisConstraints b = svd_reduce(toy_w(), 1);
  const lp::FeasibilityProgram prog = build_program(p, b, kToyDelta, 0);
  CHECK(prog.n_vars() == 3);
  CHECK(prog.n_rows() == 2);
  CHECK(std::abs(prog.upper_bounds[0] - 0.629) <= 1e-3);
  CHECK(std::abs(prog.upper_bounds[1] - 0.946) <= 1e-3);
  CHECK(std::abs(prog.upper_bounds[2] - 0.325) <= 1e-3);
  CHECK(prog.eq_rhs[0] == 1.0);
  CHECK(prog.eq_rhs[1] == doctest::Approx(b.u_c.col(0).dot(Eigen::Map<const Eigen::VectorXd>(p.probs().data(), 3))));
  CHECK_THROWS_AS(build_program(p, b, Delta(std::numeric_limits<double>::infinity()), 0), DomainError);
  CHECK_THROWS_AS(build_program(p, b, kToyDelta, 3), InvalidInput);

  // delta = 0: every positive token is provable.
  for (std::size_t i = 0; i < 3; ++i) {
    CHECK(!lp::solve_feasibility(build_program(p, b, Delta(0.0), i)).feasible());
  }
}

TEST_CASE("proves_in_support on the toy example") {
  const Distribution p = toy_p();
  const BasisConstraints b = svd_reduce(toy_w(), 1);
  CHECK(!proves_in_support(p, b, kToyDelta, 0));
  CHECK(proves_in_support(p, b, kToyDelta, 1));
  CHECK(proves_in_support(p, b, kToyDelta, 2));

  ProofStats stats;
  CHECK(proves_in_support(p, b, kToyDelta, 1, &stats));
  CHECK(stats.fastpath_hits == 1);
  CHECK(stats.solver_calls == 0);
  CHECK(proves_in_support(p, b, kToyDelta, 2, &stats));
  CHECK(stats.solver_calls == 1);

  // Non-monotone acceptance: token 0 is rejected although it outranks token 2.
  CHECK(p[0] > p[2]);
}

TEST_CASE("fast path never calls the solver") {
  Rng rng(12);
  for (int trial = 0; trial < 100; ++trial) {
    const Instance inst = random_instance(rng, 30, 4);
    const BasisConstraints b = svd_reduce(inst.w, 4);
    const Delta delta(0.05 + rng.uniform());
    const SupportProver prover(inst.p, b, delta);
    for (std::size_t i = 0; i < inst.p.size(); ++i) {
      if (inst.p[i] <= tau_from_delta(delta)) continue;
      ProofStats stats;
      CHECK(prover.proves(i, &stats));
      CHECK(stats.solver_calls == 0);
      CHECK(stats.fastpath_hits == 1);
    }
  }
}

TEST_CASE("bat_sample") {
  const Distribution p = toy_p();
  const BasisConstraints b = svd_reduce(toy_w(), 1);
  BatConfig config;
  config.constraints = 1;

  SUBCASE("toy frequencies") {
    Rng rng(2025);
    const int n = 100'000;
    int ones = 0;
    for (int k = 0; k < n; ++k) {
      const BatStep step = bat_sample(p, b, kToyDelta, rng, config);
      REQUIRE(step.token != 0);
      CHECK(!step.diagnostics.fallback);
      ones += step.token == 1 ? 1 : 0;
    }
    const double expected = p[1] / (p[1] + p[2]);
    CHECK(std::abs(expected - 0.7448) <= 1e-3);
    CHECK(std::abs(static_cast<double>(ones) / n - expected) <= 0.01);
  }
  SUBCASE("rejected token is solved once") {
    Rng rng(1);
    for (int k = 0; k < 2000; ++k) {
      const BatStep step = bat_sample(p, b, kToyDelta, rng, config);
      CHECK(step.diagnostics.retries <= 1);
      CHECK(step.diagnostics.solver_calls <= 2);
    }
  }
  SUBCASE("one-hot is a fast-path draw") {
    Rng rng(3);
    const Distribution hot = Distribution::one_hot(3, 2);
    const BatStep step = bat_sample(hot, b, kToyDelta, rng, config);
    CHECK(step.token == 2);
    CHECK(step.diagnostics.solver_calls == 0);
    CHECK(step.diagnostics.fastpath_hits == 1);
  }
  SUBCASE("infinite delta is greedy") {
    Rng rng(4);
    for (int k = 0; k < 100; ++k) {
      CHECK(bat_sample(p, b, Delta(std::numeric_limits<double>::infinity()), rng, config).token == 1);
    }
  }
  SUBCASE("fallback after max_retries") {
    // Without moment rows every program here is feasible, the dominant
    // token's included, so sampling runs out of retries.
    std::vector<double> probs(20, 0.6 / 19);
    probs[7] = 0.4;
    const Distribution q = Distribution::from_probs(probs);
    const BasisConstraints none = BasisConstraints::none(20);
    const Delta delta(0.6);  // tau ~ 0.45 > 0.4, so even token 7 needs the solver
    BatConfig tight = config;
    tight.max_retries = 3;
    Rng rng(5);
    int fallbacks = 0;
    for (int k = 0; k < 200; ++k) {
      const BatStep step = bat_sample(q, none, delta, rng, tight);
      if (step.diagnostics.fallback) {
        ++fallbacks;
        CHECK(step.token == 7);
        CHECK(step.diagnostics.retries == 3);
      }
    }
    CHECK(fallbacks > 0);
  }
  SUBCASE("deterministic per seed") {
    Rng a(42), c(42);
    for (int k = 0; k < 500; ++k) {
      const BatStep x = bat_sample(p, b, kToyDelta, a, config);
      const BatStep y = bat_sample(p, b, kToyDelta, c, config);
      CHECK(x.token == y.token);
      CHECK(x.diagnostics.solver_calls == y.diagnostics.solver_calls);
      CHECK(x.diagnostics.retries == y.diagnostics.retries);
    }
  }
  Rng rng(1);
  BatConfig broken = config;
  broken.max_retries = 0;
  CHECK_THROWS_AS(bat_sample(p, b, kToyDelta, rng, broken), ConfigError);
}

TEST_CASE("bat_sample stays inside the candidate set") {
  Rng rng(77);
  for (int trial = 0; trial < 30; ++trial) {
    const Instance inst = random_instance(rng, 24, 3);
    const BasisConstraints b = svd_reduce(inst.w, 3);
    const Delta delta(0.1 + 2.0 * rng.uniform());
    const std::vector<std::size_t> allowed = candidate_set(inst.p, b, delta);
    BatConfig config;
    config.max_retries = 1000;
    for (int k = 0; k < 200; ++k) {
      const BatStep step = bat_sample(inst.p, b, delta, rng, config);
      if (step.diagnostics.fallback) continue;
      CHECK(std::binary_search(allowed.begin(), allowed.end(), step.token));
    }
  }
}

TEST_CASE("candidate_set") {
  const Distribution p = toy_p();
  const BasisConstraints b = svd_reduce(toy_w(), 1);
  CHECK(candidate_set(p, b, kToyDelta) == std::vector<std::size_t>{1, 2});
  CHECK(candidate_set(p, b, Delta(0.0)) == std::vector<std::size_t>{0, 1, 2});
  CHECK(candidate_set(p, b, Delta(std::numeric_limits<double>::infinity())) == std::vector<std::size_t>{1});

  const Distribution big = Distribution::uniform(2100);
  CHECK_THROWS_AS(candidate_set(big, BasisConstraints::none(2100), Delta(0.1)), Refused);
  CandidateOptions lifted;
  lifted.allow_large = true;
  CHECK(candidate_set(big, BasisConstraints::none(2100), Delta(1e-4), lifted).size() == 2100);

  SUBCASE("no moment rows reduces to the threshold set") {
    Rng rng(13);
    for (int trial = 0; trial < 200; ++trial) {
      const std::size_t v = 2 + rng.below(40);
      const Distribution q = testutil::random_distribution(rng, v, 2.0, rng.below(3));
      const Delta delta(0.01 + 3.0 * rng.uniform());
      CHECK(candidate_set(q, BasisConstraints::none(v), delta) == fast_set(q, delta));
    }
  }
  SUBCASE("delta = 0 keeps every supported token") {
    Rng rng(14);
    const Instance inst = random_instance(rng, 40, 5);
    const std::vector<std::size_t> all = candidate_set(inst.p, svd_reduce(inst.w, 5), Delta(0.0));
    CHECK(all.size() == inst.p.support_size());
  }
}

TEST_CASE("candidate_set is a superset of the threshold set and grows with c") {
  Rng rng(15);
  for (int trial = 0; trial < 40; ++trial) {
    const Eigen::Index d = 2 + static_cast<Eigen::Index>(rng.below(7));
    const Instance inst = random_instance(rng, 48, d);
    const Delta delta(0.05 + 1.5 * rng.uniform());
    std::vector<std::size_t> previous = fast_set(inst.p, delta);
    for (Eigen::Index c = 1; c <= d; ++c) {
      const std::vector<std::size_t> set = candidate_set(inst.p, svd_reduce(inst.w, static_cast<std::size_t>(c)), delta);
      CHECK(subset(fast_set(inst.p, delta), set));
      CHECK(subset(previous, set));
      previous = set;
    }
  }
}

TEST_CASE("candidate_set does not depend on the worker count") {
  Rng rng(16);
  const Instance inst = random_instance(rng, 300, 6);
  const BasisConstraints b = svd_reduce(inst.w, 6);
  const Delta delta(0.7);
  setenv("BAT_THREADS", "1", 1);
  const std::vector<std::size_t> serial = candidate_set(inst.p, b, delta);
  setenv("BAT_THREADS", "4", 1);
  const std::vector<std::size_t> threaded = candidate_set(inst.p, b, delta);
  unsetenv("BAT_THREADS");
  CHECK(serial == threaded);
}

TEST_CASE("ba_rule_sample") {
  const Distribution p = toy_p();
  const BasisConstraints b = svd_reduce(toy_w(), 1);
  BatConfig config;
  Rng rng(9);

  SUBCASE("epsilon = 0 is ancestral sampling") {
    std::vector<int> counts(3, 0);
    const int n = 100'000;
    for (int k = 0; k < n; ++k) {
      const BatStep step = ba_rule_sample(p, b, {RuleKind::Epsilon, 0.0}, rng, config);
      ++counts[step.token];
      CHECK(step.diagnostics.retries == 0);
    }
    for (std::size_t i = 0; i < 3; ++i) CHECK(std::abs(counts[i] / static_cast<double>(n) - p[i]) <= 0.01);
  }
  SUBCASE("fixed tau on the toy example") {
    for (int k = 0; k < 2000; ++k) {
      CHECK(ba_rule_sample(p, b, {RuleKind::FixedTau, 1.0 - 1.0 / 1.9}, rng, config).token != 0);
    }
  }
  SUBCASE("tau = 1 is greedy") {
    for (int k = 0; k < 100; ++k) CHECK(ba_rule_sample(p, b, {RuleKind::FixedTau, 1.0}, rng, config).token == 1);
  }
  SUBCASE("eta on a uniform distribution") {
    const std::size_t v = 50;
    const Distribution u = Distribution::uniform(v);
    const double eta = 0.05;
    const double tau = threshold_for({RuleKind::Eta, eta}, u);
    CHECK(tau == doctest::Approx(std::min(eta, std::sqrt(eta) * std::log(static_cast<double>(v)))));
    // Every token is at 1/v < tau, yet the uniform distribution cannot move
    // mass off any token without breaking sum = 1 under caps (1/v) exp(delta).
    const std::vector<std::size_t> set = candidate_set(u, BasisConstraints::none(v), delta_from_tau(tau));
    const bool expected_infeasible = (1.0 - 1.0 / v) / (1.0 - tau) < 1.0;
    CHECK(set.size() == (expected_infeasible ? v : 0));
  }
  CHECK_THROWS_AS(ba_rule_sample(p, b, {RuleKind::TopK, 2}, rng, config), ConfigError);
}

TEST_CASE("BatConfig validation") {
  BatConfig config;
  CHECK(config.constraints == 20);
  CHECK(config.max_retries == 32);
  CHECK_NOTHROW(config.validate());
  config.constraints = 0;
  CHECK_THROWS_AS(config.validate(), ConfigError);
  config.constraints = 1;
  config.max_retries = 0;
  CHECK_THROWS_AS(config.validate(), ConfigError);
}

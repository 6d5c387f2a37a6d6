#include <doctest.h>

#include <Eigen/Dense>
#include <cmath>

#include "miirl/mdp.hpp"
#include "oracles.hpp"

using namespace miirl;

namespace {

/// 3-state chain: action 0 steps left, action 1 steps right, clamped.
TabularMdp chain3(double discount = 0.9) {
  std::vector<Eigen::MatrixXd> p(2, Eigen::MatrixXd::Zero(3, 3));
  for (int s = 0; s < 3; ++s) {
    p[0](s, std::max(s - 1, 0)) = 1.0;
    p[1](s, std::min(s + 1, 2)) = 1.0;
  }
  return TabularMdp(std::move(p), discount, Eigen::VectorXd::Constant(3, 1.0 / 3));
}

TabularMdp single_state_single_action() {
  std::vector<Eigen::MatrixXd> p(1, Eigen::MatrixXd::Ones(1, 1));
  Eigen::VectorXd start(1);
  start << 1.0;
  return TabularMdp(std::move(p), 0.9, start);
}

/// 2 states, 2 actions, fully symmetric: every action from every state
/// leads to either state with probability 1/2.
TabularMdp symmetric2() {
  std::vector<Eigen::MatrixXd> p(2, Eigen::MatrixXd::Constant(2, 2, 0.5));
  return TabularMdp(std::move(p), 0.9, Eigen::VectorXd::Constant(2, 0.5));
}

}  // namespace

TEST_CASE("TabularMdp validates construction") {
  std::vector<Eigen::MatrixXd> bad(1, Eigen::MatrixXd::Constant(2, 2, 0.6));
  CHECK_THROWS(TabularMdp(bad, 0.9, Eigen::VectorXd::Constant(2, 0.5)));
  std::vector<Eigen::MatrixXd> ok(1, Eigen::MatrixXd::Constant(2, 2, 0.5));
  CHECK_THROWS(TabularMdp(ok, 1.0, Eigen::VectorXd::Constant(2, 0.5)));
  CHECK_THROWS(TabularMdp(ok, 0.9, Eigen::VectorXd::Constant(2, 0.7)));
}

TEST_CASE("soft VI: single action gets probability 1") {
  const TabularMdp mdp = single_state_single_action();
  Eigen::VectorXd r(1);
  r << 3.7;
  const SoftViResult res = soft_value_iteration(mdp, r, {1e-8});
  CHECK(res.policy.probs(0, 0) == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("soft VI: symmetric actions split evenly") {
  const TabularMdp mdp = symmetric2();
  Eigen::VectorXd r(2);
  r << 0.4, -0.3;
  const SoftViResult res = soft_value_iteration(mdp, r, {1e-10});
  for (int s = 0; s < 2; ++s) {
    CHECK(res.policy.probs(s, 0) == doctest::Approx(0.5).epsilon(1e-9));
    CHECK(res.policy.probs(s, 1) == doctest::Approx(0.5).epsilon(1e-9));
  }
}

TEST_CASE("soft VI policy rows sum to 1") {
  for (std::uint64_t seed : {11u, 22u, 33u}) {
    const TabularMdp mdp = oracles::random_stochastic_mdp(seed, 5, 3);
    miirl::Rng rng(seed + 1);
    Eigen::VectorXd r(5);
    for (int s = 0; s < 5; ++s) r[s] = rng.uniform(-2.0, 2.0);
    const SoftViResult res = soft_value_iteration(mdp, r, {1e-6});
    for (int s = 0; s < 5; ++s)
      CHECK(std::abs(res.policy.probs.row(s).sum() - 1.0) < 1e-9);
  }
}

TEST_CASE("soft VI: constant reward shift leaves the policy unchanged") {
  const TabularMdp mdp = oracles::random_stochastic_mdp(7, 4, 3);
  Eigen::VectorXd r(4);
  r << 0.3, -1.0, 0.8, 0.1;
  const SoftViResult a = soft_value_iteration(mdp, r, {1e-10});
  const SoftViResult b =
      soft_value_iteration(mdp, (r.array() + 5.0).matrix(), {1e-10});
  CHECK((a.policy.probs - b.policy.probs).cwiseAbs().maxCoeff() < 1e-9);
}

TEST_CASE("soft VI reports divergence at the iteration cap") {
  const TabularMdp mdp = symmetric2();
  Eigen::VectorXd r(2);
  r << 1.0, 2.0;
  SoftViOptions opts;
  opts.tolerance = 1e-15;
  opts.max_iterations = 1;
  CHECK_THROWS_WITH_AS(soft_value_iteration(mdp, r, opts),
                       doctest::Contains("did not converge"),
                       std::runtime_error);
}

TEST_CASE("finite-horizon soft VI realizes the trajectory distribution") {
  // 2-state, 2-action deterministic chain, horizon 3, all 8 action sequences.
  oracles::DeterministicInstance inst;
  inst.successor = {{0, 1}, {0, 1}};
  inst.reward.resize(2);
  inst.reward << 0.3, -0.4;
  inst.start_state = 0;
  inst.horizon = 3;
  const TabularMdp mdp = inst.to_mdp();
  const auto policies = soft_value_iteration_finite(mdp, inst.reward, inst.horizon);
  const auto trajs = oracles::enumerate_trajectories(inst, policies);
  CHECK(trajs.size() == 8);
  double z = 0.0;
  for (const auto& t : trajs) z += std::exp(t.reward);
  for (const auto& t : trajs)
    CHECK(std::abs(std::exp(t.reward) / z - t.policy_product) < 1e-6);
}

TEST_CASE("finite-horizon soft VI matches enumeration on random instances") {
  for (std::uint64_t seed = 100; seed < 110; ++seed) {
    const auto inst = oracles::random_deterministic_instance(seed);
    const TabularMdp mdp = inst.to_mdp();
    const auto policies =
        soft_value_iteration_finite(mdp, inst.reward, inst.horizon);
    const auto trajs = oracles::enumerate_trajectories(inst, policies);
    double z = 0.0;
    for (const auto& t : trajs) z += std::exp(t.reward);
    for (const auto& t : trajs)
      CHECK(std::abs(std::exp(t.reward) / z - t.policy_product) < 1e-6);
  }
}

TEST_CASE("optimal policy: single action everywhere") {
  const TabularMdp mdp = single_state_single_action();
  Eigen::VectorXd r(1);
  r << -2.0;
  const OptimalPolicyResult res = optimal_policy(mdp, r, 1e-8);
  CHECK(res.policy == DeterministicPolicy{0});
}

TEST_CASE("optimal policy: zero reward gives zero values") {
  const TabularMdp mdp = chain3();
  const OptimalPolicyResult res =
      optimal_policy(mdp, Eigen::VectorXd::Zero(3), 1e-10);
  CHECK(res.values.cwiseAbs().maxCoeff() < 1e-9);
}

TEST_CASE("optimal policy matches the geometric-series hand computation") {
  // Chain with reward only at the right end: V* = (0.81, 0.9, 1) / (1 - 0.9).
  const TabularMdp mdp = chain3();
  Eigen::VectorXd r(3);
  r << 0.0, 0.0, 1.0;
  const OptimalPolicyResult res = optimal_policy(mdp, r, 1e-9);
  CHECK(res.values[2] == doctest::Approx(10.0).epsilon(1e-6));
  CHECK(res.values[1] == doctest::Approx(9.0).epsilon(1e-6));
  CHECK(res.values[0] == doctest::Approx(8.1).epsilon(1e-6));
  CHECK(res.policy[0] == 1);
  CHECK(res.policy[1] == 1);
}

TEST_CASE("optimal policy: positive reward scaling preserves the argmax") {
  const TabularMdp mdp = oracles::random_stochastic_mdp(3, 5, 3);
  Eigen::VectorXd r(5);
  r << 1.0, -0.5, 0.2, 0.9, -1.2;
  const auto base = optimal_policy(mdp, r, 1e-10);
  for (double c : {0.5, 2.0, 13.0}) {
    const auto scaled = optimal_policy(mdp, (c * r.array()).matrix(), 1e-10);
    CHECK(scaled.policy == base.policy);
  }
}

TEST_CASE("policy evaluation: zero reward, fixed point consistency, constant reward") {
  const TabularMdp mdp = chain3();
  Eigen::VectorXd r(3);
  r << 0.2, -0.1, 1.0;

  const StochasticPolicy uniform{Eigen::MatrixXd::Constant(3, 2, 0.5)};
  CHECK(policy_evaluation(mdp, uniform, Eigen::VectorXd::Zero(3), 1e-10)
            .cwiseAbs()
            .maxCoeff() < 1e-9);

  const double tol = 1e-6;
  const OptimalPolicyResult opt = optimal_policy(mdp, r, tol);
  const ValueVector v = policy_evaluation(mdp, opt.policy, r, tol);
  CHECK((v - opt.values).cwiseAbs().maxCoeff() < 2 * tol);

  // Constant reward 1 on the symmetric MDP: V = 1 / (1 - discount).
  const TabularMdp sym = symmetric2();
  const StochasticPolicy uniform2{Eigen::MatrixXd::Constant(2, 2, 0.5)};
  const ValueVector v2 =
      policy_evaluation(sym, uniform2, Eigen::VectorXd::Ones(2), 1e-10);
  CHECK(v2[0] == doctest::Approx(10.0).epsilon(1e-7));
  CHECK(v2[1] == doctest::Approx(10.0).epsilon(1e-7));
}

#include <doctest.h>

#include <cmath>
#include <numeric>
#include <sstream>

#include "miirl/eval.hpp"
#include "miirl/maxent.hpp"
#include "miirl/trainers.hpp"
#include "toys.hpp"

using namespace miirl;

namespace {

std::string net_bytes(const RewardNet& net) {
  std::ostringstream out(std::ios::binary);
  save_net(net, out);
  return out.str();
}

TrainConfig toy_config(Algorithm algorithm, double alpha, int k_init,
                       std::uint64_t seed) {
  TrainConfig cfg;
  cfg.algorithm = algorithm;
  cfg.alpha = alpha;
  cfg.k_init = k_init;
  cfg.max_iter = 30;
  cfg.lr = 0.01;
  cfg.vi_tolerance = 1e-5;
  cfg.seed = seed;
  cfg.reward_feature_dim = 6;
  cfg.net_shape = NetShape{1, 16, true};
  return cfg;
}

/// Hard posterior assignment per demo under the final policies, computed
/// independently of the trainer's bookkeeping: argmax of count * likelihood.
std::vector<int> posterior_argmax(const BenchmarkEnv& env,
                                  const TrainResult& result,
                                  const std::vector<Trajectory>& demos,
                                  double vi_tol) {
  const BaseCache cache = base_forward(result.net, env.features);
  std::vector<StochasticPolicy> policies;
  for (int k = 0; k < result.net.n_heads(); ++k)
    policies.push_back(
        soft_value_iteration(env.mdp, head_forward(result.net, cache, k),
                             {vi_tol})
            .policy);
  std::vector<int> out;
  for (std::size_t m = 0; m < demos.size(); ++m) {
    int best = 0;
    double best_score = -std::numeric_limits<double>::infinity();
    for (int k = 0; k < result.crp.K(); ++k) {
      const double score = std::log(static_cast<double>(result.crp.counts[k])) +
                           trajectory_loglik(policies[k], demos[m]);
      if (score > best_score) {
        best_score = score;
        best = k;
      }
    }
    out.push_back(best);
  }
  return out;
}

double clustering_agreement(const std::vector<int>& a,
                            const std::vector<int>& b) {
  int same = 0;
  for (std::size_t i = 0; i < a.size(); ++i) same += a[i] == b[i];
  return static_cast<double>(same) / static_cast<double>(a.size());
}

}  // namespace

TEST_CASE("training is deterministic given the seed") {
  const BenchmarkEnv env = toys::line_world();
  const auto demos = toys::interleave(
      {toys::toy_demos(env, 0, 4, 6, 100), toys::toy_demos(env, 1, 4, 6, 101)});
  for (Algorithm algorithm : {Algorithm::Sem, Algorithm::Mcem}) {
    const TrainConfig cfg = toy_config(algorithm, 1.0, 1, 7);
    const TrainResult a = train(env.features, env.mdp, demos, cfg);
    const TrainResult b = train(env.features, env.mdp, demos, cfg);
    CHECK(net_bytes(a.net) == net_bytes(b.net));
    CHECK(a.crp.assignments == b.crp.assignments);
    CHECK(a.crp.counts == b.crp.counts);
    REQUIRE(a.history.size() == b.history.size());
    for (std::size_t i = 0; i < a.history.size(); ++i) {
      CHECK(a.history[i].k == b.history[i].k);
      CHECK(a.history[i].counts == b.history[i].counts);
      CHECK(a.history[i].wall_ms == 0.0);  // timing off by default
    }
  }
}

TEST_CASE("history shape and head/K alignment invariants") {
  const BenchmarkEnv env = toys::line_world();
  const auto demos = toys::interleave(
      {toys::toy_demos(env, 0, 3, 6, 1), toys::toy_demos(env, 1, 3, 6, 2)});
  TrainConfig cfg = toy_config(Algorithm::Sem, 0.8, 1, 3);
  cfg.max_iter = 12;
  const TrainResult result = train_sem(env.features, env.mdp, demos, cfg);
  CHECK(result.history.size() == 12);
  for (std::size_t i = 0; i < result.history.size(); ++i) {
    CHECK(result.history[i].iteration == static_cast<int>(i) + 1);
    CHECK(result.history[i].k >= 1);
    CHECK(std::accumulate(result.history[i].counts.begin(),
                          result.history[i].counts.end(),
                          0) == static_cast<int>(demos.size()));
  }
  CHECK(result.net.n_heads() == result.crp.K());
  result.crp.validate();
  CHECK(map_assignments(result).size() == demos.size());
}

TEST_CASE("single demo with alpha 0 reduces to single-intention IRL") {
  // 4-state toy: the trained reward must drive the average EVD below 10%
  // of its untrained value within the iteration budget.
  const BenchmarkEnv env = toys::line_world(4);
  const auto demos = toys::toy_demos(env, 1, 1, 6, 55);

  TrainConfig cfg = toy_config(Algorithm::Sem, 0.0, 1, 9);
  cfg.max_iter = 200;
  cfg.lr = 0.05;

  TrainConfig untrained_cfg = cfg;
  untrained_cfg.max_iter = 0;
  const TrainResult untrained =
      train_sem(env.features, env.mdp, demos, untrained_cfg);
  const BenchmarkEnv transfer = toys::line_world(4);
  const double evd0 =
      evaluate_run(env, transfer, untrained, demos, 1e-6).avg_evd;

  const TrainResult result = train_sem(env.features, env.mdp, demos, cfg);
  CHECK(result.crp.K() == 1);
  const double evd_final =
      evaluate_run(env, transfer, result, demos, 1e-6).avg_evd;
  CHECK(evd_final < 0.1 * evd0);
}

TEST_CASE("mcem with alpha 0 and one intention stays in the single cluster") {
  const BenchmarkEnv env = toys::line_world(4);
  const auto demos = toys::toy_demos(env, 0, 4, 5, 77);
  TrainConfig cfg = toy_config(Algorithm::Mcem, 0.0, 1, 5);
  cfg.max_iter = 10;
  const TrainResult result = train_mcem(env.features, env.mdp, demos, cfg);
  CHECK(result.crp.K() == 1);
  for (int a : result.crp.assignments) CHECK(a == 0);
}

TEST_CASE("fixed_k = 2 separates a hand-built 2-cluster instance") {
  const BenchmarkEnv env = toys::line_world();
  const auto left = toys::toy_demos(env, 0, 6, 6, 200);
  const auto right = toys::toy_demos(env, 1, 6, 6, 201);
  const auto demos = toys::interleave({left, right});

  // Start from a partially scrambled partition: three right-intention demos
  // sit in the left cluster. Likelihood-driven reassignment must unscramble.
  std::vector<int> init;
  for (const Trajectory& d : demos) init.push_back(*d.true_intention);
  int flipped_count = 0;
  for (std::size_t m = 0; m < init.size() && flipped_count < 3; ++m)
    if (init[m] == 1) {
      init[m] = 0;
      ++flipped_count;
    }

  TrainConfig cfg = toy_config(Algorithm::Sem, 0.0, 1, 13);
  cfg.fixed_k = 2;
  cfg.init_assignments = init;
  cfg.init_net = toys::exact_net({env.true_rewards[0], env.true_rewards[1]});
  cfg.max_iter = 40;
  const TrainResult result = train_sem(env.features, env.mdp, demos, cfg);

  // MAP clustering is perfect up to label permutation.
  const std::vector<int> got = map_assignments(result);
  std::vector<int> truth;
  for (const Trajectory& d : demos) truth.push_back(*d.true_intention);
  CHECK(toys::clustering_accuracy(got, truth) == 1.0);

  // And it matches the independent likelihood-enumeration oracle.
  const std::vector<int> oracle =
      posterior_argmax(env, result, demos, cfg.vi_tolerance);
  CHECK(clustering_agreement(got, oracle) == 1.0);

  // Fixed-K: exactly two intentions at every iteration.
  for (const IterationRecord& rec : result.history) CHECK(rec.k == 2);
}

TEST_CASE("alpha 0 with an oracle-perfect init never reassigns") {
  // Separated heads from the start (true rewards, scaled up): the posterior
  // of every demo is dominated by its own cluster, so no S-step ever moves
  // anything and no intention is ever born.
  const BenchmarkEnv env = toys::line_world();
  const auto left = toys::toy_demos(env, 0, 5, 6, 300);
  const auto right = toys::toy_demos(env, 1, 5, 6, 301);
  const auto demos = toys::interleave({left, right});
  std::vector<int> perfect;
  for (const Trajectory& d : demos) perfect.push_back(*d.true_intention);

  TrainConfig cfg = toy_config(Algorithm::Sem, 0.0, 2, 17);
  cfg.init_assignments = perfect;
  cfg.init_net = toys::exact_net({env.true_rewards[0], env.true_rewards[1]});
  cfg.lr = 0.01;
  cfg.max_iter = 25;
  const TrainResult result = train_sem(env.features, env.mdp, demos, cfg);
  CHECK(map_assignments(result) == perfect);
  for (const IterationRecord& rec : result.history)
    CHECK(rec.counts == std::vector<int>{5, 5});
}

TEST_CASE("SEM grows intentions when alpha is positive on separated clusters") {
  const BenchmarkEnv env = toys::line_world();
  const auto demos = toys::interleave(
      {toys::toy_demos(env, 0, 6, 6, 400), toys::toy_demos(env, 1, 6, 6, 401)});
  TrainConfig cfg = toy_config(Algorithm::Sem, 1.0, 1, 19);
  cfg.max_iter = 60;
  const TrainResult result = train_sem(env.features, env.mdp, demos, cfg);
  CHECK(result.crp.K() >= 2);

  // Birth separates the two intentions: every cluster is dominated by one
  // true intention (an intention may fragment over several clusters at this
  // tiny demo count, which purity does not punish).
  std::vector<int> truth;
  for (const Trajectory& d : demos) truth.push_back(*d.true_intention);
  const std::vector<int> got = map_assignments(result);
  std::vector<std::vector<int>> by_label(result.crp.K(), std::vector<int>(2, 0));
  for (std::size_t m = 0; m < got.size(); ++m) ++by_label[got[m]][truth[m]];
  int majority = 0;
  for (const auto& row : by_label) majority += std::max(row[0], row[1]);
  const double purity =
      static_cast<double>(majority) / static_cast<double>(demos.size());
  CHECK(purity >= 0.9);
}

TEST_CASE("per-iteration wall time: mcem cheaper than sem") {
  const BenchmarkEnv env = toys::line_world(8);
  std::vector<std::vector<Trajectory>> groups;
  for (int i : {0, 1}) groups.push_back(toys::toy_demos(env, i, 8, 6, 500 + i));
  const auto demos = toys::interleave(groups);

  TrainConfig cfg = toy_config(Algorithm::Sem, 1.0, 1, 23);
  cfg.max_iter = 6;
  cfg.record_timing = true;
  const TrainResult sem = train_sem(env.features, env.mdp, demos, cfg);
  cfg.algorithm = Algorithm::Mcem;
  const TrainResult mcem = train_mcem(env.features, env.mdp, demos, cfg);

  CHECK(sem.history.back().wall_ms > 0.0);
  // Cumulative times are nondecreasing.
  for (std::size_t i = 1; i < sem.history.size(); ++i)
    CHECK(sem.history[i].wall_ms >= sem.history[i - 1].wall_ms);
  CHECK(mcem.history.back().wall_ms / mcem.history.size() <
        sem.history.back().wall_ms / sem.history.size());
}

TEST_CASE("config validation") {
  const BenchmarkEnv env = toys::line_world(4);
  const auto demos = toys::toy_demos(env, 0, 2, 4, 1);
  TrainConfig cfg = toy_config(Algorithm::Sem, 1.0, 5, 1);
  CHECK_THROWS(train_sem(env.features, env.mdp, demos, cfg));  // k_init > M
  cfg.k_init = 1;
  cfg.lr = 0.0;
  CHECK_THROWS(train_sem(env.features, env.mdp, demos, cfg));
  cfg.lr = 0.05;
  cfg.fixed_k = 2;
  cfg.alpha = 3.0;  // forced back to zero by fixed_k
  const TrainResult result = train_sem(env.features, env.mdp, demos, cfg);
  CHECK(result.crp.alpha == 0.0);
  CHECK(result.crp.K() == 2);
}

#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <functional>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "miirl/crp.hpp"
#include "miirl/envs.hpp"
#include "miirl/mdp.hpp"
#include "miirl/reward_net.hpp"

namespace miirl {

enum class Algorithm { Sem, Mcem };

std::string to_string(Algorithm algorithm);
Algorithm algorithm_from_string(const std::string& name);

struct TrainConfig {
  Algorithm algorithm = Algorithm::Sem;
  double alpha = 1.0;
  int k_init = 1;
  /// Fixed-K ablation: alpha is forced to 0, k_init to the fixed value, and
  /// intentions are never born or pruned.
  std::optional<int> fixed_k;
  int max_iter = 200;
  double lr = 0.001;
  double vi_tolerance = 1e-4;
  std::uint64_t seed = 0;
  int reward_feature_dim = 16;
  NetShape net_shape;
  /// Record wall-clock times in the history. Off by default so that results
  /// for a given seed are byte-identical across runs.
  bool record_timing = false;
  /// Override the default round-robin initial assignment (values in
  /// [0, k_init), every intention occupied).
  std::optional<std::vector<int>> init_assignments;
  /// Resume from an existing net instead of a fresh initialization; must
  /// have k_init heads and match the feature dimension.
  std::optional<RewardNet> init_net;
  /// Structured per-visit progress lines, when set.
  std::ostream* log = nullptr;

  /// Applies the fixed_k rules and checks ranges against the demo count.
  TrainConfig resolved(int n_demos) const;
};

/// Per-iteration metrics from an optional evaluator callback.
struct EvalSnapshot {
  double avg_evd = std::numeric_limits<double>::quiet_NaN();
  double transfer_avg_evd = std::numeric_limits<double>::quiet_NaN();
};

using Evaluator = std::function<EvalSnapshot(const RewardNet&, const CrpState&)>;

struct IterationRecord {
  int iteration = 0;  // 1-based
  double avg_evd = std::numeric_limits<double>::quiet_NaN();
  double transfer_avg_evd = std::numeric_limits<double>::quiet_NaN();
  int k = 0;
  double wall_ms = 0.0;  // cumulative since training start; 0 when timing off
  std::vector<int> counts;
};

struct TrainResult {
  RewardNet net;
  CrpState crp;
  std::vector<IterationRecord> history;
};

/// Stochastic-EM trainer: per visited trajectory, spawn a candidate head,
/// evaluate the full posterior over intentions (existing + fresh), sample
/// the assignment, update the partition, and take one Adam step on the
/// responsibility-weighted maximum-entropy gradient.
TrainResult train_sem(const Eigen::MatrixXd& features, const TabularMdp& mdp,
                      const std::vector<Trajectory>& demos,
                      const TrainConfig& config,
                      const Evaluator& evaluator = nullptr);

/// Monte-Carlo-EM trainer: propose the assignment from the CRP prior,
/// accept via Metropolis-Hastings on the trajectory likelihood ratio, and
/// take one Adam step with the hard (one-hot) assignment.
TrainResult train_mcem(const Eigen::MatrixXd& features, const TabularMdp& mdp,
                       const std::vector<Trajectory>& demos,
                       const TrainConfig& config,
                       const Evaluator& evaluator = nullptr);

/// Dispatch on config.algorithm.
TrainResult train(const Eigen::MatrixXd& features, const TabularMdp& mdp,
                  const std::vector<Trajectory>& demos,
                  const TrainConfig& config,
                  const Evaluator& evaluator = nullptr);

/// Final hard assignment per demonstration.
std::vector<int> map_assignments(const TrainResult& result);

}  // namespace miirl

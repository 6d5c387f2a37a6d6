#pragma once

#include <Eigen/Dense>
#include <optional>
#include <vector>

#include "miirl/rng.hpp"

namespace miirl {

/// Sentinel for "assign to a fresh intention" in apply_assignment.
inline constexpr int kNewIntention = -1;

/// Partition bookkeeping for the Dirichlet-process mixture: per-trajectory
/// intention assignments, per-intention occupancy counts, and the
/// concentration parameter. Mixing coefficients are marginalized out and
/// never represented.
struct CrpState {
  std::vector<int> assignments;
  std::vector<int> counts;
  double alpha = 0.0;
  /// Fixed-K mode: emptied intentions are kept (with zero posterior mass)
  /// instead of being pruned, so K never changes.
  bool allow_empty = false;

  int K() const { return static_cast<int>(counts.size()); }
  int n_trajectories() const { return static_cast<int>(assignments.size()); }

  /// Round-robin initial assignment of n trajectories to k intentions.
  static CrpState round_robin(int n, int k, double alpha,
                              bool allow_empty = false);

  /// Throws if counts and assignments disagree or an invariant is violated.
  void validate() const;
};

/// CRP prior over the intention of one trajectory, conditioned on all other
/// assignments: existing intention k gets M_k^{-m} / (M - 1 + alpha), a new
/// intention gets alpha / (M - 1 + alpha). Intentions emptied by the
/// exclusion are dropped; `kept` maps the first probs entries back to the
/// state's intention indices, and the final entry is the new-intention mass.
struct CrpPrior {
  Eigen::VectorXd probs;
  std::vector<int> kept;

  /// Occupancy counts (excluding the visited trajectory) aligned with kept.
  std::vector<double> kept_counts;
};

CrpPrior crp_prior(const CrpState& state, std::optional<int> exclude);

/// Posterior responsibilities over K existing intentions plus one fresh
/// intention: gamma_k proportional to M_k^{-m} exp(loglik_k) for k <= K and
/// alpha * exp(loglik_{K+1}) for the fresh one. Computed in log space with
/// max subtraction; sums to 1. logliks has length prior_counts.size() + 1.
Eigen::VectorXd estep_responsibilities(const std::vector<double>& prior_counts,
                                       double alpha,
                                       const std::vector<double>& logliks);

/// Single categorical draw from the responsibilities (the S-step).
int sstep_sample(const Eigen::VectorXd& gamma, Rng& rng);

/// Metropolis-Hastings acceptance with probability
/// min{1, exp(proposed_loglik - current_loglik)}.
bool mh_accept(double current_loglik, double proposed_loglik, Rng& rng);

/// Outcome of moving one trajectory: final intention index (post-remap),
/// whether a fresh intention was born, which old indices were pruned, and
/// the old -> new index map over the pre-prune intentions (-1 = removed).
struct AssignmentEvent {
  int intention = 0;
  bool birth = false;
  std::vector<int> removed;
  std::vector<int> remap;
};

/// Reassign trajectory `traj` to `target` (an existing index or
/// kNewIntention). Updates counts, births/prunes intentions, and compacts
/// indices preserving order; the remap drives reward-net head pruning.
AssignmentEvent apply_assignment(CrpState& state, int traj, int target);

}  // namespace miirl

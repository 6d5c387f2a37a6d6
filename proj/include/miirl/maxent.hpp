#pragma once

#include <Eigen/Dense>
#include <vector>

#include "miirl/envs.hpp"
#include "miirl/mdp.hpp"

namespace miirl {

/// Per-state visit counts of a single trajectory over its T_tau states.
Eigen::VectorXd trajectory_svf(const Trajectory& traj, int n_states);

/// Expected state visitation frequencies under a policy over a finite
/// horizon, by forward dynamic programming from the start distribution:
///   d_0 = start, d_{t+1}(s') = sum_{s,a} d_t(s) pi(a|s) P(s'|s,a),
///   visits = sum_{t=0}^{horizon-1} d_t.
/// Entries sum to the horizon.
Eigen::VectorXd expected_svf(const TabularMdp& mdp,
                             const StochasticPolicy& policy, int horizon);

/// Sum of log pi(a_t | s_t) along the trajectory; -infinity when any factor
/// is zero.
double trajectory_loglik(const StochasticPolicy& policy, const Trajectory& traj);

/// Gradient weights of the M-step: one per-state weight vector per intention,
///   w_k = gamma_k * (mu(tau) - E_k[mu]),
/// fed to the reward-net backward pass. gamma must sum to 1 within 1e-9.
std::vector<Eigen::VectorXd> mstep_state_weights(
    const Eigen::VectorXd& gamma, const Eigen::VectorXd& traj_svf,
    const std::vector<Eigen::VectorXd>& expected_svfs);

}  // namespace miirl
